#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "stvcm/io.hpp"

using namespace stvcm;
namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* env = std::getenv("STVCM_CLI");
  REQUIRE_MESSAGE(env != nullptr, "STVCM_CLI must point at the stvcm binary");
  return env;
}

fs::path work_dir() {
  const char* env = std::getenv("STVCM_TEST_TMPDIR");
  fs::path p = env ? fs::path(env) : fs::temp_directory_path() / "stvcm_cli_tests";
  fs::create_directories(p);
  return p;
}

int run(const std::string& args) {
  const std::string cmd = "\"" + cli_path() + "\" " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct Files {
  fs::path dir = work_dir();
  std::string operator()(const std::string& name) const { return (dir / name).string(); }
};

void write_small_scenario(const std::string& path) {
  write_file(path, R"({
  "format": "stvcm-scenario",
  "format_version": 1,
  "S": 16, "T": 8, "noise_sd": 0.2, "seed": 1,
  "surfaces": [{"kind": "linear-t", "params": [0.5, 0.3]}]
})");
}

}  // namespace

TEST_CASE("cli: simulate -> fit -> bands -> shape roundtrip exits 0") {
  Files f;
  write_small_scenario(f("sc.json"));
  CHECK(run("simulate --scenario " + f("sc.json") + " --seed 7 --out " + f("p.csv")) == 0);
  CHECK(run("fit --panel " + f("p.csv") +
            " --knots-temporal 3 --knots-spatial 4 --seed 7 --out " + f("m.json")) == 0);
  CHECK(run("bands --model " + f("m.json") +
            " --predictor 1 --part temporal --level 0.95 --draws 1500 --seed 7 --out " +
            f("b.csv")) == 0);
  CHECK(run("shape --model " + f("m.json") +
            " --predictor 1 --part temporal --level 0.95 --draws 1500 --seed 7 --out " +
            f("v.json")) == 0);

  // Linear truth classifies as constant or linear (never nonlinear) and the
  // witness is recorded.
  const std::string verdict = slurp(f("v.json"));
  CHECK(verdict.find("nonlinear") == std::string::npos);
  CHECK(verdict.find("witness") != std::string::npos);
}

TEST_CASE("cli: band levels nest in the output files") {
  Files f;
  write_small_scenario(f("sc2.json"));
  REQUIRE(run("simulate --scenario " + f("sc2.json") + " --seed 8 --out " + f("p2.csv")) == 0);
  REQUIRE(run("fit --panel " + f("p2.csv") +
              " --knots-temporal 3 --knots-spatial 4 --seed 8 --out " + f("m2.json")) == 0);
  REQUIRE(run("bands --model " + f("m2.json") +
              " --predictor 1 --part temporal --level 0.95 --draws 1500 --seed 9 --out " +
              f("b95.csv")) == 0);
  REQUIRE(run("bands --model " + f("m2.json") +
              " --predictor 1 --part temporal --level 0.90 --draws 1500 --seed 9 --out " +
              f("b90.csv")) == 0);
  const auto b95 = read_csv(f("b95.csv"));
  const auto b90 = read_csv(f("b90.csv"));
  REQUIRE(b95.rows.size() == b90.rows.size());
  const int lo = b95.require_column("lower"), up = b95.require_column("upper");
  for (std::size_t i = 0; i < b95.rows.size(); ++i) {
    CHECK(std::stod(b95.rows[i][static_cast<std::size_t>(lo)]) <=
          std::stod(b90.rows[i][static_cast<std::size_t>(lo)]) + 1e-12);
    CHECK(std::stod(b95.rows[i][static_cast<std::size_t>(up)]) >=
          std::stod(b90.rows[i][static_cast<std::size_t>(up)]) - 1e-12);
  }
}

TEST_CASE("cli: duplicated covariate gives the rank-deficiency exit code") {
  Files f;
  write_small_scenario(f("sc3.json"));
  REQUIRE(run("simulate --scenario " + f("sc3.json") + " --seed 9 --out " + f("p3.csv")) == 0);
  // Append a duplicate of the intercept column.
  auto panel = read_panel_csv(f("p3.csv"));
  panel.covariates.push_back(panel.covariates[0]);
  panel.predictor_names.push_back("dup");
  write_panel_csv(f("p3dup.csv"), panel, {});
  CHECK(run("fit --panel " + f("p3dup.csv") +
            " --knots-temporal 3 --knots-spatial 4 --seed 9 --out " + f("m3.json")) == 5);
}

TEST_CASE("cli: infeasible knot separation gives the identifiability exit code") {
  Files f;
  // Two providers on a tiny grid; an oversized d_T cannot be honored.
  std::ostringstream csv;
  csv << "provider_id,location_id,x,y,time,response,intercept\n";
  for (int p = 0; p < 2; ++p)
    for (int j = 0; j < 6; ++j)
      for (int i = 0; i < 5; ++i)
        csv << "prov" << p + 1 << ",s" << j << "," << 0.15 * j << "," << 0.9 - 0.13 * j << ","
            << i + 1 << "," << 0.3 * (i + 1) + 0.1 * j + (p == 0 ? 0.2 : -0.2) << ",1\n";
  write_file(f("mp.csv"), csv.str());
  CHECK(run("fit-multilevel --panel " + f("mp.csv") +
            " --knots-temporal 3 --knots-spatial 3 --d-temporal 5.0 --seed 4 --out " +
            f("ml.json")) == 7);
  // Feasible defaults exit 0.
  CHECK(run("fit-multilevel --panel " + f("mp.csv") +
            " --knots-temporal 2 --knots-spatial 3 --seed 4 --out " + f("ml.json")) == 0);
}

TEST_CASE("cli: schema version mismatch gives the version exit code") {
  Files f;
  write_small_scenario(f("sc4.json"));
  REQUIRE(run("simulate --scenario " + f("sc4.json") + " --seed 10 --out " + f("p4.csv")) == 0);
  REQUIRE(run("fit --panel " + f("p4.csv") +
              " --knots-temporal 2 --knots-spatial 3 --seed 10 --out " + f("m4.json")) == 0);
  std::string text = slurp(f("m4.json"));
  const std::string needle = "\"format_version\":1";
  const auto pos = text.find(needle);
  REQUIRE(pos != std::string::npos);
  text.replace(pos, needle.size(), "\"format_version\":999");
  write_file(f("m4bad.json"), text);
  CHECK(run("bands --model " + f("m4bad.json") +
            " --predictor 1 --part temporal --draws 1500 --seed 10 --out " + f("b4.csv")) == 4);
}

TEST_CASE("cli: access records an estimated beta in the header") {
  Files f;
  write_file(f("sites.csv"),
             "year,x,y\n2000,0.2,0.2\n2000,0.8,0.8\n2000,0.5,0.1\n2001,0.2,0.2\n2001,0.8,"
             "0.8\n2001,0.5,0.1\n");
  write_file(f("comm.csv"),
             "community_id,point_index,x,y\nc1,0,0.1,0.1\nc1,1,0.15,0.2\nc2,0,0.7,0.6\n");
  write_file(f("rates.csv"),
             "community_id,point_index,year,population_rate,service_rate\n"
             "c1,0,2000,10,2\nc1,1,2000,12,2\nc2,0,2000,8,4\n"
             "c1,0,2001,11,2\nc1,1,2001,13,2\nc2,0,2001,9,4\n");
  REQUIRE(run("access --sites " + f("sites.csv") + " --communities " + f("comm.csv") +
              " --rates " + f("rates.csv") + " --q 2 --beta estimate --out " +
              f("acc.csv")) == 0);
  const auto table = read_csv(f("acc.csv"));
  CHECK(table.meta.at("beta_estimated") == "true");
  CHECK(table.meta.count("beta") == 1);
  CHECK(table.meta.count("config_hash") == 1);

  // A hand-checkable toy: one community, one point, beta fixed.
  write_file(f("sites1.csv"), "year,x,y\n2000,3,4\n");
  write_file(f("comm1.csv"), "community_id,point_index,x,y\nc1,0,0,0\n");
  write_file(f("rates1.csv"),
             "community_id,point_index,year,population_rate,service_rate\nc1,0,2000,6,2\n");
  REQUIRE(run("access --sites " + f("sites1.csv") + " --communities " + f("comm1.csv") +
              " --rates " + f("rates1.csv") + " --q 1 --beta 1 --out " + f("acc1.csv")) == 0);
  const auto t1 = read_csv(f("acc1.csv"));
  REQUIRE(t1.rows.size() == 1);
  CHECK(std::stod(t1.rows[0][2]) == doctest::Approx(15.0).epsilon(1e-12));  // 5^1 * (6/2)
}

TEST_CASE("cli: test-interaction writes a p-value in range") {
  Files f;
  write_small_scenario(f("sc5.json"));
  REQUIRE(run("simulate --scenario " + f("sc5.json") + " --seed 11 --out " + f("p5.csv")) == 0);
  REQUIRE(run("test-interaction --panel " + f("p5.csv") +
              " --knots-temporal 2 --knots-spatial 3 --predictor 1 --boot 500 --seed 11"
              " --out " + f("t5.json")) == 0);
  const std::string text = slurp(f("t5.json"));
  CHECK(text.find("\"p_value\"") != std::string::npos);
  const auto pos = text.find("\"p_value\":");
  const double p = std::stod(text.substr(pos + 10));
  CHECK(p >= 0.0);
  CHECK(p <= 1.0);
}

TEST_CASE("cli: unknown flags and missing files map to distinct exit codes") {
  Files f;
  CHECK(run("fit --panel " + f("does_not_exist.csv") +
            " --knots-temporal 2 --knots-spatial 2 --out " + f("x.json")) == 3);
  CHECK(run("nonsense-subcommand") != 0);
  CHECK(run("bands --model " + f("does_not_exist.json") + " --out " + f("x.csv")) == 3);
}
