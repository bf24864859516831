#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stvcm/inference.hpp"
#include "stvcm/mixed_model.hpp"
#include "stvcm/types.hpp"

namespace stvcm {

// Column bookkeeping for the stacked multilevel design.
// Fixed: [global 4R | deviation free coefficients 4R(P-1), Helmert-mapped].
// Random: [global per predictor: M temporal + N spatial |
//          per provider, per predictor: M + N + M*N deviation columns].
// Components: per predictor 2 global (T, S) + 3 deviation (T, S, I) shared
// across providers; ids: global r -> 2r, 2r+1; deviation r -> 2R+3r+{0,1,2}.
struct MultilevelLayout {
  int R = 0, M = 0, N = 0, P = 0;
  std::vector<std::string> predictor_names;
  bool deviations = true;

  int global_fixed_cols() const { return 4 * R; }
  int dev_fixed_cols() const { return deviations ? 4 * R * (P - 1) : 0; }
  int fixed_cols() const { return global_fixed_cols() + dev_fixed_cols(); }
  int global_random_cols() const { return R * (M + N); }
  int dev_random_per_r() const { return M + N + M * N; }
  int dev_random_per_p() const { return R * dev_random_per_r(); }
  int random_cols() const {
    return global_random_cols() + (deviations ? P * dev_random_per_p() : 0);
  }
  int n_coefs() const { return fixed_cols() + random_cols(); }
  int n_components() const { return deviations ? 5 * R : 2 * R; }

  int global_fixed(int r, int g) const { return 4 * r + g; }
  // Free deviation coefficient k (0..P-2) of fixed group g (0..3) of r.
  int dev_fixed(int r, int g, int k) const { return 4 * R + (r * 4 + g) * (P - 1) + k; }
  int global_temporal(int r) const { return r * (M + N); }
  int global_spatial(int r) const { return r * (M + N) + M; }
  int dev_temporal(int p, int r) const {
    return global_random_cols() + p * dev_random_per_p() + r * dev_random_per_r();
  }
  int dev_spatial(int p, int r) const { return dev_temporal(p, r) + M; }
  int dev_interaction(int p, int r) const { return dev_temporal(p, r) + M + N; }

  std::string predictor_label(int r) const;
};

// Orthonormal basis of the sum-to-zero subspace; deviation fixed effects are
// H * (free coefficients), so the constraints hold by construction.
Matrix helmert_basis(int p);

struct MultilevelOptions {
  bool deviations = true;
  RemlOptions reml;
  DesignOptions design;  // spatial kernel hook; interaction applies to the
                         // deviation blocks (the global part is additive)
};

struct MultilevelFit {
  MultilevelLayout layout;
  KnotLayout knots;  // global family plus P provider families
  DesignOptions design_options;
  std::vector<std::string> providers;

  Vector theta_global;  // 4R
  Matrix theta_dev;     // P x 4R, expanded through the Helmert map
  Vector u_global;      // R(M+N)
  std::vector<Vector> u_dev;  // per provider, R(M+N+MN)

  double sigma_eps2 = 0.0;
  std::vector<double> global_T2, global_S2;      // per predictor
  std::vector<double> dev_T2, dev_S2, dev_I2;    // per predictor, shared over providers
  std::vector<std::string> boundary;

  double loglik_reml = 0.0;
  Convergence convergence;
  double constraints_residual = 0.0;

  // Stacked-system pieces for joint band construction.
  Matrix ata;
  Vector aty;
  double yty = 0.0;
  int n_rows = 0;
  std::vector<RandomBlock> blocks;
  std::vector<double> sigma2_by_component;
  std::vector<double> observed_times;
  std::vector<Point> observed_locations;

  // Global coefficient gamma_r = alpha_r(t) + beta_r(s) (additive, no
  // interaction) and the provider deviation eta_rp; provider_coefficient
  // evaluates gamma_rp through the full stacked contrast row, so the
  // reconstruction identity gamma_rp = gamma_r + eta_rp is a genuine
  // floating-point consistency check.
  CoefficientParts global_parts(int r, std::span<const double> times,
                                std::span<const Point> points) const;
  CoefficientParts deviation_parts(int r, int p, std::span<const double> times,
                                   std::span<const Point> points) const;
  Vector provider_coefficient(int r, int p, std::span<const double> times,
                              std::span<const Point> points) const;
};

// Joint REML fit over all providers: shared global blocks, per-provider
// deviation blocks on separated knot families, sum-to-zero deviation fixed
// effects by Helmert reparameterization.
MultilevelFit fit_multilevel(const MultilevelPanel& panel, const KnotLayout& knots,
                             const MultilevelOptions& opts = {});

// Produces P provider knot families from the global family by deterministic
// offsetting, with every cross-family temporal gap > d_T and spatial gap
// > d_S; the returned layout is certified by the exhaustive pair check.
KnotLayout separate_knots(const KnotLayout& base, int providers, double d_T, double d_S,
                          std::uint64_t seed);

// Per-provider simultaneous bands, each at level 1 - rho/P, so the joint
// coverage across providers is >= 1 - rho by the union bound. Bands are for
// the deviations eta_rp, or for gamma_rp = global + deviation when
// `on_total` is set.
std::vector<ConfidenceBand> joint_bands(const MultilevelFit& fit, int predictor, BandPart part,
                                        double rho, const EvalGrid& grid, int n_draws,
                                        std::uint64_t seed, bool on_total = false,
                                        int threads = 1);

}  // namespace stvcm
