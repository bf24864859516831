#include "stvcm/mixed_model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "optim.hpp"
#include "reml_internal.hpp"

namespace stvcm {

namespace detail {

CrossProblem make_cross_problem(const Matrix& x, const Matrix& z,
                                const std::vector<RandomBlock>& blocks, int n_components,
                                const Vector& y) {
  CrossProblem prob;
  prob.n = static_cast<int>(x.rows());
  prob.p = static_cast<int>(x.cols());
  const int q = static_cast<int>(z.cols());
  const int d = prob.p + q;
  Matrix a(prob.n, d);
  a.leftCols(prob.p) = x;
  if (q > 0) a.rightCols(q) = z;
  prob.ata = Matrix::Zero(d, d);
  prob.ata.selfadjointView<Eigen::Lower>().rankUpdate(a.transpose());
  prob.ata.triangularView<Eigen::StrictlyUpper>() = prob.ata.transpose();
  prob.blocks = blocks;
  prob.n_components = n_components;
  set_response(prob, x, z, y);
  return prob;
}

void set_response(CrossProblem& prob, const Matrix& x, const Matrix& z, const Vector& y) {
  const int q = static_cast<int>(z.cols());
  prob.aty.resize(prob.p + q);
  prob.aty.head(prob.p) = x.transpose() * y;
  if (q > 0) prob.aty.tail(q) = z.transpose() * y;
  prob.yty = y.squaredNorm();
  const double n = static_cast<double>(y.size());
  const double mean = y.sum() / n;
  prob.var_y = std::max(y.squaredNorm() / n - mean * mean, 1e-10);
}

std::vector<RandomBlock> blocks_for_layout(const ColumnLayout& layout) {
  std::vector<RandomBlock> blocks;
  const int kinds = layout.interaction ? 3 : 2;
  for (int r = 0; r < layout.R; ++r) {
    blocks.push_back({r * kinds + 0, layout.temporal_offset(r), layout.temporal_offset(r) + layout.M});
    blocks.push_back({r * kinds + 1, layout.spatial_offset(r), layout.spatial_offset(r) + layout.N});
    if (layout.interaction)
      blocks.push_back({r * kinds + 2, layout.interaction_offset(r),
                        layout.interaction_offset(r) + layout.M * layout.N});
  }
  return blocks;
}

int n_components_for(const ColumnLayout& layout) {
  return layout.R * (layout.interaction ? 3 : 2);
}

std::vector<double> sigma2_vector(const VarianceComponents& vc, const ColumnLayout& layout) {
  const int kinds = layout.interaction ? 3 : 2;
  std::vector<double> s2(static_cast<std::size_t>(layout.R * kinds), 0.0);
  for (int r = 0; r < layout.R; ++r) {
    s2[static_cast<std::size_t>(r * kinds + 0)] = vc.sigma_T2.at(static_cast<std::size_t>(r));
    s2[static_cast<std::size_t>(r * kinds + 1)] = vc.sigma_S2.at(static_cast<std::size_t>(r));
    if (layout.interaction)
      s2[static_cast<std::size_t>(r * kinds + 2)] = vc.sigma_I2.at(static_cast<std::size_t>(r));
  }
  return s2;
}

VarianceComponents vc_from_sigma2(const std::vector<double>& sigma2, double sigma_eps2,
                                  const ColumnLayout& layout, double floor) {
  VarianceComponents vc;
  vc.sigma_eps2 = sigma_eps2;
  const int kinds = layout.interaction ? 3 : 2;
  auto near_floor = [&](double v) { return v <= floor * (1.0 + 1e-9); };
  if (near_floor(sigma_eps2)) vc.boundary.push_back("sigma_eps2");
  for (int r = 0; r < layout.R; ++r) {
    const double t2 = sigma2.at(static_cast<std::size_t>(r * kinds + 0));
    const double s2 = sigma2.at(static_cast<std::size_t>(r * kinds + 1));
    vc.sigma_T2.push_back(t2);
    vc.sigma_S2.push_back(s2);
    const std::string tag = layout.predictor_label(r);
    if (t2 > 0 && near_floor(t2)) vc.boundary.push_back("sigma_T2[" + tag + "]");
    if (s2 > 0 && near_floor(s2)) vc.boundary.push_back("sigma_S2[" + tag + "]");
    if (layout.interaction) {
      const double i2 = sigma2.at(static_cast<std::size_t>(r * kinds + 2));
      vc.sigma_I2.push_back(i2);
      if (i2 > 0 && near_floor(i2)) vc.boundary.push_back("sigma_I2[" + tag + "]");
    }
  }
  return vc;
}

Matrix build_penalized_crossprod(const Matrix& ata, int p, const std::vector<RandomBlock>& blocks,
                                 const std::vector<double>& sigma2, double sigma_eps2,
                                 std::vector<int>* active) {
  std::vector<int> keep;
  for (int i = 0; i < p; ++i) keep.push_back(i);
  std::vector<double> col_lambda;
  for (const auto& b : blocks) {
    const double s2 = sigma2.at(static_cast<std::size_t>(b.component));
    if (!(s2 > 0.0)) continue;
    const double lambda = sigma_eps2 / s2;
    for (int c = b.col_begin; c < b.col_end; ++c) {
      keep.push_back(p + c);
      col_lambda.push_back(lambda);
    }
  }
  const int d = static_cast<int>(keep.size());
  Matrix c(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) c(i, j) = ata(keep[static_cast<std::size_t>(i)], keep[static_cast<std::size_t>(j)]);
  for (int i = p; i < d; ++i) c(i, i) += col_lambda[static_cast<std::size_t>(i - p)];
  if (active) *active = keep;
  return c;
}

namespace {

struct ActiveProblem {
  Matrix ata;          // reduced to active columns
  Vector aty;
  std::vector<int> active_cols;            // map active -> full index
  std::vector<std::pair<int, int>> comp_cols;  // per active component: [begin,end) runs handled below
  std::vector<int> comp_of_col;            // per active random col: local component id
  std::vector<double> comp_q;              // per local component: column count
  std::vector<int> local_to_global_comp;
  int p = 0;
  int q_act = 0;
  int n = 0;
  double yty = 0.0;
  double var_y = 1.0;
};

ActiveProblem reduce(const CrossProblem& prob, const std::vector<int>& pinned) {
  std::vector<bool> is_pinned(static_cast<std::size_t>(prob.n_components), false);
  for (int c : pinned) {
    if (c < 0 || c >= prob.n_components)
      throw Error(ErrorKind::config, "pinned component id out of range");
    is_pinned[static_cast<std::size_t>(c)] = true;
  }
  ActiveProblem act;
  act.p = prob.p;
  act.n = prob.n;
  act.yty = prob.yty;
  act.var_y = prob.var_y;

  std::vector<int> comp_map(static_cast<std::size_t>(prob.n_components), -1);
  for (int c = 0; c < prob.n_components; ++c)
    if (!is_pinned[static_cast<std::size_t>(c)]) {
      comp_map[static_cast<std::size_t>(c)] = static_cast<int>(act.local_to_global_comp.size());
      act.local_to_global_comp.push_back(c);
    }
  act.comp_q.assign(act.local_to_global_comp.size(), 0.0);

  for (int i = 0; i < prob.p; ++i) act.active_cols.push_back(i);
  for (const auto& b : prob.blocks) {
    const int local = comp_map[static_cast<std::size_t>(b.component)];
    if (local < 0) continue;
    for (int c = b.col_begin; c < b.col_end; ++c) {
      act.active_cols.push_back(prob.p + c);
      act.comp_of_col.push_back(local);
      act.comp_q[static_cast<std::size_t>(local)] += 1.0;
    }
  }
  act.q_act = static_cast<int>(act.active_cols.size()) - act.p;

  const int d = static_cast<int>(act.active_cols.size());
  act.ata.resize(d, d);
  act.aty.resize(d);
  for (int i = 0; i < d; ++i) {
    act.aty(i) = prob.aty(act.active_cols[static_cast<std::size_t>(i)]);
    for (int j = 0; j < d; ++j)
      act.ata(i, j) = prob.ata(act.active_cols[static_cast<std::size_t>(i)],
                               act.active_cols[static_cast<std::size_t>(j)]);
  }
  return act;
}

// Shared evaluation state for one parameter vector.
struct Eval {
  double neg2 = std::numeric_limits<double>::infinity();
  Vector coef;
  bool ok = false;
  Eigen::LLT<Matrix> llt;
};

Eval evaluate(const ActiveProblem& act, const Eigen::VectorXd& theta) {
  Eval ev;
  const int k = static_cast<int>(act.comp_q.size());
  const int d = act.p + act.q_act;
  const double log_s2e = theta[0];
  const double s2e = std::exp(log_s2e);

  Matrix c = act.ata;
  for (int col = 0; col < act.q_act; ++col) {
    const int local = act.comp_of_col[static_cast<std::size_t>(col)];
    const double lambda = std::exp(log_s2e - theta[1 + local]);
    c(act.p + col, act.p + col) += lambda;
  }
  ev.llt.compute(c);
  if (ev.llt.info() != Eigen::Success) return ev;

  ev.coef = ev.llt.solve(act.aty);
  const double dot = act.aty.dot(ev.coef);
  const double ypy = (act.yty - dot) / s2e;

  double logdet = 0.0;
  const auto& l = ev.llt.matrixLLT();
  for (int i = 0; i < d; ++i) {
    const double li = l(i, i);
    if (!(li > 0.0) || !std::isfinite(li)) return ev;
    logdet += 2.0 * std::log(li);
  }

  double neg2 = (static_cast<double>(act.n) - act.p - act.q_act) * log_s2e + logdet + ypy +
                (static_cast<double>(act.n) - act.p) * std::log(2.0 * std::numbers::pi);
  for (int j = 0; j < k; ++j) neg2 += act.comp_q[static_cast<std::size_t>(j)] * theta[1 + j];
  if (!std::isfinite(neg2)) return ev;
  ev.neg2 = neg2;
  ev.ok = true;
  return ev;
}

void gradient(const ActiveProblem& act, const Eigen::VectorXd& theta, const Eval& ev,
              Eigen::VectorXd& grad) {
  const int k = static_cast<int>(act.comp_q.size());
  const int d = act.p + act.q_act;
  const double s2e = std::exp(theta[0]);

  // Column squared norms of L^-1 give the diagonal of C^-1.
  Matrix linv = Matrix::Identity(d, d);
  ev.llt.matrixL().solveInPlace(linv);
  Vector cinv_diag = linv.colwise().squaredNorm();

  std::vector<double> tr(static_cast<std::size_t>(k), 0.0);
  std::vector<double> unorm2(static_cast<std::size_t>(k), 0.0);
  for (int col = 0; col < act.q_act; ++col) {
    const int local = act.comp_of_col[static_cast<std::size_t>(col)];
    tr[static_cast<std::size_t>(local)] += cinv_diag(act.p + col);
    const double u = ev.coef(act.p + col);
    unorm2[static_cast<std::size_t>(local)] += u * u;
  }

  const double rss =
      act.yty - 2.0 * act.aty.dot(ev.coef) + ev.coef.dot(act.ata * ev.coef);

  grad.resize(1 + k);
  double trace_term = 0.0;
  for (int j = 0; j < k; ++j) {
    const double lambda = std::exp(theta[0] - theta[1 + j]);
    trace_term += lambda * tr[static_cast<std::size_t>(j)];
    grad[1 + j] = act.comp_q[static_cast<std::size_t>(j)] -
                  lambda * tr[static_cast<std::size_t>(j)] -
                  unorm2[static_cast<std::size_t>(j)] / std::exp(theta[1 + j]);
  }
  grad[0] = static_cast<double>(act.n) - act.p - act.q_act + trace_term - rss / s2e;
}

std::vector<Eigen::VectorXd> default_starts(const ActiveProblem& act) {
  const int k = static_cast<int>(act.comp_q.size());
  // Mean squared entry per component's columns, from the A'A diagonal.
  std::vector<double> msq(static_cast<std::size_t>(k), 1.0);
  {
    std::vector<double> acc(static_cast<std::size_t>(k), 0.0);
    for (int col = 0; col < act.q_act; ++col) {
      const int local = act.comp_of_col[static_cast<std::size_t>(col)];
      acc[static_cast<std::size_t>(local)] += act.ata(act.p + col, act.p + col);
    }
    for (int j = 0; j < k; ++j)
      msq[static_cast<std::size_t>(j)] =
          std::max(acc[static_cast<std::size_t>(j)] / act.n, 1e-12);
  }
  const double vy = act.var_y;
  auto start = [&](double eps_frac, double comp_frac) {
    Eigen::VectorXd th(1 + k);
    th[0] = std::log(eps_frac * vy);
    for (int j = 0; j < k; ++j)
      th[1 + j] = std::log(std::max(comp_frac * vy / (std::max(k, 1) * msq[static_cast<std::size_t>(j)]),
                                    1e-12));
    return th;
  };
  return {start(0.5, 0.5), start(0.9, 0.1), start(0.1, 2.0)};
}

}  // namespace

double reml_neg2_loglik(const CrossProblem& prob, const Vector& log_params, Vector* grad) {
  ActiveProblem act = reduce(prob, {});
  if (log_params.size() != 1 + static_cast<Eigen::Index>(act.comp_q.size()))
    throw Error(ErrorKind::config, "reml_neg2_loglik: parameter length mismatch");
  Eval ev = evaluate(act, log_params);
  if (!ev.ok) return std::numeric_limits<double>::infinity();
  if (grad) gradient(act, log_params, ev, *grad);
  return ev.neg2;
}

CoreResult reml_optimize(const CrossProblem& prob, const RemlOptions& opts) {
  ActiveProblem act = reduce(prob, opts.pinned_components);
  const int k = static_cast<int>(act.comp_q.size());

  detail::Objective fg = [&](const Eigen::VectorXd& th, Eigen::VectorXd* g) -> double {
    Eval ev = evaluate(act, th);
    if (!ev.ok) return std::numeric_limits<double>::infinity();
    if (g) gradient(act, th, ev, *g);
    return ev.neg2;
  };

  const double floor_log = std::log(opts.variance_floor);
  const double cap_log = std::log(1e12 * std::max(act.var_y, 1.0));
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(1 + k, floor_log);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(1 + k, cap_log);

  std::vector<Eigen::VectorXd> starts;
  if (opts.warm_start) {
    if (opts.warm_start->size() != 1 + k)
      throw Error(ErrorKind::config, "warm start has wrong length");
    starts.push_back(*opts.warm_start);
  } else {
    starts = default_starts(act);
    if (opts.n_starts < static_cast<int>(starts.size()))
      starts.resize(static_cast<std::size_t>(std::max(opts.n_starts, 1)));
  }

  detail::LbfgsOptions lopts;
  lopts.max_iter = opts.max_iter;
  lopts.grad_tol = opts.grad_tol;

  bool have_converged = false;
  detail::LbfgsResult best;
  int best_start = 0;
  bool have_any = false;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    detail::LbfgsResult r = detail::lbfgs_minimize(fg, starts[s], lo, hi, lopts);
    const bool better = !have_any || (r.converged && !have_converged) ||
                        (r.converged == have_converged && r.f < best.f);
    if (better) {
      best = r;
      best_start = static_cast<int>(s);
      have_converged = r.converged;
      have_any = true;
    }
  }

  Eval ev = evaluate(act, best.x);
  CoreResult out;
  out.sigma_eps2 = std::exp(best.x[0]);
  out.sigma2.assign(static_cast<std::size_t>(prob.n_components), 0.0);
  for (int j = 0; j < k; ++j)
    out.sigma2[static_cast<std::size_t>(act.local_to_global_comp[static_cast<std::size_t>(j)])] =
        std::exp(best.x[1 + j]);
  out.loglik_reml = -0.5 * best.f;
  out.convergence.iterations = best.iterations;
  out.convergence.grad_norm = best.grad.size() ? best.grad.lpNorm<Eigen::Infinity>() : 0.0;
  out.convergence.converged = best.converged;
  out.convergence.best_start = best_start;
  out.convergence.objective_trace = best.trace;

  const int d_full = static_cast<int>(prob.ata.rows());
  out.coef = Vector::Zero(d_full);
  for (std::size_t i = 0; i < act.active_cols.size(); ++i)
    out.coef(act.active_cols[i]) = ev.coef(static_cast<Eigen::Index>(i));
  return out;
}

}  // namespace detail

RawFit fit_reml_raw(const Matrix& x, const Matrix& z, const std::vector<RandomBlock>& blocks,
                    int n_components, const Vector& y, const RemlOptions& opts) {
  if (x.rows() != z.rows() && z.cols() > 0)
    throw Error(ErrorKind::config, "fit_reml_raw: X and Z row counts differ");
  if (y.size() != x.rows()) throw Error(ErrorKind::config, "fit_reml_raw: y length mismatch");
  if (y.size() < x.cols() + 1)
    throw Error(ErrorKind::validation, "fit_reml_raw: need at least p + 1 rows");

  detail::CrossProblem prob = detail::make_cross_problem(x, z, blocks, n_components, y);
  detail::CoreResult core = detail::reml_optimize(prob, opts);

  RawFit fit;
  fit.n = prob.n;
  fit.p = prob.p;
  fit.fixed_effects = core.coef.head(prob.p);
  fit.random_effects = core.coef.tail(core.coef.size() - prob.p);
  fit.sigma_eps2 = core.sigma_eps2;
  fit.sigma2 = core.sigma2;
  fit.loglik_reml = core.loglik_reml;
  fit.convergence = core.convergence;
  fit.ata = std::move(prob.ata);
  fit.aty = std::move(prob.aty);
  fit.yty = prob.yty;
  fit.blocks = blocks;
  fit.n_components = n_components;
  if (!core.convergence.converged && opts.throw_on_nonconvergence)
    throw Error(ErrorKind::non_convergence,
                "REML did not converge within " + std::to_string(opts.max_iter) +
                    " iterations (grad norm " + std::to_string(core.convergence.grad_norm) + ")");
  return fit;
}

namespace {

void check_fixed_rank(const DesignMatrices& design) {
  Eigen::ColPivHouseholderQR<Matrix> qr(design.fixed);
  qr.setThreshold(1e-10);
  const int rank = static_cast<int>(qr.rank());
  const int p = static_cast<int>(design.fixed.cols());
  if (rank < p) {
    const auto perm = qr.colsPermutation().indices();
    std::ostringstream os;
    os << "fixed-effect block is rank deficient (rank " << rank << " of " << p
       << "); dependent columns:";
    for (int i = rank; i < p; ++i) os << " " << design.layout.fixed_col_name(perm(i));
    throw Error(ErrorKind::rank_deficient, os.str());
  }
}

}  // namespace

FittedModel fit_reml(const DesignMatrices& design, const Vector& y, const RemlOptions& opts) {
  if (y.size() != design.rows())
    throw Error(ErrorKind::config, "fit_reml: response length does not match design rows");
  if (y.size() < design.fixed.cols() + 1)
    throw Error(ErrorKind::validation, "fit_reml: need more rows than fixed columns");
  check_fixed_rank(design);

  const auto blocks = detail::blocks_for_layout(design.layout);
  const int n_comp = detail::n_components_for(design.layout);
  detail::CrossProblem prob = detail::make_cross_problem(design.fixed, design.random, blocks, n_comp, y);
  detail::CoreResult core = detail::reml_optimize(prob, opts);

  FittedModel model;
  model.layout = design.layout;
  model.knots = design.knots;
  model.design_options = design.options;
  model.theta = core.coef.head(design.fixed.cols());
  model.u = core.coef.tail(design.random.cols());
  model.vc = detail::vc_from_sigma2(core.sigma2, core.sigma_eps2, design.layout,
                                    opts.variance_floor);
  model.loglik_reml = core.loglik_reml;
  model.convergence = core.convergence;
  model.ata = std::move(prob.ata);
  model.aty = std::move(prob.aty);
  model.yty = prob.yty;
  model.n_rows = prob.n;
  model.observed_times = design.times;
  model.observed_locations = design.locations;
  model.missing_mask = design.missing_mask;

  if (!core.convergence.converged && opts.throw_on_nonconvergence) {
    auto best = std::make_shared<FittedModel>(model);
    throw NonConvergenceError(
        "REML did not converge within " + std::to_string(opts.max_iter) +
            " iterations (grad norm " + std::to_string(core.convergence.grad_norm) + ")",
        best);
  }
  return model;
}

Penalties Penalties::from_variance_components(const VarianceComponents& vc) {
  Penalties pen;
  const std::size_t r = vc.sigma_T2.size();
  for (std::size_t i = 0; i < r; ++i) {
    pen.lambda_T.push_back(vc.lambda_T(static_cast<int>(i)));
    pen.lambda_S.push_back(vc.lambda_S(static_cast<int>(i)));
    if (!vc.sigma_I2.empty()) pen.lambda_I.push_back(vc.lambda_I(static_cast<int>(i)));
  }
  return pen;
}

Vector penalized_fit(const DesignMatrices& design, const Vector& y, const Penalties& pen) {
  const ColumnLayout& lay = design.layout;
  const std::size_t r = static_cast<std::size_t>(lay.R);
  if (pen.lambda_T.size() != r || pen.lambda_S.size() != r ||
      (lay.interaction && pen.lambda_I.size() != r))
    throw Error(ErrorKind::config, "penalized_fit: penalty vectors do not match the layout");
  auto check = [](double l) {
    if (std::isnan(l) || l < 0.0)
      throw Error(ErrorKind::config, "penalized_fit: penalties must be >= 0");
  };
  for (double l : pen.lambda_T) check(l);
  for (double l : pen.lambda_S) check(l);
  for (double l : pen.lambda_I) check(l);

  const int p = lay.fixed_cols();
  // Active random columns: finite penalty. Infinite penalties zero the block.
  std::vector<int> active;
  std::vector<double> lam;
  for (int rr = 0; rr < lay.R; ++rr) {
    auto push = [&](int begin, int count, double l) {
      if (std::isinf(l)) return;
      for (int c = begin; c < begin + count; ++c) {
        active.push_back(c);
        lam.push_back(l);
      }
    };
    push(lay.temporal_offset(rr), lay.M, pen.lambda_T[static_cast<std::size_t>(rr)]);
    push(lay.spatial_offset(rr), lay.N, pen.lambda_S[static_cast<std::size_t>(rr)]);
    if (lay.interaction)
      push(lay.interaction_offset(rr), lay.M * lay.N, pen.lambda_I[static_cast<std::size_t>(rr)]);
  }

  const int q_act = static_cast<int>(active.size());
  const Eigen::Index n = design.rows();
  Matrix aug(n + q_act, p + q_act);
  aug.setZero();
  aug.topLeftCorner(n, p) = design.fixed;
  for (int c = 0; c < q_act; ++c)
    aug.block(0, p + c, n, 1) = design.random.col(active[static_cast<std::size_t>(c)]);
  for (int c = 0; c < q_act; ++c)
    aug(n + c, p + c) = std::sqrt(lam[static_cast<std::size_t>(c)]);
  Vector rhs = Vector::Zero(n + q_act);
  rhs.head(n) = y;

  Eigen::ColPivHouseholderQR<Matrix> qr(aug);
  qr.setThreshold(1e-12);
  if (qr.rank() < p + q_act)
    throw Error(ErrorKind::rank_deficient,
                "penalized_fit: singular system (zero penalties on collinear columns)");
  Vector sol = qr.solve(rhs);

  Vector full = Vector::Zero(p + lay.random_cols());
  full.head(p) = sol.head(p);
  for (int c = 0; c < q_act; ++c)
    full(p + active[static_cast<std::size_t>(c)]) = sol(p + c);
  return full;
}

CoefficientParts evaluate_coefficient(const FittedModel& model, int predictor,
                                      std::span<const double> times,
                                      std::span<const Point> points) {
  const ColumnLayout& lay = model.layout;
  if (predictor < 0 || predictor >= lay.R)
    throw Error(ErrorKind::config, "evaluate_coefficient: predictor index out of range");
  if (times.size() != points.size() || times.empty())
    throw Error(ErrorKind::config, "evaluate_coefficient: grid must pair times with points");

  const int g = static_cast<int>(times.size());
  CoefficientParts parts;
  parts.temporal.resize(g);
  parts.spatial.resize(g);
  parts.interaction.resize(g);
  parts.total.resize(g);

  const int f0 = lay.fixed_offset(predictor);
  const int t0 = lay.temporal_offset(predictor);
  const int s0 = lay.spatial_offset(predictor);
  const int i0 = lay.interaction_offset(predictor);
  const int m = lay.M, n = lay.N;
  const auto& opts = model.design_options;
  auto ksp = [&](const Point& s, const Point& knot) {
    return opts.spatial_kernel == SpatialKernelKind::thin_plate
               ? spatial_kernel(s, knot)
               : spatial_kernel_matern32(s, knot, opts.matern_range);
  };

  for (int i = 0; i < g; ++i) {
    const double t = times[static_cast<std::size_t>(i)];
    const Point& s = points[static_cast<std::size_t>(i)];
    double temporal = model.theta(f0 + 0) + model.theta(f0 + 1) * t;
    for (int mm = 0; mm < m; ++mm)
      temporal += model.u(t0 + mm) * temporal_kernel(t, model.knots.temporal[static_cast<std::size_t>(mm)]);
    double spatial = model.theta(f0 + 2) * s.x + model.theta(f0 + 3) * s.y;
    for (int nn = 0; nn < n; ++nn)
      spatial += model.u(s0 + nn) * ksp(s, model.knots.spatial[static_cast<std::size_t>(nn)]);
    double inter = 0.0;
    if (lay.interaction) {
      for (int mm = 0; mm < m; ++mm) {
        const double kt = temporal_kernel(t, model.knots.temporal[static_cast<std::size_t>(mm)]);
        for (int nn = 0; nn < n; ++nn)
          inter += model.u(i0 + mm * n + nn) * kt *
                   ksp(s, model.knots.spatial[static_cast<std::size_t>(nn)]);
      }
    }
    parts.temporal(i) = temporal;
    parts.spatial(i) = spatial;
    parts.interaction(i) = inter;
    parts.total(i) = temporal + spatial + inter;
  }
  return parts;
}

}  // namespace stvcm
