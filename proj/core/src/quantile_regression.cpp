#include "msmsharp/quantile_regression.hpp"

#include "msmsharp/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace msmsharp {

double check_loss(double u, double tau) noexcept {
  return u * (tau - (u < 0.0 ? 1.0 : 0.0));
}

double weighted_check_loss(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& weights, const Eigen::VectorXd& coefficients, double tau) {
  const Eigen::VectorXd r = y - design * coefficients;
  double total = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (weights[i] != 0.0) total += weights[i] * check_loss(r[i], tau);
  }
  return total;
}

Eigen::MatrixXd intercept_design(const Eigen::MatrixXd& covariates) {
  Eigen::MatrixXd g(covariates.rows(), covariates.cols() + 1);
  g.col(0).setOnes();
  g.rightCols(covariates.cols()) = covariates;
  return g;
}

namespace {

double unweighted_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                            double tau) {
  const Eigen::VectorXd r = y - x * beta;
  double total = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) total += check_loss(r[i], tau);
  return total;
}

// Largest step in [0, inf) keeping v + step * dv >= 0.
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double step = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) step = std::min(step, -v[i] / dv[i]);
  }
  return step;
}

struct LpSolution {
  Eigen::VectorXd beta;
  Eigen::VectorXd dual;  // a in [0, 1]^m; interior entries mark the basis
  int iterations = 0;
};

// Unweighted problem min sum rho_tau(y - x beta) through its dual
//   max y'a  s.t.  x'a = (1 - tau) x'1,  0 <= a <= 1,
// written as min c'a with c = -y. `dual_y` is the multiplier of the
// equality constraint and beta = -dual_y.
LpSolution solve_dual_lp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double tau, const QrOptions& options) {
  const Eigen::Index m = x.rows();
  constexpr double step_damping = 0.99995;

  const Eigen::VectorXd c = -y;
  const double y_sum = y.sum();

  Eigen::VectorXd a = Eigen::VectorXd::Constant(m, 1.0 - tau);
  Eigen::VectorXd s = Eigen::VectorXd::Ones(m) - a;
  Eigen::VectorXd dual_y = x.colPivHouseholderQr().solve(c);
  Eigen::VectorXd r = c - x * dual_y;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (r[i] == 0.0) r[i] = 1e-3;
  }
  Eigen::VectorXd z = r.cwiseMax(0.0);
  Eigen::VectorXd w = z - r;
  // Keep both slacks strictly positive so the Newton system is well posed.
  const double floor = 1e-3 * std::max(1.0, r.cwiseAbs().maxCoeff());
  z.array() += floor;
  w.array() += floor;

  // The primal objective is valid for any beta, so the best iterate seen is
  // kept; the gap test can stall once rounding in the normal equations
  // leaves the dual slightly infeasible.
  LpSolution sol;
  double best_primal = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= options.max_iterations; ++it) {
    sol.iterations = it;
    if (!dual_y.allFinite() || !a.allFinite() || !z.allFinite() || !w.allFinite()) break;
    const Eigen::VectorXd beta = -dual_y;
    const double primal = unweighted_objective(x, y, beta, tau);
    if (primal < best_primal) {
      best_primal = primal;
      sol.beta = beta;
      sol.dual = a;
    }
    const double lower = y.dot(a) - (1.0 - tau) * y_sum;
    const double scale = 1.0 + std::abs(primal);
    if (primal - lower <= options.gap_tolerance * scale) break;
    if (z.dot(a) + w.dot(s) <= 1e-14 * scale) break;

    const Eigen::VectorXd q = ((z.array() / a.array()) + (w.array() / s.array())).inverse().matrix();
    r = z - w;

    Eigen::MatrixXd normal = x.transpose() * q.asDiagonal() * x;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
    if (ldlt.info() != Eigen::Success) break;

    // Affine-scaling (predictor) direction.
    Eigen::VectorXd dy = ldlt.solve(x.transpose() * q.cwiseProduct(r));
    Eigen::VectorXd da = q.cwiseProduct(x * dy - r);
    Eigen::VectorXd ds = -da;
    Eigen::VectorXd dz = -z - (z.array() / a.array() * da.array()).matrix();
    Eigen::VectorXd dw = -w - (w.array() / s.array() * ds.array()).matrix();

    double fp = std::min(1.0, step_damping * std::min(max_step(a, da), max_step(s, ds)));
    double fd = std::min(1.0, step_damping * std::min(max_step(z, dz), max_step(w, dw)));

    if (std::min(fp, fd) < 1.0) {
      const double mu_now = z.dot(a) + w.dot(s);
      const double mu_aff = (z + fd * dz).dot(a + fp * da) + (w + fd * dw).dot(s + fp * ds);
      const double mu = mu_now * std::pow(mu_aff / mu_now, 3) / (2.0 * static_cast<double>(m));

      // Mehrotra corrector with centering.
      const Eigen::VectorXd dadz = da.cwiseProduct(dz);
      const Eigen::VectorXd dsdw = ds.cwiseProduct(dw);
      const Eigen::VectorXd a_inv = a.cwiseInverse();
      const Eigen::VectorXd s_inv = s.cwiseInverse();
      const Eigen::VectorXd xi = mu * (a_inv - s_inv);
      const Eigen::VectorXd extra = xi - dadz.cwiseProduct(a_inv) + dsdw.cwiseProduct(s_inv);

      dy = ldlt.solve(x.transpose() * q.cwiseProduct(r - extra));
      da = q.cwiseProduct(x * dy + extra - r);
      ds = -da;
      dz = ((Eigen::VectorXd::Constant(m, mu) - dadz).cwiseProduct(a_inv) - z -
            (z.array() * a_inv.array() * da.array()).matrix());
      dw = ((Eigen::VectorXd::Constant(m, mu) - dsdw).cwiseProduct(s_inv) - w -
            (w.array() * s_inv.array() * ds.array()).matrix());

      fp = std::min(1.0, step_damping * std::min(max_step(a, da), max_step(s, ds)));
      fd = std::min(1.0, step_damping * std::min(max_step(z, dz), max_step(w, dw)));
    }

    if (fp < 1e-14 && fd < 1e-14) break;

    a += fp * da;
    s += fp * ds;
    dual_y += fd * dy;
    z += fd * dz;
    w += fd * dw;
  }
  if (dual_y.allFinite() && a.allFinite()) {
    const double primal = unweighted_objective(x, y, -dual_y, tau);
    if (primal < best_primal) {
      sol.beta = -dual_y;
      sol.dual = a;
    }
  }
  return sol;
}

// Exact fit through k rows chosen from the interior-point dual: rows whose
// dual value sits furthest from the bounds {0, 1} form the basis.
bool basic_solution(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& dual,
                    Eigen::VectorXd& beta_out) {
  const Eigen::Index m = x.rows();
  const Eigen::Index k = x.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
    return std::min(dual[i], 1.0 - dual[i]) > std::min(dual[j], 1.0 - dual[j]);
  });

  std::vector<Eigen::Index> basis;
  Eigen::MatrixXd rows(0, k);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const auto remaining = static_cast<Eigen::Index>(order.size() - pos);
    if (static_cast<Eigen::Index>(basis.size()) + remaining < k) return false;
    const auto i = order[pos];
    Eigen::MatrixXd trial(rows.rows() + 1, k);
    trial.topRows(rows.rows()) = rows;
    trial.row(rows.rows()) = x.row(i);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(trial);
    qr.setThreshold(1e-10);
    if (qr.rank() == trial.rows()) {
      rows = std::move(trial);
      basis.push_back(i);
      if (static_cast<Eigen::Index>(basis.size()) == k) break;
    }
  }
  if (static_cast<Eigen::Index>(basis.size()) != k) return false;
  Eigen::VectorXd rhs(k);
  for (Eigen::Index j = 0; j < k; ++j) rhs[j] = y[basis[static_cast<std::size_t>(j)]];
  beta_out = rows.partialPivLu().solve(rhs);
  return beta_out.allFinite();
}

}  // namespace

QuantileFit fit_weighted_qr(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& weights, double tau, const QrOptions& options) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "quantile level must lie in (0, 1)");
  }
  if (design.rows() != y.size() || weights.size() != y.size()) {
    throw Error(ErrorCode::dimension_mismatch, "design, outcome and weights must have the same number of rows");
  }
  if (design.cols() < 1) {
    throw Error(ErrorCode::invalid_argument, "quantile regression design needs at least one column");
  }
  if (!design.allFinite() || !y.allFinite() || !weights.allFinite()) {
    throw Error(ErrorCode::non_finite_value, "quantile regression inputs must be finite");
  }
  if ((weights.array() < 0.0).any()) {
    throw Error(ErrorCode::invalid_argument, "quantile regression weights must be nonnegative");
  }

  const Eigen::Index k = design.cols();
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (weights[i] > 0.0) active.push_back(i);
  }
  const auto m = static_cast<Eigen::Index>(active.size());
  if (m < k) {
    throw Error(ErrorCode::rank_deficient, "fewer positive-weight rows than design columns");
  }

  // Weighted check loss is the unweighted loss on rows scaled by their
  // weight, since w * rho(u) = rho(w * u) for w > 0.
  Eigen::MatrixXd x(m, k);
  Eigen::VectorXd yw(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto i = active[static_cast<std::size_t>(r)];
    x.row(r) = weights[i] * design.row(i);
    yw[r] = weights[i] * y[i];
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> rank_check(x);
  rank_check.setThreshold(1e-12);
  if (rank_check.rank() < k) {
    throw Error(ErrorCode::rank_deficient, "quantile regression design is rank deficient after dropping zero-weight rows");
  }

  // Column and response scaling for conditioning; undone on the way out.
  Eigen::VectorXd col_scale = x.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < k; ++j) {
    if (col_scale[j] == 0.0) col_scale[j] = 1.0;
  }
  double y_scale = yw.cwiseAbs().maxCoeff();
  if (y_scale == 0.0) y_scale = 1.0;
  const Eigen::MatrixXd xs = x * col_scale.cwiseInverse().asDiagonal();
  const Eigen::VectorXd ys = yw / y_scale;

  QuantileFit fit;
  fit.level = tau;
  fit.method = QuantileMethod::linear;

  Eigen::VectorXd beta_scaled;
  if (m == k) {
    beta_scaled = xs.partialPivLu().solve(ys);
  } else {
    const LpSolution lp = solve_dual_lp(xs, ys, tau, options);
    fit.iterations = lp.iterations;
    if (lp.beta.size() != k) throw Error(ErrorCode::not_converged, "quantile regression interior point diverged");
    beta_scaled = lp.beta;
    if (options.polish) {
      Eigen::VectorXd vertex;
      if (basic_solution(xs, ys, lp.dual, vertex)) {
        const double f_ipm = unweighted_objective(xs, ys, beta_scaled, tau);
        const double f_vertex = unweighted_objective(xs, ys, vertex, tau);
        if (f_vertex <= f_ipm + 1e-13 * (1.0 + std::abs(f_ipm))) beta_scaled = vertex;
      }
    }
  }

  fit.coefficients = y_scale * col_scale.cwiseInverse().cwiseProduct(beta_scaled);
  if (!fit.coefficients.allFinite()) {
    throw Error(ErrorCode::not_converged, "quantile regression produced non-finite coefficients");
  }
  fit.fitted_values = design * fit.coefficients;
  fit.residuals = y - fit.fitted_values;
  fit.objective = weighted_check_loss(design, y, weights, fit.coefficients, tau);
  return fit;
}

QuantileFit fit_linear_quantile(const Dataset& ds, int arm, double tau, const QrOptions& options) {
  const auto rows = ds.arm_rows(arm);
  if (rows.empty()) throw Error(ErrorCode::empty_arm, "quantile regression arm has no units");
  const Eigen::MatrixXd full = intercept_design(ds.covariates());
  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd g(m, full.cols());
  Eigen::VectorXd y(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    g.row(r) = full.row(rows[static_cast<std::size_t>(r)]);
    y[r] = ds.outcome()[rows[static_cast<std::size_t>(r)]];
  }
  QuantileFit arm_fit = fit_weighted_qr(g, y, Eigen::VectorXd::Ones(m), tau, options);

  QuantileFit fit;
  fit.level = tau;
  fit.arm = arm;
  fit.method = QuantileMethod::linear;
  fit.coefficients = arm_fit.coefficients;
  fit.fitted_values = full * fit.coefficients;
  fit.residuals = ds.outcome() - fit.fitted_values;
  fit.objective = arm_fit.objective;
  fit.iterations = arm_fit.iterations;
  return fit;
}

}  // namespace msmsharp
