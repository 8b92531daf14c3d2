#include "msmsharp/bounds.hpp"

#include "msmsharp/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace msmsharp {

SensitivityModel SensitivityModel::from_lambda(double lambda) {
  return SensitivityModel{lambda, tau_from_lambda(lambda)};
}

double tau_from_lambda(double lambda) {
  if (!(lambda >= 1.0) || !std::isfinite(lambda)) {
    std::ostringstream os;
    os << "sensitivity parameter Lambda must be a finite number >= 1, got " << lambda;
    throw Error(ErrorCode::invalid_argument, os.str());
  }
  return lambda / (lambda + 1.0);
}

namespace {

void check_propensities(const Eigen::VectorXd& e) {
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    if (!(e[i] > 0.0 && e[i] < 1.0)) {
      throw Error(ErrorCode::propensity_out_of_range,
                  "propensity at row " + std::to_string(i + 1) + " is outside (0, 1)");
    }
  }
}

void check_lengths(const Dataset& ds, const Eigen::VectorXd& e) {
  if (e.size() != ds.n()) {
    throw Error(ErrorCode::dimension_mismatch, "propensity vector length does not match the dataset");
  }
  check_propensities(e);
}

double treated_mean(const Dataset& ds) {
  double total = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    if (ds.treated(i)) {
      total += ds.outcome()[i];
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorCode::empty_arm, "no treated units");
  return total / static_cast<double>(count);
}

Direction opposite(Direction d) { return d == Direction::upper ? Direction::lower : Direction::upper; }

int arm_of(ArmProgram program) { return program == ArmProgram::psi_t ? 1 : 0; }

ArmProgram program_of(Estimand estimand) {
  switch (estimand) {
    case Estimand::psi_t: return ArmProgram::psi_t;
    case Estimand::psi_c: return ArmProgram::psi_c;
    default: throw Error(ErrorCode::invalid_argument, "expected psi_t or psi_c");
  }
}

// Column of fitted quantile values, intercept in front.
Eigen::MatrixXd quantile_design(const QuantileFit& fit) {
  Eigen::MatrixXd g(fit.fitted_values.size(), 2);
  g.col(0).setOnes();
  g.col(1) = fit.fitted_values;
  return g;
}

// Greedy maximal set of linearly independent design columns, in order.
// Collinear balancing functions add only redundant constraints.
std::vector<Eigen::Index> independent_columns(const Eigen::MatrixXd& design) {
  std::vector<Eigen::Index> keep;
  Eigen::MatrixXd basis(design.rows(), 0);
  for (Eigen::Index j = 0; j < design.cols(); ++j) {
    Eigen::MatrixXd trial(design.rows(), basis.cols() + 1);
    trial.leftCols(basis.cols()) = basis;
    trial.col(basis.cols()) = design.col(j);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(trial);
    qr.setThreshold(1e-10);
    if (qr.rank() == trial.cols()) {
      basis = std::move(trial);
      keep.push_back(j);
    }
  }
  return keep;
}

double tie_fraction(const Eigen::VectorXd& values) {
  if (values.size() < 2) return 0.0;
  std::vector<double> sorted(values.data(), values.data() + values.size());
  std::sort(sorted.begin(), sorted.end());
  Eigen::Index tied = 0;
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i] == sorted[i - 1]) ++tied;
  }
  return static_cast<double>(tied) / static_cast<double>(values.size());
}

}  // namespace

WeightBox weight_box(const Eigen::VectorXd& propensities, double lambda, WeightArm arm) {
  tau_from_lambda(lambda);
  check_propensities(propensities);
  WeightBox box;
  box.arm = arm;
  const auto e = propensities.array();
  switch (arm) {
    case WeightArm::treated_inverse:
      box.base = Eigen::VectorXd::Ones(propensities.size());
      box.odds = ((1.0 - e) / e).matrix();
      break;
    case WeightArm::control_inverse:
      box.base = Eigen::VectorXd::Ones(propensities.size());
      box.odds = (e / (1.0 - e)).matrix();
      break;
    case WeightArm::control_odds:
      box.base = Eigen::VectorXd::Zero(propensities.size());
      box.odds = (e / (1.0 - e)).matrix();
      break;
  }
  box.lower = box.base + box.odds / lambda;
  box.upper = box.base + box.odds * lambda;
  return box;
}

double ipw_point_estimate(const Dataset& ds, const Eigen::VectorXd& propensities, Estimand estimand) {
  check_lengths(ds, propensities);
  const auto& y = ds.outcome();
  const auto& e = propensities;
  auto arm_mean = [&](ArmProgram program) {
    double num = 0.0;
    double den = 0.0;
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
      const bool t = ds.treated(i);
      double w = 0.0;
      switch (program) {
        case ArmProgram::psi_t: w = t ? 1.0 / e[i] : 0.0; break;
        case ArmProgram::psi_c: w = t ? 0.0 : 1.0 / (1.0 - e[i]); break;
        case ArmProgram::att_control: w = t ? 0.0 : e[i] / (1.0 - e[i]); break;
      }
      num += w * y[i];
      den += w;
    }
    if (den == 0.0) throw Error(ErrorCode::empty_arm, "estimand arm has no units");
    return num / den;
  };
  switch (estimand) {
    case Estimand::psi_t: return arm_mean(ArmProgram::psi_t);
    case Estimand::psi_c: return arm_mean(ArmProgram::psi_c);
    case Estimand::ate: return arm_mean(ArmProgram::psi_t) - arm_mean(ArmProgram::psi_c);
    case Estimand::att: return treated_mean(ds) - arm_mean(ArmProgram::att_control);
  }
  return 0.0;
}

double box_fractional_extremum(const Eigen::VectorXd& values, const Eigen::VectorXd& lower,
                               const Eigen::VectorXd& upper, Direction direction) {
  const Eigen::Index m = values.size();
  if (m == 0) throw Error(ErrorCode::empty_arm, "fractional program over an empty arm");
  if (lower.size() != m || upper.size() != m) {
    throw Error(ErrorCode::dimension_mismatch, "weight box does not match values");
  }
  const double sign = direction == Direction::upper ? 1.0 : -1.0;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return sign * values[a] > sign * values[b]; });

  double num = values.dot(lower);
  double den = lower.sum();
  double best = num / den;
  for (const auto i : order) {
    const double extra = upper[i] - lower[i];
    num += values[i] * extra;
    den += extra;
    const double ratio = num / den;
    if (sign * ratio > sign * best) best = ratio;
  }
  return best;
}

double balancing_value(const BalancingProblem& problem, const Eigen::VectorXd& gamma, double lambda,
                       int zero_sign) {
  const Eigen::VectorXd fitted = problem.design * gamma;
  const Eigen::VectorXd nominal = problem.base + problem.odds;
  double num = 0.0;
  for (Eigen::Index i = 0; i < fitted.size(); ++i) {
    const double r = problem.values[i] - fitted[i];
    const int v = r > 0.0 ? 1 : (r < 0.0 ? -1 : zero_sign);
    const double factor = v > 0 ? lambda : 1.0 / lambda;
    num += r * (problem.base[i] + problem.odds[i] * factor) + fitted[i] * nominal[i];
  }
  return num / nominal.sum();
}

BalancingSolution solve_balancing(const BalancingProblem& problem, double lambda, Direction direction,
                                  const QrOptions& options) {
  const double tau = tau_from_lambda(lambda);
  const Eigen::Index m = problem.values.size();
  if (m == 0) throw Error(ErrorCode::empty_arm, "balancing program over an empty arm");
  if (problem.base.size() != m || problem.odds.size() != m || problem.design.rows() != m) {
    throw Error(ErrorCode::dimension_mismatch, "balancing problem parts have inconsistent lengths");
  }

  BalancingProblem oriented = problem;
  if (direction == Direction::lower) oriented.values = -problem.values;
  const auto keep = independent_columns(problem.design);
  if (static_cast<Eigen::Index>(keep.size()) < problem.design.cols()) {
    oriented.design = problem.design(Eigen::all, keep);
  }

  BalancingSolution sol;
  sol.fit = fit_weighted_qr(oriented.design, oriented.values, oriented.odds, tau, options);
  sol.value = balancing_value(oriented, sol.fit.coefficients, lambda);
  sol.upper_branch_units = (sol.fit.residuals.array() >= 0.0).count();
  if (direction == Direction::lower) sol.value = -sol.value;
  return sol;
}

BalancingProblem make_balancing_problem(const Dataset& ds, const Eigen::VectorXd& propensities,
                                        const Eigen::MatrixXd& design_rows, ArmProgram program) {
  check_lengths(ds, propensities);
  if (design_rows.rows() != ds.n()) {
    throw Error(ErrorCode::dimension_mismatch, "balancing design must have one row per unit");
  }
  const auto rows = ds.arm_rows(arm_of(program));
  if (rows.empty()) throw Error(ErrorCode::empty_arm, "estimand arm has no units");
  const auto m = static_cast<Eigen::Index>(rows.size());
  BalancingProblem p;
  p.values.resize(m);
  p.base.resize(m);
  p.odds.resize(m);
  p.design.resize(m, design_rows.cols());
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto i = rows[static_cast<std::size_t>(r)];
    const double e = propensities[i];
    p.values[r] = ds.outcome()[i];
    p.design.row(r) = design_rows.row(i);
    switch (program) {
      case ArmProgram::psi_t:
        p.base[r] = 1.0;
        p.odds[r] = (1.0 - e) / e;
        break;
      case ArmProgram::psi_c:
        p.base[r] = 1.0;
        p.odds[r] = e / (1.0 - e);
        break;
      case ArmProgram::att_control:
        p.base[r] = 0.0;
        p.odds[r] = e / (1.0 - e);
        break;
    }
  }
  return p;
}

namespace {

double zsb_program(const Dataset& ds, const Eigen::VectorXd& propensities, double lambda, ArmProgram program,
                   Direction direction) {
  tau_from_lambda(lambda);
  const BalancingProblem p =
      make_balancing_problem(ds, propensities, Eigen::MatrixXd::Ones(ds.n(), 1), program);
  const Eigen::VectorXd lower = p.base + p.odds / lambda;
  const Eigen::VectorXd upper = p.base + p.odds * lambda;
  return box_fractional_extremum(p.values, lower, upper, direction);
}

}  // namespace

double zsb_bound(const Dataset& ds, const Eigen::VectorXd& propensities, double lambda, Estimand estimand,
                 Direction direction) {
  return zsb_program(ds, propensities, lambda, program_of(estimand), direction);
}

double qb_apo_bound(const Dataset& ds, const Eigen::VectorXd& propensities, const QuantileFit& quantile_fit,
                    double lambda, Estimand estimand, Direction direction, const QrOptions& options) {
  const ArmProgram program = program_of(estimand);
  if (quantile_fit.arm != -1 && quantile_fit.arm != arm_of(program)) {
    throw Error(ErrorCode::invalid_argument, "quantile fit arm does not match the estimand");
  }
  if (quantile_fit.fitted_values.size() != ds.n()) {
    throw Error(ErrorCode::dimension_mismatch, "quantile fit must provide one fitted value per unit");
  }
  const BalancingProblem p = make_balancing_problem(ds, propensities, quantile_design(quantile_fit), program);
  return solve_balancing(p, lambda, direction, options).value;
}

double att_bound(const Dataset& ds, const Eigen::VectorXd& propensities, const QuantileFit& quantile_fit,
                 double lambda, Direction direction, const QrOptions& options) {
  if (quantile_fit.arm != -1 && quantile_fit.arm != 0) {
    throw Error(ErrorCode::invalid_argument, "ATT bounds need a control-arm quantile fit");
  }
  if (quantile_fit.fitted_values.size() != ds.n()) {
    throw Error(ErrorCode::dimension_mismatch, "quantile fit must provide one fitted value per unit");
  }
  const BalancingProblem p =
      make_balancing_problem(ds, propensities, quantile_design(quantile_fit), ArmProgram::att_control);
  // The ATT is maximized by the smallest attainable control mean.
  return treated_mean(ds) - solve_balancing(p, lambda, opposite(direction), options).value;
}

QuantileModels QuantileModels::gather(std::span<const Eigen::Index> rows) const {
  auto pick = [&](const std::optional<QuantileFit>& fit) -> std::optional<QuantileFit> {
    if (!fit) return std::nullopt;
    QuantileFit out = *fit;
    const auto m = static_cast<Eigen::Index>(rows.size());
    out.fitted_values.resize(m);
    out.residuals.resize(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      out.fitted_values[r] = fit->fitted_values[rows[static_cast<std::size_t>(r)]];
      out.residuals[r] = fit->residuals[rows[static_cast<std::size_t>(r)]];
    }
    return out;
  };
  QuantileModels out;
  out.treated = {pick(treated.upper), pick(treated.lower)};
  out.control = {pick(control.upper), pick(control.lower)};
  return out;
}

QuantileModels fit_quantile_models(const Dataset& ds, double lambda, Estimand estimand, QuantileMethod method,
                                   const KnnOptions& knn, const QrOptions& qr) {
  const double tau = tau_from_lambda(lambda);
  auto fit_arm = [&](int arm) {
    auto one = [&](double level) {
      return method == QuantileMethod::linear ? fit_linear_quantile(ds, arm, level, qr)
                                              : crossfit_knn_quantiles(ds, arm, level, knn);
    };
    ArmQuantiles q;
    q.upper = one(tau);
    q.lower = tau == 0.5 ? q.upper : one(1.0 - tau);
    return q;
  };
  QuantileModels models;
  if (estimand == Estimand::psi_t || estimand == Estimand::ate) models.treated = fit_arm(1);
  if (estimand != Estimand::psi_t) models.control = fit_arm(0);
  return models;
}

ResolvedPropensity resolve_propensities(const Dataset& ds, bool trim) {
  ResolvedPropensity out;
  if (ds.known_propensity()) {
    out.values = *ds.known_propensity();
  } else {
    out.fit = fit_logistic(ds);
    out.values = out.fit->fitted;
  }
  if (trim) {
    for (Eigen::Index i = 0; i < out.values.size(); ++i) {
      const double clamped = std::clamp(out.values[i], 0.01, 0.99);
      if (clamped != out.values[i]) {
        out.values[i] = clamped;
        ++out.clamped_units;
      }
    }
  }
  return out;
}

namespace {

struct ArmInterval {
  double lower = 0.0;
  double upper = 0.0;
};

const QuantileFit& require_fit(const std::optional<QuantileFit>& fit, const char* what) {
  if (!fit) throw Error(ErrorCode::invalid_argument, std::string("missing quantile model: ") + what);
  return *fit;
}

}  // namespace

BoundsEstimate compute_bounds(const Dataset& ds, const Eigen::VectorXd& propensities, double lambda,
                              Estimand estimand, BoundsMethod method, const QuantileModels* quantiles,
                              const QrOptions& qr) {
  tau_from_lambda(lambda);
  check_lengths(ds, propensities);
  if (method == BoundsMethod::quantile_balance && quantiles == nullptr) {
    throw Error(ErrorCode::invalid_argument, "quantile balancing needs fitted quantile models");
  }

  BoundsEstimate est;
  est.estimand = estimand;
  est.method = method;
  est.lambda = lambda;
  est.point_estimate = ipw_point_estimate(ds, propensities, estimand);

  const Eigen::MatrixXd covariate_design =
      method == BoundsMethod::covariate_balance ? intercept_design(ds.covariates()) : Eigen::MatrixXd();

  auto solve = [&](ArmProgram program, Direction direction, const char* label) -> double {
    const std::string tag = std::string(label) + (direction == Direction::upper ? "_upper" : "_lower");
    if (method == BoundsMethod::zsb) return zsb_program(ds, propensities, lambda, program, direction);

    const Eigen::MatrixXd* design = &covariate_design;
    Eigen::MatrixXd q_design;
    if (method == BoundsMethod::quantile_balance) {
      const ArmQuantiles& arm = program == ArmProgram::psi_t ? quantiles->treated : quantiles->control;
      // Larger weights above Q_tau raise the mean; below Q_{1-tau} lower it.
      const QuantileFit& fit = direction == Direction::upper ? require_fit(arm.upper, "Q_tau")
                                                             : require_fit(arm.lower, "Q_{1-tau}");
      if (fit.fitted_values.size() != ds.n()) {
        throw Error(ErrorCode::dimension_mismatch, "quantile model does not match the dataset rows");
      }
      q_design = quantile_design(fit);
      design = &q_design;
    }
    const BalancingProblem p = make_balancing_problem(ds, propensities, *design, program);
    const BalancingSolution sol = solve_balancing(p, lambda, direction, qr);
    est.diagnostics["qr_objective_" + tag] = sol.fit.objective;
    est.diagnostics["qr_iterations_" + tag] = sol.fit.iterations;
    est.diagnostics["upper_branch_units_" + tag] = static_cast<double>(sol.upper_branch_units);
    return sol.value;
  };

  auto arm_interval = [&](ArmProgram program, const char* label) {
    return ArmInterval{solve(program, Direction::lower, label), solve(program, Direction::upper, label)};
  };

  switch (estimand) {
    case Estimand::psi_t: {
      const auto t = arm_interval(ArmProgram::psi_t, "psi_t");
      est.lower = t.lower;
      est.upper = t.upper;
      break;
    }
    case Estimand::psi_c: {
      const auto c = arm_interval(ArmProgram::psi_c, "psi_c");
      est.lower = c.lower;
      est.upper = c.upper;
      break;
    }
    case Estimand::ate: {
      const auto t = arm_interval(ArmProgram::psi_t, "psi_t");
      const auto c = arm_interval(ArmProgram::psi_c, "psi_c");
      est.lower = t.lower - c.upper;
      est.upper = t.upper - c.lower;
      est.diagnostics["psi_t_lower"] = t.lower;
      est.diagnostics["psi_t_upper"] = t.upper;
      est.diagnostics["psi_c_lower"] = c.lower;
      est.diagnostics["psi_c_upper"] = c.upper;
      break;
    }
    case Estimand::att: {
      const double y1 = treated_mean(ds);
      // Control means: ATT upper pairs with the smallest control mean, which
      // balances Q_{1-tau}(x, 0).
      const auto c = arm_interval(ArmProgram::att_control, "att_control");
      est.lower = y1 - c.upper;
      est.upper = y1 - c.lower;
      est.diagnostics["treated_mean"] = y1;
      est.diagnostics["control_mean_lower"] = c.lower;
      est.diagnostics["control_mean_upper"] = c.upper;
      break;
    }
  }

  const double ties = tie_fraction(ds.outcome());
  est.diagnostics["tied_outcome_fraction"] = ties;
  if (ties > 0.05) {
    std::ostringstream os;
    os << "outcome has heavy ties (" << ties * 100.0
       << "% of values repeat); sharpness results assume a continuous outcome";
    est.warnings.push_back(os.str());
  }
  return est;
}

BoundsEstimate sensitivity_interval(const Dataset& ds, double lambda, Estimand estimand, BoundsMethod method,
                                    const IntervalOptions& options) {
  tau_from_lambda(lambda);
  const ResolvedPropensity e = resolve_propensities(ds, options.trim);
  std::optional<QuantileModels> models;
  if (method == BoundsMethod::quantile_balance) {
    models = fit_quantile_models(ds, lambda, estimand, options.quantile_method, options.knn, options.qr);
  }
  BoundsEstimate est =
      compute_bounds(ds, e.values, lambda, estimand, method, models ? &*models : nullptr, options.qr);
  est.diagnostics["clamped_units"] = static_cast<double>(e.clamped_units);
  if (e.fit) {
    est.diagnostics["propensity_iterations"] = e.fit->iterations;
    est.diagnostics["propensity_score_norm"] = e.fit->score_norm;
  }
  return est;
}

std::string to_string(Estimand estimand) {
  switch (estimand) {
    case Estimand::psi_t: return "psi_t";
    case Estimand::psi_c: return "psi_c";
    case Estimand::ate: return "ate";
    case Estimand::att: return "att";
  }
  return "?";
}

std::string to_string(BoundsMethod method) {
  switch (method) {
    case BoundsMethod::zsb: return "zsb";
    case BoundsMethod::quantile_balance: return "quantile_balance";
    case BoundsMethod::covariate_balance: return "covariate_balance";
  }
  return "?";
}

std::string to_string(QuantileMethod method) {
  return method == QuantileMethod::linear ? "linear" : "knn_crossfit";
}

std::optional<Estimand> parse_estimand(std::string_view text) {
  if (text == "t" || text == "psi_t") return Estimand::psi_t;
  if (text == "c" || text == "psi_c") return Estimand::psi_c;
  if (text == "ate") return Estimand::ate;
  if (text == "att") return Estimand::att;
  return std::nullopt;
}

std::optional<BoundsMethod> parse_bounds_method(std::string_view text) {
  if (text == "zsb") return BoundsMethod::zsb;
  if (text == "qb" || text == "quantile_balance") return BoundsMethod::quantile_balance;
  if (text == "cov" || text == "covariate_balance") return BoundsMethod::covariate_balance;
  return std::nullopt;
}

std::optional<QuantileMethod> parse_quantile_method(std::string_view text) {
  if (text == "linear") return QuantileMethod::linear;
  if (text == "knn" || text == "knn_crossfit") return QuantileMethod::knn_crossfit;
  return std::nullopt;
}

}  // namespace msmsharp
