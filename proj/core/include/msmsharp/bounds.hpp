#pragma once

#include "msmsharp/dataset.hpp"
#include "msmsharp/knn_quantile.hpp"
#include "msmsharp/logistic.hpp"
#include "msmsharp/quantile_regression.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace msmsharp {

enum class Estimand { psi_t, psi_c, ate, att };
enum class Direction { lower, upper };
enum class BoundsMethod { zsb, quantile_balance, covariate_balance };

/// Which reciprocal of the putative propensity a weight box constrains:
/// 1/e (treated units), 1/(1-e) (control units) or e/(1-e) (control units,
/// odds weighting for the ATT).
enum class WeightArm { treated_inverse, control_inverse, control_odds };

/// Confounding strength Lambda >= 1 and the balanced quantile level
/// tau = Lambda / (Lambda + 1).
struct SensitivityModel {
  double lambda = 1.0;
  double tau = 0.5;

  static SensitivityModel from_lambda(double lambda);
};

double tau_from_lambda(double lambda);

/// Elementwise bounds on putative weights under the marginal sensitivity
/// model. Every box has the form base + odds * [1/Lambda, Lambda] with
/// base in {0, 1}.
struct WeightBox {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::VectorXd base;
  Eigen::VectorXd odds;
  WeightArm arm = WeightArm::treated_inverse;
};

WeightBox weight_box(const Eigen::VectorXd& propensities, double lambda, WeightArm arm);

/// Stabilized IPW estimate. The ATT uses odds weights e/(1-e) on controls.
double ipw_point_estimate(const Dataset& ds, const Eigen::VectorXd& propensities, Estimand estimand);

/// Extremum of sum(v * w) / sum(w) over lower <= w <= upper. The optimum
/// puts the upper weight on every unit above a threshold in v (upper
/// direction) or below it (lower direction); all n + 1 splits are scanned
/// after sorting, O(n log n).
double box_fractional_extremum(const Eigen::VectorXd& values, const Eigen::VectorXd& lower,
                               const Eigen::VectorXd& upper, Direction direction);

/// Weighted-mean program over one arm:
///   extremize sum(values * w) / sum(base + odds)
///   over w_i in base_i + odds_i * [1/Lambda, Lambda]
///   subject to design' w = design' (base + odds).
/// The design must contain an intercept, which pins sum(w) to its nominal
/// value.
struct BalancingProblem {
  Eigen::VectorXd values;
  Eigen::VectorXd base;
  Eigen::VectorXd odds;
  Eigen::MatrixXd design;
};

struct BalancingSolution {
  double value = 0.0;
  QuantileFit fit;
  Eigen::Index upper_branch_units = 0;  // units with residual sign +1
};

/// Objective implied by a quantile regression coefficient vector gamma:
///   [sum r_i (base_i + odds_i Lambda^{V_i}) + sum (gamma' g_i)(base_i + odds_i)] / sum(base + odds),
/// with r = values - design * gamma and V_i = sign(r_i); residuals that are
/// exactly zero take sign `zero_sign`.
double balancing_value(const BalancingProblem& problem, const Eigen::VectorXd& gamma, double lambda,
                       int zero_sign = +1);

/// Solves the balancing program exactly through a weighted quantile
/// regression of values on the design with weights `odds` at level tau.
BalancingSolution solve_balancing(const BalancingProblem& problem, double lambda, Direction direction,
                                  const QrOptions& options = {});

/// Balancing problem for one arm's mean: psi_t uses treated units with
/// 1/e weights, psi_c control units with 1/(1-e), and `att_control` control
/// units with odds weights. `design_rows` holds one row per unit of `ds`.
enum class ArmProgram { psi_t, psi_c, att_control };
BalancingProblem make_balancing_problem(const Dataset& ds, const Eigen::VectorXd& propensities,
                                        const Eigen::MatrixXd& design_rows, ArmProgram program);

/// Unconstrained (box-only) extremal IPW estimate of psi_t or psi_c.
double zsb_bound(const Dataset& ds, const Eigen::VectorXd& propensities, double lambda, Estimand estimand,
                 Direction direction);

/// Quantile-balancing bound for psi_t or psi_c. `quantile_fit` supplies
/// fitted values for every row of `ds`, for the arm of the estimand, at
/// level tau (upper) or 1 - tau (lower).
double qb_apo_bound(const Dataset& ds, const Eigen::VectorXd& propensities, const QuantileFit& quantile_fit,
                    double lambda, Estimand estimand, Direction direction, const QrOptions& options = {});

/// Quantile-balancing bound for the ATT. `quantile_fit` is a control-arm fit
/// at level 1 - tau (upper) or tau (lower).
double att_bound(const Dataset& ds, const Eigen::VectorXd& propensities, const QuantileFit& quantile_fit,
                 double lambda, Direction direction, const QrOptions& options = {});

/// Fitted conditional quantiles needed by the quantile-balancing bounds,
/// one value per row of the dataset they were fitted on. `upper` holds
/// Q_tau(x, arm), `lower` holds Q_{1-tau}(x, arm).
struct ArmQuantiles {
  std::optional<QuantileFit> upper;
  std::optional<QuantileFit> lower;
};

struct QuantileModels {
  ArmQuantiles treated;
  ArmQuantiles control;

  /// Same models evaluated at resampled rows of the original data.
  QuantileModels gather(std::span<const Eigen::Index> rows) const;
};

QuantileModels fit_quantile_models(const Dataset& ds, double lambda, Estimand estimand, QuantileMethod method,
                                   const KnnOptions& knn = {}, const QrOptions& qr = {});

struct ResolvedPropensity {
  Eigen::VectorXd values;
  std::optional<PropensityFit> fit;  // empty when the dataset carries known propensities
  Eigen::Index clamped_units = 0;
};

/// Known propensities when present, otherwise a logistic fit; optionally
/// clamped to [0.01, 0.99].
ResolvedPropensity resolve_propensities(const Dataset& ds, bool trim);

struct BoundsEstimate {
  Estimand estimand = Estimand::ate;
  BoundsMethod method = BoundsMethod::quantile_balance;
  double lambda = 1.0;
  double lower = 0.0;
  double upper = 0.0;
  double point_estimate = 0.0;  // stabilized IPW estimate (the Lambda = 1 value)
  std::map<std::string, double> diagnostics;
  std::vector<std::string> warnings;
};

/// Interval for an estimand from given propensities and (for
/// quantile_balance) pre-fitted quantile models. ATE bounds are
/// [T lower - C upper, T upper - C lower]; ATT bounds are
/// [treated mean - max control mean, treated mean - min control mean].
BoundsEstimate compute_bounds(const Dataset& ds, const Eigen::VectorXd& propensities, double lambda,
                              Estimand estimand, BoundsMethod method, const QuantileModels* quantiles,
                              const QrOptions& qr = {});

struct IntervalOptions {
  QuantileMethod quantile_method = QuantileMethod::linear;
  KnnOptions knn;
  bool trim = false;
  QrOptions qr;
};

/// Full pipeline: resolve propensities, fit quantile models if needed and
/// compute the bounds.
BoundsEstimate sensitivity_interval(const Dataset& ds, double lambda, Estimand estimand, BoundsMethod method,
                                    const IntervalOptions& options = {});

std::string to_string(Estimand estimand);
std::string to_string(BoundsMethod method);
std::string to_string(QuantileMethod method);
std::optional<Estimand> parse_estimand(std::string_view text);
std::optional<BoundsMethod> parse_bounds_method(std::string_view text);
std::optional<QuantileMethod> parse_quantile_method(std::string_view text);

}  // namespace msmsharp
