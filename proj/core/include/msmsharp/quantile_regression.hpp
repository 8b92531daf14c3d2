#pragma once

#include "msmsharp/dataset.hpp"

#include <Eigen/Dense>

namespace msmsharp {

enum class QuantileMethod { linear, knn_crossfit };

/// Quantile regression check function rho_tau(u) = u * (tau - 1{u < 0}).
double check_loss(double u, double tau) noexcept;

/// Sum_i weights_i * rho_tau(y_i - design_i . coefficients).
double weighted_check_loss(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& weights, const Eigen::VectorXd& coefficients, double tau);

/// A fitted conditional quantile. For the linear method `coefficients`
/// index the design columns (intercept first) and `fitted_values` is
/// design * coefficients row by row; the k-NN method has no coefficients.
struct QuantileFit {
  double level = 0.5;
  int arm = -1;  // -1 when the fit is not tied to a treatment arm
  QuantileMethod method = QuantileMethod::linear;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd fitted_values;
  Eigen::VectorXd residuals;
  double objective = 0.0;
  int iterations = 0;
};

struct QrOptions {
  /// Stop when (primal - dual) <= gap_tolerance * (1 + |primal|).
  double gap_tolerance = 1e-8;
  int max_iterations = 200;
  /// Try the exact basic solution suggested by the interior point and keep
  /// it when its objective is no worse.
  bool polish = true;
};

/// Minimizes sum_i weights_i * rho_tau(y_i - g_i . gamma) with a
/// primal-dual (Mehrotra predictor-corrector) interior point method on the
/// bounded dual linear program, then snaps to a basic solution. Rows with
/// zero weight are dropped before solving. Throws `Error(rank_deficient)`
/// if the remaining design does not have full column rank.
QuantileFit fit_weighted_qr(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& weights, double tau, const QrOptions& options = {});

/// Unweighted linear quantile regression of Y on [1, X] over one arm.
/// Fitted values and residuals are reported for every row of `ds`.
QuantileFit fit_linear_quantile(const Dataset& ds, int arm, double tau, const QrOptions& options = {});

/// [1, X] with the intercept in column 0.
Eigen::MatrixXd intercept_design(const Eigen::MatrixXd& covariates);

}  // namespace msmsharp
