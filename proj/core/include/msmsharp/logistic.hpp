#pragma once

#include "msmsharp/dataset.hpp"

#include <Eigen/Dense>

namespace msmsharp {

struct LogisticOptions {
  int max_iterations = 100;
  double score_tolerance = 1e-6;
  /// Coefficient norm above which the fit is declared separated.
  double max_coefficient_norm = 1e3;
  double ridge = 1e-8;
};

/// Nominal propensity model fitted by maximum likelihood.
struct PropensityFit {
  Eigen::VectorXd coefficients;  // intercept first
  Eigen::VectorXd fitted;        // in (0, 1)
  bool converged = false;
  int iterations = 0;
  /// || design^T (Z - fitted) ||_inf at the returned coefficients.
  double score_norm = 0.0;
  bool ridge_used = false;
};

/// Logistic regression of Z on [1, X] by Newton-Raphson with step halving.
/// A near-singular Hessian gets a ridge jitter before giving up. Throws
/// `Error(separation)` when the coefficients run away and
/// `Error(not_converged)` when the score does not reach tolerance.
PropensityFit fit_logistic(const Eigen::MatrixXd& covariates, const Eigen::VectorXd& treatment,
                           const LogisticOptions& options = {});
PropensityFit fit_logistic(const Dataset& ds, const LogisticOptions& options = {});

/// Fitted probabilities for new covariate rows.
Eigen::VectorXd predict_logistic(const Eigen::VectorXd& coefficients, const Eigen::MatrixXd& covariates);

}  // namespace msmsharp
