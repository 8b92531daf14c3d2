#pragma once

#include "msmsharp/dataset.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace msmsharp {

/// Covariate means by arm, raw and inverse-propensity weighted.
struct BalanceRow {
  std::string covariate;
  double treated_mean = 0.0;
  double control_mean = 0.0;
  double weighted_treated_mean = 0.0;  // weights 1/e, normalized within arm
  double weighted_control_mean = 0.0;  // weights 1/(1-e), normalized within arm
};

std::vector<BalanceRow> balance_table(const Dataset& ds, const Eigen::VectorXd& propensities);

/// How much the fitted treatment odds move when one covariate is left out
/// of the logistic propensity model: max over units of the odds ratio
/// between the full and the reduced fit, folded to be >= 1. Useful for
/// calibrating a plausible Lambda against observed confounders.
struct OddsCalibrationRow {
  std::string covariate;
  double max_odds_ratio = 1.0;
};

std::vector<OddsCalibrationRow> odds_calibration(const Dataset& ds);

}  // namespace msmsharp
