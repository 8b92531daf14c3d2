#include "msmsharp/balance.hpp"

#include "msmsharp/error.hpp"
#include "msmsharp/logistic.hpp"

#include <algorithm>
#include <cmath>

namespace msmsharp {

std::vector<BalanceRow> balance_table(const Dataset& ds, const Eigen::VectorXd& propensities) {
  if (propensities.size() != ds.n()) {
    throw Error(ErrorCode::dimension_mismatch, "propensity vector length does not match the dataset");
  }
  std::vector<BalanceRow> rows;
  rows.reserve(static_cast<std::size_t>(ds.d()));
  for (Eigen::Index j = 0; j < ds.d(); ++j) {
    double t_sum = 0.0, c_sum = 0.0, t_n = 0.0, c_n = 0.0;
    double tw_sum = 0.0, cw_sum = 0.0, tw = 0.0, cw = 0.0;
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
      const double x = ds.covariates()(i, j);
      const double e = propensities[i];
      if (ds.treated(i)) {
        t_sum += x;
        t_n += 1.0;
        tw_sum += x / e;
        tw += 1.0 / e;
      } else {
        c_sum += x;
        c_n += 1.0;
        cw_sum += x / (1.0 - e);
        cw += 1.0 / (1.0 - e);
      }
    }
    rows.push_back(BalanceRow{ds.covariate_names()[static_cast<std::size_t>(j)], t_sum / t_n, c_sum / c_n,
                              tw_sum / tw, cw_sum / cw});
  }
  return rows;
}

std::vector<OddsCalibrationRow> odds_calibration(const Dataset& ds) {
  if (ds.d() < 2) {
    throw Error(ErrorCode::invalid_argument, "odds calibration needs at least two covariates");
  }
  const PropensityFit full = fit_logistic(ds);
  const Eigen::ArrayXd full_log_odds = (full.fitted.array() / (1.0 - full.fitted.array())).log();

  std::vector<OddsCalibrationRow> rows;
  for (Eigen::Index j = 0; j < ds.d(); ++j) {
    Eigen::MatrixXd reduced(ds.n(), ds.d() - 1);
    Eigen::Index col = 0;
    for (Eigen::Index k = 0; k < ds.d(); ++k) {
      if (k != j) reduced.col(col++) = ds.covariates().col(k);
    }
    const PropensityFit fit = fit_logistic(reduced, ds.treatment());
    const Eigen::ArrayXd log_odds = (fit.fitted.array() / (1.0 - fit.fitted.array())).log();
    const double max_log_ratio = (full_log_odds - log_odds).abs().maxCoeff();
    rows.push_back(OddsCalibrationRow{ds.covariate_names()[static_cast<std::size_t>(j)], std::exp(max_log_ratio)});
  }
  return rows;
}

}  // namespace msmsharp
