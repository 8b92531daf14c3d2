#include "msmsharp/knn_quantile.hpp"

#include "msmsharp/error.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace msmsharp {

int default_k_neighbors(Eigen::Index arm_size) {
  const auto k = static_cast<int>(std::ceil(std::pow(static_cast<double>(arm_size), 2.0 / 3.0) - 1e-12));
  return std::max(20, k);
}

double order_statistic_quantile(std::span<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::invalid_argument, "quantile of an empty sample");
  const auto size = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(size) - 1e-12));
  rank = std::clamp<std::size_t>(rank, 1, size);
  auto nth = values.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(values.begin(), nth, values.end());
  return *nth;
}

QuantileFit crossfit_knn_quantiles(const Dataset& ds, int arm, double tau, const KnnOptions& options) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "quantile level must lie in (0, 1)");
  }
  const int folds = options.folds;
  if (folds < 2) throw Error(ErrorCode::invalid_argument, "cross-fitting needs at least 2 folds");

  const auto arm_rows = ds.arm_rows(arm);
  const auto arm_size = static_cast<Eigen::Index>(arm_rows.size());
  if (arm_size < 2 * static_cast<Eigen::Index>(folds)) {
    throw Error(ErrorCode::arm_too_small, "arm " + std::to_string(arm) + " has " + std::to_string(arm_size) +
                                              " units; k-NN cross-fitting needs at least " +
                                              std::to_string(2 * folds));
  }
  const int k_requested = options.k_neighbors.value_or(default_k_neighbors(arm_size));
  if (k_requested < 1) throw Error(ErrorCode::invalid_argument, "k_neighbors must be positive");

  const Eigen::MatrixXd x = standardize_covariates(ds).second.apply(ds.covariates());
  const Eigen::VectorXd& y = ds.outcome();

  QuantileFit fit;
  fit.level = tau;
  fit.arm = arm;
  fit.method = QuantileMethod::knn_crossfit;
  fit.fitted_values.resize(ds.n());

  std::vector<std::pair<double, Eigen::Index>> candidates;
  std::vector<double> neighbour_y;
  candidates.reserve(arm_rows.size());
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    const auto fold = i % folds;
    candidates.clear();
    for (const auto j : arm_rows) {
      if (j % folds == fold) continue;
      candidates.emplace_back((x.row(j) - x.row(i)).squaredNorm(), j);
    }
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(k_requested), candidates.size());
    auto kth = candidates.begin() + static_cast<std::ptrdiff_t>(k);
    // Pairs compare by distance, then row index, which fixes the tie rule.
    std::nth_element(candidates.begin(), kth - 1, candidates.end());
    neighbour_y.clear();
    for (auto it = candidates.begin(); it != kth; ++it) neighbour_y.push_back(y[it->second]);
    fit.fitted_values[i] = order_statistic_quantile(neighbour_y, tau);
  }
  fit.residuals = y - fit.fitted_values;
  double objective = 0.0;
  for (const auto j : arm_rows) objective += check_loss(fit.residuals[j], tau);
  fit.objective = objective;
  return fit;
}

}  // namespace msmsharp
