#pragma once

#include "msmsharp/dataset.hpp"
#include "msmsharp/quantile_regression.hpp"

#include <optional>

namespace msmsharp {

struct KnnOptions {
  int folds = 5;
  /// Defaults to max(20, ceil(arm_size^(2/3))) when unset.
  std::optional<int> k_neighbors;
};

int default_k_neighbors(Eigen::Index arm_size);

/// Cross-fitted nearest-neighbour conditional quantiles of Y given X within
/// one arm. Row i belongs to fold i mod folds; its fitted value is the
/// ceil(tau * k)-th smallest outcome among the k nearest arm units in other
/// folds (Euclidean distance on standardized covariates, ties broken by
/// smaller row index). Fitted values are produced for every row of `ds`,
/// and each one is an observed outcome of the arm.
QuantileFit crossfit_knn_quantiles(const Dataset& ds, int arm, double tau, const KnnOptions& options = {});

/// ceil(q * size)-th order statistic (1-based, clamped to [1, size]) of the
/// values; partially reorders `values`.
double order_statistic_quantile(std::span<double> values, double q);

}  // namespace msmsharp
