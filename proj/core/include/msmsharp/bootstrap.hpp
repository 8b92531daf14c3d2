#pragma once

#include "msmsharp/bounds.hpp"
#include "msmsharp/dataset.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace msmsharp {

struct BootstrapConfig {
  int B = 1000;
  double alpha = 0.10;
  /// Refit the quantile models on every resample instead of evaluating the
  /// full-data models at the resampled rows.
  bool refit_quantiles = false;
  std::uint64_t master_seed = 0;
  int max_redraws = 10;
  std::optional<int> threads;  // worker cap; see resolve_threads

  void validate() const;
};

struct BootstrapInterval {
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  std::vector<double> replicate_lowers;  // in replicate order
  std::vector<double> replicate_uppers;
  int skipped_replicates = 0;  // degenerate resamples that were redrawn
};

/// ceil(q * B)-th smallest value (1-based, clamped to [1, B]).
double percentile_order_statistic(std::span<const double> values, double q);

/// CI(alpha) = [Q_{alpha/2}(lowers), Q_{1-alpha/2}(uppers)] from existing
/// replicate bounds.
BootstrapInterval percentile_interval(std::vector<double> lowers, std::vector<double> uppers, double alpha,
                                      int skipped = 0);

/// Percentile bootstrap over resamples of `ds`. Each replicate draws n rows
/// with replacement from its own derived seed, refits the propensity model
/// (known propensities are carried along instead when the dataset has
/// them), and recomputes the bounds. A resample with a single treatment
/// level, separation or a rank-deficient arm is redrawn from a fresh derived
/// seed, at most `max_redraws` times per replicate.
BootstrapInterval percentile_bootstrap_ci(const Dataset& ds, double lambda, Estimand estimand, BoundsMethod method,
                                          const BootstrapConfig& config, const IntervalOptions& options = {});

}  // namespace msmsharp
