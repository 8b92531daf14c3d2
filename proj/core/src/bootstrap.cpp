#include "msmsharp/bootstrap.hpp"

#include "msmsharp/error.hpp"
#include "msmsharp/parallel.hpp"
#include "msmsharp/random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

namespace msmsharp {

void BootstrapConfig::validate() const {
  if (B < 2) throw Error(ErrorCode::invalid_argument, "bootstrap needs B >= 2");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::invalid_argument, "alpha must lie in (0, 1)");
  if (max_redraws < 0) throw Error(ErrorCode::invalid_argument, "max_redraws must be non-negative");
}

double percentile_order_statistic(std::span<const double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::invalid_argument, "quantile of an empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  const auto b = static_cast<double>(sorted.size());
  // Small epsilon keeps q * B = 10 from rounding up to 11.
  auto rank = static_cast<std::size_t>(std::ceil(q * b - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
  return sorted[rank - 1];
}

BootstrapInterval percentile_interval(std::vector<double> lowers, std::vector<double> uppers, double alpha,
                                      int skipped) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::invalid_argument, "alpha must lie in (0, 1)");
  BootstrapInterval out;
  out.ci_lower = percentile_order_statistic(lowers, alpha / 2.0);
  out.ci_upper = percentile_order_statistic(uppers, 1.0 - alpha / 2.0);
  out.replicate_lowers = std::move(lowers);
  out.replicate_uppers = std::move(uppers);
  out.skipped_replicates = skipped;
  return out;
}

namespace {

bool degenerate(ErrorCode code) {
  switch (code) {
    case ErrorCode::single_treatment_level:
    case ErrorCode::separation:
    case ErrorCode::rank_deficient:
    case ErrorCode::empty_arm:
    case ErrorCode::arm_too_small:
      return true;
    default:
      return false;
  }
}

}  // namespace

BootstrapInterval percentile_bootstrap_ci(const Dataset& ds, double lambda, Estimand estimand, BoundsMethod method,
                                          const BootstrapConfig& config, const IntervalOptions& options) {
  config.validate();
  tau_from_lambda(lambda);

  std::optional<QuantileModels> base_models;
  if (method == BoundsMethod::quantile_balance && !config.refit_quantiles) {
    base_models = fit_quantile_models(ds, lambda, estimand, options.quantile_method, options.knn, options.qr);
  }

  const auto B = static_cast<std::size_t>(config.B);
  const auto n = ds.n();
  std::vector<double> lowers(B), uppers(B);
  std::vector<int> redraws(B, 0);

  parallel_for(B, resolve_threads(config.threads), [&](std::size_t b) {
    // Attempt a of replicate b uses stream (b, a); attempt 0 is the
    // replicate's own seed, so redraws never shift other replicates.
    const std::uint64_t replicate_seed = derive_replicate_seed(config.master_seed, b);
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
    for (int attempt = 0;; ++attempt) {
      Rng rng(attempt == 0 ? replicate_seed : derive_replicate_seed(replicate_seed, static_cast<std::uint64_t>(attempt)));
      for (auto& r : rows) r = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
      try {
        const Dataset resample = ds.gather(rows);
        const ResolvedPropensity e = resolve_propensities(resample, options.trim);
        std::optional<QuantileModels> models;
        if (method == BoundsMethod::quantile_balance) {
          models = base_models ? base_models->gather(rows)
                               : fit_quantile_models(resample, lambda, estimand, options.quantile_method,
                                                     options.knn, options.qr);
        }
        const BoundsEstimate est =
            compute_bounds(resample, e.values, lambda, estimand, method, models ? &*models : nullptr, options.qr);
        lowers[b] = est.lower;
        uppers[b] = est.upper;
        redraws[b] = attempt;
        return;
      } catch (const Error& err) {
        if (!degenerate(err.code())) throw;
        if (attempt >= config.max_redraws) {
          throw Error(ErrorCode::too_many_failures,
                      "bootstrap replicate " + std::to_string(b) + " stayed degenerate after " +
                          std::to_string(config.max_redraws) + " redraws (" + err.what() + ")");
        }
      }
    }
  });

  int skipped = 0;
  for (int r : redraws) skipped += r;
  return percentile_interval(std::move(lowers), std::move(uppers), config.alpha, skipped);
}

}  // namespace msmsharp
