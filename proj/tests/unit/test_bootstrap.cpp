#include <doctest.h>

#include <msmsharp/bootstrap.hpp>
#include <msmsharp/error.hpp>

#include "test_support.hpp"

#include <algorithm>

using namespace msmsharp;

namespace {

BootstrapConfig small_config(int B, std::uint64_t seed, int threads) {
  BootstrapConfig cfg;
  cfg.B = B;
  cfg.alpha = 0.10;
  cfg.master_seed = seed;
  cfg.threads = threads;
  return cfg;
}

}  // namespace

TEST_CASE("percentile order statistic convention") {
  const std::vector<double> v{9, 3, 7, 1, 5, 2, 8, 4, 10, 6};
  CHECK(percentile_order_statistic(v, 0.05) == 1.0);  // ceil(0.5) = 1
  CHECK(percentile_order_statistic(v, 0.10) == 1.0);  // ceil(1.0) = 1
  CHECK(percentile_order_statistic(v, 0.11) == 2.0);
  CHECK(percentile_order_statistic(v, 0.95) == 10.0);
  CHECK(percentile_order_statistic(v, 0.90) == 9.0);
  CHECK_THROWS_AS(percentile_order_statistic(std::vector<double>{}, 0.5), Error);
}

TEST_CASE("config validation") {
  BootstrapConfig cfg;
  cfg.B = 1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.B = 10;
  cfg.alpha = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.alpha = 0.05;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("constant outcome gives a degenerate CI") {
  Dataset ds = testing::random_dataset(1, 80, 2);
  ds = ds.with_outcome(Eigen::VectorXd::Constant(80, 4.0));
  for (BoundsMethod m : {BoundsMethod::zsb, BoundsMethod::quantile_balance}) {
    const auto ci = percentile_bootstrap_ci(ds, 3.0, Estimand::psi_t, m, small_config(30, 2, 1));
    for (double v : ci.replicate_lowers) CHECK(v == doctest::Approx(4.0).epsilon(1e-12));
    for (double v : ci.replicate_uppers) CHECK(v == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(ci.ci_lower == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(ci.ci_upper == doctest::Approx(4.0).epsilon(1e-12));
  }
}

TEST_CASE("CI shrinks as alpha grows on a fixed replicate set") {
  const Dataset ds = testing::random_dataset(3, 150, 2);
  const auto ci = percentile_bootstrap_ci(ds, 2.0, Estimand::ate, BoundsMethod::quantile_balance,
                                          small_config(100, 4, 1));
  double prev_lo = -1e300, prev_hi = 1e300;
  for (double alpha : {0.01, 0.05, 0.1, 0.2, 0.5}) {
    const auto iv = percentile_interval(ci.replicate_lowers, ci.replicate_uppers, alpha);
    CHECK(iv.ci_lower >= prev_lo);
    CHECK(iv.ci_upper <= prev_hi);
    prev_lo = iv.ci_lower;
    prev_hi = iv.ci_upper;
  }
}

TEST_CASE("CI endpoints are replicate values and replicates are ordered by index") {
  const Dataset ds = testing::random_dataset(5, 120, 2);
  const auto ci = percentile_bootstrap_ci(ds, 2.0, Estimand::psi_c, BoundsMethod::zsb, small_config(40, 6, 2));
  REQUIRE(ci.replicate_lowers.size() == 40);
  CHECK(std::find(ci.replicate_lowers.begin(), ci.replicate_lowers.end(), ci.ci_lower) != ci.replicate_lowers.end());
  CHECK(std::find(ci.replicate_uppers.begin(), ci.replicate_uppers.end(), ci.ci_upper) != ci.replicate_uppers.end());
  CHECK(ci.ci_lower <= ci.ci_upper);
}

TEST_CASE("bit-identical results across thread counts") {
  const Dataset ds = testing::random_dataset(7, 150, 3);
  for (BoundsMethod m : {BoundsMethod::zsb, BoundsMethod::quantile_balance, BoundsMethod::covariate_balance}) {
    const auto one = percentile_bootstrap_ci(ds, 2.0, Estimand::ate, m, small_config(40, 8, 1));
    const auto four = percentile_bootstrap_ci(ds, 2.0, Estimand::ate, m, small_config(40, 8, 4));
    CHECK(one.replicate_lowers == four.replicate_lowers);
    CHECK(one.replicate_uppers == four.replicate_uppers);
    CHECK(one.ci_lower == four.ci_lower);
    CHECK(one.ci_upper == four.ci_upper);
  }
}

TEST_CASE("refitting quantiles per replicate is supported") {
  const Dataset ds = testing::random_dataset(9, 150, 2);
  BootstrapConfig cfg = small_config(20, 10, 1);
  cfg.refit_quantiles = true;
  const auto refit = percentile_bootstrap_ci(ds, 2.0, Estimand::ate, BoundsMethod::quantile_balance, cfg);
  cfg.refit_quantiles = false;
  const auto reuse = percentile_bootstrap_ci(ds, 2.0, Estimand::ate, BoundsMethod::quantile_balance, cfg);
  CHECK(refit.ci_lower <= refit.ci_upper);
  CHECK(refit.replicate_lowers != reuse.replicate_lowers);
}

TEST_CASE("degenerate resamples are redrawn and counted") {
  // Two treated units in 40: many resamples miss both of them.
  Dataset base = testing::random_dataset(11, 40, 1);
  RawDataset raw = base.raw();
  raw.treatment.setZero();
  raw.treatment[0] = 1.0;
  raw.treatment[1] = 1.0;
  raw.known_propensity = Eigen::VectorXd::Constant(40, 0.3);
  const Dataset ds = validate_dataset(raw);
  const auto ci = percentile_bootstrap_ci(ds, 2.0, Estimand::psi_t, BoundsMethod::zsb, small_config(50, 12, 1));
  CHECK(ci.skipped_replicates > 0);

  raw.treatment.setZero();
  raw.treatment[0] = 1.0;
  const Dataset lonely = validate_dataset(raw);
  BootstrapConfig cfg = small_config(50, 13, 1);
  cfg.max_redraws = 0;
  try {
    percentile_bootstrap_ci(lonely, 2.0, Estimand::psi_t, BoundsMethod::zsb, cfg);
    FAIL("expected too_many_failures");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::too_many_failures);
  }
}

TEST_CASE("large-B CI contains the full-data interval for most seeds") {
  const Dataset ds = testing::random_dataset(14, 200, 2);
  const auto full = sensitivity_interval(ds, 2.0, Estimand::ate, BoundsMethod::zsb);
  int contained = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    BootstrapConfig cfg = small_config(2000, 100 + s, 1);
    cfg.threads = std::nullopt;
    cfg.alpha = 0.02;
    const auto ci = percentile_bootstrap_ci(ds, 2.0, Estimand::ate, BoundsMethod::zsb, cfg);
    if (ci.ci_lower <= full.lower && ci.ci_upper >= full.upper) ++contained;
  }
  CHECK(contained >= 19);
}
