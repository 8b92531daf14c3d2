#include <doctest.h>

#include <msmsharp/error.hpp>
#include <msmsharp/knn_quantile.hpp>
#include <msmsharp/logistic.hpp>
#include <msmsharp/normal.hpp>
#include <msmsharp/oracle.hpp>
#include <msmsharp/quantile_regression.hpp>
#include <msmsharp/random.hpp>

#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

using namespace msmsharp;

namespace {

struct QrInstance {
  Eigen::MatrixXd g;
  Eigen::VectorXd y;
  Eigen::VectorXd w;
};

QrInstance random_instance(std::uint64_t seed, int m, int k) {
  Rng rng(seed);
  QrInstance inst{Eigen::MatrixXd(m, k), Eigen::VectorXd(m), Eigen::VectorXd(m)};
  for (int i = 0; i < m; ++i) {
    inst.g(i, 0) = 1.0;
    for (int j = 1; j < k; ++j) inst.g(i, j) = rng.normal();
    inst.y[i] = inst.g.row(i).sum() + rng.normal() * (1.0 + std::abs(inst.g(i, k - 1)));
    inst.w[i] = rng.uniform(0.2, 4.0);
  }
  return inst;
}

// Best objective over all exact fits through a pair of rows.
double brute_force_pairs(const QrInstance& inst, double tau) {
  double best = std::numeric_limits<double>::infinity();
  const auto m = inst.g.rows();
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      Eigen::Matrix2d a;
      a << inst.g.row(i), inst.g.row(j);
      if (std::abs(a.determinant()) < 1e-12) continue;
      const Eigen::Vector2d coef = a.partialPivLu().solve(Eigen::Vector2d(inst.y[i], inst.y[j]));
      best = std::min(best, weighted_check_loss(inst.g, inst.y, inst.w, coef, tau));
    }
  }
  return best;
}

}  // namespace

TEST_CASE("check loss values") {
  CHECK(check_loss(3.0, 2.0 / 3.0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(check_loss(-3.0, 2.0 / 3.0) == doctest::Approx(1.0).epsilon(1e-15));
  for (double tau : {0.1, 0.5, 0.9}) CHECK(check_loss(0.0, tau) == 0.0);
  for (double u : {-2.0, -1e-9, 1e-9, 5.0}) CHECK(check_loss(u, 0.3) > 0.0);
}

TEST_CASE("intercept-only median fit") {
  Eigen::VectorXd y(7);
  y << 4, -1, 9, 2, 2.5, 7, 0;
  const Eigen::MatrixXd g = Eigen::MatrixXd::Ones(7, 1);
  const QuantileFit fit = fit_weighted_qr(g, y, Eigen::VectorXd::Ones(7), 0.5);
  CHECK(fit.coefficients[0] == doctest::Approx(2.5).epsilon(1e-12));
  const double expected = (y.array() - 2.5).abs().sum() / 2.0;
  CHECK(fit.objective == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("exact linear data is interpolated at every level") {
  Rng rng(4);
  Eigen::MatrixXd g(25, 2);
  Eigen::VectorXd y(25);
  for (int i = 0; i < 25; ++i) {
    g(i, 0) = 1.0;
    g(i, 1) = rng.normal();
    y[i] = 2.0 * g(i, 1);
  }
  for (double tau : {0.2, 0.5, 2.0 / 3.0}) {
    const QuantileFit fit = fit_weighted_qr(g, y, Eigen::VectorXd::Constant(25, 1.5), tau);
    CHECK(fit.coefficients[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
    CHECK(fit.coefficients[1] == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(fit.objective == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
  }
}

TEST_CASE("weighted QR matches brute force over pairs on 30-row instances") {
  const double tau = 2.0 / 3.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto inst = random_instance(100 + s, 30, 2);
    const QuantileFit fit = fit_weighted_qr(inst.g, inst.y, inst.w, tau);
    const double best = brute_force_pairs(inst, tau);
    CHECK(fit.objective <= best + 1e-6);
    CHECK(fit.objective >= best - 1e-6);
  }
}

TEST_CASE("objective field equals the weighted check loss, fitted = design * coef") {
  const auto inst = random_instance(7, 200, 4);
  const QuantileFit fit = fit_weighted_qr(inst.g, inst.y, inst.w, 0.3);
  CHECK(fit.objective == doctest::Approx(weighted_check_loss(inst.g, inst.y, inst.w, fit.coefficients, 0.3)));
  CHECK((fit.fitted_values - inst.g * fit.coefficients).cwiseAbs().maxCoeff() == 0.0);
  CHECK((fit.residuals - (inst.y - fit.fitted_values)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("QR convexity: random perturbations never improve the objective") {
  const auto inst = random_instance(11, 150, 3);
  const double tau = 0.75;
  const QuantileFit fit = fit_weighted_qr(inst.g, inst.y, inst.w, tau);
  Rng rng(12);
  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXd delta(3);
    for (auto& v : delta) v = rng.normal();
    delta *= 0.01 / delta.norm();
    CHECK(fit.objective <= weighted_check_loss(inst.g, inst.y, inst.w, fit.coefficients + delta, tau) + 1e-10);
  }
}

TEST_CASE("QR equivariance under a*y + c") {
  const auto inst = random_instance(21, 120, 3);
  const double tau = 0.6;
  const QuantileFit base = fit_weighted_qr(inst.g, inst.y, inst.w, tau);
  const double a = 3.5, c = -2.0;
  const Eigen::VectorXd y2 = (a * inst.y).array() + c;
  const QuantileFit moved = fit_weighted_qr(inst.g, y2, inst.w, tau);
  Eigen::VectorXd expected = a * base.coefficients;
  expected[0] += c;
  CHECK((moved.coefficients - expected).cwiseAbs().maxCoeff() <= 1e-8 * (1.0 + expected.cwiseAbs().maxCoeff()));
  CHECK(moved.objective == doctest::Approx(a * base.objective).epsilon(1e-8));
}

TEST_CASE("QR subgradient optimality on small instances") {
  // At the optimum, sum_i w_i g_i psi_i = 0 with psi_i = tau - 1{r_i < 0}
  // off the fit and psi_i in [tau - 1, tau] on interpolated rows.
  const double tau = 0.7;
  for (std::uint64_t s = 0; s < 40; ++s) {
    const auto inst = random_instance(300 + s, 30, 2);
    const QuantileFit fit = fit_weighted_qr(inst.g, inst.y, inst.w, tau);
    const double scale = 1e-9 * (1.0 + inst.y.cwiseAbs().maxCoeff());
    Eigen::VectorXd known = Eigen::VectorXd::Zero(2);
    std::vector<Eigen::Index> zero_rows;
    for (Eigen::Index i = 0; i < 30; ++i) {
      const double r = fit.residuals[i];
      if (std::abs(r) <= scale) {
        zero_rows.push_back(i);
      } else {
        known += inst.w[i] * inst.g.row(i).transpose() * (tau - (r < 0.0 ? 1.0 : 0.0));
      }
    }
    REQUIRE(zero_rows.size() == 2);
    Eigen::Matrix2d a;
    for (int c = 0; c < 2; ++c) a.col(c) = inst.w[zero_rows[c]] * inst.g.row(zero_rows[c]).transpose();
    const Eigen::Vector2d psi = a.partialPivLu().solve(-known);
    for (int c = 0; c < 2; ++c) {
      CHECK(psi[c] >= tau - 1.0 - 1e-9);
      CHECK(psi[c] <= tau + 1e-9);
    }
  }
}

TEST_CASE("zero-weight rows are ignored; rank deficiency and bad inputs are errors") {
  auto inst = random_instance(5, 40, 2);
  const QuantileFit a = fit_weighted_qr(inst.g, inst.y, inst.w, 0.4);
  inst.g.conservativeResize(45, 2);
  inst.y.conservativeResize(45);
  inst.w.conservativeResize(45);
  for (int i = 40; i < 45; ++i) {
    inst.g.row(i) << 1.0, 100.0 * i;
    inst.y[i] = -1e6;
    inst.w[i] = 0.0;
  }
  const QuantileFit b = fit_weighted_qr(inst.g, inst.y, inst.w, 0.4);
  CHECK(b.objective == doctest::Approx(a.objective).epsilon(1e-10));

  Eigen::MatrixXd dup(10, 2);
  dup.col(0).setOnes();
  dup.col(1).setOnes();
  CHECK_THROWS_AS(fit_weighted_qr(dup, Eigen::VectorXd::Ones(10), Eigen::VectorXd::Ones(10), 0.5), Error);
  Eigen::VectorXd bad = Eigen::VectorXd::Ones(10);
  bad[3] = std::nan("");
  CHECK_THROWS_AS(fit_weighted_qr(Eigen::MatrixXd::Ones(10, 1), bad, Eigen::VectorXd::Ones(10), 0.5), Error);
}

TEST_CASE("logistic: constant model recovers logit of the treated share") {
  Rng rng(1);
  const Eigen::Index n = 100000;
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.uniform(-1, 1);
    z[i] = rng.uniform() < 0.75 ? 1.0 : 0.0;
  }
  const PropensityFit fit = fit_logistic(x, z);
  CHECK(fit.converged);
  CHECK(std::abs(fit.coefficients[0] - std::log(3.0)) <= 0.05);
  CHECK(std::abs(fit.coefficients[1]) <= 0.05);
  CHECK(std::abs(fit.coefficients[2]) <= 0.05);
  CHECK(fit.score_norm <= 1e-6);
}

TEST_CASE("logistic: perfectly separated data raises separation") {
  Eigen::MatrixXd x(20, 1);
  Eigen::VectorXd z(20);
  for (int i = 0; i < 20; ++i) {
    x(i, 0) = i - 9.5;
    z[i] = x(i, 0) > 0 ? 1.0 : 0.0;
  }
  try {
    fit_logistic(x, z);
    FAIL("expected separation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::separation);
    CHECK(e.kind() == ErrorKind::numerical);
  }
}

TEST_CASE("logistic: DGP1 slopes are 1/sqrt(5)") {
  Rng rng(2);
  const auto raw = GaussianDGPSpec::dgp1().sample(100000, rng, false);
  const PropensityFit fit = fit_logistic(raw.covariates, raw.treatment);
  CHECK(std::abs(fit.coefficients[0]) <= 0.05);
  for (int j = 1; j <= 5; ++j) CHECK(std::abs(fit.coefficients[j] - 1.0 / std::sqrt(5.0)) <= 0.05);
}

TEST_CASE("logistic score equations hold on random datasets") {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Dataset ds = testing::random_dataset(500 + s, 120, 3);
    const PropensityFit fit = fit_logistic(ds);
    CHECK(fit.converged);
    const Eigen::MatrixXd design = intercept_design(ds.covariates());
    const double score = (design.transpose() * (ds.treatment() - fit.fitted)).cwiseAbs().maxCoeff();
    CHECK(score <= 1e-6);
    CHECK(fit.fitted.minCoeff() > 0.0);
    CHECK(fit.fitted.maxCoeff() < 1.0);
  }
}

TEST_CASE("knn: constant arm outcomes give constant fits") {
  Dataset ds = testing::random_dataset(9, 80, 2);
  ds = ds.with_outcome(Eigen::VectorXd::Constant(80, 3.25));
  const QuantileFit fit = crossfit_knn_quantiles(ds, 1, 2.0 / 3.0);
  CHECK((fit.fitted_values.array() == 3.25).all());
}

TEST_CASE("knn: k = arm size with two folds gives the fold-complement quantile") {
  const Dataset ds = testing::random_dataset(10, 60, 2);
  const auto rows = ds.arm_rows(1);
  const double tau = 0.7;
  KnnOptions opts;
  opts.folds = 2;
  opts.k_neighbors = static_cast<int>(rows.size());
  const QuantileFit fit = crossfit_knn_quantiles(ds, 1, tau, opts);
  for (int fold = 0; fold < 2; ++fold) {
    std::vector<double> other;
    for (auto r : rows) {
      if (static_cast<int>(r % 2) != fold) other.push_back(ds.outcome()[r]);
    }
    std::sort(other.begin(), other.end());
    const auto rank = static_cast<std::size_t>(std::ceil(tau * static_cast<double>(other.size())));
    const double expected = other[rank - 1];
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
      if (static_cast<int>(i % 2) == fold) CHECK(fit.fitted_values[i] == expected);
    }
  }
}

TEST_CASE("knn: fitted values are observed arm outcomes") {
  const Dataset ds = testing::random_dataset(13, 150, 3);
  for (int arm : {0, 1}) {
    const QuantileFit fit = crossfit_knn_quantiles(ds, arm, 0.35);
    std::vector<double> outcomes;
    for (auto r : ds.arm_rows(arm)) outcomes.push_back(ds.outcome()[r]);
    for (double v : fit.fitted_values) {
      CHECK(std::find(outcomes.begin(), outcomes.end(), v) != outcomes.end());
    }
  }
}

TEST_CASE("knn: DGP2 fitted quantiles beat the marginal quantile") {
  Rng rng(14);
  const auto spec = GaussianDGPSpec::dgp2();
  const Dataset ds = validate_dataset(spec.sample(4000, rng, false));
  const double tau = 2.0 / 3.0;
  const QuantileFit fit = crossfit_knn_quantiles(ds, 1, tau);
  double mae = 0.0;
  const auto rows = ds.arm_rows(1);
  for (auto r : rows) {
    mae += std::abs(fit.fitted_values[r] - (spec.mu(ds.covariates().row(r), 1) + normal::quantile(tau)));
  }
  mae /= static_cast<double>(rows.size());
  // reference: one quantile for the whole arm, ignoring x
  std::vector<double> ys;
  for (auto r : rows) ys.push_back(ds.outcome()[r]);
  std::sort(ys.begin(), ys.end());
  const double marginal = ys[static_cast<std::size_t>(std::ceil(tau * static_cast<double>(ys.size()))) - 1];
  double flat = 0.0;
  for (auto r : rows) flat += std::abs(marginal - (spec.mu(ds.covariates().row(r), 1) + normal::quantile(tau)));
  flat /= static_cast<double>(rows.size());
  MESSAGE("knn mae " << mae << ", marginal mae " << flat);
  CHECK(mae < 0.6 * flat);
}

TEST_CASE("knn: small arm is an error") {
  const Dataset ds = testing::random_dataset(15, 12, 1);
  CHECK_THROWS_AS(crossfit_knn_quantiles(ds, 1, 0.5, {6, std::nullopt}), Error);
}

TEST_CASE("order statistic quantile uses the ceil(q n) convention") {
  std::vector<double> v{5, 1, 4, 2, 3};
  CHECK(order_statistic_quantile(v, 0.5) == 3.0);
  CHECK(order_statistic_quantile(v, 0.0) == 1.0);
  CHECK(order_statistic_quantile(v, 1.0) == 5.0);
  CHECK(order_statistic_quantile(v, 0.41) == 3.0);
  CHECK(order_statistic_quantile(v, 0.4) == 2.0);
}
