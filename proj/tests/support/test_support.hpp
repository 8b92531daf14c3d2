#pragma once

#include <msmsharp/dataset.hpp>
#include <msmsharp/random.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

namespace msmsharp::testing {

inline Dataset make_dataset(const Eigen::MatrixXd& x, const Eigen::VectorXd& z, const Eigen::VectorXd& y) {
  RawDataset raw;
  raw.covariates = x;
  raw.treatment = z;
  raw.outcome = y;
  for (Eigen::Index j = 0; j < x.cols(); ++j) raw.covariate_names.push_back("x" + std::to_string(j + 1));
  return validate_dataset(std::move(raw));
}

/// Logistic-confounded sample with heteroscedastic-ish outcomes; both arms
/// are guaranteed non-empty for n >= 8.
inline Dataset random_dataset(std::uint64_t seed, Eigen::Index n, int d) {
  Rng rng(seed);
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd z(n), y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double index = 0.0;
    for (int j = 0; j < d; ++j) {
      x(i, j) = rng.normal();
      index += 0.4 * x(i, j) / std::sqrt(static_cast<double>(d));
    }
    z[i] = rng.uniform() < 1.0 / (1.0 + std::exp(-index)) ? 1.0 : 0.0;
    y[i] = x.row(i).sum() + 0.5 * z[i] + (1.0 + 0.3 * std::abs(x(i, 0))) * rng.normal();
  }
  z[0] = 1.0;
  z[1] = 0.0;
  return make_dataset(x, z, y);
}

inline Eigen::VectorXd random_propensities(std::uint64_t seed, Eigen::Index n) {
  Rng rng(seed);
  Eigen::VectorXd e(n);
  for (auto& v : e) v = rng.uniform(0.15, 0.85);
  return e;
}

}  // namespace msmsharp::testing
