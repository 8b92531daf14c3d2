#pragma once

#include "msmsharp/bounds.hpp"
#include "msmsharp/dataset.hpp"
#include "msmsharp/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>

namespace msmsharp {

/// Observed-data law with Gaussian additive noise:
///   X ~ covariate law,  Z | X ~ Bernoulli(e(X)),  Y | X, Z ~ N(mu(X, Z), sigma^2).
struct GaussianDGPSpec {
  enum class CovariateLaw { uniform_cube, gaussian };
  enum class Mean { linear_sum, two_signs, identity_x, custom };
  enum class Propensity { logistic, constant };

  CovariateLaw covariate_law = CovariateLaw::uniform_cube;
  int dimension = 5;
  double sigma_x = 1.0;  // gaussian covariate law only

  Mean mean = Mean::linear_sum;
  /// custom mean: intercept first, then one slope per covariate.
  Eigen::VectorXd mean_coefficients;
  /// mu(x, 1) - mu(x, 0); zero for every built-in design.
  double treatment_shift = 0.0;

  double sigma = 1.0;

  Propensity propensity = Propensity::logistic;
  /// logistic propensity: intercept first, then one slope per covariate.
  Eigen::VectorXd propensity_coefficients;
  double constant_propensity = 0.5;

  /// X ~ U[-1,1]^5, e(x) = logistic(sum(x)/sqrt(5)), mu(x) = x_1 + ... + x_5.
  static GaussianDGPSpec dgp1();
  /// As dgp1 with mu(x) = 1.5 sign(x_1) + sign(x_2), sign(0) = +1.
  static GaussianDGPSpec dgp2();
  /// X ~ N(0, sigma_x^2), e = 1/2, mu(x) = x.
  static GaussianDGPSpec example7(double sigma_x = 1.0);

  void validate() const;

  double mu(const Eigen::Ref<const Eigen::RowVectorXd>& x, int arm) const;
  double propensity_at(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;

  /// E[mu(X, arm)] in closed form (all built-in means are odd or linear).
  double mean_mu(int arm) const;

  /// Draws n units. Per unit, in order: the covariates, one uniform for
  /// Z, one normal for Y. Attaches the true propensity as the dataset's
  /// known propensity when `attach_propensity` is set.
  RawDataset sample(Eigen::Index n, Rng& rng, bool attach_propensity) const;
};

struct ApoBounds {
  double psi_t_minus = 0.0;
  double psi_t_plus = 0.0;
  double psi_c_minus = 0.0;
  double psi_c_plus = 0.0;
  double mean_propensity = 0.0;  // E[e(X)], exact or Monte Carlo
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Sharp bounds on E[Y(1)] and E[Y(0)] for a Gaussian law:
///   psi_t^{+/-} = E[mu(X,1)] +/- c * E[(1 - e(X)) sigma],
///   psi_c^{+/-} = E[mu(X,0)] +/- c * E[e(X) sigma],
/// with c = (Lambda^2 - 1)/Lambda * phi(z_tau). E[e(X)] is exact for a
/// constant propensity and a Monte Carlo average over `mc_draws` covariate
/// draws otherwise.
ApoBounds gaussian_apo_bounds(const GaussianDGPSpec& spec, double lambda, std::int64_t mc_draws = 1'000'000,
                              std::uint64_t seed = 20240101);

/// psi_ATE +/- c * E[sigma(X)].
Interval gaussian_ate_identified_set(const GaussianDGPSpec& spec, double lambda);

/// Same sharp interval assembled from the arm bounds: [t- - c+, t+ - c-].
Interval gaussian_ate_from_apo(const ApoBounds& apo);

/// Identified set for a Gaussian law and estimand; the ATT has no closed
/// form here and throws.
Interval gaussian_identified_set(const GaussianDGPSpec& spec, double lambda, Estimand estimand,
                                 std::int64_t mc_draws = 1'000'000, std::uint64_t seed = 20240101);

enum class TiltDirection { plus, minus };

/// Threshold-form propensity attaining a sharp bound on E[Y(1)]:
/// 1/E = 1 + ((1-e)/e) * Lambda when (plus and Y > Q) or (minus and Y < Q),
/// and 1 + ((1-e)/e) / Lambda otherwise (ties Y == Q take the 1/Lambda side).
struct WorstCasePropensity {
  Eigen::VectorXd values;
  TiltDirection direction = TiltDirection::plus;
  Eigen::VectorXd quantile_values;
};

WorstCasePropensity worst_case_propensity(const Eigen::VectorXd& nominal, const Eigen::VectorXd& outcomes,
                                          const Eigen::VectorXd& quantile_values, double lambda,
                                          TiltDirection direction);

/// Brute-force optimum of sum(values * w) / sum(w) over
/// { lower <= w <= upper, design' w = targets } by vertex enumeration:
/// every choice of at most k free coordinates with the rest at a box end.
/// Meant for verification on small instances (m <= 16).
double vertex_bound_oracle(const Eigen::VectorXd& values, const Eigen::VectorXd& lower,
                           const Eigen::VectorXd& upper, const Eigen::MatrixXd& design,
                           const Eigen::VectorXd& targets, Direction direction);

}  // namespace msmsharp
