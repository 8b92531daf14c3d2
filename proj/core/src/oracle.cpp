#include "msmsharp/oracle.hpp"

#include "msmsharp/error.hpp"
#include "msmsharp/normal.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <vector>

namespace msmsharp {

GaussianDGPSpec GaussianDGPSpec::dgp1() {
  GaussianDGPSpec spec;
  spec.covariate_law = CovariateLaw::uniform_cube;
  spec.dimension = 5;
  spec.mean = Mean::linear_sum;
  spec.sigma = 1.0;
  spec.propensity = Propensity::logistic;
  spec.propensity_coefficients = Eigen::VectorXd::Constant(6, 1.0 / std::sqrt(5.0));
  spec.propensity_coefficients[0] = 0.0;
  return spec;
}

GaussianDGPSpec GaussianDGPSpec::dgp2() {
  GaussianDGPSpec spec = dgp1();
  spec.mean = Mean::two_signs;
  return spec;
}

GaussianDGPSpec GaussianDGPSpec::example7(double sigma_x) {
  GaussianDGPSpec spec;
  spec.covariate_law = CovariateLaw::gaussian;
  spec.dimension = 1;
  spec.sigma_x = sigma_x;
  spec.mean = Mean::identity_x;
  spec.sigma = 1.0;
  spec.propensity = Propensity::constant;
  spec.constant_propensity = 0.5;
  return spec;
}

void GaussianDGPSpec::validate() const {
  if (dimension < 1) throw Error(ErrorCode::invalid_argument, "DGP dimension must be positive");
  if (!(sigma > 0.0)) throw Error(ErrorCode::invalid_argument, "DGP noise sd must be positive");
  if (covariate_law == CovariateLaw::gaussian && !(sigma_x > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "gaussian covariate sd must be positive");
  }
  if (mean == Mean::two_signs && dimension < 2) {
    throw Error(ErrorCode::invalid_argument, "two_signs mean needs at least two covariates");
  }
  if (mean == Mean::custom && mean_coefficients.size() != dimension + 1) {
    throw Error(ErrorCode::invalid_argument, "custom mean needs dimension + 1 coefficients");
  }
  if (propensity == Propensity::constant && !(constant_propensity > 0.0 && constant_propensity < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "constant propensity must lie in (0, 1)");
  }
  if (propensity == Propensity::logistic && propensity_coefficients.size() != dimension + 1) {
    throw Error(ErrorCode::invalid_argument, "logistic propensity needs dimension + 1 coefficients");
  }
}

double GaussianDGPSpec::mu(const Eigen::Ref<const Eigen::RowVectorXd>& x, int arm) const {
  double base = 0.0;
  switch (mean) {
    case Mean::linear_sum: base = x.sum(); break;
    case Mean::two_signs: base = 1.5 * (x[0] >= 0.0 ? 1.0 : -1.0) + (x[1] >= 0.0 ? 1.0 : -1.0); break;
    case Mean::identity_x: base = x[0]; break;
    case Mean::custom: base = mean_coefficients[0] + x.dot(mean_coefficients.tail(dimension).transpose()); break;
  }
  return arm == 1 ? base + treatment_shift : base;
}

double GaussianDGPSpec::propensity_at(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  if (propensity == Propensity::constant) return constant_propensity;
  const double eta = propensity_coefficients[0] + x.dot(propensity_coefficients.tail(dimension).transpose());
  return 1.0 / (1.0 + std::exp(-eta));
}

double GaussianDGPSpec::mean_mu(int arm) const {
  double base = 0.0;
  // Both covariate laws are centred and symmetric, so linear and odd means
  // average to their intercept. sign(0) = +1 has probability zero.
  if (mean == Mean::custom) base = mean_coefficients[0];
  return arm == 1 ? base + treatment_shift : base;
}

RawDataset GaussianDGPSpec::sample(Eigen::Index n, Rng& rng, bool attach_propensity) const {
  validate();
  RawDataset raw;
  raw.covariates.resize(n, dimension);
  raw.treatment.resize(n);
  raw.outcome.resize(n);
  Eigen::VectorXd e(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < dimension; ++j) {
      raw.covariates(i, j) = covariate_law == CovariateLaw::uniform_cube ? rng.uniform(-1.0, 1.0)
                                                                         : rng.normal(0.0, sigma_x);
    }
    const auto x = raw.covariates.row(i);
    e[i] = propensity_at(x);
    raw.treatment[i] = rng.uniform() < e[i] ? 1.0 : 0.0;
    raw.outcome[i] = rng.normal(mu(x, static_cast<int>(raw.treatment[i])), sigma);
  }
  for (int j = 0; j < dimension; ++j) raw.covariate_names.push_back("x" + std::to_string(j + 1));
  if (attach_propensity) raw.known_propensity = std::move(e);
  return raw;
}

namespace {

double half_width_factor(double lambda) {
  const double tau = tau_from_lambda(lambda);
  return (lambda * lambda - 1.0) / lambda * normal::pdf(normal::quantile(tau));
}

double mean_propensity(const GaussianDGPSpec& spec, std::int64_t mc_draws, std::uint64_t seed) {
  if (spec.propensity == GaussianDGPSpec::Propensity::constant) return spec.constant_propensity;
  if (mc_draws < 1) throw Error(ErrorCode::invalid_argument, "Monte Carlo draw count must be positive");
  // Fixed-size chunks with derived seeds, summed in chunk order.
  constexpr std::int64_t chunk = 1 << 16;
  const std::int64_t chunks = (mc_draws + chunk - 1) / chunk;
  Eigen::RowVectorXd x(spec.dimension);
  double total = 0.0;
  for (std::int64_t c = 0; c < chunks; ++c) {
    Rng rng(derive_replicate_seed(seed, static_cast<std::uint64_t>(c)));
    const std::int64_t count = std::min(chunk, mc_draws - c * chunk);
    double partial = 0.0;
    for (std::int64_t i = 0; i < count; ++i) {
      for (int j = 0; j < spec.dimension; ++j) {
        x[j] = spec.covariate_law == GaussianDGPSpec::CovariateLaw::uniform_cube ? rng.uniform(-1.0, 1.0)
                                                                                 : rng.normal(0.0, spec.sigma_x);
      }
      partial += spec.propensity_at(x);
    }
    total += partial;
  }
  return total / static_cast<double>(mc_draws);
}

}  // namespace

ApoBounds gaussian_apo_bounds(const GaussianDGPSpec& spec, double lambda, std::int64_t mc_draws,
                              std::uint64_t seed) {
  spec.validate();
  const double c = half_width_factor(lambda);
  ApoBounds out;
  out.mean_propensity = mean_propensity(spec, mc_draws, seed);
  const double t_half = c * (1.0 - out.mean_propensity) * spec.sigma;
  const double c_half = c * out.mean_propensity * spec.sigma;
  out.psi_t_minus = spec.mean_mu(1) - t_half;
  out.psi_t_plus = spec.mean_mu(1) + t_half;
  out.psi_c_minus = spec.mean_mu(0) - c_half;
  out.psi_c_plus = spec.mean_mu(0) + c_half;
  return out;
}

Interval gaussian_ate_identified_set(const GaussianDGPSpec& spec, double lambda) {
  spec.validate();
  const double center = spec.mean_mu(1) - spec.mean_mu(0);
  const double half = half_width_factor(lambda) * spec.sigma;
  return {center - half, center + half};
}

Interval gaussian_ate_from_apo(const ApoBounds& apo) {
  return {apo.psi_t_minus - apo.psi_c_plus, apo.psi_t_plus - apo.psi_c_minus};
}

Interval gaussian_identified_set(const GaussianDGPSpec& spec, double lambda, Estimand estimand,
                                 std::int64_t mc_draws, std::uint64_t seed) {
  switch (estimand) {
    case Estimand::ate: return gaussian_ate_identified_set(spec, lambda);
    case Estimand::psi_t: {
      const auto apo = gaussian_apo_bounds(spec, lambda, mc_draws, seed);
      return {apo.psi_t_minus, apo.psi_t_plus};
    }
    case Estimand::psi_c: {
      const auto apo = gaussian_apo_bounds(spec, lambda, mc_draws, seed);
      return {apo.psi_c_minus, apo.psi_c_plus};
    }
    case Estimand::att: break;
  }
  throw Error(ErrorCode::invalid_argument, "no closed-form Gaussian identified set for the ATT");
}

WorstCasePropensity worst_case_propensity(const Eigen::VectorXd& nominal, const Eigen::VectorXd& outcomes,
                                          const Eigen::VectorXd& quantile_values, double lambda,
                                          TiltDirection direction) {
  tau_from_lambda(lambda);
  const Eigen::Index n = nominal.size();
  if (outcomes.size() != n || quantile_values.size() != n) {
    throw Error(ErrorCode::dimension_mismatch, "worst-case propensity inputs must have equal length");
  }
  WorstCasePropensity out;
  out.direction = direction;
  out.quantile_values = quantile_values;
  out.values.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = nominal[i];
    if (!(e > 0.0 && e < 1.0)) {
      throw Error(ErrorCode::propensity_out_of_range, "nominal propensity outside (0, 1)");
    }
    const bool tilt_up = direction == TiltDirection::plus ? outcomes[i] > quantile_values[i]
                                                          : outcomes[i] < quantile_values[i];
    const double factor = tilt_up ? lambda : 1.0 / lambda;
    out.values[i] = 1.0 / (1.0 + (1.0 - e) / e * factor);
  }
  return out;
}

double vertex_bound_oracle(const Eigen::VectorXd& values, const Eigen::VectorXd& lower,
                           const Eigen::VectorXd& upper, const Eigen::MatrixXd& design,
                           const Eigen::VectorXd& targets, Direction direction) {
  const Eigen::Index m = values.size();
  const Eigen::Index k = design.cols();
  if (lower.size() != m || upper.size() != m || (k > 0 && design.rows() != m) || targets.size() != k) {
    throw Error(ErrorCode::dimension_mismatch, "vertex oracle inputs have inconsistent sizes");
  }
  if (m < 1 || m > 16) throw Error(ErrorCode::invalid_argument, "vertex oracle supports 1..16 units");

  const double scale = 1.0 + targets.cwiseAbs().sum();
  const double sign = direction == Direction::upper ? 1.0 : -1.0;
  double best = -std::numeric_limits<double>::infinity();
  bool found = false;

  Eigen::VectorXd w(m);
  const std::uint32_t full = (1u << m) - 1u;
  for (std::uint32_t free_mask = 0; free_mask <= full; ++free_mask) {
    const int j = std::popcount(free_mask);
    if (j > k) continue;
    std::vector<Eigen::Index> free_idx;
    std::vector<Eigen::Index> fixed_idx;
    for (Eigen::Index i = 0; i < m; ++i) ((free_mask >> i) & 1u ? free_idx : fixed_idx).push_back(i);

    Eigen::MatrixXd free_design(k, j);
    for (int c = 0; c < j; ++c) free_design.col(c) = design.row(free_idx[static_cast<std::size_t>(c)]).transpose();
    Eigen::FullPivLU<Eigen::MatrixXd> lu;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
    if (j > 0) {
      qr.compute(free_design);
      if (qr.rank() < j) continue;  // a smaller free set covers this vertex
    }

    const auto n_fixed = fixed_idx.size();
    for (std::uint64_t ends = 0; ends < (std::uint64_t{1} << n_fixed); ++ends) {
      Eigen::VectorXd rhs = targets;
      for (std::size_t f = 0; f < n_fixed; ++f) {
        const auto i = fixed_idx[f];
        w[i] = (ends >> f) & 1u ? upper[i] : lower[i];
        if (k > 0) rhs -= design.row(i).transpose() * w[i];
      }
      if (j > 0) {
        const Eigen::VectorXd sol = qr.solve(rhs);
        if ((free_design * sol - rhs).cwiseAbs().maxCoeff() > 1e-9 * scale) continue;
        bool inside = true;
        for (int c = 0; c < j; ++c) {
          const auto i = free_idx[static_cast<std::size_t>(c)];
          const double tol = 1e-10 * (1.0 + std::abs(upper[i]));
          if (sol[c] < lower[i] - tol || sol[c] > upper[i] + tol) {
            inside = false;
            break;
          }
          w[i] = sol[c];
        }
        if (!inside) continue;
      } else if (k > 0 && rhs.cwiseAbs().maxCoeff() > 1e-9 * scale) {
        continue;
      }
      const double ratio = values.dot(w) / w.sum();
      if (!found || sign * ratio > sign * best) best = ratio;
      found = true;
    }
  }
  if (!found) throw Error(ErrorCode::infeasible, "no feasible vertex");
  return best;
}

}  // namespace msmsharp
