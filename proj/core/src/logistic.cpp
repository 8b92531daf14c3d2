#include "msmsharp/logistic.hpp"

#include "msmsharp/error.hpp"

#include <cmath>
#include <sstream>

namespace msmsharp {

namespace {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  return design;
}

// Numerically stable log(1 + exp(t)).
double log1pexp(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double log_likelihood(const Eigen::VectorXd& eta, const Eigen::VectorXd& z) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += z[i] * eta[i] - log1pexp(eta[i]);
  return ll;
}

}  // namespace

Eigen::VectorXd predict_logistic(const Eigen::VectorXd& coefficients, const Eigen::MatrixXd& covariates) {
  if (coefficients.size() != covariates.cols() + 1) {
    throw Error(ErrorCode::dimension_mismatch, "logistic coefficients do not match covariate columns");
  }
  Eigen::VectorXd eta = (covariates * coefficients.tail(covariates.cols())).array() + coefficients[0];
  return eta.unaryExpr([](double t) { return sigmoid(t); });
}

PropensityFit fit_logistic(const Eigen::MatrixXd& covariates, const Eigen::VectorXd& treatment,
                           const LogisticOptions& options) {
  if (covariates.rows() != treatment.size()) {
    throw Error(ErrorCode::dimension_mismatch, "covariates and treatment lengths differ");
  }
  const Eigen::MatrixXd design = with_intercept(covariates);
  const Eigen::Index k = design.cols();

  PropensityFit fit;
  fit.coefficients = Eigen::VectorXd::Zero(k);
  const double mean_z = treatment.mean();
  if (mean_z > 0.0 && mean_z < 1.0) fit.coefficients[0] = std::log(mean_z / (1.0 - mean_z));

  Eigen::VectorXd eta = design * fit.coefficients;
  double ll = log_likelihood(eta, treatment);

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    fit.iterations = iter;
    const Eigen::VectorXd p = eta.unaryExpr([](double t) { return sigmoid(t); });
    const Eigen::VectorXd score = design.transpose() * (treatment - p);
    fit.score_norm = score.lpNorm<Eigen::Infinity>();
    if (fit.score_norm <= options.score_tolerance) {
      fit.converged = true;
      break;
    }

    const Eigen::VectorXd w = (p.array() * (1.0 - p.array())).matrix();
    Eigen::MatrixXd hessian = design.transpose() * w.asDiagonal() * design;
    Eigen::LLT<Eigen::MatrixXd> llt(hessian);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-13) {
      const double scale = std::max(1.0, hessian.diagonal().maxCoeff());
      hessian.diagonal().array() += options.ridge * scale;
      llt.compute(hessian);
      fit.ridge_used = true;
      if (llt.info() != Eigen::Success) {
        throw Error(ErrorCode::not_converged, "logistic Hessian is singular even after ridge jitter");
      }
    }
    const Eigen::VectorXd step = llt.solve(score);

    double t = 1.0;
    Eigen::VectorXd candidate;
    Eigen::VectorXd candidate_eta;
    double candidate_ll = ll;
    bool improved = false;
    for (int halving = 0; halving < 30; ++halving) {
      candidate = fit.coefficients + t * step;
      candidate_eta = design * candidate;
      candidate_ll = log_likelihood(candidate_eta, treatment);
      if (candidate_ll >= ll - 1e-12 * std::abs(ll)) {
        improved = true;
        break;
      }
      t *= 0.5;
    }
    if (!improved) break;

    fit.coefficients = std::move(candidate);
    eta = std::move(candidate_eta);
    ll = candidate_ll;
    if (fit.coefficients.norm() > options.max_coefficient_norm) {
      std::ostringstream os;
      os << "logistic fit diverged (coefficient norm " << fit.coefficients.norm()
         << " > " << options.max_coefficient_norm << "); treatment looks separated by the covariates";
      throw Error(ErrorCode::separation, os.str());
    }
  }

  fit.fitted = eta.unaryExpr([](double t) { return sigmoid(t); });
  fit.score_norm = (design.transpose() * (treatment - fit.fitted)).lpNorm<Eigen::Infinity>();
  if (fit.score_norm <= options.score_tolerance) fit.converged = true;
  if (!fit.converged) {
    std::ostringstream os;
    os << "logistic fit did not converge after " << fit.iterations << " iterations (score norm "
       << fit.score_norm << ")";
    // Slow divergence towards a separating direction shows up as large coefficients.
    if (fit.coefficients.norm() > 0.1 * options.max_coefficient_norm) {
      throw Error(ErrorCode::separation, os.str() + "; treatment looks separated by the covariates");
    }
    throw Error(ErrorCode::not_converged, os.str());
  }
  if (((fit.fitted.array() <= 0.0) || (fit.fitted.array() >= 1.0)).any()) {
    throw Error(ErrorCode::separation, "fitted propensities reached 0 or 1");
  }
  // Complete separation: the likelihood has no maximizer, but Newton drives
  // the score to zero anyway by classifying every unit with near certainty.
  if ((treatment - fit.fitted).cwiseAbs().maxCoeff() < 1e-3) {
    throw Error(ErrorCode::separation,
                "every unit is classified with near certainty; treatment is separated by the covariates");
  }
  return fit;
}

PropensityFit fit_logistic(const Dataset& ds, const LogisticOptions& options) {
  return fit_logistic(ds.covariates(), ds.treatment(), options);
}

}  // namespace msmsharp
