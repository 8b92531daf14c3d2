#include "msmsharp/simulation.hpp"

#include "msmsharp/error.hpp"
#include "msmsharp/parallel.hpp"
#include "msmsharp/random.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ostream>

namespace msmsharp {

GaussianDGPSpec DgpChoice::spec() const {
  switch (kind) {
    case Kind::dgp1: return GaussianDGPSpec::dgp1();
    case Kind::dgp2: return GaussianDGPSpec::dgp2();
    case Kind::example7: return GaussianDGPSpec::example7(sigma_x);
  }
  return GaussianDGPSpec::dgp1();
}

std::string DgpChoice::name() const {
  switch (kind) {
    case Kind::dgp1: return "dgp1";
    case Kind::dgp2: return "dgp2";
    case Kind::example7: return "example7";
  }
  return "?";
}

Dataset generate_dgp(const DgpChoice& dgp, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorCode::invalid_argument, "sample size must be positive");
  Rng rng(seed);
  return validate_dataset(dgp.spec().sample(n, rng, dgp.kind == DgpChoice::Kind::example7));
}

std::string to_string(StudyMethod method) {
  switch (method) {
    case StudyMethod::zsb: return "zsb";
    case StudyMethod::qb_linear: return "linear";
    case StudyMethod::qb_knn: return "knn";
    case StudyMethod::cov: return "cov";
  }
  return "?";
}

std::optional<StudyMethod> parse_study_method(std::string_view text) {
  if (text == "zsb") return StudyMethod::zsb;
  if (text == "linear" || text == "qb") return StudyMethod::qb_linear;
  if (text == "knn") return StudyMethod::qb_knn;
  if (text == "cov") return StudyMethod::cov;
  return std::nullopt;
}

void StudyConfig::validate() const {
  if (replications < 1) throw Error(ErrorCode::invalid_argument, "replications must be at least 1");
  if (n < 20) throw Error(ErrorCode::invalid_argument, "study sample size must be at least 20");
  if (methods.empty()) throw Error(ErrorCode::invalid_argument, "study needs at least one method");
  tau_from_lambda(lambda);
  dgp.spec().validate();
  if (bootstrap) bootstrap->validate();
}

namespace {

struct MethodRun {
  double lower = 0.0;
  double upper = 0.0;
  std::optional<double> ci_lower;
  std::optional<double> ci_upper;
  double seconds = 0.0;
};

struct RepResult {
  bool failed = false;
  std::vector<MethodRun> runs;
};

std::pair<BoundsMethod, IntervalOptions> method_setup(StudyMethod m) {
  IntervalOptions opts;
  switch (m) {
    case StudyMethod::zsb: return {BoundsMethod::zsb, opts};
    case StudyMethod::qb_linear: return {BoundsMethod::quantile_balance, opts};
    case StudyMethod::qb_knn:
      opts.quantile_method = QuantileMethod::knn_crossfit;
      return {BoundsMethod::quantile_balance, opts};
    case StudyMethod::cov: return {BoundsMethod::covariate_balance, opts};
  }
  return {BoundsMethod::zsb, opts};
}

std::optional<Interval> reference_interval(const StudyConfig& config) {
  if (config.estimand == Estimand::att) return std::nullopt;
  if (config.dgp.kind != DgpChoice::Kind::example7 && config.estimand == Estimand::ate) {
    return gaussian_ate_identified_set(config.dgp.spec(), config.lambda);
  }
  return gaussian_identified_set(config.dgp.spec(), config.lambda, config.estimand);
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

StudySummary run_study(const StudyConfig& config) {
  config.validate();
  const auto reps = static_cast<std::size_t>(config.replications);
  const std::size_t k = config.methods.size();
  std::vector<RepResult> results(reps);

  const int threads = resolve_threads(config.threads);
  parallel_for(reps, threads, [&](std::size_t r) {
    const std::uint64_t seed = derive_replicate_seed(config.master_seed, r);
    RepResult& out = results[r];
    try {
      const Dataset ds = generate_dgp(config.dgp, config.n, seed);
      for (StudyMethod m : config.methods) {
        const auto start = std::chrono::steady_clock::now();
        const auto [bounds_method, opts] = method_setup(m);
        const BoundsEstimate est = sensitivity_interval(ds, config.lambda, config.estimand, bounds_method, opts);
        MethodRun run{est.lower, est.upper, std::nullopt, std::nullopt, 0.0};
        if (config.bootstrap) {
          BootstrapConfig boot = *config.bootstrap;
          // Replications already saturate the workers.
          boot.threads = 1;
          boot.master_seed = mix64(seed ^ config.bootstrap->master_seed);
          const BootstrapInterval ci =
              percentile_bootstrap_ci(ds, config.lambda, config.estimand, bounds_method, boot, opts);
          run.ci_lower = ci.ci_lower;
          run.ci_upper = ci.ci_upper;
        }
        run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out.runs.push_back(run);
      }
    } catch (const Error& err) {
      // Numerical failures and degenerate draws (one arm empty at small n)
      // skip the replication; configuration errors propagate.
      if (err.code() == ErrorCode::invalid_argument) throw;
      out.failed = true;
      out.runs.clear();
    }
  });

  StudySummary summary;
  summary.config = config;
  summary.reference = reference_interval(config);
  for (const auto& res : results) (res.failed ? summary.failed_replications : summary.completed_replications)++;
  if (static_cast<double>(summary.failed_replications) > 0.05 * static_cast<double>(reps)) {
    throw Error(ErrorCode::too_many_failures, std::to_string(summary.failed_replications) + " of " +
                                                  std::to_string(reps) + " replications failed");
  }

  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> lowers, uppers;
    MethodSummary ms;
    ms.method = config.methods[j];
    int covered = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      if (results[r].failed) continue;
      const MethodRun& run = results[r].runs[j];
      lowers.push_back(run.lower);
      uppers.push_back(run.upper);
      ms.runtime_seconds += run.seconds;
      if (run.ci_lower && summary.reference && *run.ci_lower <= summary.reference->lower &&
          *run.ci_upper >= summary.reference->upper) {
        ++covered;
      }
    }
    if (!lowers.empty()) {
      ms.mean_lower = mean_of(lowers);
      ms.sd_lower = sd_of(lowers, ms.mean_lower);
      ms.mean_upper = mean_of(uppers);
      ms.sd_upper = sd_of(uppers, ms.mean_upper);
      if (config.bootstrap && summary.reference) {
        ms.coverage = static_cast<double>(covered) / static_cast<double>(lowers.size());
      }
    }
    summary.methods.push_back(ms);
  }

  for (std::size_t r = 0; r < reps; ++r) {
    if (results[r].failed) continue;
    for (std::size_t j = 0; j < k; ++j) {
      const MethodRun& run = results[r].runs[j];
      summary.records.push_back({static_cast<int>(r), config.methods[j], run.lower, run.upper, run.ci_lower,
                                 run.ci_upper});
    }
  }
  return summary;
}

void write_replication_csv(std::ostream& out, const StudySummary& summary) {
  auto num = [](double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  out << "rep,method,lower,upper,ci_lower,ci_upper\n";
  for (const auto& rec : summary.records) {
    out << rec.rep << ',' << to_string(rec.method) << ',' << num(rec.lower) << ',' << num(rec.upper) << ','
        << (rec.ci_lower ? num(*rec.ci_lower) : "") << ',' << (rec.ci_upper ? num(*rec.ci_upper) : "") << '\n';
  }
}

}  // namespace msmsharp
