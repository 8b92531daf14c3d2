#pragma once

#include "msmsharp/bootstrap.hpp"
#include "msmsharp/bounds.hpp"
#include "msmsharp/dataset.hpp"
#include "msmsharp/oracle.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace msmsharp {

struct DgpChoice {
  enum class Kind { dgp1, dgp2, example7 };
  Kind kind = Kind::dgp1;
  double sigma_x = 1.0;  // example7 only

  GaussianDGPSpec spec() const;
  std::string name() const;
};

/// dgp1 / dgp2 / example7 draws. example7 carries its known propensity 0.5.
Dataset generate_dgp(const DgpChoice& dgp, Eigen::Index n, std::uint64_t seed);

/// One bounds procedure in a study: ZSB, quantile balancing with a linear
/// or cross-fitted k-NN quantile model, or covariate balancing.
enum class StudyMethod { zsb, qb_linear, qb_knn, cov };

std::string to_string(StudyMethod method);
/// Accepts zsb, linear (or qb), knn, cov.
std::optional<StudyMethod> parse_study_method(std::string_view text);

struct StudyConfig {
  DgpChoice dgp;
  Eigen::Index n = 500;
  int replications = 100;
  double lambda = 2.0;
  Estimand estimand = Estimand::ate;
  std::vector<StudyMethod> methods{StudyMethod::zsb, StudyMethod::qb_linear};
  std::optional<BootstrapConfig> bootstrap;
  std::uint64_t master_seed = 0;
  std::optional<int> threads;

  void validate() const;
};

struct ReplicationRecord {
  int rep = 0;
  StudyMethod method = StudyMethod::zsb;
  double lower = 0.0;
  double upper = 0.0;
  std::optional<double> ci_lower;
  std::optional<double> ci_upper;
};

struct MethodSummary {
  StudyMethod method = StudyMethod::zsb;
  double mean_lower = 0.0;
  double sd_lower = 0.0;
  double mean_upper = 0.0;
  double sd_upper = 0.0;
  std::optional<double> coverage;  // share of CIs containing the reference interval
  double runtime_seconds = 0.0;    // summed over replications; not deterministic
};

struct StudySummary {
  StudyConfig config;
  std::optional<Interval> reference;  // oracle identified set, when known
  std::vector<MethodSummary> methods;
  int completed_replications = 0;
  int failed_replications = 0;
  std::vector<ReplicationRecord> records;  // sorted by (rep, method order)
};

/// Runs every method (and the optional bootstrap) on `replications`
/// independent draws; draw r uses seed derive_replicate_seed(master_seed, r).
/// A replication whose data or fits fail numerically is skipped and counted;
/// more than 5% failures abort with too_many_failures.
StudySummary run_study(const StudyConfig& config);

/// Per-replication CSV: rep,method,lower,upper,ci_lower,ci_upper.
void write_replication_csv(std::ostream& out, const StudySummary& summary);

}  // namespace msmsharp
