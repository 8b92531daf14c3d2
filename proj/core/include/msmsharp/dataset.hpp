#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace msmsharp {

/// Unvalidated observational data. Anything can be put in here;
/// `validate_dataset` decides whether it becomes a `Dataset`.
struct RawDataset {
  Eigen::MatrixXd covariates;  // n x d
  Eigen::VectorXd treatment;   // n, expected in {0, 1}
  Eigen::VectorXd outcome;     // n
  std::vector<std::string> covariate_names;
  std::optional<Eigen::VectorXd> known_propensity;
};

/// Validated, immutable sample of (X, Z, Y) with an optional known nominal
/// propensity. Safe to share read-only across threads.
class Dataset {
 public:
  Eigen::Index n() const noexcept { return outcome_.size(); }
  Eigen::Index d() const noexcept { return covariates_.cols(); }

  const Eigen::MatrixXd& covariates() const noexcept { return covariates_; }
  /// Treatment indicator stored as exact 0.0 / 1.0.
  const Eigen::VectorXd& treatment() const noexcept { return treatment_; }
  const Eigen::VectorXd& outcome() const noexcept { return outcome_; }
  const std::vector<std::string>& covariate_names() const noexcept { return names_; }
  const std::optional<Eigen::VectorXd>& known_propensity() const noexcept { return known_propensity_; }

  bool treated(Eigen::Index i) const noexcept { return treatment_[i] == 1.0; }
  Eigen::Index n_treated() const noexcept;
  Eigen::Index n_control() const noexcept { return n() - n_treated(); }

  /// Row indices of one arm, in ascending order.
  std::vector<Eigen::Index> arm_rows(int arm) const;

  /// New dataset made of the given rows (repetition allowed). Re-validates,
  /// so a resample with a single treatment level throws.
  Dataset gather(std::span<const Eigen::Index> rows) const;

  /// Copy with the outcome replaced (same validation rules).
  Dataset with_outcome(Eigen::VectorXd outcome) const;
  Dataset with_covariates(Eigen::MatrixXd covariates, std::vector<std::string> names) const;
  Dataset without_known_propensity() const;

  RawDataset raw() const;

  friend bool operator==(const Dataset& a, const Dataset& b);

 private:
  friend Dataset validate_dataset(RawDataset raw);
  Dataset() = default;

  Eigen::MatrixXd covariates_;
  Eigen::VectorXd treatment_;
  Eigen::VectorXd outcome_;
  std::vector<std::string> names_;
  std::optional<Eigen::VectorXd> known_propensity_;
};

/// Checks every Dataset invariant and throws `Error` naming the first
/// violation: n >= 2, d >= 1, finite values, binary treatment with both
/// levels present, known propensity strictly inside (0, 1).
Dataset validate_dataset(RawDataset raw);

struct CsvColumns {
  std::string outcome;
  std::string treatment;
  std::optional<std::string> propensity;
};

/// Reads a comma-separated file with a header row. Every column that is not
/// the outcome, treatment or propensity column is a covariate, in file order.
Dataset load_csv(const std::filesystem::path& path, const CsvColumns& columns);
Dataset read_csv(std::istream& in, const CsvColumns& columns);

/// Writes covariates first, then treatment, outcome and (if present) the
/// known propensity, using shortest round-trip number formatting.
void write_csv(std::ostream& out, const Dataset& ds, const CsvColumns& columns);

struct Standardization {
  Eigen::VectorXd means;
  Eigen::VectorXd sds;
  std::vector<Eigen::Index> constant_columns;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& covariates) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& standardized) const;
};

/// Centers and scales each non-constant covariate to mean 0 and sample sd 1.
/// Constant columns are left alone and listed in the returned record.
std::pair<Dataset, Standardization> standardize_covariates(const Dataset& ds);

}  // namespace msmsharp
