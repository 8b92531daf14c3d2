#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace msmsharp {

/// Failure categories. Input problems are the caller's to fix; numerical
/// failures come from a solver that could not reach its contract.
enum class ErrorKind { input, numerical };

/// Machine-readable diagnostic codes, one per distinct failure.
enum class ErrorCode {
  file_not_found,
  missing_column,
  duplicate_column,
  non_numeric_cell,
  missing_value,
  ragged_row,
  empty_file,
  too_few_rows,
  no_covariates,
  non_finite_value,
  treatment_not_binary,
  single_treatment_level,
  propensity_out_of_range,
  dimension_mismatch,
  invalid_argument,
  empty_arm,
  arm_too_small,
  rank_deficient,
  separation,
  not_converged,
  infeasible,
  too_many_failures,
};

std::string_view to_string(ErrorCode code) noexcept;
ErrorKind kind_of(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  ErrorKind kind() const noexcept { return kind_of(code_); }

 private:
  ErrorCode code_;
};

}  // namespace msmsharp
