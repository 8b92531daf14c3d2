#include "msmsharp/error.hpp"

namespace msmsharp {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::file_not_found: return "file_not_found";
    case ErrorCode::missing_column: return "missing_column";
    case ErrorCode::duplicate_column: return "duplicate_column";
    case ErrorCode::non_numeric_cell: return "non_numeric_cell";
    case ErrorCode::missing_value: return "missing_value";
    case ErrorCode::ragged_row: return "ragged_row";
    case ErrorCode::empty_file: return "empty_file";
    case ErrorCode::too_few_rows: return "too_few_rows";
    case ErrorCode::no_covariates: return "no_covariates";
    case ErrorCode::non_finite_value: return "non_finite_value";
    case ErrorCode::treatment_not_binary: return "treatment_not_binary";
    case ErrorCode::single_treatment_level: return "single_treatment_level";
    case ErrorCode::propensity_out_of_range: return "propensity_out_of_range";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::empty_arm: return "empty_arm";
    case ErrorCode::arm_too_small: return "arm_too_small";
    case ErrorCode::rank_deficient: return "rank_deficient";
    case ErrorCode::separation: return "separation";
    case ErrorCode::not_converged: return "not_converged";
    case ErrorCode::infeasible: return "infeasible";
    case ErrorCode::too_many_failures: return "too_many_failures";
  }
  return "unknown";
}

ErrorKind kind_of(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::rank_deficient:
    case ErrorCode::separation:
    case ErrorCode::not_converged:
    case ErrorCode::infeasible:
    case ErrorCode::too_many_failures:
      return ErrorKind::numerical;
    default:
      return ErrorKind::input;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(message), code_(code) {}

}  // namespace msmsharp
