#pragma once

namespace msmsharp::normal {

/// Standard normal density.
double pdf(double x) noexcept;

/// Standard normal CDF, via erfc (full relative accuracy in the lower tail).
double cdf(double x) noexcept;

/// Standard normal quantile. Acklam's rational approximation (relative
/// error about 1e-9) followed by two Halley corrections against `cdf`,
/// which brings |cdf(quantile(p)) - p| to roughly machine precision.
/// Returns -inf / +inf at p = 0 / 1 and NaN outside [0, 1].
double quantile(double p) noexcept;

}  // namespace msmsharp::normal
