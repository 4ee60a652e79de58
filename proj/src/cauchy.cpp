#include "fidmix/cauchy.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

#include "fidmix/error.hpp"

namespace fidmix {

double cauchy_cdf(double x) {
  // atan2 keeps full relative precision in the lower tail.
  return std::atan2(1.0, -x) / std::numbers::pi;
}

double cauchy_interval_mass(double lower, double upper) {
  if (!(lower < upper)) return 0.0;
  const double pi = std::numbers::pi;
  if (lower >= 0.0 || upper <= 0.0) {
    if (std::isinf(upper)) return std::atan2(1.0, lower) / pi;
    if (std::isinf(lower)) return std::atan2(1.0, -upper) / pi;
    // atan(M) - atan(m) = atan((M - m) / (1 + m M)) when m M > -1.
    return std::atan((upper - lower) / (1.0 + lower * upper)) / pi;
  }
  return (std::atan(upper) - std::atan(lower)) / pi;
}

double truncated_cauchy_quantile(double u, double lower, double upper) {
  const double angle = u * std::numbers::pi * cauchy_interval_mass(lower, upper);
  double z;
  if (std::isinf(lower)) {
    z = -1.0 / std::tan(angle);
  } else if (upper > 0.0 && lower < 0.0) {
    // Both endpoints away from the far tails; the angle may exceed pi/2.
    z = std::tan(std::atan(lower) + angle);
  } else {
    // tan(atan(m) + angle) via the addition formula, exact at m.
    const double t = std::tan(angle);
    const double den = 1.0 - lower * t;
    z = den > 0.0 ? (lower + t) / den : upper;
  }
  if (!(z > lower)) z = std::nextafter(lower, upper);
  if (!(z < upper)) z = std::nextafter(upper, lower);
  return z;
}

double sample_truncated_cauchy(RngStream& rng, double lower, double upper) {
  if (!(lower < upper)) throw EmptySupport("truncated Cauchy with empty support");
  return truncated_cauchy_quantile(rng.uniform(), lower, upper);
}

double log_weight_factor(double z, double lower, double upper) {
  const double z2 = z * z;
  if (!std::isfinite(z2)) return -std::numeric_limits<double>::infinity();
  return -0.5 * z2 + std::log1p(z2) + std::log(cauchy_interval_mass(lower, upper));
}

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;

// Upper tail probability Q(x) = 1 - Phi(x).
double upper_tail(double x) { return 0.5 * std::erfc(x / kSqrt2); }

// Q^-1(p) for p in (0, 1).
double upper_tail_inv(double p) {
  if (!(p > 0.0)) return std::numeric_limits<double>::infinity();
  if (!(p < 1.0)) return -std::numeric_limits<double>::infinity();
  return kSqrt2 * boost::math::erfc_inv(2.0 * p);
}

}  // namespace

double normal_interval_mass(double lower, double upper) {
  if (!(lower < upper)) return 0.0;
  if (lower >= 0.0) return upper_tail(lower) - upper_tail(upper);
  if (upper <= 0.0) return upper_tail(-upper) - upper_tail(-lower);
  return 1.0 - upper_tail(-lower) - upper_tail(upper);
}

double truncated_normal_quantile(double u, double lower, double upper) {
  const double mass = normal_interval_mass(lower, upper);
  double z;
  if (lower >= 0.0) {
    z = upper_tail_inv(upper_tail(lower) - u * mass);
  } else if (upper <= 0.0) {
    z = -upper_tail_inv(upper_tail(-upper) - (1.0 - u) * mass);
  } else {
    // Phi(lower) + u * mass, inverted from whichever side is nearer.
    const double p = upper_tail(-lower) + u * mass;
    z = p < 0.5 ? -upper_tail_inv(p) : upper_tail_inv(1.0 - p);
  }
  if (!(z > lower)) z = std::nextafter(lower, upper);
  if (!(z < upper)) z = std::nextafter(upper, lower);
  return z;
}

double sample_truncated_normal(RngStream& rng, double lower, double upper) {
  if (!(normal_interval_mass(lower, upper) > 0.0))
    throw EmptySupport("truncated normal with empty support");
  return truncated_normal_quantile(rng.uniform(), lower, upper);
}

}  // namespace fidmix
