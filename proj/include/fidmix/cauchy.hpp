#pragma once

#include "fidmix/rng.hpp"

namespace fidmix {

// Standard Cauchy distribution function.
double cauchy_cdf(double x);

// F(upper) - F(lower), computed without cancellation when both endpoints lie
// in the same tail.
double cauchy_interval_mass(double lower, double upper);

// Inverse distribution function of the standard Cauchy truncated to
// (lower, upper), evaluated at u in (0, 1):
//   F^-1(F(lower) + u (F(upper) - F(lower))).
double truncated_cauchy_quantile(double u, double lower, double upper);

// Throws EmptySupport when lower >= upper.
double sample_truncated_cauchy(RngStream& rng, double lower, double upper);

// log of exp(-z^2/2) (1 + z^2) (F(upper) - F(lower)): the per-step importance
// weight factor for a truncated-Cauchy proposal against a normal target.
double log_weight_factor(double z, double lower, double upper);

// Standard normal counterparts, used while the parameter dimension is still
// being filled. Tail-stable like the Cauchy versions.
double normal_interval_mass(double lower, double upper);
double truncated_normal_quantile(double u, double lower, double upper);
double sample_truncated_normal(RngStream& rng, double lower, double upper);

}  // namespace fidmix
