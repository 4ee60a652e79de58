#pragma once

#include <cstdint>
#include <limits>

namespace fidmix {

// Counter-based random stream. A stream is identified by a 64-bit seed and a
// (particle, step, purpose) triple; the n-th draw is a pure function of the
// identity and n, so results do not depend on scheduling order.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t particle, std::uint64_t step,
            std::uint64_t purpose = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  // Chi-squared with `dof` degrees of freedom; dof == 0 yields 0.
  double chi_squared(double dof);

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

// Seed derivation for nested experiments (replicate r of a study, etc).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace fidmix
