#include "fidmix/rng.hpp"

#include <random>

namespace fidmix {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t k = mix64(seed + kGolden);
  k = mix64(k ^ (a * 0xD1B54A32D192ED03ULL + 1));
  k = mix64(k ^ (b * 0xABC98388FB8FAC03ULL + 7));
  return k;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t particle, std::uint64_t step,
                     std::uint64_t purpose) {
  std::uint64_t k = mix64(seed ^ 0x243F6A8885A308D3ULL);
  k = mix64(k + particle * kGolden + 0x13198A2E03707344ULL);
  k = mix64(k + step * 0xD1B54A32D192ED03ULL + 0xA4093822299F31D0ULL);
  k = mix64(k + purpose * 0xABC98388FB8FAC03ULL + 0x082EFA98EC4E6C89ULL);
  key_ = k;
}

RngStream::result_type RngStream::operator()() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double RngStream::uniform() {
  // 53 random bits centred in their cell: never 0, never 1.
  const std::uint64_t bits = (*this)() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(*this);
}

double RngStream::chi_squared(double dof) {
  if (dof <= 0.0) return 0.0;
  std::chi_squared_distribution<double> dist(dof);
  return dist(*this);
}

}  // namespace fidmix
