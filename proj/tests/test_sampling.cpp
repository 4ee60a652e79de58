#include <doctest.h>

#include <cmath>
#include <set>

#include "fidmix/cauchy.hpp"
#include "fidmix/error.hpp"
#include "fidmix/rng.hpp"
#include "support/oracles.hpp"

using namespace fidmix;

TEST_CASE("truncated Cauchy quantiles") {
  CHECK(truncated_cauchy_quantile(0.75, -kInf, kInf) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(truncated_cauchy_quantile(0.5, -kInf, kInf)) < 1e-15);
  CHECK(truncated_cauchy_quantile(0.5, 0.0, kInf) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(truncated_cauchy_quantile(0.5, -kInf, 0.0) == doctest::Approx(-1.0).epsilon(1e-14));
}

TEST_CASE("inverse CDF agrees with the direct formula") {
  const double pi = 3.14159265358979323846;
  for (auto [m, big_m] : {std::pair{-2.0, 1.0}, {0.0, kInf}, {-kInf, 3.0}, {0.5, 0.7}, {-5.0, -4.0}}) {
    const double fm = std::isinf(m) ? 0.0 : 0.5 + std::atan(m) / pi;
    const double fM = std::isinf(big_m) ? 1.0 : 0.5 + std::atan(big_m) / pi;
    for (double u : {0.01, 0.2, 0.5, 0.8, 0.99}) {
      const double direct = std::tan(pi * (fm + u * (fM - fm) - 0.5));
      const double z = truncated_cauchy_quantile(u, m, big_m);
      CHECK(z == doctest::Approx(direct).epsilon(1e-10));
      CHECK(z > m);
      CHECK(z < big_m);
    }
  }
}

TEST_CASE("tail intervals keep their mass") {
  const double mass = cauchy_interval_mass(1e8, 1e8 + 1.0);
  CHECK(mass > 0.0);
  CHECK(mass == doctest::Approx(1.0 / (3.14159265358979323846 * 1e16)).epsilon(1e-6));
  const double z = truncated_cauchy_quantile(0.5, 1e8, 1e8 + 1.0);
  CHECK(z > 1e8);
  CHECK(z < 1e8 + 1.0);
  CHECK(cauchy_interval_mass(-kInf, kInf) == doctest::Approx(1.0));
  CHECK(cauchy_interval_mass(2.0, 1.0) == 0.0);
}

TEST_CASE("empty support is an error") {
  RngStream rng(1, 0, 0);
  CHECK_THROWS_AS(sample_truncated_cauchy(rng, 1.0, 1.0), EmptySupport);
  CHECK_THROWS_AS(sample_truncated_cauchy(rng, 2.0, 1.0), EmptySupport);
}

TEST_CASE("weight factor values") {
  CHECK(std::exp(log_weight_factor(0.0, -kInf, kInf)) == doctest::Approx(1.0));
  CHECK(std::exp(log_weight_factor(1.0, -kInf, kInf)) == doctest::Approx(1.21306131942526));
  CHECK(std::exp(log_weight_factor(0.0, 0.0, kInf)) == doctest::Approx(0.5));
}

TEST_CASE("truncated Cauchy draws follow the truncated CDF") {
  for (auto [m, big_m] : {std::pair{0.0, kInf}, {-2.0, 1.0}}) {
    RngStream rng(99, 1, 2, 7);
    std::vector<double> xs(20000);
    for (double& x : xs) x = sample_truncated_cauchy(rng, m, big_m);
    const double d = oracle::ks_statistic(
        xs, [&](double x) { return oracle::truncated_cauchy_cdf(x, m, big_m); });
    CHECK(oracle::ks_pvalue(d, static_cast<double>(xs.size())) > 0.01);
  }
}

TEST_CASE("streams are reproducible and distinct") {
  RngStream a(42, 3, 5, 1), b(42, 3, 5, 1), c(42, 3, 6, 1), d(42, 4, 5, 1), e(43, 3, 5, 1);
  std::set<std::uint64_t> firsts;
  for (int k = 0; k < 100; ++k) CHECK(a() == b());
  firsts.insert(RngStream(42, 3, 5, 1)());
  firsts.insert(c());
  firsts.insert(d());
  firsts.insert(e());
  firsts.insert(RngStream(42, 3, 5, 2)());
  CHECK(firsts.size() == 5);
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
}

TEST_CASE("uniform, normal and chi-squared draws") {
  RngStream rng(5, 0, 0);
  std::vector<double> u(20000), z(20000), c(20000);
  for (auto& v : u) {
    v = rng.uniform();
    REQUIRE(v > 0.0);
    REQUIRE(v < 1.0);
  }
  for (auto& v : z) v = rng.normal();
  for (auto& v : c) v = rng.chi_squared(3.0);
  CHECK(oracle::ks_pvalue(oracle::ks_statistic(u, [](double x) { return x; }), 20000) > 0.01);
  CHECK(oracle::ks_pvalue(oracle::ks_statistic(z, oracle::normal_cdf), 20000) > 0.01);
  CHECK(oracle::ks_pvalue(
            oracle::ks_statistic(c, [](double x) { return oracle::chi_squared_cdf(x, 3.0); }),
            20000) > 0.01);
  CHECK(rng.chi_squared(0.0) == 0.0);
}
