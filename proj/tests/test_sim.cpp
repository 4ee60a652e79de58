#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fidmix/error.hpp"
#include "fidmix/sim.hpp"
#include "fidmix/smc.hpp"

using namespace fidmix;

TEST_CASE("catalog rows") {
  const auto& cat = catalog();
  REQUIRE(cat.size() == 11);
  const int expected_n[] = {16, 23, 18, 24, 12, 22, 18, 18, 19, 40, 18};
  const char* ids[] = {"MI-1", "MI-2", "MI-3", "MI-4", "MI-5", "MII-1",
                       "MII-2", "MII-3", "MII-4", "MII-5", "MII-6"};
  for (std::size_t i = 0; i < cat.size(); ++i) {
    CHECK(cat[i].id == ids[i]);
    CHECK(cat[i].n == expected_n[i]);
    CHECK(std::accumulate(cat[i].k.begin(), cat[i].k.end(), 0) == cat[i].n);
    CHECK(cat[i].build().n() == cat[i].n);
    CHECK(validate(cat[i].build()).empty());
  }

  const auto& mi1 = find_design("MI-1");
  CHECK(mi1.i_count == 5);
  CHECK(mi1.j_i == std::vector<int>{2, 1, 1, 1, 1});
  CHECK(mi1.k == std::vector<int>{4, 4, 2, 2, 2, 2});
  CHECK(mi1.phi == doctest::Approx(0.8090));

  const auto& mii5 = find_design("MII-5");
  CHECK(mii5.i_count == 5);
  CHECK(mii5.j_count == 3);
  CHECK(mii5.k == std::vector<int>{1, 2, 2, 5, 2, 7, 2, 2, 2, 2, 4, 2, 3, 2, 2});
  CHECK(mii5.n == 40);
  CHECK(mii5.build().r() == 4);

  CHECK(find_design("MI-4").j_i == std::vector<int>{1, 1, 1, 1, 1, 7});
  try {
    find_design("XX-9");
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("MII-6") != std::string::npos);
  }
}

TEST_CASE("blood-pH layout") {
  const auto& d = table2_design();
  CHECK(d.i_count == 15);
  CHECK(std::accumulate(d.j_i.begin(), d.j_i.end(), 0) == 37);
  CHECK(std::count(d.j_i.begin(), d.j_i.end(), 3) == 7);
  CHECK(d.build().n() == d.n);
  CHECK(&find_design(d.id) == &d);
}

TEST_CASE("parameter sets") {
  CHECK(parameter_sets().size() == 11);
  CHECK(find_parameter_set("PI-4").sigma2 == std::vector<double>{25, 4, 16});
  CHECK(find_parameter_set("PII-5").sigma2 == std::vector<double>{1, 1, 1, 1});
  CHECK(find_parameter_set("PII-1").sigma2 == std::vector<double>{0.1, 0.5, 0.1, 0.3});
  const auto& t2 = find_parameter_set("T2");
  CHECK(t2.beta == std::vector<double>{44.92});
  CHECK(t2.sigma2 == std::vector<double>{8.90, 2.65, 24.81});
  for (const auto& s : parameter_sets())
    if (s.id != "T2") CHECK(s.beta == std::vector<double>{0.0});
  const auto truth = find_parameter_set("PI-4").truth();
  CHECK(truth.sigma == std::vector<double>{5, 2, 4});
  CHECK_THROWS_AS(find_parameter_set("PI-9"), ConfigError);
}

TEST_CASE("data generation") {
  const auto m = find_design("MI-2").build();
  ParameterVector flat{{3.5}, {0.0, 0.0, 0.0}};
  RngStream s(1, 0, 0, kDataStream);
  for (double y : generate_data(m, flat, s)) CHECK(y == 3.5);

  ParameterVector truth{{0.0}, {1.0, 0.5, 2.0}};
  RngStream a(9, 3, 0, kDataStream), b(9, 3, 0, kDataStream);
  CHECK(generate_data(m, truth, a) == generate_data(m, truth, b));

  const int n = 100000;
  const auto big = build_one_way(1, {n});
  RngStream c(4, 0, 0, kDataStream);
  const auto y = generate_data(big, ParameterVector{{0.0}, {0.0, 1.0}}, c);
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  CHECK(std::abs(mean) <= 3.0 / std::sqrt(static_cast<double>(n)));

  CHECK_THROWS_AS(generate_data(m, ParameterVector{{0.0}, {1.0}}, s), ConfigError);
}

TEST_CASE("study config documents") {
  const auto cfg = parse_study_config(
      R"({"design": "MII-6", "params": "PII-5", "reps": 4, "particles": 50, "seed": 12,
          "alpha": 0.1, "width": 0.05, "kinds": ["two-sided", "upper"], "rule": "midpoint"})");
  CHECK(cfg.design == "MII-6");
  CHECK(cfg.reps == 4);
  CHECK(cfg.seed == 12);
  CHECK(cfg.kinds == std::vector<CiKind>{CiKind::two_sided, CiKind::upper});
  CHECK(cfg.rule == SelectionRule::midpoint);
  const auto again = parse_study_config(study_config_json(cfg));
  CHECK(again.design == cfg.design);
  CHECK(again.alpha == cfg.alpha);
  CHECK(again.width == cfg.width);
  CHECK(again.kinds == cfg.kinds);
  CHECK_THROWS_AS(parse_study_config("{\"reps\": \"many\"}"), ConfigError);
  CHECK_THROWS_AS(parse_study_config("{\"colour\": 1}"), ConfigError);
  CHECK_THROWS_AS(parse_study_config("[1, 2"), ConfigError);
  CHECK(default_width(ParameterVector{{0.0}, {1.0, 1.0, 1.0}}) == doctest::Approx(0.01 * std::sqrt(3.0)));
}

TEST_CASE("study with vacuous intervals covers everything") {
  StudyConfig cfg;
  cfg.design = "MI-5";
  cfg.params = "PI-5";
  cfg.reps = 3;
  cfg.particles = 40;
  cfg.width = 1e6;
  cfg.kinds = {CiKind::two_sided};
  cfg.threads = 1;
  const auto rep = run_study(cfg);
  CHECK(rep.width == 1e6);
  REQUIRE(rep.rows.size() == 4);
  for (const auto& row : rep.rows) {
    CHECK(row.coverage == 1.0);
    CHECK(row.reps + row.failures == 3);
  }
}

TEST_CASE("studies are reproducible and validated") {
  StudyConfig cfg;
  cfg.design = "MII-6";
  cfg.params = "PII-5";
  cfg.reps = 3;
  cfg.particles = 60;
  cfg.seed = 5;
  cfg.threads = 1;
  const auto a = run_study(cfg);
  cfg.threads = 3;
  const auto b = run_study(cfg);
  REQUIRE(a.rows.size() == b.rows.size());
  REQUIRE(a.rows.size() == 5 * 3);
  bool interaction = false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].param == b.rows[i].param);
    CHECK(a.rows[i].coverage == b.rows[i].coverage);
    CHECK((a.rows[i].avg_length == b.rows[i].avg_length ||
           (std::isnan(a.rows[i].avg_length) && std::isnan(b.rows[i].avg_length))));
    interaction |= a.rows[i].param == "sigma2_alphabeta";
    CHECK(a.rows[i].coverage >= 0.0);
    CHECK(a.rows[i].coverage <= 1.0);
  }
  CHECK(interaction);

  cfg.reps = 0;
  CHECK_THROWS_AS(run_study(cfg), ConfigError);
  cfg.reps = 1;
  cfg.params = "PI-1";
  CHECK_THROWS_AS(run_study(cfg), ConfigError);
  cfg.design = "nope";
  CHECK_THROWS_AS(run_study(cfg), ConfigError);
}

TEST_CASE("rejection oracle") {
  const auto m = build_one_way(2, {1, 2});
  IntervalDataset loose;
  loose.observations = {{-50, 50, 1}, {-50, 50, 2}, {-50, 50, 3}};
  RngStream s(3, 0, 0, kOracleStream);
  OracleStats stats;
  const auto fs = rejection_oracle(m, loose, 2000, s, 1, &stats);
  CHECK(stats.draws == 2000);
  CHECK(stats.rate() > 0.95);
  CHECK(fs.size() == stats.accepted);
  CHECK(fs.weight.front() == doctest::Approx(1.0 / fs.size()));

  const auto m4 = build_one_way(2, {2, 2});
  IntervalDataset clash;
  clash.observations = {{0, 1e-9, 1}, {5, 5 + 1e-9, 2}, {0, 1e-9, 3}, {-5, -5 + 1e-9, 4}};
  RngStream s2(3, 0, 0, kOracleStream);
  try {
    rejection_oracle(m4, clash, 500, s2, 1);
    FAIL("expected an oracle failure");
  } catch (const OracleFailure& e) {
    CHECK(e.acceptance_rate() == 0.0);
  }

  // Same stream identity, different worker counts: identical samples.
  IntervalDataset tiny;
  tiny.observations = {{0.0, 0.5, 1}, {0.25, 0.75, 2}, {-1.0, -0.5, 3}, {-0.75, -0.25, 4}};
  RngStream r1(21, 0, 0, kOracleStream), r2(21, 0, 0, kOracleStream);
  const auto x = rejection_oracle(m4, tiny, 20000, r1, 1);
  const auto y = rejection_oracle(m4, tiny, 20000, r2, 3);
  CHECK(x.particle == y.particle);
  CHECK(x.lower == y.lower);
  CHECK(x.upper == y.upper);
  for (int j = 0; j < x.size(); ++j)
    for (int k = 1; k < 3; ++k) CHECK(x.lower[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] >= 0.0);
  CHECK_THROWS_AS(rejection_oracle(m4, tiny, 0, r1), ConfigError);
}
