// End-to-end acceptance checks. Run with criterion numbers (1-7) to select a
// subset; with no arguments every criterion runs. One line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fidmix/cauchy.hpp"
#include "fidmix/cli.hpp"
#include "fidmix/error.hpp"
#include "fidmix/inference.hpp"
#include "fidmix/io.hpp"
#include "fidmix/linalg.hpp"
#include "fidmix/sim.hpp"
#include "fidmix/smc.hpp"
#include "support/oracles.hpp"

using namespace fidmix;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Weighted box midpoints of coordinate k, computed here rather than through
// the library so the comparison does not share code with the sampler.
std::vector<std::pair<double, double>> midpoint_atoms(const FiducialSample& s, int k) {
  std::vector<std::pair<double, double>> out;
  const auto ku = static_cast<std::size_t>(k);
  for (std::size_t j = 0; j < s.size(); ++j)
    out.emplace_back(0.5 * (s.lower[j][ku] + s.upper[j][ku]), s.weight[j]);
  return out;
}

// Tiny one-way model: rejection sampling against the particle filter.
Verdict oracle_equivalence() {
  constexpr double kMaxKs = 0.05;
  constexpr long long kDraws = 1'000'000;
  constexpr int kParticles = 5000;
  const auto model = build_one_way(2, {2, 2});
  const ParameterVector truth{{0.0}, {1.0, 1.0}};
  RngStream data_rng(2024, 0, 0, kDataStream);
  const auto y = generate_data(model, truth, data_rng);
  const auto data = discretize(y, 0.5);

  RngStream oracle_rng(7, 0, 0, kOracleStream);
  OracleStats stats;
  const auto ref = rejection_oracle(model, data, kDraws, oracle_rng, 0, &stats);
  SmcConfig cfg;
  cfg.particles = kParticles;
  cfg.seed = 11;
  const auto fs = parameter_boxes(run(model, data, cfg));

  double worst = 0.0;
  std::string parts;
  for (int k = 0; k < model.dim(); ++k) {
    const double d = oracle::ks_distance(midpoint_atoms(ref, k), midpoint_atoms(fs, k));
    worst = std::max(worst, d);
    parts += " " + fs.params[static_cast<std::size_t>(k)] + "=" + fmt("%.4f", d);
  }
  return {worst <= kMaxKs, "KS" + parts + " (limit 0.05; oracle acceptance " + fmt("%.3f", stats.rate()) + ")"};
}

const StudyRow* find_row(const StudyReport& r, const std::string& param) {
  for (const auto& row : r.rows)
    if (row.param == param && row.kind == CiKind::two_sided) return &row;
  return nullptr;
}

// Balanced design, two-sided variance-component coverage.
Verdict balanced_coverage() {
  constexpr double kLow = 0.92, kHigh = 1.0;
  StudyConfig cfg;
  cfg.design = "MI-3";
  cfg.params = "PI-5";
  cfg.reps = 300;
  cfg.particles = 1000;
  cfg.seed = 1;
  cfg.kinds = {CiKind::two_sided};
  const auto report = run_study(cfg);
  bool ok = true;
  std::string parts;
  for (const char* p : {"sigma2_alpha", "sigma2_beta", "sigma2_error"}) {
    const auto* row = find_row(report, p);
    if (!row) return {false, std::string("missing row ") + p};
    ok = ok && row->coverage >= kLow && row->coverage <= kHigh;
    parts += std::string(" ") + p + "=" + fmt("%.3f", row->coverage);
  }
  return {ok, "coverage" + parts + " (band [0.92, 1]; " + std::to_string(report.reps) +
                  " replicates, " + std::to_string(report.failures) + " failed)"};
}

// Nested layout with the published truth: coverage and length bands.
Verdict nested_table() {
  struct Target {
    const char* param;
    double coverage;
    double length;
  };
  constexpr double kCoverageTol = 0.03, kLengthTol = 0.20;
  const Target targets[] = {{"sigma2_alpha", 0.947, 24.5}, {"sigma2_beta", 0.974, 10.7}};
  StudyConfig cfg;
  cfg.design = "BP-T2";
  cfg.params = "T2";
  cfg.reps = 200;
  cfg.particles = 1000;
  cfg.seed = 1;
  cfg.kinds = {CiKind::two_sided};
  const auto report = run_study(cfg);
  bool ok = true;
  std::string parts;
  for (const auto& t : targets) {
    const auto* row = find_row(report, t.param);
    if (!row) return {false, std::string("missing row ") + t.param};
    const bool cov = std::abs(row->coverage - t.coverage) <= kCoverageTol;
    const bool len = std::abs(row->avg_length - t.length) <= kLengthTol * t.length;
    ok = ok && cov && len;
    parts += std::string(" ") + t.param + ": coverage " + fmt("%.3f", row->coverage) + " vs " +
             fmt("%.3f", t.coverage) + (cov ? "" : " (out)") + ", length " + fmt("%.2f", row->avg_length) +
             " vs " + fmt("%.1f", t.length) + (len ? ";" : " (out);");
  }
  return {ok, parts.substr(1) + " " + std::to_string(report.reps) + " replicates, " +
                  std::to_string(report.failures) + " failed"};
}

// Randomized alteration calls over every catalog design.
Verdict alteration_invariants() {
  constexpr int kCalls = 10'000;
  const auto& designs = catalog();
  const int per_design = (kCalls + static_cast<int>(designs.size()) - 1) / static_cast<int>(designs.size());
  long calls = 0, moved = 0, infeasible = 0, map_checked = 0, map_bad = 0, sign_bad = 0;
  double worst_violation = 0.0;
  for (std::size_t di = 0; di < designs.size(); ++di) {
    const auto model = designs[di].build();
    ParameterVector truth;
    truth.beta.assign(static_cast<std::size_t>(model.p()), 1.0);
    truth.sigma.assign(static_cast<std::size_t>(model.r()), 1.0);
    RngStream drng(31, di, 0, kDataStream);
    const auto data = discretize(generate_data(model, truth, drng), 0.1);
    SmcConfig cfg;
    cfg.particles = 40;
    cfg.seed = 100 + di;
    cfg.threads = 1;
    const auto sys = run(model, data, cfg);
    int done = 0;
    for (std::uint64_t round = 0; done < per_design; ++round) {
      for (std::size_t j = 0; j < sys.particles.size() && done < per_design; ++j) {
        const Particle& p = sys.particles[j];
        if (!p.alive) continue;
        const auto x = oracle::chebyshev_centre(p.constraints);
        for (int e = 0; e < model.r() && done < per_design; ++e) {
          ++done;
          ++calls;
          RngStream rng(derive_seed(500 + di, round), j, static_cast<std::uint64_t>(e), kAlterationStream);
          Particle copy = p;
          const auto rec = alteration(model, data, copy, e, model.n(), rng);
          if (!feasible(copy.constraints)) ++infeasible;
          if (!rec.moved || x.empty()) continue;
          ++moved;
          auto plan = plan_alteration(model, p, e, model.n());
          if (plan.tau.size() == 0 && rec.d_tilde != 0.0) continue;  // fresh direction, not replayable
          Particle prop = p;
          const auto zt = altered_latent(plan, rec.c_tilde, rec.d_tilde);
          for (std::size_t c = 0; c < plan.levels.size(); ++c)
            prop.z[static_cast<std::size_t>(e)][static_cast<std::size_t>(plan.levels[c])] =
                zt(static_cast<Eigen::Index>(c));
          prop.constraints = build_constraints(model, data, prop, model.n());
          const auto y = map_point(model, plan, x, rec.c_tilde, rec.d_tilde);
          const double v = oracle::interval_violation(prop.constraints, y);
          ++map_checked;
          worst_violation = std::max(worst_violation, v);
          if (v > kFeasTol) ++map_bad;
          if (y[static_cast<std::size_t>(model.p() + e)] < 0.0) ++sign_bad;
        }
      }
    }
  }
  const bool ok = calls >= kCalls && infeasible == 0 && map_bad == 0 && sign_bad == 0 && map_checked > 0;
  return {ok, std::to_string(calls) + " calls over " + std::to_string(designs.size()) + " designs, " +
                  std::to_string(moved) + " moves, " + std::to_string(infeasible) +
                  " infeasible rebuilt sets; mapped points " + std::to_string(map_checked) + ", worst row violation " +
                  fmt("%.2e", worst_violation) + " (limit 1e-9), " + std::to_string(sign_bad) +
                  " negative scales"};
}

// Distributional checks on the truncated Cauchy and the alteration draws.
Verdict sampler_laws() {
  constexpr double kLevel = 0.01;
  constexpr int kDraws = 100'000;
  bool ok = true;
  std::string parts;
  std::uint64_t stream = 0;
  for (auto [m, big_m] : {std::pair{0.0, kInf}, {-2.0, 1.0}}) {
    RngStream rng(5, stream++, 0, kPropagateStream);
    std::vector<double> xs(kDraws);
    for (double& x : xs) x = sample_truncated_cauchy(rng, m, big_m);
    const double d = oracle::ks_statistic(xs, [&](double x) { return oracle::truncated_cauchy_cdf(x, m, big_m); });
    const double pv = oracle::ks_pvalue(d, kDraws);
    ok = ok && pv > kLevel;
    parts += " cauchy(" + fmt("%g", m) + "," + fmt("%g", big_m) + ") p=" + fmt("%.3f", pv) + ";";
  }

  const auto model = build_two_fold_nested(2, {2, 1}, {2, 2, 2});
  RngStream drng(9, 0, 0, kDataStream);
  const auto data = discretize(generate_data(model, {{0.0}, {1.0, 1.0, 1.0}}, drng), 1.0);
  SmcConfig cfg;
  cfg.particles = 20;
  cfg.seed = 9;
  cfg.threads = 1;
  const auto sys = run(model, data, cfg);
  const Particle* base = nullptr;
  for (const auto& p : sys.particles)
    if (p.alive) {
      base = &p;
      break;
    }
  if (!base) return {false, "no surviving particle for the alteration draws"};
  for (int e = 0; e < model.r(); ++e) {
    const auto plan = plan_alteration(model, *base, e, model.n());
    if (plan.d() == 0) continue;
    std::vector<double> cs, ds;
    for (int k = 0; k < kDraws; ++k) {
      Particle p = *base;
      RngStream rng(123, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(e), kAlterationStream);
      const auto rec = alteration(model, data, p, e, model.n(), rng);
      cs.push_back(rec.c_tilde(k % rec.d));
      ds.push_back(rec.d_tilde * rec.d_tilde);
    }
    const double pc = oracle::ks_pvalue(oracle::ks_statistic(cs, oracle::normal_cdf), kDraws);
    ok = ok && pc > kLevel;
    parts += " effect " + std::to_string(e) + ": C p=" + fmt("%.3f", pc);
    if (plan.dof() > 0) {
      const double dof = plan.dof();
      const double pd = oracle::ks_pvalue(
          oracle::ks_statistic(ds, [&](double x) { return oracle::chi_squared_cdf(x, dof); }), kDraws);
      ok = ok && pd > kLevel;
      parts += ", D^2 p=" + fmt("%.3f", pd) + " (dof " + std::to_string(plan.dof()) + ")";
    }
    parts += ";";
  }
  parts.pop_back();
  return {ok, parts.substr(1) + " (level 0.01)"};
}

int numeric_rank(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  int k = 0;
  while (k < s.size() && s(k) > 1e-10 * std::max(1.0, s(0))) ++k;
  return k;
}

// Linear and linear-fractional programs against vertex enumeration, plus the
// null-space identities.
Verdict lp_kernel() {
  constexpr int kInstances = 500;
  constexpr double kRel = 1e-4, kNullTol = 1e-10;
  std::mt19937_64 gen(606);
  std::normal_distribution<double> nd;
  int solved = 0, bad = 0;
  double worst = 0.0;
  auto rel = [](double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); };
  while (solved < kInstances) {
    const int dim = 2 + solved % 2;
    const int den = dim - 1;
    auto cs = oracle::random_polytope(gen, dim, 1 + solved % 3, {den}, den, 0.3);
    if (!feasible(cs)) continue;
    const auto vs = oracle::vertices(cs);
    if (vs.empty()) continue;
    std::vector<double> num(static_cast<std::size_t>(dim));
    for (double& v : num) v = nd(gen);
    const double c0 = nd(gen);
    double rlo = kInf, rhi = -kInf;
    for (const auto& v : vs) {
      double f = c0;
      for (int i = 0; i < dim; ++i) f += num[static_cast<std::size_t>(i)] * v(i);
      f /= v(den);
      rlo = std::min(rlo, f);
      rhi = std::max(rhi, f);
    }
    const auto e = linear_fractional_extremes(cs, num, c0, den);
    double err = std::max(rel(e.min, rlo), rel(e.max, rhi));
    for (int k = 0; k < dim; ++k) {
      double lo = kInf, hi = -kInf;
      for (const auto& v : vs) {
        lo = std::min(lo, v(k));
        hi = std::max(hi, v(k));
      }
      const auto p = projection_interval(cs, k);
      err = std::max({err, rel(p.min, lo), rel(p.max, hi)});
    }
    worst = std::max(worst, err);
    bad += err > kRel;
    ++solved;
  }

  int pairs = 0, null_bad = 0;
  double null_worst = 0.0;
  for (int k = 0; k < kInstances; ++k) {
    const int t = 1 + k % 9, q = 1 + k % 3, l = 1 + (k / 3) % t;
    Eigen::MatrixXd xp(t, q), v = Eigen::MatrixXd::Zero(t, l);
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < q; ++j) xp(i, j) = nd(gen);
    if (k % 2) {
      for (int i = 0; i < t; ++i) v(i, i % l) = 1.0;
    } else {
      for (int i = 0; i < t; ++i)
        for (int j = 0; j < l; ++j) v(i, j) = nd(gen);
    }
    const auto nb = null_space_basis(xp, v);
    Eigen::MatrixXd a(t, q + l);
    a << -xp, v;
    Eigen::MatrixXd eta(q + l, nb.d());
    eta << nb.eta1, nb.eta2;
    double res = 0.0;
    if (nb.d() > 0) {
      res = std::max((a * eta).cwiseAbs().maxCoeff(),
                     (nb.eta2.transpose() * nb.eta2 - Eigen::MatrixXd::Identity(nb.d(), nb.d())).cwiseAbs().maxCoeff());
    }
    // The basis must span the part of null(A) not confined to beta.
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    const Eigen::MatrixXd kernel = lu.kernel();
    const int expected = lu.dimensionOfKernel() == 0 ? 0 : numeric_rank(kernel.bottomRows(l));
    const bool ranks = numeric_rank(eta) == nb.d() && numeric_rank(nb.eta2) == nb.d() && nb.d() == expected;
    null_worst = std::max(null_worst, res);
    null_bad += res > kNullTol || !ranks;
    ++pairs;
  }
  return {bad == 0 && null_bad == 0,
          std::to_string(solved) + " programs, worst relative gap " + fmt("%.1e", worst) + " (limit 1e-4), " +
              std::to_string(bad) + " off; " + std::to_string(pairs) + " null-space pairs, worst residual " +
              fmt("%.1e", null_worst) + " (limit 1e-10), " + std::to_string(null_bad) + " off"};
}

// Command-line outputs are byte-identical across runs and thread counts.
Verdict cli_determinism() {
  const fs::path dir = fs::temp_directory_path() / "fidmix_acceptance_cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string max_threads = std::to_string(std::max(4u, std::thread::hardware_concurrency()));
  std::ostringstream sink;
  auto call = [&](std::vector<std::string> args) { return run_cli(args, sink, sink); };

  if (call({"generate", "--design", "MI-2", "--params", "PI-1", "--seed", "3", "--out", (dir / "in").string()}) !=
      kExitOk)
    return {false, "generate failed: " + sink.str()};
  auto fit = [&](const std::string& out, const std::string& threads) {
    return call({"fit", "--model", (dir / "in" / "model.json").string(), "--data", (dir / "in" / "data.csv").string(),
                 "--particles", "500", "--seed", "42", "--threads", threads, "--out", (dir / out).string()});
  };
  auto simulate = [&](const std::string& out, const std::string& threads) {
    return call({"simulate", "--design", "MII-1", "--params", "PII-2", "--reps", "6", "--particles", "200",
                 "--seed", "8", "--threads", threads, "--out", (dir / out).string()});
  };
  if (fit("f1", "1") || fit("f2", "1") || fit("f3", max_threads)) return {false, "fit failed: " + sink.str()};
  if (simulate("s1", "1") || simulate("s2", "1") || simulate("s3", max_threads))
    return {false, "simulate failed: " + sink.str()};

  int compared = 0, differing = 0;
  auto same = [&](const std::string& a, const std::string& b, const char* file) {
    ++compared;
    differing += read_text(dir / a / file) != read_text(dir / b / file);
  };
  for (const char* f : {"sample.csv", "intervals.csv"}) {
    same("f1", "f2", f);
    same("f1", "f3", f);
  }
  same("s1", "s2", "report.csv");
  same("s1", "s3", "report.csv");
  fs::remove_all(dir);
  return {differing == 0, std::to_string(compared) + " file pairs compared (threads 1 vs " + max_threads + "), " +
                              std::to_string(differing) + " differ"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "oracle equivalence", oracle_equivalence},
      {2, "balanced coverage", balanced_coverage},
      {3, "nested two-stage table", nested_table},
      {4, "alteration invariants", alteration_invariants},
      {5, "sampler laws", sampler_laws},
      {6, "LP/LFP kernel", lp_kernel},
      {7, "CLI determinism", cli_determinism},
  };
  std::vector<int> pick;
  for (int i = 1; i < argc; ++i) {
    const int id = std::atoi(argv[i]);
    if (id < 1 || id > static_cast<int>(all.size())) {
      std::fprintf(stderr, "usage: %s [criterion 1-7 ...]\n", argv[0]);
      return 2;
    }
    pick.push_back(id);
  }
  if (pick.empty())
    for (const auto& c : all) pick.push_back(c.id);

  int failed = 0;
  for (int id : pick) {
    const auto& c = all[static_cast<std::size_t>(id - 1)];
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d (%s): %s - %s [%.1fs]\n", c.id, c.name, v.pass ? "PASS" : "FAIL", v.detail.c_str(),
                secs);
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
