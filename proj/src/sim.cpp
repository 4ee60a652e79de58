#include "fidmix/sim.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>

#include <json.hpp>

#include "fidmix/error.hpp"
#include "fidmix/parallel.hpp"
#include "fidmix/smc.hpp"

namespace fidmix {

namespace {

DesignEntry nested(std::string id, std::vector<int> j_i, std::vector<int> k, int n, double phi1,
                   double phi2, double phi) {
  DesignEntry e;
  e.id = std::move(id);
  e.family = DesignFamily::nested;
  e.i_count = static_cast<int>(j_i.size());
  e.j_i = std::move(j_i);
  e.k = std::move(k);
  e.n = n;
  e.phi1 = phi1;
  e.phi2 = phi2;
  e.phi = phi;
  return e;
}

DesignEntry crossed(std::string id, int i_count, int j_count, std::vector<int> k, int n,
                    double phi) {
  DesignEntry e;
  e.id = std::move(id);
  e.family = DesignFamily::crossed;
  e.i_count = i_count;
  e.j_count = j_count;
  e.k = std::move(k);
  e.n = n;
  e.phi = phi;
  return e;
}

std::string design_ids() {
  std::string out;
  for (const auto& e : catalog()) out += (out.empty() ? "" : ", ") + e.id;
  return out + ", " + table2_design().id;
}

// A replicate covers when the truth lies in the closed interval.
struct Tally {
  int covered = 0;
  int finite = 0;
  double length = 0.0;
  int reps = 0;
};

}  // namespace

ModelSpec DesignEntry::build() const {
  if (family == DesignFamily::nested) return build_two_fold_nested(i_count, j_i, k);
  return build_two_factor_crossed(i_count, j_count, k);
}

const std::vector<DesignEntry>& catalog() {
  static const std::vector<DesignEntry> entries = {
      nested("MI-1", {2, 1, 1, 1, 1}, {4, 4, 2, 2, 2, 2}, 16, 0.9000, 0.8889, 0.8090),
      nested("MI-2", {4, 2, 1}, {1, 5, 5, 5, 1, 5, 1}, 23, 0.7778, 0.7337, 0.6076),
      nested("MI-3", {3, 3, 3}, std::vector<int>(9, 2), 18, 1.0, 1.0, 1.0),
      nested("MI-4", {1, 1, 1, 1, 1, 7}, std::vector<int>(12, 2), 24, 0.4444, 1.0, 0.4444),
      nested("MI-5", {2, 2, 2}, {1, 1, 1, 1, 1, 7}, 12, 1.0, 0.4444, 0.4444),
      crossed("MII-1", 4, 3, {2, 1, 3, 2, 1, 1, 2, 2, 2, 1, 2, 3}, 22, 0.8768),
      crossed("MII-2", 3, 3, {4, 1, 1, 4, 1, 1, 4, 1, 1}, 18, 0.6667),
      crossed("MII-3", 3, 3, {4, 4, 4, 1, 1, 1, 1, 1, 1}, 18, 0.6667),
      crossed("MII-4", 3, 4, {8, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1}, 19, 0.4011),
      crossed("MII-5", 5, 3, {1, 2, 2, 5, 2, 7, 2, 2, 2, 2, 4, 2, 3, 2, 2}, 40, 0.7619),
      crossed("MII-6", 3, 3, std::vector<int>(9, 2), 18, 1.0),
  };
  return entries;
}

const DesignEntry& table2_design() {
  // The published study used 15 dams with 2 or 3 sires each (37 sires). The
  // per-sire offspring counts are not available; a fixed 4,5,3,6,5,4 cycle
  // stands in for them.
  static const DesignEntry entry = [] {
    std::vector<int> j_i;
    for (int i = 0; i < 15; ++i) j_i.push_back(i % 2 == 0 ? 2 : 3);
    const int cycle[] = {4, 5, 3, 6, 5, 4};
    std::vector<int> k;
    for (int c = 0; c < 37; ++c) k.push_back(cycle[c % 6]);
    const int n = std::accumulate(k.begin(), k.end(), 0);
    DesignEntry e = nested("BP-T2", std::move(j_i), std::move(k), n, 0.0, 0.0, 0.0);
    e.phi = e.phi1 = e.phi2 = std::nan("");
    return e;
  }();
  return entry;
}

const DesignEntry& find_design(const std::string& id) {
  for (const auto& e : catalog())
    if (e.id == id) return e;
  if (id == table2_design().id) return table2_design();
  throw ConfigError("unknown design '" + id + "'; valid ids: " + design_ids());
}

ParameterVector ParameterSet::truth() const {
  ParameterVector v;
  v.beta = beta;
  for (double s2 : sigma2) v.sigma.push_back(std::sqrt(s2));
  return v;
}

const std::vector<ParameterSet>& parameter_sets() {
  using F = DesignFamily;
  static const std::vector<ParameterSet> sets = {
      {"PI-1", F::nested, {0.0}, {0.2, 0.1, 0.7}},
      {"PI-2", F::nested, {0.0}, {0.4, 0.3, 0.3}},
      {"PI-3", F::nested, {0.0}, {0.2, 0.7, 0.1}},
      {"PI-4", F::nested, {0.0}, {25.0, 4.0, 16.0}},
      {"PI-5", F::nested, {0.0}, {1.0, 1.0, 1.0}},
      {"PII-1", F::crossed, {0.0}, {0.1, 0.5, 0.1, 0.3}},
      {"PII-2", F::crossed, {0.0}, {0.1, 0.3, 0.1, 0.5}},
      {"PII-3", F::crossed, {0.0}, {0.1, 0.1, 0.3, 0.5}},
      {"PII-4", F::crossed, {0.0}, {0.1, 0.1, 0.5, 0.3}},
      {"PII-5", F::crossed, {0.0}, {1.0, 1.0, 1.0, 1.0}},
      {"T2", F::nested, {44.92}, {8.90, 2.65, 24.81}},
  };
  return sets;
}

const ParameterSet& find_parameter_set(const std::string& id) {
  std::string ids;
  for (const auto& s : parameter_sets()) {
    if (s.id == id) return s;
    ids += (ids.empty() ? "" : ", ") + s.id;
  }
  throw ConfigError("unknown parameter set '" + id + "'; valid ids: " + ids);
}

std::vector<double> generate_data(const ModelSpec& spec, const ParameterVector& truth, RngStream& s) {
  if (static_cast<int>(truth.beta.size()) != spec.p() ||
      static_cast<int>(truth.sigma.size()) != spec.r())
    throw ConfigError("truth has " + std::to_string(truth.beta.size()) + " fixed and " +
                      std::to_string(truth.sigma.size()) + " scale values; model needs " +
                      std::to_string(spec.p()) + " and " + std::to_string(spec.r()));
  std::vector<std::vector<double>> z(static_cast<std::size_t>(spec.r()));
  for (int i = 0; i < spec.r(); ++i)
    for (int j = 0; j < spec.effect(i).levels; ++j) z[static_cast<std::size_t>(i)].push_back(s.normal());
  std::vector<double> y(static_cast<std::size_t>(spec.n()));
  for (int t = 0; t < spec.n(); ++t) {
    double v = 0.0;
    for (int k = 0; k < spec.p(); ++k) v += spec.x()(t, k) * truth.beta[static_cast<std::size_t>(k)];
    for (int i = 0; i < spec.r(); ++i)
      v += truth.sigma[static_cast<std::size_t>(i)] *
           effect_load(spec.effect(i), t, z[static_cast<std::size_t>(i)]);
    y[static_cast<std::size_t>(t)] = v;
  }
  return y;
}

double default_width(const ParameterVector& truth) {
  double total = 0.0;
  for (double s : truth.sigma) total += s * s;
  if (!(total > 0.0)) throw ConfigError("default grid width needs a positive total variance");
  return 0.01 * std::sqrt(total);
}

StudyConfig parse_study_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("study config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("study config must be a JSON object");
  StudyConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "design") cfg.design = value.get<std::string>();
      else if (key == "params") cfg.params = value.get<std::string>();
      else if (key == "reps") cfg.reps = value.get<int>();
      else if (key == "particles") cfg.particles = value.get<int>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "alpha") cfg.alpha = value.get<double>();
      else if (key == "width") cfg.width = value.get<double>();
      else if (key == "threshold") cfg.threshold = value.get<double>();
      else if (key == "threads") cfg.threads = value.get<int>();
      else if (key == "rule") cfg.rule = parse_selection_rule(value.get<std::string>());
      else if (key == "kinds") {
        cfg.kinds.clear();
        for (const auto& k : value) cfg.kinds.push_back(parse_ci_kind(k.get<std::string>()));
      } else {
        throw ConfigError("unknown study config field '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("study config field has the wrong type: ") + e.what());
  }
  return cfg;
}

std::string study_config_json(const StudyConfig& cfg) {
  nlohmann::ordered_json j;
  j["design"] = cfg.design;
  j["params"] = cfg.params;
  j["reps"] = cfg.reps;
  j["particles"] = cfg.particles;
  j["seed"] = cfg.seed;
  j["alpha"] = cfg.alpha;
  j["width"] = cfg.width;
  j["threshold"] = cfg.threshold;
  j["threads"] = cfg.threads;
  j["rule"] = cfg.rule == SelectionRule::box ? "box" : "midpoint";
  j["kinds"] = nlohmann::json::array();
  for (CiKind k : cfg.kinds) j["kinds"].push_back(to_string(k));
  return j.dump(2);
}

StudyReport run_study(const ModelSpec& spec, const ParameterVector& truth, const StudyConfig& cfg) {
  if (cfg.reps < 1) throw ConfigError("reps must be at least 1");
  if (cfg.particles < 2) throw ConfigError("particles must be at least 2");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (cfg.width < 0.0 || !std::isfinite(cfg.width)) throw ConfigError("grid width must be positive");
  if (cfg.kinds.empty()) throw ConfigError("at least one interval kind is required");
  const auto issues = validate(spec);
  if (!issues.empty()) throw InvalidDesign("invalid model: " + issues.front());
  const double h = cfg.width > 0.0 ? cfg.width : default_width(truth);
  if (static_cast<int>(truth.beta.size()) != spec.p() ||
      static_cast<int>(truth.sigma.size()) != spec.r())
    throw ConfigError("parameter set does not match the design's " + std::to_string(spec.p()) +
                      " fixed effects and " + std::to_string(spec.r()) + " variance components");

  std::vector<std::optional<std::vector<ConfidenceInterval>>> results(
      static_cast<std::size_t>(cfg.reps));
  parallel_for(cfg.reps, resolve_threads(cfg.threads), [&](int rep) {
    const auto r = static_cast<std::uint64_t>(rep);
    RngStream data_rng(cfg.seed, r, 0, kDataStream);
    const auto y = generate_data(spec, truth, data_rng);
    const IntervalDataset data = discretize(y, h);
    SmcConfig sc;
    sc.particles = cfg.particles;
    sc.seed = derive_seed(cfg.seed, r, 1);
    sc.threshold_fraction = cfg.threshold;
    sc.threads = 1;
    try {
      const ParticleSystem sys = run(spec, data, sc);
      const FiducialSample fs = parameter_boxes(sys, 1);
      results[static_cast<std::size_t>(rep)] = interval_report(fs, cfg.alpha, cfg.kinds, cfg.rule);
    } catch (const InferenceFailure&) {
    } catch (const SolverFailure&) {
    }
  });

  StudyReport report;
  report.design = cfg.design;
  report.paramset = cfg.params;
  report.width = h;
  report.reps = cfg.reps;
  std::vector<double> target;
  for (double b : truth.beta) target.push_back(b);
  for (double s : truth.sigma) target.push_back(s * s);

  const std::size_t cells = target.size() * cfg.kinds.size();
  std::vector<Tally> tally(cells);
  std::vector<ConfidenceInterval> labels;
  for (const auto& res : results) {
    if (!res) {
      ++report.failures;
      continue;
    }
    if (labels.empty()) labels = *res;
    for (std::size_t c = 0; c < cells; ++c) {
      const auto& ci = (*res)[c];
      auto& t = tally[c];
      ++t.reps;
      t.covered += ci.contains(target[c / cfg.kinds.size()]);
      if (std::isfinite(ci.length())) {
        ++t.finite;
        t.length += ci.length();
      }
    }
  }
  if (labels.empty()) {
    report.warnings.push_back("every replicate failed");
    return report;
  }
  for (std::size_t c = 0; c < cells; ++c) {
    StudyRow row;
    row.param = labels[c].param;
    row.kind = labels[c].kind;
    row.level = labels[c].level;
    row.reps = tally[c].reps;
    row.failures = report.failures;
    row.coverage = static_cast<double>(tally[c].covered) / tally[c].reps;
    row.avg_length = tally[c].finite > 0 ? tally[c].length / tally[c].finite : std::nan("");
    report.rows.push_back(row);
  }
  if (report.failures * 10 > cfg.reps)
    report.warnings.push_back(std::to_string(report.failures) + " of " + std::to_string(cfg.reps) +
                              " replicates failed (more than 10%)");
  return report;
}

StudyReport run_study(const StudyConfig& cfg) {
  const DesignEntry& design = find_design(cfg.design);
  const ParameterSet& params = find_parameter_set(cfg.params);
  if (params.family != design.family)
    throw ConfigError("parameter set " + params.id + " does not fit design " + design.id);
  return run_study(design.build(), params.truth(), cfg);
}

void write_study_report(const StudyReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "design,paramset,param,kind,level,coverage,avg_length,reps,failures\n";
  for (const auto& row : report.rows)
    out << report.design << ',' << report.paramset << ',' << row.param << ',' << to_string(row.kind)
        << ',' << format_real(row.level) << ',' << format_real(row.coverage) << ','
        << format_real(row.avg_length) << ',' << row.reps << ',' << row.failures << '\n';
  out.close();
  if (!out) throw IoError("write failed for " + path.string());
}

FiducialSample rejection_oracle(const ModelSpec& spec, const IntervalDataset& data, long long draws,
                                RngStream& s, int threads, OracleStats* stats) {
  if (draws < 1) throw ConfigError("oracle needs at least one draw");
  const auto issues = validate(spec);
  if (!issues.empty()) throw InvalidDesign("invalid model: " + issues.front());
  validate_dataset(data, spec.n());
  const std::uint64_t base = s();

  constexpr long long kBlock = 4096;
  const long long blocks = (draws + kBlock - 1) / kBlock;
  struct Block {
    std::vector<long long> ids;
    std::vector<std::vector<double>> lo, hi;
  };
  std::vector<Block> out(static_cast<std::size_t>(blocks));
  const int q = spec.dim();

  parallel_for(static_cast<int>(blocks), resolve_threads(threads), [&](int b) {
    Block& blk = out[static_cast<std::size_t>(b)];
    Particle part;
    part.z.resize(static_cast<std::size_t>(spec.r()));
    const long long end = std::min(draws, (b + 1) * kBlock);
    for (long long d = b * kBlock; d < end; ++d) {
      RngStream rng(base, static_cast<std::uint64_t>(d), 0, kOracleStream);
      for (int i = 0; i < spec.r(); ++i) {
        auto& zi = part.z[static_cast<std::size_t>(i)];
        zi.resize(static_cast<std::size_t>(spec.effect(i).levels));
        for (double& v : zi) v = rng.normal();
      }
      const ConstraintSet cs = build_constraints(spec, data, part, spec.n());
      if (!feasible(cs)) continue;
      std::vector<double> lo(static_cast<std::size_t>(q)), hi(static_cast<std::size_t>(q));
      for (int k = 0; k < q; ++k) {
        const Extremes e = projection_interval(cs, k);
        lo[static_cast<std::size_t>(k)] = k >= spec.p() ? std::max(e.min, 0.0) : e.min;
        hi[static_cast<std::size_t>(k)] = std::max(lo[static_cast<std::size_t>(k)], e.max);
      }
      blk.ids.push_back(d);
      blk.lo.push_back(std::move(lo));
      blk.hi.push_back(std::move(hi));
    }
  });

  FiducialSample fs;
  for (int k = 0; k < spec.p(); ++k) fs.params.push_back(spec.beta_name(k));
  for (int i = 0; i < spec.r(); ++i) fs.params.push_back("sigma_" + spec.effect_name(i));
  fs.p = spec.p();
  for (auto& blk : out) {
    for (std::size_t j = 0; j < blk.ids.size(); ++j) {
      fs.particle.push_back(static_cast<int>(blk.ids[j]));
      fs.lower.push_back(std::move(blk.lo[j]));
      fs.upper.push_back(std::move(blk.hi[j]));
    }
  }
  const auto accepted = static_cast<long long>(fs.particle.size());
  if (stats) *stats = {draws, accepted};
  if (accepted == 0)
    throw OracleFailure("rejection oracle accepted none of " + std::to_string(draws) +
                            " draws; widen the intervals or use more draws",
                        0.0);
  fs.weight.assign(static_cast<std::size_t>(accepted), 1.0 / static_cast<double>(accepted));
  return fs;
}

}  // namespace fidmix
