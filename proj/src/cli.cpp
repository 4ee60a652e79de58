#include "fidmix/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fidmix/error.hpp"
#include "fidmix/inference.hpp"
#include "fidmix/io.hpp"
#include "fidmix/parallel.hpp"
#include "fidmix/sim.hpp"
#include "fidmix/smc.hpp"

namespace fidmix {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using ojson = nlohmann::ordered_json;

std::string join(const std::vector<std::string>& parts, const char* sep = ",") {
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : sep) + p;
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::vector<std::string> parts;
  for (int x : v) parts.push_back(std::to_string(x));
  return join(parts);
}

std::vector<CiKind> parse_kinds(const std::string& s) {
  std::vector<CiKind> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_ci_kind(item));
  if (out.empty()) throw ConfigError("at least one interval kind is required");
  return out;
}

std::string kinds_string(const std::vector<CiKind>& kinds) {
  std::vector<std::string> parts;
  for (CiKind k : kinds) parts.emplace_back(to_string(k));
  return join(parts);
}

std::string real_arg(double v) { return format_real(v); }

// Console text; files keep full precision.
std::string brief(double v) {
  if (!std::isfinite(v)) return format_real(v);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void prepare_out(const std::string& dir) {
  if (dir.empty()) throw ConfigError("--out is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

struct Manifest {
  std::string command;
  ojson config;
  std::vector<std::string> args;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  Clock::time_point start = Clock::now();

  void write(const std::string& dir) {
    const fs::path path = fs::path(dir) / "manifest.json";
    outputs.push_back(path.string());
    ojson j;
    j["command"] = command;
    j["config"] = config;
    j["args"] = args;
    j["seed"] = seed;
    j["version"] = kVersion;
    j["duration_seconds"] = std::chrono::duration<double>(Clock::now() - start).count();
    j["outputs"] = outputs;
    write_text(path, j.dump(2) + "\n");
  }
};

// --params value: a parameter-set id, a CSV file `param,value`, or an inline
// comma-separated list (fixed effects, then variances).
ParameterVector resolve_params(const std::string& spec, const ModelSpec& model,
                               const DesignEntry* design) {
  for (const auto& s : parameter_sets())
    if (s.id == spec) {
      if (design && s.family != design->family)
        throw ConfigError("parameter set " + s.id + " does not fit design " + design->id);
      return s.truth();
    }
  std::vector<double> values;
  if (fs::exists(spec)) {
    std::stringstream in(read_text(spec));
    std::string line;
    std::getline(in, line);
    if (line != "param,value") throw ConfigError(spec + ": expected header 'param,value'");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw ConfigError(spec + ": malformed row '" + line + "'");
      values.push_back(parse_real(line.substr(comma + 1)));
    }
  } else {
    std::stringstream ss(spec);
    std::string item;
    try {
      while (std::getline(ss, item, ',')) values.push_back(parse_real(item));
    } catch (const InvalidData&) {
      std::vector<std::string> ids;
      for (const auto& s : parameter_sets()) ids.push_back(s.id);
      throw ConfigError("unknown parameter set '" + spec + "'; valid ids: " + join(ids, ", "));
    }
  }
  if (static_cast<int>(values.size()) != model.dim())
    throw ConfigError("expected " + std::to_string(model.p()) + " fixed-effect values and " +
                      std::to_string(model.r()) + " variances, got " + std::to_string(values.size()));
  ParameterVector truth;
  for (int k = 0; k < model.p(); ++k) truth.beta.push_back(values[static_cast<std::size_t>(k)]);
  for (int i = 0; i < model.r(); ++i) {
    const double v = values[static_cast<std::size_t>(model.p() + i)];
    if (!(v >= 0.0)) throw ConfigError("variances must be nonnegative");
    truth.sigma.push_back(std::sqrt(v));
  }
  return truth;
}

struct FitOptions {
  std::string model, data, out, rule = "box", kinds = "two-sided,lower,upper";
  int particles = 1000;
  std::uint64_t seed = 1;
  double alpha = 0.05, threshold = 0.5;
  int threads = 0;
};

int cmd_fit(const FitOptions& o, std::ostream& out) {
  Manifest mf;
  mf.command = "fit";
  const ModelSpec model = load_model(o.model);
  const IntervalDataset data = load_data(o.data);
  if (o.particles < 2) throw ConfigError("--particles must be at least 2");
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw ConfigError("--alpha must lie in (0, 1)");
  const auto kinds = parse_kinds(o.kinds);
  const SelectionRule rule = parse_selection_rule(o.rule);
  prepare_out(o.out);

  SmcConfig cfg;
  cfg.particles = o.particles;
  cfg.seed = o.seed;
  cfg.threshold_fraction = o.threshold;
  cfg.threads = o.threads;
  const ParticleSystem sys = run(model, data, cfg);
  const FiducialSample sample = parameter_boxes(sys, o.threads);
  const auto cis = interval_report(sample, o.alpha, kinds, rule);

  const fs::path sample_path = fs::path(o.out) / "sample.csv";
  const fs::path ci_path = fs::path(o.out) / "intervals.csv";
  export_sample(sample, sample_path);
  write_interval_report(cis, ci_path);

  out << "alive particles: " << sys.alive_count() << " of " << o.particles
      << ", resampling events: " << sys.history.size() << "\n";
  for (int k = 0; k < sample.dim(); ++k) {
    out << sample.params[static_cast<std::size_t>(k)] << " estimate: ";
    try {
      out << brief(point_estimate(sample, k)) << "\n";
    } catch (const PreconditionError&) {
      out << "undefined (unbounded boxes)\n";
    }
  }
  for (const auto& ci : cis)
    out << ci.param << " " << to_string(ci.kind) << " " << brief(ci.level) << ": ["
        << brief(ci.lo) << ", " << brief(ci.hi) << "]\n";

  mf.seed = o.seed;
  mf.config = {{"model", o.model},         {"data", o.data},     {"particles", o.particles},
               {"seed", o.seed},           {"alpha", o.alpha},   {"threshold", o.threshold},
               {"rule", o.rule},           {"kinds", kinds_string(kinds)},
               {"threads", o.threads},     {"threads_resolved", resolve_threads(o.threads)},
               {"out", o.out}};
  mf.args = {"fit",          "--model",     o.model,           "--data",   o.data,
             "--particles",  std::to_string(o.particles),      "--seed",   std::to_string(o.seed),
             "--alpha",      real_arg(o.alpha),                "--threshold", real_arg(o.threshold),
             "--rule",       o.rule,        "--kinds",         kinds_string(kinds),
             "--threads",    std::to_string(o.threads),        "--out",    o.out};
  mf.outputs = {sample_path.string(), ci_path.string()};
  mf.write(o.out);
  return kExitOk;
}

struct SimulateOptions {
  std::string design, model, params, out, config, rule = "box", kinds = "two-sided,lower,upper";
  int reps = 300, particles = 1000, threads = 0;
  std::uint64_t seed = 1;
  double alpha = 0.05, width = 0.0, threshold = 0.5;
};

int cmd_simulate(SimulateOptions o, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  Manifest mf;
  mf.command = "simulate";
  if (!o.config.empty()) {
    // Explicit flags win over the document.
    const StudyConfig doc = parse_study_config(read_text(o.config));
    auto unset = [&](const char* flag) { return sub.count(flag) == 0; };
    if (unset("--design") && unset("--model")) o.design = doc.design;
    if (unset("--params")) o.params = doc.params;
    if (unset("--reps")) o.reps = doc.reps;
    if (unset("--particles")) o.particles = doc.particles;
    if (unset("--seed")) o.seed = doc.seed;
    if (unset("--alpha")) o.alpha = doc.alpha;
    if (unset("--width")) o.width = doc.width;
    if (unset("--threshold")) o.threshold = doc.threshold;
    if (unset("--threads")) o.threads = doc.threads;
    if (unset("--rule")) o.rule = doc.rule == SelectionRule::box ? "box" : "midpoint";
    if (unset("--kinds")) o.kinds = kinds_string(doc.kinds);
  }
  if (o.design.empty() == o.model.empty()) throw ConfigError("give exactly one of --design and --model");
  if (o.params.empty()) throw ConfigError("--params is required");

  const DesignEntry* design = o.design.empty() ? nullptr : &find_design(o.design);
  const ModelSpec model = design ? design->build() : load_model(o.model);
  const ParameterVector truth = resolve_params(o.params, model, design);

  StudyConfig cfg;
  cfg.design = design ? design->id : fs::path(o.model).stem().string();
  cfg.params = o.params;
  cfg.reps = o.reps;
  cfg.particles = o.particles;
  cfg.seed = o.seed;
  cfg.alpha = o.alpha;
  cfg.width = o.width;
  cfg.kinds = parse_kinds(o.kinds);
  cfg.threshold = o.threshold;
  cfg.rule = parse_selection_rule(o.rule);
  cfg.threads = o.threads;
  if (cfg.reps < 1) throw ConfigError("--reps must be at least 1");
  prepare_out(o.out);

  const StudyReport report = run_study(model, truth, cfg);
  const fs::path report_path = fs::path(o.out) / "report.csv";
  write_study_report(report, report_path);
  for (const auto& w : report.warnings) err << "warning: " << w << "\n";
  out << "design " << report.design << ", parameters " << report.paramset << ", width "
      << brief(report.width) << ", failures " << report.failures << " of " << report.reps << "\n";
  for (const auto& row : report.rows)
    out << row.param << " " << to_string(row.kind) << ": coverage " << brief(row.coverage)
        << ", average length " << brief(row.avg_length) << "\n";

  mf.seed = o.seed;
  mf.config = ojson::parse(study_config_json(cfg));
  mf.config["design_source"] = design ? "catalog" : o.model;
  mf.config["width_resolved"] = report.width;
  mf.config["threads_resolved"] = resolve_threads(o.threads);
  mf.config["out"] = o.out;
  mf.args = {"simulate"};
  if (design) {
    mf.args.insert(mf.args.end(), {"--design", design->id});
  } else {
    mf.args.insert(mf.args.end(), {"--model", o.model});
  }
  mf.args.insert(mf.args.end(),
                 {"--params", o.params, "--reps", std::to_string(o.reps), "--particles",
                  std::to_string(o.particles), "--seed", std::to_string(o.seed), "--alpha",
                  real_arg(o.alpha), "--width", real_arg(o.width), "--threshold",
                  real_arg(o.threshold), "--rule", o.rule, "--kinds", kinds_string(cfg.kinds),
                  "--threads", std::to_string(o.threads), "--out", o.out});
  mf.outputs = {report_path.string()};
  mf.write(o.out);
  return kExitOk;
}

void describe(const DesignEntry& e, std::ostream& out, bool detail) {
  out << e.id << " n=" << e.n << " phi=" << std::fixed << std::setprecision(4) << e.phi
      << std::defaultfloat;
  if (detail) {
    out << " I=" << e.i_count;
    if (e.family == DesignFamily::nested) {
      out << " J_i=" << join_ints(e.j_i) << " phi1=" << std::fixed << std::setprecision(4) << e.phi1
          << " phi2=" << e.phi2 << std::defaultfloat;
    } else {
      out << " J=" << e.j_count;
    }
    out << " K=" << join_ints(e.k);
  }
  out << "\n";
}

struct OracleOptions {
  std::string model, data, out, compare;
  long long draws = 1000000;
  std::uint64_t seed = 1;
  int threads = 0;
};

int cmd_oracle(const OracleOptions& o, std::ostream& out, std::ostream& err) {
  Manifest mf;
  mf.command = "oracle";
  if (o.draws < 1) throw ConfigError("--draws must be at least 1");
  const ModelSpec model = load_model(o.model);
  const IntervalDataset data = load_data(o.data);
  prepare_out(o.out);
  RngStream rng(o.seed, 0, 0, kOracleStream);
  OracleStats stats;
  FiducialSample sample;
  try {
    sample = rejection_oracle(model, data, o.draws, rng, o.threads, &stats);
  } catch (const OracleFailure& e) {
    err << "oracle failure: " << e.what() << " (acceptance rate " << brief(e.acceptance_rate())
        << ")\n";
    return kExitOracle;
  }
  const fs::path sample_path = fs::path(o.out) / "oracle_sample.csv";
  export_sample(sample, sample_path);
  mf.outputs = {sample_path.string()};
  out << "accepted " << stats.accepted << " of " << stats.draws << " draws (rate "
      << brief(stats.rate()) << ")\n";

  if (!o.compare.empty()) {
    const FiducialSample other = import_sample(o.compare);
    if (other.params != sample.params) throw ConfigError(o.compare + ": parameters do not match the model");
    std::ostringstream csv;
    csv << "param,ks_distance\n";
    for (int k = 0; k < sample.dim(); ++k) {
      const double d = midpoint_ks_distance(sample, other, k);
      csv << sample.params[static_cast<std::size_t>(k)] << ',' << format_real(d) << '\n';
      out << sample.params[static_cast<std::size_t>(k)] << " ks distance " << brief(d) << "\n";
    }
    const fs::path ks_path = fs::path(o.out) / "ks.csv";
    write_text(ks_path, csv.str());
    mf.outputs.push_back(ks_path.string());
  }
  mf.seed = o.seed;
  mf.config = {{"model", o.model},     {"data", o.data},       {"draws", o.draws},
               {"seed", o.seed},       {"compare", o.compare}, {"threads", o.threads},
               {"threads_resolved", resolve_threads(o.threads)}, {"out", o.out}};
  mf.args = {"oracle", "--model", o.model, "--data", o.data, "--draws", std::to_string(o.draws),
             "--seed", std::to_string(o.seed), "--threads", std::to_string(o.threads), "--out", o.out};
  if (!o.compare.empty()) mf.args.insert(mf.args.end(), {"--compare", o.compare});
  mf.write(o.out);
  return kExitOk;
}

struct GenerateOptions {
  std::string design, model, params, out;
  std::uint64_t seed = 1;
  double width = 0.0;
};

int cmd_generate(const GenerateOptions& o, std::ostream& out) {
  Manifest mf;
  mf.command = "generate";
  if (o.design.empty() == o.model.empty()) throw ConfigError("give exactly one of --design and --model");
  const DesignEntry* design = o.design.empty() ? nullptr : &find_design(o.design);
  const ModelSpec model = design ? design->build() : load_model(o.model);
  const ParameterVector truth = resolve_params(o.params, model, design);
  if (o.width < 0.0) throw ConfigError("--width must be positive");
  const double h = o.width > 0.0 ? o.width : default_width(truth);
  prepare_out(o.out);
  RngStream rng(o.seed, 0, 0, kDataStream);
  const IntervalDataset data = discretize(generate_data(model, truth, rng), h);
  const fs::path data_path = fs::path(o.out) / "data.csv";
  save_data(data, data_path);
  const fs::path model_path = fs::path(o.out) / "model.json";
  write_text(model_path, model_json(model));
  out << "wrote " << data.n() << " intervals of width " << brief(h) << "\n";

  mf.seed = o.seed;
  mf.config = {{"design", o.design}, {"model", o.model}, {"params", o.params},
               {"seed", o.seed},     {"width", o.width}, {"width_resolved", h}, {"out", o.out}};
  mf.args = {"generate"};
  if (design) {
    mf.args.insert(mf.args.end(), {"--design", design->id});
  } else {
    mf.args.insert(mf.args.end(), {"--model", o.model});
  }
  mf.args.insert(mf.args.end(), {"--params", o.params, "--seed", std::to_string(o.seed), "--width",
                                 real_arg(o.width), "--out", o.out});
  mf.outputs = {data_path.string(), model_path.string()};
  mf.write(o.out);
  return kExitOk;
}

int cmd_replay(const std::string& manifest, const std::string& out_dir, std::ostream& out,
               std::ostream& err) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(manifest));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(manifest + ": not a manifest: " + e.what());
  }
  if (!j.contains("args") || !j["args"].is_array()) throw ConfigError(manifest + ": manifest has no args");
  auto args = j["args"].get<std::vector<std::string>>();
  if (!args.empty() && args.front() == "replay") throw ConfigError("refusing to replay a replay");
  if (!out_dir.empty())
    for (std::size_t i = 0; i + 1 < args.size(); ++i)
      if (args[i] == "--out") args[i + 1] = out_dir;
  return run_cli(args, out, err);
}

std::string usage_of(const CLI::App& app) {
  for (const auto* sub : app.get_subcommands()) return sub->help();
  return app.help();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Generalized fiducial inference for normal linear mixed models with interval data", "fidmix"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fiducial sample and intervals for one data set");
  fit_cmd->add_option("--model", fit.model, "Model JSON")->required();
  fit_cmd->add_option("--data", fit.data, "Interval data CSV (lower,upper)")->required();
  fit_cmd->add_option("--particles", fit.particles, "Particle count")->capture_default_str();
  fit_cmd->add_option("--seed", fit.seed, "Random seed")->capture_default_str();
  fit_cmd->add_option("--alpha", fit.alpha, "One minus the confidence level")->capture_default_str();
  fit_cmd->add_option("--threshold", fit.threshold, "Resample when ESS < threshold * N")->capture_default_str();
  fit_cmd->add_option("--rule", fit.rule, "Selection rule: box or midpoint")->capture_default_str();
  fit_cmd->add_option("--kinds", fit.kinds, "Interval kinds, comma separated")->capture_default_str();
  fit_cmd->add_option("--threads", fit.threads, "Worker threads (0: FIDMIX_THREADS or all cores)");
  fit_cmd->add_option("--out", fit.out, "Output directory")->required();

  SimulateOptions sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Coverage study over simulated replicates");
  sim_cmd->add_option("--design", sim.design, "Catalog design id");
  sim_cmd->add_option("--model", sim.model, "Model JSON instead of a catalog design");
  sim_cmd->add_option("--params", sim.params, "Parameter set id, param,value CSV, or inline list");
  sim_cmd->add_option("--reps", sim.reps, "Replicates")->capture_default_str();
  sim_cmd->add_option("--particles", sim.particles, "Particles per replicate")->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  sim_cmd->add_option("--alpha", sim.alpha, "One minus the confidence level")->capture_default_str();
  sim_cmd->add_option("--width", sim.width, "Grid width (0: 1% of the true total sd)")->capture_default_str();
  sim_cmd->add_option("--threshold", sim.threshold, "Resample when ESS < threshold * N")->capture_default_str();
  sim_cmd->add_option("--rule", sim.rule, "Selection rule: box or midpoint")->capture_default_str();
  sim_cmd->add_option("--kinds", sim.kinds, "Interval kinds, comma separated")->capture_default_str();
  sim_cmd->add_option("--threads", sim.threads, "Worker threads");
  sim_cmd->add_option("--config", sim.config, "Study config JSON; flags override it");
  sim_cmd->add_option("--out", sim.out, "Output directory")->required();

  std::string design_id;
  auto* designs_cmd = app.add_subcommand("designs", "List the design catalog");
  designs_cmd->add_option("--id", design_id, "Show one design in detail");

  OracleOptions orc;
  auto* oracle_cmd = app.add_subcommand("oracle", "Rejection sampler for small models");
  oracle_cmd->add_option("--model", orc.model, "Model JSON")->required();
  oracle_cmd->add_option("--data", orc.data, "Interval data CSV")->required();
  oracle_cmd->add_option("--draws", orc.draws, "Latent draws")->capture_default_str();
  oracle_cmd->add_option("--seed", orc.seed, "Random seed")->capture_default_str();
  oracle_cmd->add_option("--compare", orc.compare, "Sample CSV to compare against");
  oracle_cmd->add_option("--threads", orc.threads, "Worker threads");
  oracle_cmd->add_option("--out", orc.out, "Output directory")->required();

  GenerateOptions gen;
  auto* gen_cmd = app.add_subcommand("generate", "Simulate one interval data set");
  gen_cmd->add_option("--design", gen.design, "Catalog design id");
  gen_cmd->add_option("--model", gen.model, "Model JSON instead of a catalog design");
  gen_cmd->add_option("--params", gen.params, "Parameter set id, param,value CSV, or inline list")->required();
  gen_cmd->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  gen_cmd->add_option("--width", gen.width, "Grid width (0: 1% of the true total sd)")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  std::string manifest, replay_out;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay_cmd->add_option("--manifest", manifest, "manifest.json")->required();
  replay_cmd->add_option("--out", replay_out, "Override the output directory");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << usage_of(app);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << usage_of(app);
    return kExitConfig;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(fit, out);
    if (sim_cmd->parsed()) return cmd_simulate(sim, *sim_cmd, out, err);
    if (designs_cmd->parsed()) {
      if (!design_id.empty()) {
        describe(find_design(design_id), out, true);
      } else {
        for (const auto& e : catalog()) describe(e, out, false);
      }
      return kExitOk;
    }
    if (oracle_cmd->parsed()) return cmd_oracle(orc, out, err);
    if (gen_cmd->parsed()) return cmd_generate(gen, out);
    if (replay_cmd->parsed()) return cmd_replay(manifest, replay_out, out, err);
  } catch (const InferenceFailure& e) {
    err << "inference failure at observation " << e.step() << ": " << e.what() << "\n";
    return kExitInference;
  } catch (const OracleFailure& e) {
    err << "oracle failure: " << e.what() << "\n";
    return kExitOracle;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidDesign& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidData& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const PreconditionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
  return kExitConfig;
}

}  // namespace fidmix
