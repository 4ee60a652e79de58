#include "fidmix/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "fidmix/error.hpp"
#include "fidmix/parallel.hpp"

namespace fidmix {

namespace {

constexpr double kWeightSumTol = 1e-10;
constexpr char kSigmaPrefix[] = "sigma_";

std::vector<std::string> coordinate_names(const ModelSpec& model) {
  std::vector<std::string> out;
  for (int k = 0; k < model.p(); ++k) out.push_back(model.beta_name(k));
  for (int i = 0; i < model.r(); ++i) out.push_back(kSigmaPrefix + model.effect_name(i));
  return out;
}

void normalize(std::vector<double>& w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0) || !std::isfinite(total))
    throw DegenerateSystem("sample weights do not sum to a positive finite value");
  for (double& v : w) v /= total;
}

void require_nonempty(const FiducialSample& fs, int k) {
  if (fs.size() == 0) throw EmptySupport("fiducial sample is empty");
  if (k < 0 || k >= fs.dim()) throw PreconditionError("parameter index " + std::to_string(k) + " out of range");
}

double midpoint(double lo, double hi) {
  if (std::isinf(lo) && std::isinf(hi)) return lo == hi ? lo : 0.0;
  if (std::isinf(lo)) return lo;
  if (std::isinf(hi)) return hi;
  return 0.5 * (lo + hi);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

void close_out(std::ofstream& out, const std::filesystem::path& path) {
  out.close();
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

const char* to_string(CiKind kind) {
  switch (kind) {
    case CiKind::two_sided: return "two-sided";
    case CiKind::lower: return "lower";
    case CiKind::upper: return "upper";
  }
  return "?";
}

CiKind parse_ci_kind(const std::string& s) {
  if (s == "two-sided" || s == "two_sided" || s == "two") return CiKind::two_sided;
  if (s == "lower") return CiKind::lower;
  if (s == "upper") return CiKind::upper;
  throw ConfigError("unknown interval kind '" + s + "' (expected two-sided, lower or upper)");
}

SelectionRule parse_selection_rule(const std::string& s) {
  if (s == "box") return SelectionRule::box;
  if (s == "midpoint") return SelectionRule::midpoint;
  throw ConfigError("unknown selection rule '" + s + "' (expected box or midpoint)");
}

FiducialSample sample_from_constraints(const ModelSpec& model,
                                       const std::vector<const ConstraintSet*>& sets,
                                       std::vector<double> weights, std::vector<int> ids,
                                       int threads) {
  if (sets.size() != weights.size()) throw PreconditionError("one weight per polyhedron required");
  if (sets.empty()) throw EmptySupport("no polyhedra to summarize");
  if (ids.empty()) {
    ids.resize(sets.size());
    std::iota(ids.begin(), ids.end(), 0);
  }
  if (ids.size() != sets.size()) throw PreconditionError("one id per polyhedron required");
  normalize(weights);

  FiducialSample fs;
  fs.params = coordinate_names(model);
  fs.p = model.p();
  fs.particle = std::move(ids);
  fs.weight = std::move(weights);
  const int q = model.dim();
  const int count = static_cast<int>(sets.size());
  fs.lower.assign(sets.size(), std::vector<double>(static_cast<std::size_t>(q)));
  fs.upper = fs.lower;
  parallel_for(count, resolve_threads(threads), [&](int j) {
    const auto ju = static_cast<std::size_t>(j);
    for (int k = 0; k < q; ++k) {
      Extremes e;
      try {
        e = projection_interval(*sets[ju], k);
      } catch (const PreconditionError&) {
        throw InternalError("particle " + std::to_string(fs.particle[ju]) +
                            " carries an empty polyhedron");
      }
      if (k >= model.p()) e.min = std::max(e.min, 0.0);
      fs.lower[ju][static_cast<std::size_t>(k)] = e.min;
      fs.upper[ju][static_cast<std::size_t>(k)] = std::max(e.min, e.max);
    }
  });
  return fs;
}

FiducialSample parameter_boxes(const ParticleSystem& system, int threads) {
  if (system.model == nullptr) throw PreconditionError("particle system has no model");
  if (system.t != system.model->n())
    throw PreconditionError("particle system has consumed " + std::to_string(system.t) + " of " +
                            std::to_string(system.model->n()) + " observations");
  std::vector<const ConstraintSet*> sets;
  std::vector<double> lw;
  std::vector<int> ids;
  for (std::size_t j = 0; j < system.particles.size(); ++j) {
    const auto& p = system.particles[j];
    if (!p.alive) continue;
    sets.push_back(&p.constraints);
    lw.push_back(p.log_weight);
    ids.push_back(static_cast<int>(j));
  }
  if (sets.empty()) throw EmptySupport("no alive particles");
  const double top = *std::max_element(lw.begin(), lw.end());
  for (double& v : lw) v = std::exp(v - top);
  return sample_from_constraints(*system.model, sets, std::move(lw), std::move(ids), threads);
}

double weighted_quantile(std::span<const double> values, std::span<const double> weights, double q) {
  if (values.empty()) throw EmptySupport("weighted quantile of an empty sample");
  if (values.size() != weights.size()) throw PreconditionError("one weight per value required");
  if (!(q > 0.0 && q < 1.0)) throw PreconditionError("quantile level must lie in (0, 1)");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(total - 1.0) > kWeightSumTol)
    throw PreconditionError("weights sum to " + format_real(total) + ", not 1");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double cum = 0.0;
  for (std::size_t i : order) {
    cum += weights[i];
    if (cum >= q - 1e-12) return values[i];
  }
  return values[order.back()];
}

ConfidenceInterval confidence_interval(const FiducialSample& fs, int k, double alpha, CiKind kind,
                                       SelectionRule rule) {
  require_nonempty(fs, k);
  if (!(alpha > 0.0 && alpha < 1.0)) throw PreconditionError("alpha must lie in (0, 1)");
  std::vector<double> lo, hi;
  lo.reserve(static_cast<std::size_t>(fs.size()));
  hi.reserve(static_cast<std::size_t>(fs.size()));
  const auto ku = static_cast<std::size_t>(k);
  for (int j = 0; j < fs.size(); ++j) {
    const double l = fs.lower[static_cast<std::size_t>(j)][ku];
    const double u = fs.upper[static_cast<std::size_t>(j)][ku];
    if (rule == SelectionRule::box) {
      lo.push_back(l);
      hi.push_back(u);
    } else {
      lo.push_back(midpoint(l, u));
      hi.push_back(lo.back());
    }
  }

  ConfidenceInterval ci;
  ci.param = fs.params[ku];
  ci.level = 1.0 - alpha;
  ci.kind = kind;
  const double floor = fs.is_sigma(k) ? 0.0 : -kInf;
  switch (kind) {
    case CiKind::two_sided:
      ci.lo = weighted_quantile(lo, fs.weight, alpha / 2.0);
      ci.hi = weighted_quantile(hi, fs.weight, 1.0 - alpha / 2.0);
      break;
    case CiKind::lower:
      ci.lo = floor;
      ci.hi = weighted_quantile(hi, fs.weight, 1.0 - alpha);
      break;
    case CiKind::upper:
      ci.lo = weighted_quantile(lo, fs.weight, alpha);
      ci.hi = kInf;
      break;
  }
  ci.lo = std::max(ci.lo, floor);
  ci.hi = std::max(ci.hi, ci.lo);
  return ci;
}

ConfidenceInterval variance_interval(const ConfidenceInterval& sigma_ci) {
  ConfidenceInterval out = sigma_ci;
  if (out.param.rfind(kSigmaPrefix, 0) == 0)
    out.param = "sigma2_" + out.param.substr(sizeof(kSigmaPrefix) - 1);
  out.lo = std::max(sigma_ci.lo, 0.0);
  out.lo *= out.lo;
  out.hi = sigma_ci.hi * sigma_ci.hi;
  return out;
}

std::string report_label(const FiducialSample& fs, int k) {
  const std::string& name = fs.params.at(static_cast<std::size_t>(k));
  if (!fs.is_sigma(k)) return name;
  return "sigma2_" + name.substr(sizeof(kSigmaPrefix) - 1);
}

std::vector<ConfidenceInterval> interval_report(const FiducialSample& fs, double alpha,
                                                const std::vector<CiKind>& kinds,
                                                SelectionRule rule) {
  std::vector<ConfidenceInterval> out;
  for (int k = 0; k < fs.dim(); ++k)
    for (CiKind kind : kinds) {
      ConfidenceInterval ci = confidence_interval(fs, k, alpha, kind, rule);
      if (fs.is_sigma(k)) ci = variance_interval(ci);
      ci.param = report_label(fs, k);
      out.push_back(std::move(ci));
    }
  return out;
}

double point_estimate(const FiducialSample& fs, int k) {
  require_nonempty(fs, k);
  const auto ku = static_cast<std::size_t>(k);
  double acc = 0.0;
  for (int j = 0; j < fs.size(); ++j) {
    const auto ju = static_cast<std::size_t>(j);
    const double l = fs.lower[ju][ku], u = fs.upper[ju][ku];
    if (!std::isfinite(l) || !std::isfinite(u))
      throw PreconditionError("point estimate of " + fs.params[ku] +
                              " is undefined: particle " + std::to_string(fs.particle[ju]) +
                              " has an unbounded box");
    acc += fs.weight[ju] * 0.5 * (l + u);
  }
  return acc;
}

std::vector<double> midpoints(const FiducialSample& fs, int k) {
  require_nonempty(fs, k);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(fs.size()));
  for (int j = 0; j < fs.size(); ++j)
    out.push_back(midpoint(fs.lower[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)],
                           fs.upper[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)]));
  return out;
}

double midpoint_ks_distance(const FiducialSample& a, const FiducialSample& b, int k) {
  struct Atom {
    double x;
    double wa;
    double wb;
  };
  std::vector<Atom> atoms;
  const auto ma = midpoints(a, k), mb = midpoints(b, k);
  for (std::size_t j = 0; j < ma.size(); ++j) atoms.push_back({ma[j], a.weight[j], 0.0});
  for (std::size_t j = 0; j < mb.size(); ++j) atoms.push_back({mb[j], 0.0, b.weight[j]});
  std::sort(atoms.begin(), atoms.end(), [](const Atom& l, const Atom& r) { return l.x < r.x; });
  double fa = 0.0, fb = 0.0, worst = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    fa += atoms[i].wa;
    fb += atoms[i].wb;
    if (i + 1 == atoms.size() || atoms[i + 1].x != atoms[i].x) worst = std::max(worst, std::abs(fa - fb));
  }
  return worst;
}

std::string format_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_real(const std::string& s) {
  if (s == "inf" || s == "+inf") return kInf;
  if (s == "-inf") return -kInf;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw InvalidData("not a number: '" + s + "'");
  }
  if (used != s.size()) throw InvalidData("not a number: '" + s + "'");
  return v;
}

void export_sample(const FiducialSample& fs, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "particle,weight,param,lower,upper\n";
  for (int j = 0; j < fs.size(); ++j) {
    const auto ju = static_cast<std::size_t>(j);
    for (int k = 0; k < fs.dim(); ++k) {
      const auto ku = static_cast<std::size_t>(k);
      out << fs.particle[ju] << ',' << format_real(fs.weight[ju]) << ',' << fs.params[ku] << ','
          << format_real(fs.lower[ju][ku]) << ',' << format_real(fs.upper[ju][ku]) << '\n';
    }
  }
  close_out(out, path);
}

FiducialSample import_sample(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "particle,weight,param,lower,upper")
    throw IoError(path.string() + ": missing sample header");

  FiducialSample fs;
  std::map<std::string, int> index;
  int line_no = 1;
  int last_particle = -1;
  std::size_t column = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() != 5) throw IoError(where + ": expected 5 fields");
    int id = 0;
    double w = 0, lo = 0, hi = 0;
    try {
      id = std::stoi(cells[0]);
      w = parse_real(cells[1]);
      lo = parse_real(cells[3]);
      hi = parse_real(cells[4]);
    } catch (const std::exception& e) {
      throw IoError(where + ": " + e.what());
    }
    const std::string& name = cells[2];
    if (fs.particle.empty() || id != last_particle) {
      if (!fs.particle.empty() && column != fs.params.size())
        throw IoError(where + ": particle " + std::to_string(last_particle) + " is incomplete");
      fs.particle.push_back(id);
      fs.weight.push_back(w);
      fs.lower.emplace_back();
      fs.upper.emplace_back();
      last_particle = id;
      column = 0;
    }
    if (fs.particle.size() == 1) {
      if (index.count(name)) throw IoError(where + ": duplicate parameter " + name);
      index[name] = static_cast<int>(fs.params.size());
      fs.params.push_back(name);
    } else if (column >= fs.params.size() || fs.params[column] != name) {
      throw IoError(where + ": unexpected parameter " + name);
    }
    fs.lower.back().push_back(lo);
    fs.upper.back().push_back(hi);
    ++column;
  }
  if (fs.particle.empty()) throw IoError(path.string() + ": no sample rows");
  if (column != fs.params.size())
    throw IoError(path.string() + ": last particle is incomplete");
  fs.p = static_cast<int>(std::count_if(fs.params.begin(), fs.params.end(), [](const std::string& n) {
    return n.rfind(kSigmaPrefix, 0) != 0;
  }));
  for (int k = 0; k < fs.p; ++k)
    if (fs.params[static_cast<std::size_t>(k)].rfind(kSigmaPrefix, 0) == 0)
      throw IoError(path.string() + ": fixed effects must precede scale parameters");
  return fs;
}

void write_interval_report(const std::vector<ConfidenceInterval>& cis,
                           const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "param,level,kind,lo,hi\n";
  for (const auto& ci : cis)
    out << ci.param << ',' << format_real(ci.level) << ',' << to_string(ci.kind) << ','
        << format_real(ci.lo) << ',' << format_real(ci.hi) << '\n';
  close_out(out, path);
}

}  // namespace fidmix
