#include "fidmix/smc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fidmix/cauchy.hpp"
#include "fidmix/error.hpp"
#include "fidmix/parallel.hpp"

namespace fidmix {

namespace {

std::vector<int> sigma_indices(const ModelSpec& model) {
  std::vector<int> idx(static_cast<std::size_t>(model.r()));
  std::iota(idx.begin(), idx.end(), model.p());
  return idx;
}

void kill(Particle& p) {
  p.alive = false;
  p.log_weight = -kInf;
}

std::vector<double> log_weights(const ParticleSystem& sys) {
  std::vector<double> lw;
  lw.reserve(sys.particles.size());
  for (const auto& p : sys.particles) lw.push_back(p.alive ? p.log_weight : -kInf);
  return lw;
}

}  // namespace

int ParticleSystem::alive_count() const {
  return static_cast<int>(
      std::count_if(particles.begin(), particles.end(), [](const Particle& p) { return p.alive; }));
}

ParticleSystem init_particles(const ModelSpec& model, int n_particles, std::uint64_t seed) {
  if (n_particles < 2) throw ConfigError("need at least 2 particles, got " + std::to_string(n_particles));
  ParticleSystem sys;
  sys.model = &model;
  sys.seed = seed;
  Particle proto;
  proto.z.resize(static_cast<std::size_t>(model.r()));
  for (int i = 0; i < model.r(); ++i)
    proto.z[static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(model.effect(i).levels), 0.0);
  proto.constraints = ConstraintSet(model.dim(), sigma_indices(model));
  proto.constraints.reserve(model.n());
  sys.particles.assign(static_cast<std::size_t>(n_particles), proto);
  return sys;
}

std::vector<double> constraint_row(const ModelSpec& model, const Particle& p, int t) {
  std::vector<double> row(static_cast<std::size_t>(model.dim()));
  for (int k = 0; k < model.p(); ++k) row[static_cast<std::size_t>(k)] = model.x()(t, k);
  for (int i = 0; i < model.r(); ++i)
    row[static_cast<std::size_t>(model.p() + i)] =
        effect_load(model.effect(i), t, p.z[static_cast<std::size_t>(i)]);
  return row;
}

ConstraintSet build_constraints(const ModelSpec& model, const IntervalDataset& data,
                                const Particle& p, int t) {
  ConstraintSet cs(model.dim(), sigma_indices(model));
  cs.reserve(model.n());
  for (int s = 0; s < t; ++s) {
    const auto& obs = data.observations[static_cast<std::size_t>(s)];
    cs.add_row(constraint_row(model, p, s), obs.a, obs.b);
  }
  return cs;
}

Extremes bounds_m_M(const ModelSpec& model, const ConstraintSet& q, const IntervalObservation& obs,
                    int t, std::span<const double> loads) {
  if (static_cast<int>(loads.size()) != model.r() - 1)
    throw PreconditionError("expected one load per non-error effect");
  // Numerator over (beta, sigma): constant - X_t beta - sum_{i<r-1} sigma_i load_i.
  std::vector<double> num(static_cast<std::size_t>(model.dim()), 0.0);
  for (int k = 0; k < model.p(); ++k) num[static_cast<std::size_t>(k)] = -model.x()(t, k);
  for (int i = 0; i + 1 < model.r(); ++i)
    num[static_cast<std::size_t>(model.p() + i)] = -loads[static_cast<std::size_t>(i)];
  return linear_fractional_bounds(q, num, obs.a, obs.b, model.dim() - 1);
}

PropagateRecord propagate(const ModelSpec& model, Particle& p, const IntervalObservation& obs,
                          int t, RngStream& rng) {
  if (!p.alive) throw PreconditionError("propagate on a dead particle");
  if (p.constraints.rows() != t)
    throw PreconditionError("particle has consumed " + std::to_string(p.constraints.rows()) +
                            " observations, not " + std::to_string(t));
  PropagateRecord rec;
  const int r = model.r();
  std::vector<double> loads;
  loads.reserve(static_cast<std::size_t>(r));
  for (int i = 0; i + 1 < r; ++i) {
    auto& zi = p.z[static_cast<std::size_t>(i)];
    for (int lv : model.new_levels(i, t)) zi[static_cast<std::size_t>(lv)] = rng.normal();
    loads.push_back(effect_load(model.effect(i), t, zi));
  }
  auto& err = p.z[static_cast<std::size_t>(r - 1)];

  Extremes b;
  try {
    b = bounds_m_M(model, p.constraints, obs, t, loads);
  } catch (const DegenerateDenominator&) {
    kill(p);
    return rec;
  }
  rec.m = b.min;
  rec.M = b.max;

  if (t < model.dim()) {
    // Normal draws; when Q_{t-1} already pins the error latent, condition the
    // draw on it and carry the conditioning probability as the weight.
    if (std::isinf(b.min) && std::isinf(b.max)) {
      rec.z = rng.normal();
    } else {
      const double mass = normal_interval_mass(b.min, b.max);
      if (!(mass > 0.0)) {
        kill(p);
        return rec;
      }
      rec.z = sample_truncated_normal(rng, b.min, b.max);
      rec.log_increment = std::log(mass);
    }
    err[static_cast<std::size_t>(t)] = rec.z;
    p.constraints.add_row(constraint_row(model, p, t), obs.a, obs.b);
    p.log_weight += rec.log_increment;
    return rec;
  }

  rec.cauchy_phase = true;
  if (!(b.min < b.max)) {
    kill(p);
    return rec;
  }
  rec.z = sample_truncated_cauchy(rng, b.min, b.max);
  rec.log_increment = log_weight_factor(rec.z, b.min, b.max);
  err[static_cast<std::size_t>(t)] = rec.z;
  p.constraints.add_row(constraint_row(model, p, t), obs.a, obs.b);
  p.log_weight += rec.log_increment;
  if (!std::isfinite(p.log_weight)) kill(p);
  return rec;
}

std::vector<double> normalized_weights(const ParticleSystem& sys) {
  const auto lw = log_weights(sys);
  const double top = lw.empty() ? -kInf : *std::max_element(lw.begin(), lw.end());
  if (!std::isfinite(top)) throw DegenerateSystem("no alive particle carries weight");
  std::vector<double> w(lw.size());
  double total = 0.0;
  for (std::size_t j = 0; j < lw.size(); ++j) {
    w[j] = std::isfinite(lw[j]) ? std::exp(lw[j] - top) : 0.0;
    total += w[j];
  }
  for (double& v : w) v /= total;
  return w;
}

double ess(const ParticleSystem& sys) {
  const auto w = normalized_weights(sys);
  double s2 = 0.0;
  for (double v : w) s2 += v * v;
  return 1.0 / s2;
}

std::vector<int> resample_multinomial(const ParticleSystem& sys, RngStream& rng) {
  const auto w = normalized_weights(sys);
  std::vector<double> cum(w.size());
  std::partial_sum(w.begin(), w.end(), cum.begin());
  // Last positive-weight index absorbs rounding in the final cumulative sum.
  int last = static_cast<int>(w.size()) - 1;
  while (last > 0 && w[static_cast<std::size_t>(last)] == 0.0) --last;
  std::vector<int> out(w.size());
  for (auto& a : out) {
    const double u = rng.uniform() * cum[static_cast<std::size_t>(last)];
    const auto it = std::upper_bound(cum.begin(), cum.begin() + last, u);
    a = static_cast<int>(it - cum.begin());
  }
  return out;
}

void apply_resample(ParticleSystem& sys, const std::vector<int>& ancestors) {
  if (ancestors.size() != sys.particles.size())
    throw PreconditionError("ancestor list must have one entry per particle");
  std::vector<Particle> next;
  next.reserve(ancestors.size());
  for (int a : ancestors) {
    const auto& src = sys.particles.at(static_cast<std::size_t>(a));
    if (!src.alive) throw InternalError("dead particle selected by resampling");
    next.push_back(src);
    next.back().log_weight = 0.0;
  }
  sys.particles = std::move(next);
}

AlterationPlan plan_alteration(const ModelSpec& model, const Particle& p, int effect, int t) {
  const int r = model.r();
  if (effect < 0 || effect >= r) throw PreconditionError("effect index out of range");
  if (t < 1 || t > model.n()) throw PreconditionError("alteration time out of range");
  AlterationPlan plan;
  plan.effect = effect;
  plan.t = t;
  plan.levels = model.levels_seen(effect, t);
  const int l = static_cast<int>(plan.levels.size());
  std::vector<int> column(static_cast<std::size_t>(model.effect(effect).levels), -1);
  for (int c = 0; c < l; ++c) column[static_cast<std::size_t>(plan.levels[static_cast<std::size_t>(c)])] = c;

  const int q = model.p() + r - 1;
  Eigen::MatrixXd xp(t, q);
  for (int s = 0; s < t; ++s) {
    for (int k = 0; k < model.p(); ++k) xp(s, k) = model.x()(s, k);
    int c = model.p();
    for (int i = 0; i < r; ++i) {
      if (i == effect) continue;
      xp(s, c++) = effect_load(model.effect(i), s, p.z[static_cast<std::size_t>(i)]);
    }
  }

  const auto& eff = model.effect(effect);
  bool membership = true;
  std::vector<int> col(static_cast<std::size_t>(t));
  std::vector<double> coeff(static_cast<std::size_t>(t));
  for (int s = 0; s < t && membership; ++s) {
    const auto& row = eff.rows[static_cast<std::size_t>(s)];
    membership = row.size() == 1 && row[0].coeff != 0.0;
    if (membership) {
      col[static_cast<std::size_t>(s)] = column[static_cast<std::size_t>(row[0].level)];
      coeff[static_cast<std::size_t>(s)] = row[0].coeff;
    }
  }
  NullBasis nb;
  if (membership) {
    nb = null_space_basis_membership(xp, col, coeff, l);
  } else {
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(t, l);
    for (int s = 0; s < t; ++s)
      for (const auto& lc : eff.rows[static_cast<std::size_t>(s)])
        if (lc.coeff != 0.0) v(s, column[static_cast<std::size_t>(lc.level)]) += lc.coeff;
    nb = null_space_basis_svd(xp, v);
  }
  plan.eta1 = std::move(nb.eta1);
  plan.eta2 = std::move(nb.eta2);

  Eigen::VectorXd z(l);
  for (int c = 0; c < l; ++c)
    z(c) = p.z[static_cast<std::size_t>(effect)][static_cast<std::size_t>(plan.levels[static_cast<std::size_t>(c)])];
  plan.zc = plan.eta2.transpose() * z;
  const Eigen::VectorXd resid = z - plan.eta2 * plan.zc;
  plan.zd = resid.norm();
  // With no residual degrees of freedom the residual is rounding noise.
  if (plan.dof() > 0 && plan.zd > 1e-13 * (1.0 + z.norm())) {
    plan.tau = resid / plan.zd;
  } else {
    plan.zd = 0.0;
  }
  return plan;
}

Eigen::VectorXd altered_latent(const AlterationPlan& plan, const Eigen::VectorXd& c_tilde,
                               double d_tilde) {
  if (c_tilde.size() != plan.d()) throw PreconditionError("C~ has the wrong length");
  Eigen::VectorXd z = plan.eta2 * c_tilde;
  if (d_tilde != 0.0) {
    if (plan.tau.size() != z.size())
      throw PreconditionError("radial component needs a residual direction");
    z += d_tilde * plan.tau;
  }
  return z;
}

std::vector<double> map_point(const ModelSpec& model, const AlterationPlan& plan,
                              std::span<const double> x, const Eigen::VectorXd& c_tilde,
                              double d_tilde) {
  if (static_cast<int>(x.size()) != model.dim()) throw PreconditionError("point has wrong length");
  const int e = plan.effect;
  const int q = model.p() + model.r() - 1;
  Eigen::VectorXd bp(q);
  int c = 0;
  for (int k = 0; k < model.p(); ++k) bp(c++) = x[static_cast<std::size_t>(k)];
  for (int i = 0; i < model.r(); ++i)
    if (i != e) bp(c++) = x[static_cast<std::size_t>(model.p() + i)];
  const double sigma = x[static_cast<std::size_t>(model.p() + e)];
  const double sigma_new = d_tilde > 0.0 ? sigma * plan.zd / d_tilde : sigma;
  if (plan.d() > 0) bp += plan.eta1 * (sigma * plan.zc - sigma_new * c_tilde);

  std::vector<double> out(x.size());
  c = 0;
  for (int k = 0; k < model.p(); ++k) out[static_cast<std::size_t>(k)] = bp(c++);
  for (int i = 0; i < model.r(); ++i)
    out[static_cast<std::size_t>(model.p() + i)] = i == e ? sigma_new : bp(c++);
  return out;
}

AlterationRecord alteration(const ModelSpec& model, const IntervalDataset& data, Particle& p,
                            int effect, int t, RngStream& rng) {
  if (!p.alive) throw PreconditionError("alteration on a dead particle");
  AlterationPlan plan = plan_alteration(model, p, effect, t);
  AlterationRecord rec;
  rec.effect = effect;
  rec.d = plan.d();
  rec.zd = plan.zd;
  rec.zc = plan.zc;
  if (plan.d() == 0) return rec;

  Eigen::VectorXd ct(plan.d());
  for (int k = 0; k < plan.d(); ++k) ct(k) = rng.normal();
  const double dt = std::sqrt(rng.chi_squared(plan.dof()));
  if (plan.dof() > 0 && plan.tau.size() == 0) {
    // Z_e lies in span(eta2): pick a fresh direction orthogonal to it.
    const auto l = plan.eta2.rows();
    Eigen::VectorXd g(l);
    for (Eigen::Index k = 0; k < l; ++k) g(k) = rng.normal();
    g -= plan.eta2 * (plan.eta2.transpose() * g);
    const double nrm = g.norm();
    if (nrm > 0.0) plan.tau = g / nrm;
  }
  rec.c_tilde = ct;
  rec.d_tilde = plan.tau.size() > 0 ? dt : 0.0;

  const Eigen::VectorXd zt = altered_latent(plan, ct, rec.d_tilde);
  Particle next = p;
  auto& ze = next.z[static_cast<std::size_t>(effect)];
  for (std::size_t c = 0; c < plan.levels.size(); ++c)
    ze[static_cast<std::size_t>(plan.levels[c])] = zt(static_cast<Eigen::Index>(c));
  next.constraints = build_constraints(model, data, next, t);

  // The move maps Q onto the new polyhedron unless it shifts another effect's
  // scale, which the sign constraints may then reject. Even an exact map can
  // leave a sliver below solver resolution, so the rebuilt set is always
  // checked.
  rec.moved = true;
  rec.accepted = feasible(next.constraints);
  if (rec.accepted) p = std::move(next);
  return rec;
}

ParticleSystem run(const ModelSpec& model, const IntervalDataset& data, const SmcConfig& cfg) {
  const auto issues = validate(model);
  if (!issues.empty()) throw InvalidDesign("invalid model: " + issues.front());
  validate_dataset(data, model.n());
  if (model.n() < model.dim())
    throw PreconditionError("need at least p + r = " + std::to_string(model.dim()) +
                            " observations, got " + std::to_string(model.n()));
  if (!(cfg.threshold_fraction >= 0.0 && cfg.threshold_fraction <= 1.0))
    throw ConfigError("resampling threshold fraction must lie in [0, 1]");

  ParticleSystem sys = init_particles(model, cfg.particles, cfg.seed);
  const int n_part = cfg.particles;
  const int threads = resolve_threads(cfg.threads);
  const double threshold = cfg.threshold_fraction * n_part;

  for (int t = 0; t < model.n(); ++t) {
    const auto& obs = data.observations[static_cast<std::size_t>(t)];
    parallel_for(n_part, threads, [&](int j) {
      Particle& p = sys.particles[static_cast<std::size_t>(j)];
      if (!p.alive) return;
      RngStream rng(cfg.seed, static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(t),
                    kPropagateStream);
      propagate(model, p, obs, t, rng);
    });
    sys.t = t + 1;

    const int alive = sys.alive_count();
    if (alive == 0)
      throw InferenceFailure("all particles died at observation " + std::to_string(t + 1) +
                                 "; widen the intervals or increase the particle count",
                             t + 1);
    if (t + 1 == model.dim()) {
      const double need = std::max(1.0, std::ceil(cfg.min_init_alive_fraction * n_part));
      if (alive < need)
        throw InferenceFailure("only " + std::to_string(alive) + " of " + std::to_string(n_part) +
                                   " particles survived initialization; widen the intervals or "
                                   "increase the particle count",
                               t + 1);
    }

    const double e = ess(sys);
    if (!(e < threshold)) continue;
    RngStream rs(cfg.seed, 0, static_cast<std::uint64_t>(t), kResampleStream);
    apply_resample(sys, resample_multinomial(sys, rs));
    ResampleEvent ev;
    ev.step = t + 1;
    ev.ess = e;
    if (cfg.alter) {
      std::vector<int> moved(static_cast<std::size_t>(n_part), 0), kept(static_cast<std::size_t>(n_part), 0);
      parallel_for(n_part, threads, [&](int j) {
        Particle& p = sys.particles[static_cast<std::size_t>(j)];
        RngStream rng(cfg.seed, static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(t),
                      kAlterationStream);
        for (int eff = 0; eff < model.r(); ++eff) {
          const auto rec = alteration(model, data, p, eff, t + 1, rng);
          moved[static_cast<std::size_t>(j)] += rec.moved;
          kept[static_cast<std::size_t>(j)] += rec.moved && rec.accepted;
        }
      });
      ev.alterations = std::accumulate(moved.begin(), moved.end(), 0);
      ev.accepted = std::accumulate(kept.begin(), kept.end(), 0);
    }
    sys.history.push_back(ev);
  }
  return sys;
}

}  // namespace fidmix
