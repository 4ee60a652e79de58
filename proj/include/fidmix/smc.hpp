#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fidmix/linalg.hpp"
#include "fidmix/model.hpp"
#include "fidmix/rng.hpp"

namespace fidmix {

// Stream purposes; every random draw in the engine is keyed by one of these.
enum StreamPurpose : std::uint64_t {
  kPropagateStream = 0,
  kResampleStream = 1,
  kAlterationStream = 2,
  kOracleStream = 3,
  kDataStream = 4,
};

struct SmcConfig {
  int particles = 1000;
  std::uint64_t seed = 1;
  // Resample when ESS < threshold_fraction * particles.
  double threshold_fraction = 0.5;
  int threads = 0;  // 0: FIDMIX_THREADS or hardware concurrency
  // The run aborts if fewer than this fraction survive the first p + r
  // observations.
  double min_init_alive_fraction = 0.5;
  bool alter = true;
};

struct Particle {
  // z[i][j]: latent normal of effect i, level j. Entries for levels not yet
  // observed are meaningless.
  std::vector<std::vector<double>> z;
  double log_weight = 0.0;
  bool alive = true;
  ConstraintSet constraints;  // Q_t over (beta, sigma); one row per observation
};

struct ResampleEvent {
  int step = 0;  // 1-based observation count at the event
  double ess = 0.0;
  int alterations = 0;
  int accepted = 0;
};

struct ParticleSystem {
  std::vector<Particle> particles;
  int t = 0;
  const ModelSpec* model = nullptr;
  std::uint64_t seed = 0;
  std::vector<ResampleEvent> history;

  int alive_count() const;
};

ParticleSystem init_particles(const ModelSpec& model, int n_particles, std::uint64_t seed);

// Q_t for the particle's current latent values, observations 0..t-1.
ConstraintSet build_constraints(const ModelSpec& model, const IntervalDataset& data,
                                const Particle& p, int t);

// Coefficient row of observation t (0-based) over (beta, sigma).
std::vector<double> constraint_row(const ModelSpec& model, const Particle& p, int t);

// Truncation bounds for the error latent of observation t given Q_{t-1}.
// loads[i] = sum_j v_{i,j,t} z_{i,j} for the non-error effects i < r - 1.
Extremes bounds_m_M(const ModelSpec& model, const ConstraintSet& q, const IntervalObservation& obs,
                    int t, std::span<const double> loads);

struct PropagateRecord {
  bool cauchy_phase = false;
  double m = -kInf;
  double M = kInf;
  double z = 0.0;  // the error latent drawn at this step
  double log_increment = 0.0;
};

// Consumes observation t (0-based, equal to the number already consumed).
// For t < p + r the error latent is normal, restricted to (m_t, M_t) when
// those are finite, with log weight increment log(Phi(M_t) - Phi(m_t)).
// Afterwards it is truncated Cauchy with the usual importance factor.
PropagateRecord propagate(const ModelSpec& model, Particle& p, const IntervalObservation& obs,
                          int t, RngStream& rng);

// Effective sample size of the alive particles' normalized weights.
double ess(const ParticleSystem& sys);
// Normalized weights over all particles (dead ones get 0).
std::vector<double> normalized_weights(const ParticleSystem& sys);

std::vector<int> resample_multinomial(const ParticleSystem& sys, RngStream& rng);
// Replaces the population by copies of the given ancestors with equal weights.
void apply_resample(ParticleSystem& sys, const std::vector<int>& ancestors);

// Decomposition of one effect's latent vector used by the alteration move.
struct AlterationPlan {
  int effect = 0;
  int t = 0;                 // observations covered
  std::vector<int> levels;   // levels of Z_e, ascending
  Eigen::MatrixXd eta1;      // rows: beta then sigma_i for i != effect
  Eigen::MatrixXd eta2;      // levels.size() x d
  Eigen::VectorXd zc;        // C = eta2' Z_e
  double zd = 0.0;           // D = |Z_e - eta2 C|
  Eigen::VectorXd tau;       // unit residual direction (empty when D = 0)
  int d() const { return static_cast<int>(eta2.cols()); }
  int dof() const { return static_cast<int>(levels.size()) - d(); }
};

AlterationPlan plan_alteration(const ModelSpec& model, const Particle& p, int effect, int t);

// eta2 C~ + D~ tau. Requires a nonempty tau whenever d_tilde != 0.
Eigen::VectorXd altered_latent(const AlterationPlan& plan, const Eigen::VectorXd& c_tilde,
                               double d_tilde);

// Image of a point of the old polyhedron under the move (C, D) -> (C~, D~).
std::vector<double> map_point(const ModelSpec& model, const AlterationPlan& plan,
                              std::span<const double> x, const Eigen::VectorXd& c_tilde,
                              double d_tilde);

struct AlterationRecord {
  int effect = 0;
  int d = 0;
  double zd = 0.0;
  double d_tilde = 0.0;
  Eigen::VectorXd zc;
  Eigen::VectorXd c_tilde;
  bool moved = false;     // Z_e changed
  bool accepted = false;  // proposal kept the polyhedron nonempty
};

// Proposes a redraw of (C, D) for one effect and keeps it when the rebuilt
// polyhedron is nonempty; otherwise the particle is left untouched.
AlterationRecord alteration(const ModelSpec& model, const IntervalDataset& data, Particle& p,
                            int effect, int t, RngStream& rng);

// Sequential sampler over all observations. Throws InferenceFailure naming the
// step when every particle dies.
ParticleSystem run(const ModelSpec& model, const IntervalDataset& data, const SmcConfig& cfg);

}  // namespace fidmix
