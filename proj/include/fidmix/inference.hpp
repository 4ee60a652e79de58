#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fidmix/linalg.hpp"
#include "fidmix/model.hpp"
#include "fidmix/smc.hpp"

namespace fidmix {

// Weighted parameter boxes, one per alive particle. Coordinates are
// (beta_1..beta_p, sigma_1..sigma_r); sigma boxes are on the standard
// deviation scale.
struct FiducialSample {
  std::vector<std::string> params;
  int p = 0;
  std::vector<int> particle;
  std::vector<double> weight;
  std::vector<std::vector<double>> lower;  // [J][k]
  std::vector<std::vector<double>> upper;

  int size() const { return static_cast<int>(weight.size()); }
  int dim() const { return static_cast<int>(params.size()); }
  bool is_sigma(int k) const { return k >= p; }
};

enum class CiKind { two_sided, lower, upper };
enum class SelectionRule { box, midpoint };

struct ConfidenceInterval {
  std::string param;
  double level = 0.95;
  CiKind kind = CiKind::two_sided;
  double lo = -kInf;
  double hi = kInf;
  double length() const { return hi - lo; }
  bool contains(double v) const { return lo <= v && v <= hi; }
};

const char* to_string(CiKind kind);
CiKind parse_ci_kind(const std::string& s);
SelectionRule parse_selection_rule(const std::string& s);

// Boxes of explicit polyhedra. `ids` may be empty, in which case particles are
// numbered 0..size-1. Weights are renormalized.
FiducialSample sample_from_constraints(const ModelSpec& model,
                                       const std::vector<const ConstraintSet*>& sets,
                                       std::vector<double> weights, std::vector<int> ids,
                                       int threads = 0);

FiducialSample parameter_boxes(const ParticleSystem& system, int threads = 0);

// Smallest value whose cumulative weight in sorted order reaches q.
double weighted_quantile(std::span<const double> values, std::span<const double> weights, double q);

// Interval for coordinate k on its natural scale (sigma, not sigma squared).
ConfidenceInterval confidence_interval(const FiducialSample& fs, int k, double alpha, CiKind kind,
                                       SelectionRule rule = SelectionRule::box);
// Squares the endpoints of a sigma interval and relabels it.
ConfidenceInterval variance_interval(const ConfidenceInterval& sigma_ci);

// Report label: the beta name for fixed effects, "sigma2_<effect>" otherwise.
std::string report_label(const FiducialSample& fs, int k);

// Every coordinate and every kind, variances on the squared scale.
std::vector<ConfidenceInterval> interval_report(const FiducialSample& fs, double alpha,
                                                const std::vector<CiKind>& kinds,
                                                SelectionRule rule = SelectionRule::box);

// Weighted mean of box midpoints.
double point_estimate(const FiducialSample& fs, int k);

std::vector<double> midpoints(const FiducialSample& fs, int k);
// Largest gap between the weighted CDFs of box midpoints of coordinate k.
double midpoint_ks_distance(const FiducialSample& a, const FiducialSample& b, int k);

void export_sample(const FiducialSample& fs, const std::filesystem::path& path);
// Coordinates named "sigma_*" are read as scales, the rest as fixed effects.
FiducialSample import_sample(const std::filesystem::path& path);
void write_interval_report(const std::vector<ConfidenceInterval>& cis,
                           const std::filesystem::path& path);

// %.17g, with inf and -inf spelled out.
std::string format_real(double v);
double parse_real(const std::string& s);

}  // namespace fidmix
