#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fidmix {

// One nonzero of a random-effect design row: observation t loads on `level`
// (0-based) with coefficient `coeff`.
struct LevelCoeff {
  int level = 0;
  double coeff = 1.0;
};

struct RandomEffect {
  int levels = 0;
  // rows[t] lists the nonzero v_{i,j,t}; membership designs have exactly one.
  std::vector<std::vector<LevelCoeff>> rows;
};

// Normal linear mixed model in structural form
//   Y_t = X_t beta + sum_i sigma_i sum_j v_{i,j,t} z_{i,j},
// with the last effect being the identity error design. Immutable.
class ModelSpec {
 public:
  ModelSpec(Eigen::MatrixXd x, std::vector<RandomEffect> effects, std::vector<std::string> names);

  int n() const { return static_cast<int>(x_.rows()); }
  int p() const { return static_cast<int>(x_.cols()); }
  int r() const { return static_cast<int>(effects_.size()); }
  int dim() const { return p() + r(); }

  const Eigen::MatrixXd& x() const { return x_; }
  const RandomEffect& effect(int i) const { return effects_.at(static_cast<std::size_t>(i)); }
  const std::vector<RandomEffect>& effects() const { return effects_; }
  const std::vector<std::string>& names() const { return names_; }

  // Observation index (0-based) at which a level first appears; n() if never.
  int first_seen(int effect, int level) const;
  // Levels of `effect` that first appear at observation t (0-based).
  const std::vector<int>& new_levels(int effect, int t) const;
  // Levels of `effect` seen among observations 0..t-1, in ascending order.
  std::vector<int> levels_seen(int effect, int t) const;

  // Parameter labels: beta names then "sigma_<effect>" style names are the
  // caller's business; names() holds p + r labels.
  const std::string& beta_name(int k) const { return names_.at(static_cast<std::size_t>(k)); }
  const std::string& effect_name(int i) const {
    return names_.at(static_cast<std::size_t>(p() + i));
  }

 private:
  Eigen::MatrixXd x_;
  std::vector<RandomEffect> effects_;
  std::vector<std::string> names_;
  std::vector<std::vector<int>> first_seen_;
  std::vector<std::vector<std::vector<int>>> new_levels_;
};

struct IntervalObservation {
  double a = 0.0;
  double b = 0.0;
  int row = 0;  // 1-based observation index
};

struct IntervalDataset {
  std::vector<IntervalObservation> observations;
  int n() const { return static_cast<int>(observations.size()); }
};

struct ParameterVector {
  std::vector<double> beta;
  std::vector<double> sigma;  // standard deviations
};

ModelSpec build_one_way(int a, const std::vector<int>& n_i);
ModelSpec build_two_fold_nested(int i_count, const std::vector<int>& j_i,
                                const std::vector<int>& k_ij);
// k_ij is row-major I x J.
ModelSpec build_two_factor_crossed(int i_count, int j_count, const std::vector<int>& k_ij);

// Maps each value to the grid cell (k h, (k+1) h] containing it.
IntervalDataset discretize(std::span<const double> values, double grid_width);

// Empty iff every ModelSpec invariant holds.
std::vector<std::string> validate(const ModelSpec& spec);
void validate_dataset(const IntervalDataset& data, int n);

// Sum over levels of v_{i,j,t} z_{i,j} for observation t.
double effect_load(const RandomEffect& effect, int t, std::span<const double> z);

}  // namespace fidmix
