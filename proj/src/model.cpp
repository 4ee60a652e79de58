#include "fidmix/model.hpp"

#include <cmath>
#include <numeric>

#include "fidmix/error.hpp"

namespace fidmix {

ModelSpec::ModelSpec(Eigen::MatrixXd x, std::vector<RandomEffect> effects,
                     std::vector<std::string> names)
    : x_(std::move(x)), effects_(std::move(effects)), names_(std::move(names)) {
  const int nobs = n();
  if (effects_.empty()) throw InvalidDesign("model needs at least the error effect");
  for (std::size_t i = 0; i < effects_.size(); ++i) {
    const auto& e = effects_[i];
    if (static_cast<int>(e.rows.size()) != nobs)
      throw InvalidDesign("effect " + std::to_string(i + 1) + " has " +
                          std::to_string(e.rows.size()) + " rows, expected " +
                          std::to_string(nobs));
    for (const auto& row : e.rows)
      for (const auto& lc : row)
        if (lc.level < 0 || lc.level >= e.levels)
          throw InvalidDesign("effect " + std::to_string(i + 1) + " references level " +
                              std::to_string(lc.level + 1) + " of " + std::to_string(e.levels));
  }
  if (names_.size() != static_cast<std::size_t>(dim())) {
    names_.clear();
    for (int k = 0; k < p(); ++k) names_.push_back("beta" + std::to_string(k + 1));
    for (int i = 0; i < r(); ++i) names_.push_back("effect" + std::to_string(i + 1));
  }
  first_seen_.resize(effects_.size());
  new_levels_.resize(effects_.size());
  for (std::size_t i = 0; i < effects_.size(); ++i) {
    const auto& e = effects_[i];
    first_seen_[i].assign(static_cast<std::size_t>(e.levels), nobs);
    new_levels_[i].resize(static_cast<std::size_t>(nobs));
    for (int t = 0; t < nobs; ++t) {
      for (const auto& lc : e.rows[static_cast<std::size_t>(t)]) {
        if (lc.coeff == 0.0) continue;
        auto& fs = first_seen_[i][static_cast<std::size_t>(lc.level)];
        if (fs == nobs) {
          fs = t;
          new_levels_[i][static_cast<std::size_t>(t)].push_back(lc.level);
        }
      }
    }
  }
}

int ModelSpec::first_seen(int effect, int level) const {
  return first_seen_.at(static_cast<std::size_t>(effect)).at(static_cast<std::size_t>(level));
}

const std::vector<int>& ModelSpec::new_levels(int effect, int t) const {
  return new_levels_.at(static_cast<std::size_t>(effect)).at(static_cast<std::size_t>(t));
}

std::vector<int> ModelSpec::levels_seen(int effect, int t) const {
  std::vector<int> out;
  const auto& fs = first_seen_.at(static_cast<std::size_t>(effect));
  for (std::size_t j = 0; j < fs.size(); ++j)
    if (fs[j] < t) out.push_back(static_cast<int>(j));
  return out;
}

namespace {

RandomEffect membership(int levels, const std::vector<int>& level_of_obs) {
  RandomEffect e;
  e.levels = levels;
  e.rows.reserve(level_of_obs.size());
  for (int lv : level_of_obs) e.rows.push_back({LevelCoeff{lv, 1.0}});
  return e;
}

RandomEffect identity_effect(int n) {
  std::vector<int> lv(static_cast<std::size_t>(n));
  std::iota(lv.begin(), lv.end(), 0);
  return membership(n, lv);
}

void require_positive(const std::vector<int>& counts, const char* what) {
  for (int c : counts)
    if (c < 1) throw InvalidDesign(std::string(what) + " must all be >= 1");
}

}  // namespace

ModelSpec build_one_way(int a, const std::vector<int>& n_i) {
  if (a < 1) throw InvalidDesign("one-way design needs a >= 1 levels");
  if (static_cast<int>(n_i.size()) != a)
    throw InvalidDesign("one-way design: expected " + std::to_string(a) + " level counts");
  require_positive(n_i, "one-way level counts");
  std::vector<int> alpha;
  for (int i = 0; i < a; ++i)
    for (int k = 0; k < n_i[static_cast<std::size_t>(i)]; ++k) alpha.push_back(i);
  const int n = static_cast<int>(alpha.size());
  return ModelSpec(Eigen::MatrixXd::Ones(n, 1), {membership(a, alpha), identity_effect(n)},
                   {"mu", "alpha", "error"});
}

ModelSpec build_two_fold_nested(int i_count, const std::vector<int>& j_i,
                                const std::vector<int>& k_ij) {
  if (i_count < 1) throw InvalidDesign("nested design needs I >= 1");
  if (static_cast<int>(j_i.size()) != i_count)
    throw InvalidDesign("nested design: |J_i| = " + std::to_string(j_i.size()) +
                        " but I = " + std::to_string(i_count));
  require_positive(j_i, "nested J_i");
  const int cells = std::accumulate(j_i.begin(), j_i.end(), 0);
  if (static_cast<int>(k_ij.size()) != cells)
    throw InvalidDesign("nested design: |K_ij| = " + std::to_string(k_ij.size()) +
                        " but sum J_i = " + std::to_string(cells));
  require_positive(k_ij, "nested K_ij");
  std::vector<int> alpha, beta;
  int cell = 0;
  for (int i = 0; i < i_count; ++i)
    for (int j = 0; j < j_i[static_cast<std::size_t>(i)]; ++j, ++cell)
      for (int k = 0; k < k_ij[static_cast<std::size_t>(cell)]; ++k) {
        alpha.push_back(i);
        beta.push_back(cell);
      }
  const int n = static_cast<int>(alpha.size());
  return ModelSpec(Eigen::MatrixXd::Ones(n, 1),
                   {membership(i_count, alpha), membership(cells, beta), identity_effect(n)},
                   {"mu", "alpha", "beta", "error"});
}

ModelSpec build_two_factor_crossed(int i_count, int j_count, const std::vector<int>& k_ij) {
  if (i_count < 1 || j_count < 1) throw InvalidDesign("crossed design needs I, J >= 1");
  if (static_cast<int>(k_ij.size()) != i_count * j_count)
    throw InvalidDesign("crossed design: expected " + std::to_string(i_count * j_count) +
                        " cell counts, got " + std::to_string(k_ij.size()));
  require_positive(k_ij, "crossed cell counts K_ij");
  std::vector<int> alpha, beta, inter;
  for (int i = 0; i < i_count; ++i)
    for (int j = 0; j < j_count; ++j)
      for (int k = 0; k < k_ij[static_cast<std::size_t>(i * j_count + j)]; ++k) {
        alpha.push_back(i);
        beta.push_back(j);
        inter.push_back(i * j_count + j);
      }
  const int n = static_cast<int>(alpha.size());
  return ModelSpec(Eigen::MatrixXd::Ones(n, 1),
                   {membership(i_count, alpha), membership(j_count, beta),
                    membership(i_count * j_count, inter), identity_effect(n)},
                   {"mu", "alpha", "beta", "alphabeta", "error"});
}

IntervalDataset discretize(std::span<const double> values, double grid_width) {
  if (!(grid_width > 0.0) || !std::isfinite(grid_width))
    throw InvalidData("grid width must be positive and finite");
  IntervalDataset out;
  out.observations.reserve(values.size());
  int row = 1;
  for (double y : values) {
    if (!std::isfinite(y)) throw InvalidData("non-finite value at row " + std::to_string(row));
    // Cell boundaries are defined by the computed products k*h, so membership
    // is decided against exactly the numbers written out.
    double k = std::ceil(y / grid_width) - 1.0;
    while ((k + 1.0) * grid_width < y) k += 1.0;
    while (k * grid_width >= y) k -= 1.0;
    out.observations.push_back({k * grid_width, (k + 1.0) * grid_width, row++});
  }
  return out;
}

std::vector<std::string> validate(const ModelSpec& spec) {
  std::vector<std::string> v;
  const int n = spec.n();
  if (spec.p() < 1) v.push_back("no fixed effects");
  for (int i = 0; i < spec.r(); ++i) {
    const auto& e = spec.effect(i);
    std::vector<bool> used(static_cast<std::size_t>(e.levels), false);
    for (const auto& row : e.rows)
      for (const auto& lc : row)
        if (lc.coeff != 0.0) used[static_cast<std::size_t>(lc.level)] = true;
    for (int j = 0; j < e.levels; ++j)
      if (!used[static_cast<std::size_t>(j)])
        v.push_back("effect " + std::to_string(i + 1) + " level " + std::to_string(j + 1) +
                    " unused");
  }
  const auto& err = spec.effect(spec.r() - 1);
  bool identity = err.levels == n;
  for (int t = 0; identity && t < n; ++t) {
    const auto& row = err.rows[static_cast<std::size_t>(t)];
    identity = row.size() == 1 && row[0].level == t && row[0].coeff == 1.0;
  }
  if (!identity) v.push_back("error effect is not the identity design");
  if (spec.p() >= 1) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(spec.x());
    if (qr.rank() < spec.p()) v.push_back("X rank-deficient");
  }
  if (!spec.x().allFinite()) v.push_back("X has non-finite entries");
  return v;
}

void validate_dataset(const IntervalDataset& data, int n) {
  if (data.n() != n)
    throw InvalidData("dataset has " + std::to_string(data.n()) + " rows, model expects " +
                      std::to_string(n));
  for (int t = 0; t < data.n(); ++t) {
    const auto& o = data.observations[static_cast<std::size_t>(t)];
    if (o.row != t + 1) throw InvalidData("row index " + std::to_string(o.row) + " out of order");
    if (!std::isfinite(o.a) || !std::isfinite(o.b))
      throw InvalidData("row " + std::to_string(o.row) + " has a non-finite bound");
    if (!(o.a < o.b))
      throw InvalidData("row " + std::to_string(o.row) + " has lower >= upper");
  }
}

double effect_load(const RandomEffect& effect, int t, std::span<const double> z) {
  double s = 0.0;
  for (const auto& lc : effect.rows[static_cast<std::size_t>(t)])
    s += lc.coeff * z[static_cast<std::size_t>(lc.level)];
  return s;
}

}  // namespace fidmix
