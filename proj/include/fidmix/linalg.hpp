#pragma once

#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace fidmix {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kFeasTol = 1e-9;

// Polyhedron { x : lower_k < c_k . x <= upper_k, x_i >= 0 for i in nonneg }.
// Strict lower bounds are relaxed to non-strict by every solver routine.
class ConstraintSet {
 public:
  explicit ConstraintSet(int dim = 0, std::vector<int> nonneg = {});

  int dim() const { return dim_; }
  int rows() const { return static_cast<int>(lower_.size()); }
  const std::vector<int>& nonneg() const { return nonneg_; }

  std::span<const double> row(int k) const {
    return {coeffs_.data() + static_cast<std::size_t>(k) * dim_, static_cast<std::size_t>(dim_)};
  }
  double lower(int k) const { return lower_[static_cast<std::size_t>(k)]; }
  double upper(int k) const { return upper_[static_cast<std::size_t>(k)]; }

  void add_row(std::span<const double> coeffs, double lower, double upper);
  void clear_rows();
  void reserve(int rows);

  // Largest violation of any row (including sign constraints) at x.
  double max_violation(std::span<const double> x) const;

 private:
  int dim_;
  std::vector<int> nonneg_;
  std::vector<double> coeffs_;
  std::vector<double> lower_;
  std::vector<double> upper_;
};

enum class LPStatus { optimal, infeasible, unbounded };
enum class Sense { minimize, maximize };

struct LPResult {
  LPStatus status = LPStatus::infeasible;
  double value = 0.0;
  std::vector<double> point;
};

struct Extremes {
  double min = -kInf;
  double max = kInf;
};

LPResult lp_solve(std::span<const double> objective, const ConstraintSet& cs, Sense sense);
bool feasible(const ConstraintSet& cs);

// Extremes of (num . x + num_const) / x[den_index] over cs with x[den_index] > 0,
// by the Charnes-Cooper change of variables y = x / x_den, u = 1 / x_den.
Extremes linear_fractional_extremes(const ConstraintSet& cs, std::span<const double> num,
                                    double num_const, int den_index);
// Same, without re-checking that cs is nonempty. Throws DegenerateDenominator
// when no feasible point (or recession direction) has a positive denominator,
// which is also how an empty cs surfaces.
Extremes linear_fractional_extremes_unchecked(const ConstraintSet& cs,
                                              std::span<const double> num, double num_const,
                                              int den_index);

// Lower end: min of (num . x + lower_const) / x_den. Upper end: max of
// (num . x + upper_const) / x_den. Both over the same set, as unchecked above.
Extremes linear_fractional_bounds(const ConstraintSet& cs, std::span<const double> num,
                                  double lower_const, double upper_const, int den_index);

// min and max of x[k] over cs.
Extremes projection_interval(const ConstraintSet& cs, int k);

// Basis for null([-Xp, V]) arranged so that eta2 has orthonormal columns and
// every basis vector has a nonvanishing eta2 block.
struct NullBasis {
  Eigen::MatrixXd eta1;  // q x d
  Eigen::MatrixXd eta2;  // l x d
  int d() const { return static_cast<int>(eta2.cols()); }
};

NullBasis null_space_basis(const Eigen::MatrixXd& xp, const Eigen::MatrixXd& v);
// Dense route through a singular value decomposition of [-Xp, V].
NullBasis null_space_basis_svd(const Eigen::MatrixXd& xp, const Eigen::MatrixXd& v);
// Route for designs whose every row has a single nonzero: row t loads column
// col[t] with coefficient coeff[t]. Every one of the l columns must be used.
NullBasis null_space_basis_membership(const Eigen::MatrixXd& xp, std::span<const int> col,
                                      std::span<const double> coeff, int l);

}  // namespace fidmix
