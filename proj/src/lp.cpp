#include <algorithm>
#include <cmath>
#include <string>

#include "fidmix/error.hpp"
#include "fidmix/linalg.hpp"

namespace fidmix {

ConstraintSet::ConstraintSet(int dim, std::vector<int> nonneg)
    : dim_(dim), nonneg_(std::move(nonneg)) {
  for (int i : nonneg_)
    if (i < 0 || i >= dim_) throw PreconditionError("nonneg index out of range");
}

void ConstraintSet::add_row(std::span<const double> coeffs, double lower, double upper) {
  if (static_cast<int>(coeffs.size()) != dim_)
    throw PreconditionError("constraint row has " + std::to_string(coeffs.size()) +
                            " coefficients, expected " + std::to_string(dim_));
  if (!(lower <= upper))
    throw PreconditionError("constraint row needs lower < upper");
  coeffs_.insert(coeffs_.end(), coeffs.begin(), coeffs.end());
  lower_.push_back(lower);
  upper_.push_back(upper);
}

void ConstraintSet::clear_rows() {
  coeffs_.clear();
  lower_.clear();
  upper_.clear();
}

void ConstraintSet::reserve(int rows) {
  coeffs_.reserve(static_cast<std::size_t>(rows) * dim_);
  lower_.reserve(static_cast<std::size_t>(rows));
  upper_.reserve(static_cast<std::size_t>(rows));
}

double ConstraintSet::max_violation(std::span<const double> x) const {
  double worst = 0.0;
  for (int k = 0; k < rows(); ++k) {
    const auto c = row(k);
    double v = 0.0;
    for (int i = 0; i < dim_; ++i) v += c[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
    if (std::isfinite(upper(k))) worst = std::max(worst, v - upper(k));
    if (std::isfinite(lower(k))) worst = std::max(worst, lower(k) - v);
  }
  for (int i : nonneg_) worst = std::max(worst, -x[static_cast<std::size_t>(i)]);
  return worst;
}

namespace {

// G x <= h with every row scaled to unit max-norm and relaxed by kFeasTol.
struct Inequalities {
  int n = 0;
  std::vector<double> g;
  std::vector<double> h;
  bool contradiction = false;

  int m() const { return static_cast<int>(h.size()); }

  void add(const double* row, double rhs, double sign = 1.0, double relax = kFeasTol) {
    double scale = 0.0;
    for (int i = 0; i < n; ++i) scale = std::max(scale, std::abs(row[i]));
    if (scale == 0.0) {
      if (sign * rhs < -kFeasTol) contradiction = true;
      return;
    }
    const double inv = sign / scale;
    for (int i = 0; i < n; ++i) g.push_back(row[i] * inv);
    h.push_back(rhs * inv + relax);
  }

  // Charnes-Cooper image of  sign * (c . x) <= sign * bound  (relaxed as in
  // add) with x = y / u: the homogeneous row sign * (c . y - bound u) <= tol u,
  // where c spans the first n - 1 variables and u is the last. Scaling uses c
  // alone so the relaxed set is the exact image of the relaxed original.
  void add_homogeneous(const double* c, double bound, double sign = 1.0) {
    double scale = 0.0;
    for (int i = 0; i + 1 < n; ++i) scale = std::max(scale, std::abs(c[i]));
    if (scale == 0.0) {
      if (sign * bound < -kFeasTol) contradiction = true;
      return;
    }
    const double inv = sign / scale;
    for (int i = 0; i + 1 < n; ++i) g.push_back(c[i] * inv);
    g.push_back(-bound * inv - kFeasTol);
    h.push_back(0.0);
  }
};

Inequalities to_inequalities(const ConstraintSet& cs) {
  Inequalities sys;
  sys.n = cs.dim();
  sys.g.reserve(static_cast<std::size_t>(2 * cs.rows() + cs.nonneg().size()) * sys.n);
  for (int k = 0; k < cs.rows(); ++k) {
    const double* c = cs.row(k).data();
    if (std::isfinite(cs.upper(k))) sys.add(c, cs.upper(k));
    if (std::isfinite(cs.lower(k))) sys.add(c, cs.lower(k), -1.0);
  }
  std::vector<double> e(static_cast<std::size_t>(sys.n), 0.0);
  for (int i : cs.nonneg()) {
    e[static_cast<std::size_t>(i)] = -1.0;
    sys.add(e.data(), 0.0);
    e[static_cast<std::size_t>(i)] = 0.0;
  }
  return sys;
}

enum class DualStatus { optimal, unbounded, infeasible };

// Simplex on the dual of  min c.x s.t. G x <= h  (x free):
//   min h.lambda  s.t.  G^T lambda = -c, lambda >= 0.
// The tableau has only n equality rows, so pivots cost O(n m). The primal
// optimum is read off the simplex multipliers.
class DualTableau {
 public:
  DualTableau(const Inequalities& sys, std::span<const double> c, bool harris = false)
      : n_(sys.n), m_(sys.m()), w_(m_ + n_ + 1), harris_(harris) {
    t_.assign(static_cast<std::size_t>(n_ + 2) * w_, 0.0);
    basis_.resize(static_cast<std::size_t>(n_));
    sign_.resize(static_cast<std::size_t>(n_));
    dead_.assign(static_cast<std::size_t>(n_), 0);
    double cmax = 0.0, hmax = 0.0;
    for (int i = 0; i < n_; ++i) {
      const double rhs = -c[static_cast<std::size_t>(i)];
      const double s = rhs >= 0.0 ? 1.0 : -1.0;
      sign_[static_cast<std::size_t>(i)] = s;
      cmax = std::max(cmax, std::abs(rhs));
      for (int j = 0; j < m_; ++j)
        at(i, j) = s * sys.g[static_cast<std::size_t>(j) * n_ + i];
      at(i, m_ + i) = 1.0;
      at(i, w_ - 1) = s * rhs;
      basis_[static_cast<std::size_t>(i)] = m_ + i;
    }
    for (int j = 0; j < m_; ++j) {
      at(n_, j) = sys.h[static_cast<std::size_t>(j)];
      hmax = std::max(hmax, std::abs(sys.h[static_cast<std::size_t>(j)]));
      double s = 0.0;
      for (int i = 0; i < n_; ++i) s += at(i, j);
      at(n_ + 1, j) = -s;
    }
    double s = 0.0;
    for (int i = 0; i < n_; ++i) s += at(i, w_ - 1);
    at(n_ + 1, w_ - 1) = -s;
    tol1_ = 1e-11 * (1.0 + cmax);
    tol2_ = 1e-11 * (1.0 + hmax);
    infeas_tol_ = 1e-9 * (1.0 + cmax);
    cap_ = 50L * (n_ + m_ + n_);
  }

  DualStatus run() {
    if (!iterate(n_ + 1, tol1_)) throw SolverFailure("phase 1 iteration cap exceeded");
    if (-at(n_ + 1, w_ - 1) > infeas_tol_) return DualStatus::infeasible;
    drive_out_artificials();
    bland_ = false;
    degenerate_run_ = 0;
    unbounded_ = false;
    if (!iterate(n_, tol2_)) throw SolverFailure(diagnostics("phase 2 iteration cap exceeded"));
    return unbounded_ ? DualStatus::unbounded : DualStatus::optimal;
  }

  std::vector<double> primal() const {
    std::vector<double> x(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i)
      x[static_cast<std::size_t>(i)] = -sign_[static_cast<std::size_t>(i)] * at(n_, m_ + i);
    return x;
  }

  // Values of the dual variables lambda at the final basis.
  std::vector<double> dual() const {
    std::vector<double> lambda(static_cast<std::size_t>(m_), 0.0);
    for (int i = 0; i < n_; ++i) {
      const int b = basis_[static_cast<std::size_t>(i)];
      if (b < m_ && !dead_[static_cast<std::size_t>(i)]) lambda[static_cast<std::size_t>(b)] = at(i, w_ - 1);
    }
    return lambda;
  }

 private:
  double& at(int i, int j) { return t_[static_cast<std::size_t>(i) * w_ + j]; }
  double at(int i, int j) const { return t_[static_cast<std::size_t>(i) * w_ + j]; }

  std::string diagnostics(const std::string& what) const {
    return what + " (rows=" + std::to_string(n_) + ", cols=" + std::to_string(m_) +
           ", iterations=" + std::to_string(iterations_) + ")";
  }

  void pivot(int r, int c) {
    double* pr = &t_[static_cast<std::size_t>(r) * w_];
    const double inv = 1.0 / pr[c];
    for (int j = 0; j < w_; ++j) pr[j] *= inv;
    pr[c] = 1.0;
    for (int i = 0; i < n_ + 2; ++i) {
      if (i == r) continue;
      double* pi = &t_[static_cast<std::size_t>(i) * w_];
      const double f = pi[c];
      if (f == 0.0) continue;
      for (int j = 0; j < w_; ++j) pi[j] -= f * pr[j];
      pi[c] = 0.0;
    }
    basis_[static_cast<std::size_t>(r)] = c;
  }

  // Returns false when the iteration cap is hit.
  bool iterate(int cost_row, double tol) {
    for (;;) {
      if (++iterations_ > cap_) return false;
      int enter = -1;
      double best = -tol;
      for (int j = 0; j < m_; ++j) {
        const double rc = at(cost_row, j);
        if (rc < best) {
          enter = j;
          if (bland_) break;
          best = rc;
        }
      }
      if (enter < 0) return true;
      const int leave = bland_ || !harris_ ? ratio_bland(enter) : ratio_harris(enter);
      if (leave < 0) {
        unbounded_ = true;
        return true;
      }
      // Anti-cycling: once degenerate pivots start repeating, Bland's rule
      // (smallest eligible index) is used for the remainder of the phase.
      if (std::max(at(leave, w_ - 1), 0.0) / at(leave, enter) <= 1e-14) {
        if (++degenerate_run_ > n_) bland_ = true;
      } else {
        degenerate_run_ = 0;
      }
      pivot(leave, enter);
    }
  }

  // Textbook minimum ratio, ties broken by the smallest basic index.
  int ratio_bland(int enter) const {
    int leave = -1;
    double ratio = kInf;
    for (int i = 0; i < n_; ++i) {
      if (dead_[static_cast<std::size_t>(i)]) continue;
      const double a = at(i, enter);
      if (a <= kPivotTol) continue;
      const double q = std::max(at(i, w_ - 1), 0.0) / a;
      if (leave < 0 || q < ratio - 1e-14 * (1.0 + ratio)) {
        ratio = q;
        leave = i;
      } else if (q <= ratio + 1e-14 * (1.0 + ratio) &&
                 basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)]) {
        ratio = std::min(ratio, q);
        leave = i;
      }
    }
    return leave;
  }

  // Two-pass Harris test: bound the step with every basic value loosened by
  // kHarrisTol, then pivot on the largest entry among rows within that bound.
  // Tiny pivots blow the tableau up on thin polytopes.
  int ratio_harris(int enter) const {
    double bound = kInf;
    for (int i = 0; i < n_; ++i) {
      if (dead_[static_cast<std::size_t>(i)]) continue;
      const double a = at(i, enter);
      if (a <= kPivotTol) continue;
      bound = std::min(bound, (std::max(at(i, w_ - 1), 0.0) + kHarrisTol) / a);
    }
    int leave = -1;
    double best = 0.0;
    for (int i = 0; i < n_; ++i) {
      if (dead_[static_cast<std::size_t>(i)]) continue;
      const double a = at(i, enter);
      if (a <= kPivotTol || std::max(at(i, w_ - 1), 0.0) / a > bound) continue;
      if (a > best) {
        best = a;
        leave = i;
      }
    }
    return leave;
  }

  void drive_out_artificials() {
    for (int i = 0; i < n_; ++i) {
      if (basis_[static_cast<std::size_t>(i)] < m_) continue;
      int best = -1;
      double mag = kPivotTol * 100.0;
      for (int j = 0; j < m_; ++j) {
        const double a = std::abs(at(i, j));
        if (a > mag) {
          mag = a;
          best = j;
        }
      }
      if (best >= 0) {
        pivot(i, best);
      } else {
        dead_[static_cast<std::size_t>(i)] = 1;
        for (int j = 0; j < m_; ++j) at(i, j) = 0.0;
      }
    }
  }

  static constexpr double kPivotTol = 1e-11;
  static constexpr double kHarrisTol = 1e-12;

  int n_, m_, w_;
  bool harris_;
  std::vector<double> t_;
  std::vector<int> basis_;
  std::vector<double> sign_;
  std::vector<char> dead_;
  double tol1_ = 0, tol2_ = 0, infeas_tol_ = 0;
  long cap_ = 0;
  long iterations_ = 0;
  bool bland_ = false;
  int degenerate_run_ = 0;
  bool unbounded_ = false;
};

// The zero objective makes every dual basis degenerate, and round-off can
// then fake an unbounded ray. A negative verdict is only trusted once a few
// coordinate objectives, under both ratio tests, also fail to reach an
// optimum.
bool system_feasible(const Inequalities& sys) {
  if (sys.contradiction) return false;
  if (sys.m() == 0) return true;
  std::vector<double> c(static_cast<std::size_t>(sys.n), 0.0);
  if (DualTableau(sys, c).run() == DualStatus::optimal) return true;
  if (DualTableau(sys, c, true).run() == DualStatus::optimal) return true;
  for (int k : {0, sys.n - 1}) {
    for (double s : {1.0, -1.0}) {
      std::fill(c.begin(), c.end(), 0.0);
      c[static_cast<std::size_t>(k)] = s;
      for (bool harris : {false, true})
        if (DualTableau(sys, c, harris).run() == DualStatus::optimal) return true;
    }
  }
  return false;
}

// min c.x over G x <= h.
// Optimality certificate for a reported optimum: x primal feasible, lambda
// dual feasible, and a vanishing duality gap, all to kCertTol.
bool certified(const Inequalities& sys, std::span<const double> c, const std::vector<double>& x,
               const std::vector<double>& lambda) {
  constexpr double kCertTol = 1e-8;
  const int n = sys.n;
  std::vector<double> residual(c.begin(), c.end());
  double primal = 0.0, dual = 0.0, lambda_sum = 0.0;
  for (int i = 0; i < n; ++i) primal += c[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
  for (int j = 0; j < sys.m(); ++j) {
    const double* g = &sys.g[static_cast<std::size_t>(j) * n];
    const double hj = sys.h[static_cast<std::size_t>(j)];
    double v = 0.0;
    for (int i = 0; i < n; ++i) v += g[i] * x[static_cast<std::size_t>(i)];
    if (v - hj > kCertTol * (1.0 + std::abs(hj))) return false;
    const double l = lambda[static_cast<std::size_t>(j)];
    if (l < -kCertTol) return false;
    for (int i = 0; i < n; ++i) residual[static_cast<std::size_t>(i)] += g[i] * l;
    dual -= hj * l;
    lambda_sum += std::abs(l);
  }
  for (double r : residual)
    if (std::abs(r) > kCertTol * (1.0 + lambda_sum)) return false;
  return std::abs(primal - dual) <= kCertTol * (1.0 + std::abs(primal));
}

// min c.x over G x <= h. A reported optimum is accepted once certified;
// otherwise, or when the first pass claims the primal empty or unbounded,
// the solve is repeated with the Harris ratio test and a certified answer
// from that pass wins. Thin polytopes defeat either pivot rule alone.
LPResult minimize(const Inequalities& sys, std::span<const double> c) {
  LPResult res;
  if (sys.contradiction) {
    res.status = LPStatus::infeasible;
    return res;
  }
  auto optimum = [&](const DualTableau& tab) {
    LPResult r;
    r.status = LPStatus::optimal;
    r.point = tab.primal();
    double v = 0.0;
    for (int i = 0; i < sys.n; ++i) v += c[static_cast<std::size_t>(i)] * r.point[static_cast<std::size_t>(i)];
    r.value = v;
    return r;
  };
  DualTableau tab(sys, c);
  const DualStatus first = tab.run();
  if (first == DualStatus::optimal) {
    res = optimum(tab);
    if (certified(sys, c, res.point, tab.dual())) return res;
  }
  DualTableau retry(sys, c, true);
  const DualStatus second = retry.run();
  if (second == DualStatus::optimal) {
    LPResult alt = optimum(retry);
    if (first != DualStatus::optimal || certified(sys, c, alt.point, retry.dual())) return alt;
  }
  if (first == DualStatus::optimal) return res;
  if (first == DualStatus::unbounded && second == DualStatus::unbounded) {
    res.status = LPStatus::infeasible;
    return res;
  }
  res.status = system_feasible(sys) ? LPStatus::unbounded : LPStatus::infeasible;
  return res;
}

LPResult solve_sense(const Inequalities& sys, std::span<const double> c, Sense sense) {
  if (sense == Sense::minimize) return minimize(sys, c);
  std::vector<double> neg(c.begin(), c.end());
  for (double& v : neg) v = -v;
  LPResult res = minimize(sys, neg);
  if (res.status == LPStatus::optimal) res.value = -res.value;
  return res;
}

}  // namespace

LPResult lp_solve(std::span<const double> objective, const ConstraintSet& cs, Sense sense) {
  if (static_cast<int>(objective.size()) != cs.dim())
    throw PreconditionError("objective length does not match constraint dimension");
  return solve_sense(to_inequalities(cs), objective, sense);
}

bool feasible(const ConstraintSet& cs) { return system_feasible(to_inequalities(cs)); }

Extremes linear_fractional_bounds(const ConstraintSet& cs, std::span<const double> num,
                                  double lower_const, double upper_const, int den_index) {
  const int dim = cs.dim();
  if (static_cast<int>(num.size()) != dim)
    throw PreconditionError("numerator length does not match constraint dimension");
  if (den_index < 0 || den_index >= dim) throw PreconditionError("denominator index out of range");
  if (std::find(cs.nonneg().begin(), cs.nonneg().end(), den_index) == cs.nonneg().end())
    throw PreconditionError("denominator variable must be sign constrained");

  // Variables (y, u): y = x / x_den, u = 1 / x_den.
  Inequalities sys;
  sys.n = dim + 1;
  sys.g.reserve(static_cast<std::size_t>(2 * cs.rows() + dim + 3) * sys.n);
  std::vector<double> row(static_cast<std::size_t>(dim + 1));
  for (int k = 0; k < cs.rows(); ++k) {
    const auto c = cs.row(k);
    if (std::isfinite(cs.upper(k))) sys.add_homogeneous(c.data(), cs.upper(k));
    if (std::isfinite(cs.lower(k))) sys.add_homogeneous(c.data(), cs.lower(k), -1.0);
  }
  std::fill(row.begin(), row.end(), 0.0);
  for (int i : cs.nonneg()) {
    row[static_cast<std::size_t>(i)] = -1.0;
    sys.add_homogeneous(row.data(), 0.0);
    row[static_cast<std::size_t>(i)] = 0.0;
  }
  // u >= 0 and the normalization y_den = 1 are kept exact; slack here would
  // widen the image beyond the relaxed original set.
  row[static_cast<std::size_t>(dim)] = -1.0;
  sys.add(row.data(), 0.0, 1.0, 0.0);
  row[static_cast<std::size_t>(dim)] = 0.0;
  row[static_cast<std::size_t>(den_index)] = 1.0;
  sys.add(row.data(), 1.0, 1.0, 0.0);
  sys.add(row.data(), 1.0, -1.0, 0.0);

  std::vector<double> obj(num.begin(), num.end());
  obj.push_back(lower_const);

  // A denominator that is positive only inside the relaxation band counts as
  // vanishing.
  auto degenerate = [&](const LPResult& r) {
    return r.status == LPStatus::infeasible ||
           (r.status == LPStatus::optimal && r.point[static_cast<std::size_t>(dim)] * kFeasTol > 0.1);
  };
  Extremes out;
  const LPResult lo = minimize(sys, obj);
  if (degenerate(lo)) throw DegenerateDenominator("denominator vanishes on the whole feasible set");
  out.min = lo.status == LPStatus::optimal ? lo.value : -kInf;
  obj.back() = upper_const;
  const LPResult hi = solve_sense(sys, obj, Sense::maximize);
  if (degenerate(hi)) throw DegenerateDenominator("denominator vanishes on the whole feasible set");
  out.max = hi.status == LPStatus::optimal ? hi.value : kInf;
  return out;
}

Extremes linear_fractional_extremes_unchecked(const ConstraintSet& cs,
                                              std::span<const double> num, double num_const,
                                              int den_index) {
  return linear_fractional_bounds(cs, num, num_const, num_const, den_index);
}

Extremes linear_fractional_extremes(const ConstraintSet& cs, std::span<const double> num,
                                    double num_const, int den_index) {
  if (!feasible(cs)) throw PreconditionError("linear-fractional bounds over an empty set");
  return linear_fractional_extremes_unchecked(cs, num, num_const, den_index);
}

Extremes projection_interval(const ConstraintSet& cs, int k) {
  if (k < 0 || k >= cs.dim()) throw PreconditionError("projection index out of range");
  const Inequalities sys = to_inequalities(cs);
  std::vector<double> e(static_cast<std::size_t>(cs.dim()), 0.0);
  e[static_cast<std::size_t>(k)] = 1.0;
  Extremes out;
  const LPResult lo = minimize(sys, e);
  if (lo.status == LPStatus::infeasible) throw PreconditionError("projection of an empty set");
  out.min = lo.status == LPStatus::optimal ? lo.value : -kInf;
  const LPResult hi = solve_sense(sys, e, Sense::maximize);
  if (hi.status == LPStatus::infeasible) throw PreconditionError("projection of an empty set");
  out.max = hi.status == LPStatus::optimal ? hi.value : kInf;
  return out;
}

}  // namespace fidmix
