#include <algorithm>
#include <cmath>
#include <limits>

#include "fidmix/error.hpp"
#include "fidmix/linalg.hpp"

namespace fidmix {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Given a null-space basis N = [N1; N2] (columns orthonormal or not), returns
// eta = N W S^-1 restricted to directions where the N2 block does not vanish,
// so that eta2 = U has orthonormal columns.
NullBasis orthonormalize_lower_block(const Eigen::MatrixXd& n1, const Eigen::MatrixXd& n2,
                                     double tol) {
  NullBasis out;
  const auto q = n1.rows();
  const auto l = n2.rows();
  if (n2.cols() == 0) {
    out.eta1.resize(q, 0);
    out.eta2.resize(l, 0);
    return out;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(n2, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  int keep = 0;
  while (keep < s.size() && s(keep) > tol) ++keep;
  out.eta2 = svd.matrixU().leftCols(keep);
  out.eta1 = n1 * svd.matrixV().leftCols(keep) *
             s.head(keep).cwiseInverse().asDiagonal();
  return out;
}

}  // namespace

NullBasis null_space_basis_svd(const Eigen::MatrixXd& xp, const Eigen::MatrixXd& v) {
  if (xp.rows() != v.rows()) throw PreconditionError("X' and V need the same row count");
  const auto t = xp.rows();
  const auto q = xp.cols();
  const auto l = v.cols();
  if (t < 1 || q < 1 || l < 1) throw PreconditionError("null-space inputs must be nonempty");
  Eigen::MatrixXd a(t, q + l);
  a << -xp, v;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  const double tau = static_cast<double>(std::max(t, q + l)) * kEps * smax;
  int rank = 0;
  while (rank < s.size() && s(rank) > tau) ++rank;
  const auto k = q + l - rank;
  const Eigen::MatrixXd nb = svd.matrixV().rightCols(k);
  return orthonormalize_lower_block(nb.topRows(q), nb.bottomRows(l),
                                    std::max(tau, static_cast<double>(q + l) * kEps));
}

NullBasis null_space_basis_membership(const Eigen::MatrixXd& xp, std::span<const int> col,
                                      std::span<const double> coeff, int l) {
  const auto t = xp.rows();
  const auto q = xp.cols();
  if (static_cast<Eigen::Index>(col.size()) != t || coeff.size() != col.size())
    throw PreconditionError("membership design length mismatch");
  if (t < 1 || q < 1 || l < 1) throw PreconditionError("null-space inputs must be nonempty");

  // V has disjoint column supports, so V^+ and the projector P_V act groupwise.
  Eigen::VectorXd w = Eigen::VectorXd::Zero(l);
  for (Eigen::Index i = 0; i < t; ++i) {
    const int j = col[static_cast<std::size_t>(i)];
    if (j < 0 || j >= l) throw PreconditionError("membership column out of range");
    w(j) += coeff[static_cast<std::size_t>(i)] * coeff[static_cast<std::size_t>(i)];
  }
  if ((w.array() <= 0.0).any()) throw PreconditionError("membership design has an unused column");

  auto pinv_apply = [&](const Eigen::MatrixXd& y) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(l, y.cols());
    for (Eigen::Index i = 0; i < t; ++i)
      g.row(col[static_cast<std::size_t>(i)]) += coeff[static_cast<std::size_t>(i)] * y.row(i);
    for (int j = 0; j < l; ++j) g.row(j) /= w(j);
    return g;
  };

  // null([-X', V]) = { (e1, V^+ X' e1) : (I - P_V) X' e1 = 0 }.
  const Eigen::MatrixXd group = pinv_apply(xp);
  Eigen::MatrixXd resid = xp;
  for (Eigen::Index i = 0; i < t; ++i)
    resid.row(i) -= coeff[static_cast<std::size_t>(i)] * group.row(col[static_cast<std::size_t>(i)]);

  const double scale = std::sqrt(xp.squaredNorm() + w.sum());
  const double tau = static_cast<double>(std::max<Eigen::Index>(t, q + l)) * kEps * scale;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(resid, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  int rank = 0;
  while (rank < s.size() && s(rank) > tau) ++rank;
  const Eigen::MatrixXd n1 = svd.matrixV().rightCols(q - rank);
  const Eigen::MatrixXd n2 = group * n1;
  return orthonormalize_lower_block(n1, n2, std::max(tau, static_cast<double>(q + l) * kEps));
}

NullBasis null_space_basis(const Eigen::MatrixXd& xp, const Eigen::MatrixXd& v) {
  if (xp.rows() != v.rows()) throw PreconditionError("X' and V need the same row count");
  const auto t = v.rows();
  const auto l = v.cols();
  std::vector<int> col(static_cast<std::size_t>(t), -1);
  std::vector<double> coeff(static_cast<std::size_t>(t), 0.0);
  std::vector<bool> used(static_cast<std::size_t>(l), false);
  bool membership = t > 0 && l > 0;
  for (Eigen::Index i = 0; membership && i < t; ++i) {
    for (Eigen::Index j = 0; j < l; ++j) {
      if (v(i, j) == 0.0) continue;
      if (col[static_cast<std::size_t>(i)] >= 0) {
        membership = false;
        break;
      }
      col[static_cast<std::size_t>(i)] = static_cast<int>(j);
      coeff[static_cast<std::size_t>(i)] = v(i, j);
      used[static_cast<std::size_t>(j)] = true;
    }
    if (col[static_cast<std::size_t>(i)] < 0) membership = false;
  }
  if (membership && std::all_of(used.begin(), used.end(), [](bool u) { return u; }))
    return null_space_basis_membership(xp, col, coeff, static_cast<int>(l));
  return null_space_basis_svd(xp, v);
}

}  // namespace fidmix
