#pragma once

// Dense symmetric roots and the streaming rank-one inverse-root update that
// the moment-adjusted methods lean on.  Everything here is a pure function of
// its inputs; matrices are plain dense Eigen types.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

#include "masgrad/types.hpp"

namespace masgrad::linalg {

inline void require_square_symmetric(const Eigen::Ref<const Mat>& m,
                                     const char* who) {
  if (m.rows() != m.cols())
    throw std::invalid_argument(std::string(who) + ": matrix must be square");
  double scale = std::max(1.0, m.norm());
  if ((m - m.transpose()).norm() > 1e-10 * scale)
    throw std::invalid_argument(std::string(who) +
                                ": matrix must be symmetric");
}

// Eigendecomposition of a symmetric PD matrix, guarded by the relative
// eigenvalue ratio lmin/lmax > ratio_tol.  Shared by the root routines.
inline Eigen::SelfAdjointEigenSolver<Mat> checked_eigh(
    const Eigen::Ref<const Mat>& m, double ratio_tol, const char* who) {
  require_square_symmetric(m, who);
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  if (es.info() != Eigen::Success)
    throw std::runtime_error(std::string(who) + ": eigendecomposition failed");
  double lmin = es.eigenvalues().minCoeff();
  double lmax = es.eigenvalues().maxCoeff();
  if (lmax <= 0.0 || lmin <= ratio_tol * lmax)
    throw std::runtime_error(std::string(who) +
                             ": matrix numerically singular (lmin=" +
                             std::to_string(lmin) + ", lmax=" +
                             std::to_string(lmax) + ")");
  return es;
}

// Symmetric PSD inverse root R with R m R = I (equivalently R R = m^{-1}).
inline Mat dense_inverse_root(const Eigen::Ref<const Mat>& m,
                              double ratio_tol = 1e-12) {
  auto es = checked_eigh(m, ratio_tol, "dense_inverse_root");
  return es.eigenvectors() *
         es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

// Symmetric PSD root B with B B^T = m.
inline Mat dense_root(const Eigen::Ref<const Mat>& m,
                      double ratio_tol = 1e-12) {
  auto es = checked_eigh(m, ratio_tol, "dense_root");
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

// Streaming inverse-root state.  After absorbing v_1..v_n starting from the
// identity, (h^T h)^{-1} = I + sum_i v_i v_i^T.
template <typename S>
struct InverseRootStateT {
  MatX<S> h;
  Index absorbed = 0;

  static InverseRootStateT identity(Index d) {
    return {MatX<S>::Identity(d, d), 0};
  }
};
using InverseRootState = InverseRootStateT<double>;

// One rank-one absorb.  Four matrix-size passes: h*v, h^T*(h*v), the scaled
// outer product, and the in-place subtraction; at most 4 d^2 + O(d)
// multiplications in total.  Directions with ||v||^2 < 1e-14 carry no usable
// curvature and are skipped (the count still advances).
template <typename S>
InverseRootStateT<S> rank_one_inverse_root_update(InverseRootStateT<S> st,
                                                  const VecX<S>& v) {
  const Index d = st.h.rows();
  if (v.size() != d)
    throw std::invalid_argument(
        "rank_one_inverse_root_update: vector length does not match state");
  st.absorbed += 1;
  if (v.squaredNorm() < S(1e-14)) return st;

  using std::sqrt;
  VecX<S> a = st.h * v;
  VecX<S> w = st.h.transpose() * a;
  S root = sqrt(S(1) + a.squaredNorm());
  S alpha = (S(1) + root) * root;
  VecX<S> as = a / alpha;
  for (Index j = 0; j < d; ++j) st.h.col(j) -= as * w(j);
  return st;
}

// Symmetric S with S S = I + c v v^T; the closed-form root of a rank-one
// update of the identity.  c may be negative as long as 1 + c ||v||^2 >= 0.
inline Mat rank_one_root_multiplier(double c, const Eigen::Ref<const Vec>& v) {
  const Index d = v.size();
  double vv = v.squaredNorm();
  if (vv < 1e-14) return Mat::Identity(d, d);
  double disc = 1.0 + c * vv;
  if (disc < 0.0)
    throw std::domain_error(
        "rank_one_root_multiplier: 1 + c||v||^2 < 0 has no real root");
  double t = (std::sqrt(disc) - 1.0) / vv;
  return Mat::Identity(d, d) + t * v * v.transpose();
}

// (A + U C V)^{-1} from A^{-1} and C^{-1} via the Woodbury identity.
inline Mat woodbury_inverse(const Eigen::Ref<const Mat>& a_inv,
                            const Eigen::Ref<const Mat>& u,
                            const Eigen::Ref<const Mat>& c_inv,
                            const Eigen::Ref<const Mat>& v) {
  const Index d = a_inv.rows();
  const Index k = u.cols();
  if (a_inv.cols() != d || u.rows() != d || v.rows() != k || v.cols() != d ||
      c_inv.rows() != k || c_inv.cols() != k)
    throw std::invalid_argument("woodbury_inverse: inconsistent shapes");
  Mat va = v * a_inv;
  Mat inner = c_inv + va * u;
  Eigen::FullPivLU<Mat> lu(inner);
  if (!lu.isInvertible())
    throw std::runtime_error("woodbury_inverse: inner k x k system singular");
  return a_inv - (a_inv * u) * lu.solve(va);
}

}  // namespace masgrad::linalg
