#include "masgrad/moments.hpp"

#include <cmath>
#include <stdexcept>

#include "masgrad/linalg.hpp"

namespace masgrad::moments {

namespace {

// Moment matrices tolerate a slightly looser spectral floor than general
// dense roots: gradients near optima are legitimately small.
constexpr double kCovRatioTol = 1e-10;

MomentEstimate moments_impl(const Eigen::Ref<const Mat>& grads,
                            const MomentOptions& opts, double denom_offset) {
  const Index n = grads.rows();
  const Index p = grads.cols();
  if (n < 2)
    throw std::invalid_argument("batch_moments: need at least two gradients");

  MomentEstimate est;
  est.mean_grad = grads.colwise().mean().transpose();
  Mat centered = grads.rowwise() - est.mean_grad.transpose();
  est.cov = centered.transpose() * centered / (double(n) - denom_offset);

  if (!opts.want_inv_root) return est;

  Mat work = est.cov;
  double ridge = opts.ridge;
  if (opts.auto_ridge_scale > 0.0)
    ridge += opts.auto_ridge_scale * est.cov.trace() / double(p);
  if (ridge > 0.0) work += ridge * Mat::Identity(p, p);
  if (opts.diagonal) {
    Vec d = work.diagonal();
    double dmax = d.maxCoeff();
    if (dmax <= 0.0 || d.minCoeff() <= kCovRatioTol * dmax)
      throw std::runtime_error(
          "batch_moments: singular diagonal covariance; consider a ridge");
    est.inv_root = Mat(d.cwiseSqrt().cwiseInverse().asDiagonal());
  } else {
    est.inv_root = linalg::dense_inverse_root(work, kCovRatioTol);
  }
  return est;
}

}  // namespace

double default_ridge_for(const Eigen::Ref<const Mat>& cov) {
  return 1e-8 * cov.trace() / double(cov.cols());
}

MomentEstimate batch_moments(const Eigen::Ref<const Mat>& grads,
                             const MomentOptions& opts) {
  return moments_impl(grads, opts, 1.0);
}

MomentEstimate population_moments(const Eigen::Ref<const Mat>& grads,
                                  const MomentOptions& opts) {
  return moments_impl(grads, opts, 0.0);
}

Vec adjusted_direction(const Eigen::Ref<const Mat>& grads,
                       const MomentOptions& opts) {
  MomentOptions with_root = opts;
  with_root.want_inv_root = true;
  auto est = batch_moments(grads, with_root);
  return *est.inv_root * est.mean_grad;
}

SelfNormalizedResult self_normalized(const Eigen::Ref<const Mat>& samples,
                                     const Eigen::Ref<const Vec>& mu) {
  const Index n = samples.rows();
  const Index d = samples.cols();
  if (mu.size() != d)
    throw std::invalid_argument("self_normalized: mu length mismatch");
  if (n < 2 || n < d)
    throw std::invalid_argument(
        "self_normalized: need at least max(2, d) samples");

  Mat dev = samples.rowwise() - mu.transpose();
  Vec s_n = dev.colwise().sum().transpose();
  Mat v_n_sq = dev.transpose() * dev;

  Mat v_n_inv;
  try {
    v_n_inv = linalg::dense_inverse_root(v_n_sq, kCovRatioTol);
  } catch (const std::runtime_error&) {
    throw std::runtime_error("self_normalized: V_n^2 numerically singular");
  }

  SelfNormalizedResult res;
  res.m_n = v_n_inv * s_n;
  double msq = res.m_n.squaredNorm();
  if (double(n) - msq <= 1e-12 * double(n))
    throw std::runtime_error(
        "self_normalized: ||M_n||^2 within rounding of n; correction "
        "degenerate");
  res.correction = std::sqrt((double(n) - 1.0) / (double(n) - msq));

  double q = msq / double(n);
  Mat s = linalg::rank_one_root_multiplier(1.0 / (1.0 - q),
                                           res.m_n / std::sqrt(double(n)));
  Mat vhat_inv = std::sqrt(double(n) - 1.0) * s * v_n_inv;
  Vec xbar_dev = s_n / double(n);
  res.lhs = std::sqrt(double(n)) * (vhat_inv * xbar_dev);
  return res;
}

OnlineLsCovState OnlineLsCovState::init(Index p) {
  if (p < 1 || p > 16)
    throw std::invalid_argument(
        "OnlineLsCovState: p must lie in [1, 16]; the fourth-moment sum is "
        "p^2 x p^2");
  OnlineLsCovState st;
  st.sum_xx = Mat::Zero(p, p);
  st.sum_kron = Mat::Zero(p * p, p * p);
  st.sum_yx = Vec::Zero(p);
  st.sum_yyxx = Mat::Zero(p, p);
  st.sum_cross = Mat::Zero(p * p, p);
  return st;
}

OnlineLsCovState ls_cov_update(OnlineLsCovState st,
                               const Eigen::Ref<const Vec>& x, double y) {
  const Index p = st.sum_xx.rows();
  if (x.size() != p)
    throw std::invalid_argument("ls_cov_update: feature length mismatch");
  Mat xx = x * x.transpose();
  // Column-stacked vec(x x^T) = x kron x.
  Eigen::Map<const Vec> xkx(xx.data(), p * p);
  st.sum_xx += xx;
  st.sum_kron += xkx * xkx.transpose();
  st.sum_yx += y * x;
  st.sum_yyxx += y * y * xx;
  st.sum_cross += y * xkx * x.transpose();
  st.t += 1;
  return st;
}

LsCovQuery streaming_ls_covariance(const OnlineLsCovState& st,
                                   const Eigen::Ref<const Vec>& theta) {
  const Index p = st.sum_xx.rows();
  if (theta.size() != p)
    throw std::invalid_argument("streaming_ls_covariance: theta mismatch");
  if (st.t < 1)
    throw std::runtime_error("streaming_ls_covariance: empty stream");

  const double t = double(st.t);
  LsCovQuery q;
  q.mean = (st.sum_xx * theta - st.sum_yx) / t;

  // E[g g^T] assembled from the stored sums; vec(A theta theta^T A) uses the
  // column-stacking identity vec(AXB) = (B^T kron A) vec(X).
  Mat tt = theta * theta.transpose();
  Eigen::Map<const Vec> tkt(tt.data(), p * p);
  Vec quad = st.sum_kron * tkt;
  Vec cross = st.sum_cross * theta;
  Eigen::Map<const Mat> quad_m(quad.data(), p, p);
  Eigen::Map<const Mat> cross_m(cross.data(), p, p);
  Mat second =
      (st.sum_yyxx - cross_m - cross_m.transpose() + quad_m) / t;
  q.cov = second - q.mean * q.mean.transpose();
  return q;
}

}  // namespace masgrad::moments
