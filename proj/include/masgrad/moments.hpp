#pragma once

// Gradient moment estimation: minibatch plug-in moments, the pool-exact
// population variant, the self-normalized statistic, and a streaming
// Kronecker accumulator that reproduces least-squares gradient covariances
// at arbitrary query points.

#include <optional>

#include "masgrad/types.hpp"

namespace masgrad::moments {

struct MomentOptions {
  double ridge = 0.0;     // added to the covariance diagonal before rooting
  // When positive, adds auto_ridge_scale * trace(cov)/p on top of `ridge`;
  // keeps nearly singular covariances (dead directions) invertible.
  double auto_ridge_scale = 0.0;
  bool diagonal = false;  // adjust with diag(cov) only
  bool want_inv_root = true;
};

struct MomentEstimate {
  Vec mean_grad;
  Mat cov;
  // Symmetric PSD inverse root of cov (+ ridge), present on request.
  std::optional<Mat> inv_root;
};

// Default ridge used by the ill-conditioned experiments: 1e-8 * trace / p.
double default_ridge_for(const Eigen::Ref<const Mat>& cov);

// Plug-in moments of a gradient minibatch (rows are per-sample gradients);
// covariance uses the unbiased n-1 denominator.
MomentEstimate batch_moments(const Eigen::Ref<const Mat>& grads,
                             const MomentOptions& opts = {});

// Pool-as-population moments: denominator-N covariance over the whole pool.
MomentEstimate population_moments(const Eigen::Ref<const Mat>& grads,
                                  const MomentOptions& opts = {});

// V-hat^{-1} applied to the batch mean gradient.
Vec adjusted_direction(const Eigen::Ref<const Mat>& grads,
                       const MomentOptions& opts = {});

struct SelfNormalizedResult {
  Vec m_n;            // V_n^{-1} S_n
  double correction;  // sqrt((n-1)/(n - ||M_n||^2))
  Vec lhs;            // sqrt(n) Vhat^{-1} (xbar - mu)
};

// Self-normalized mean deviation.  Vhat^{-1} is built by the rank-one root
// construction sqrt(n-1) * S * V_n^{-1}, not the symmetric root, so lhs
// equals m_n * correction exactly up to rounding.
SelfNormalizedResult self_normalized(const Eigen::Ref<const Mat>& samples,
                                     const Eigen::Ref<const Vec>& mu);

// Streaming accumulators for least-squares gradient moments.  With
// g_i(theta) = (x_i^T theta - y_i) x_i, five sums suffice to reconstruct the
// exact mean and covariance over the stream at any theta.  The fourth-moment
// sum is (p^2 x p^2), so p is capped at 16.
struct OnlineLsCovState {
  Index t = 0;
  Mat sum_xx;     // sum x x^T                  (p x p)
  Mat sum_kron;   // sum (x x^T) kron (x x^T)   (p^2 x p^2)
  Vec sum_yx;     // sum y x                    (p)
  Mat sum_yyxx;   // sum y^2 x x^T              (p x p)
  Mat sum_cross;  // sum y (x kron x) x^T       (p^2 x p)

  static OnlineLsCovState init(Index p);
};

OnlineLsCovState ls_cov_update(OnlineLsCovState st,
                               const Eigen::Ref<const Vec>& x, double y);

struct LsCovQuery {
  Vec mean;
  Mat cov;  // population form: denominator t, so one point gives zero
};

LsCovQuery streaming_ls_covariance(const OnlineLsCovState& st,
                                   const Eigen::Ref<const Vec>& theta);

}  // namespace masgrad::moments
