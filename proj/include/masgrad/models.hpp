#pragma once

// The model family the chains run on.  Every model owns a finite pool of N
// samples that is treated as the population: b, Sigma, and V are pool-exact
// (denominator N) unless a closed form exists, as in the fixed-design linear
// model.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "masgrad/moments.hpp"
#include "masgrad/prox.hpp"
#include "masgrad/types.hpp"

namespace masgrad::models {

struct PoolData {
  Mat x;  // one row per sample
  Vec y;
};

class LossModel {
 public:
  virtual ~LossModel() = default;

  virtual Index dim() const = 0;
  virtual Index pool_size() const = 0;
  virtual double sample_loss(const Eigen::Ref<const Vec>& theta,
                             Index i) const = 0;
  virtual Vec sample_gradient(const Eigen::Ref<const Vec>& theta,
                              Index i) const = 0;
  // Pooled Hessian of the population loss at theta.
  virtual Mat hessian(const Eigen::Ref<const Vec>& theta) const = 0;
  virtual const PoolData& pool() const = 0;

  virtual double population_loss(const Eigen::Ref<const Vec>& theta) const;
  virtual Vec population_gradient(const Eigen::Ref<const Vec>& theta) const;
  virtual Mat gradient_covariance(const Eigen::Ref<const Vec>& theta) const;
  virtual Mat moment_root(const Eigen::Ref<const Vec>& theta) const;
  virtual Mat moment_inv_root(const Eigen::Ref<const Vec>& theta) const;

  // Moment options the model wants applied to plug-in estimates (ridge for
  // the ill-conditioned families).
  virtual moments::MomentOptions moment_options() const { return {}; }

  // Exact population optimum when one is computable.
  virtual std::optional<Vec> minimizer() const { return std::nullopt; }
  // Reference point used as the plotted truth: the minimizer when known,
  // otherwise the generating parameter.
  virtual Vec reference() const = 0;
};

// N x p matrix of per-sample gradients over the whole pool.
Mat pool_gradients(const LossModel& model, const Eigen::Ref<const Vec>& theta);

// Exact pool moments at theta (pool treated as the population).
moments::MomentEstimate pool_population_moments(
    const LossModel& model, const Eigen::Ref<const Vec>& theta);

// ---- fixed-design linear -------------------------------------------------

// Model with analytic moments: b(theta) = G (theta - theta_hat) with
// G = X^T X / N and theta_hat the pool least-squares solution, V = sigma
// G^{1/2} (theta-independent), H = G.
std::shared_ptr<const LossModel> make_linear_fixed_design(
    const Eigen::Ref<const Mat>& x, const Eigen::Ref<const Vec>& y,
    double sigma);
// Draws y = X theta_star + sigma * noise once from `seed`.
std::shared_ptr<const LossModel> make_linear_fixed_design(
    const Eigen::Ref<const Mat>& x, double sigma,
    const Eigen::Ref<const Vec>& theta_star, std::uint64_t seed);

// Gaussian design whose empirical Gram matrix X^T X / N is rescaled along
// its own eigenbasis so that its condition number equals `cond` exactly.
Mat gram_conditioned_design(Index n, Index p, double cond, std::uint64_t seed);

// ---- generalized linear models --------------------------------------------

enum class Cumulant { logistic, poisson, gaussian };

const char* cumulant_name(Cumulant c);

struct GlmSpec {
  Cumulant cumulant = Cumulant::logistic;
  Mat x;
  Vec y;
};

std::shared_ptr<const LossModel> make_glm(const GlmSpec& spec);
// Standard Gaussian design, responses drawn from the model at w_star.
std::shared_ptr<const LossModel> make_glm_generated(Cumulant cumulant,
                                                    Index n_pool, Index p,
                                                    const Vec& w_star,
                                                    std::uint64_t seed);

// ---- Gaussian location mixture --------------------------------------------

struct MixtureSpec {
  Vec means;           // component means (the generating truth)
  double sigma = 1.0;  // common component scale
  Index n_pool = 500;
  std::uint64_t seed = 0;
  double ridge_scale = 1e-8;  // auto ridge for plug-in covariances
};

std::shared_ptr<const LossModel> make_mixture(const MixtureSpec& spec);
// Uses the provided scalar draws instead of sampling a pool.
std::shared_ptr<const LossModel> make_mixture(const MixtureSpec& spec,
                                              const Vec& pool_z);

// ---- shallow ReLU network --------------------------------------------------

// f_w(x) = relu(1 + W2 relu(1 + W1 x)), square loss, well-specified data.
// Parameters pack as [W1 row 0, ..., W1 row k-1, W2].
struct ShallowNetSpec {
  Index input_dim = 4;
  Index hidden = 3;
  double noise = 0.01;
  Index n_pool = 300;
  std::uint64_t seed = 0;
  double ridge_scale = 1e-8;
};

struct NetParams {
  Mat w1;  // hidden x input
  Vec w2;  // hidden
};

struct NetForward {
  Vec z1;     // hidden pre-activations
  double z2;  // output pre-activation
  double out;
};

Vec pack_net(const Eigen::Ref<const Mat>& w1, const Eigen::Ref<const Vec>& w2);
NetParams unpack_net(const ShallowNetSpec& spec,
                     const Eigen::Ref<const Vec>& theta);
NetForward net_forward(const ShallowNetSpec& spec,
                       const Eigen::Ref<const Vec>& theta,
                       const Eigen::Ref<const Vec>& x);

std::shared_ptr<const LossModel> make_shallow_net(const ShallowNetSpec& spec);
std::shared_ptr<const LossModel> make_shallow_net(const ShallowNetSpec& spec,
                                                  const PoolData& pool);

// ---- lasso -----------------------------------------------------------------

// g(w) = ||Xw - y||^2 / (2N), h = lambda ||.||_1, proximal metric V.
prox::ProxProblem make_prox_problem_lasso(const Eigen::Ref<const Mat>& x,
                                          const Eigen::Ref<const Vec>& y,
                                          double lambda,
                                          const Eigen::Ref<const Mat>& v_adjust,
                                          bool diagonal_only = false);

// One row per sample: feature columns, response last.
PoolData load_pool_csv(const std::string& path);

}  // namespace masgrad::models
