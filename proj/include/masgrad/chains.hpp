#pragma once

// Iterate chains: plain and moment-adjusted stochastic gradient steps, their
// deterministic noise-off versions, the discretized-diffusion surrogates, and
// the moment-adjusted proximal method.  Minibatches are bootstrap draws
// (with replacement) from the model pool.

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "masgrad/models.hpp"
#include "masgrad/prox.hpp"
#include "masgrad/rng.hpp"
#include "masgrad/types.hpp"

namespace masgrad::chains {

enum class Method { sgd, masgrad, diff_sgd, diff_masgrad, gd, masgd, madprox };

const char* method_name(Method m);
std::optional<Method> parse_method(std::string_view name);
bool method_is_stochastic(Method m);

enum class VSource { pool, minibatch };

struct ChainConfig {
  double eta = 0.1;
  int batch_size = 25;  // minibatch size n
  int horizon = 100;    // number of steps T
  std::uint64_t seed = 0;
  VSource v_source = VSource::pool;
  // Recompute V every k steps; 1 means fresh at every iterate.
  int v_refresh_interval = 1;

  // Inverse temperature of the surrogate diffusions.  Always recomputed from
  // the current (n, eta) pair, never stored.
  double beta() const { return 2.0 * double(batch_size) / eta; }
};

// Vector field plus optional state-dependent noise transform; an empty
// noise_transform means isotropic unit Gaussians.
struct Drift {
  std::function<Vec(const Vec&)> h;
  std::function<Mat(const Vec&)> noise_transform;
};

// ---- single-step primitives -----------------------------------------------

// Bootstrap minibatch indices (n draws with replacement).
std::vector<Index> sample_indices(const models::LossModel& model,
                                  const ChainConfig& cfg, Stream& indices);

Vec sgd_step(const Vec& theta, const models::LossModel& model,
             const ChainConfig& cfg, Stream& indices);

// Moment-adjusted step.  v_inv_cache, when non-null, is reused as V^{-1}
// if non-empty and refreshed in place otherwise (cache-interval support).
Vec masgrad_step(const Vec& theta, const models::LossModel& model,
                 const ChainConfig& cfg, Stream& indices,
                 Mat* v_inv_cache = nullptr);

Vec gd_step(const Vec& theta, const models::LossModel& model,
            const ChainConfig& cfg);

Vec masgd_step(const Vec& theta, const models::LossModel& model,
               const ChainConfig& cfg, Mat* v_inv_cache = nullptr);

// xi - eta h(xi) + sqrt(2 eta / beta) * (noise_transform(xi)) g.
Vec diffusion_step(const Vec& xi, const Drift& drift, const ChainConfig& cfg,
                   Stream& noise);

// w_{t+1} = argmin_u (1/(2 eta)) ||u - (w - eta V^{-1} grad g(w))||_V^2 + h(u).
// Diagonal V with separable h solves in closed form; dense V runs an inner
// accelerated proximal loop to 1e-10 on the subproblem objective.
Vec madprox_step(const Vec& w, const prox::ProxProblem& prob, double eta);

// ---- whole chains -----------------------------------------------------------

struct ChainResult {
  Mat trajectory;  // (horizon+1) x p; row 0 is the initialization
  // First step index whose iterate went non-finite.  The trajectory holds the
  // last finite state from there on.
  std::optional<int> diverged_at;
};

ChainResult run_chain(const models::LossModel& model, const ChainConfig& cfg,
                      const Vec& init, Method method,
                      std::uint64_t chain_index = 0);
ChainResult run_chain(const Drift& drift, const ChainConfig& cfg,
                      const Vec& init, std::uint64_t chain_index = 0);
ChainResult run_prox_chain(const prox::ProxProblem& prob,
                           const ChainConfig& cfg, const Vec& init);

struct TrajectoryEnsemble {
  Method method = Method::sgd;
  Vec init;
  std::vector<Mat> chains;  // one (horizon+1) x p trajectory per chain
  std::vector<std::pair<int, int>> divergences;  // (chain, step), sorted

  Index steps() const { return chains.empty() ? 0 : chains[0].rows() - 1; }
  Index dim() const { return chains.empty() ? 0 : chains[0].cols(); }
};

// Chains are independent given (seed, chain index); the result is bitwise
// independent of n_threads (0 means hardware concurrency).
TrajectoryEnsemble run_ensemble(const models::LossModel& model,
                                const ChainConfig& cfg, const Vec& init,
                                Method method, int n_chains,
                                int n_threads = 0);
TrajectoryEnsemble run_ensemble(const prox::ProxProblem& prob,
                                const ChainConfig& cfg, const Vec& init,
                                int n_chains);

}  // namespace masgrad::chains
