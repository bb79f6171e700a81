#include "masgrad/chains.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>

#include <Eigen/Eigenvalues>

#include "masgrad/linalg.hpp"
#include "masgrad/moments.hpp"

namespace masgrad::chains {

namespace {

constexpr double kInnerTol = 1e-10;
constexpr int kInnerCap = 10000;

void check_config(const ChainConfig& cfg, const Vec& init, Index dim,
                  bool stochastic) {
  if (init.size() != dim)
    throw std::invalid_argument("init dimension does not match the problem");
  if (!(cfg.eta > 0.0))
    throw std::invalid_argument("step size eta must be positive");
  if (cfg.horizon < 0)
    throw std::invalid_argument("horizon must be non-negative");
  if (stochastic && cfg.batch_size <= 0)
    throw std::invalid_argument("batch_size must be positive");
  if (cfg.v_refresh_interval < 1)
    throw std::invalid_argument("v_refresh_interval must be at least 1");
}

Vec minibatch_sum(const Vec& theta, const models::LossModel& model,
                  const std::vector<Index>& idx) {
  Vec sum = Vec::Zero(model.dim());
  for (Index i : idx) sum += model.sample_gradient(theta, i);
  return sum;
}

Vec standard_gaussian(Index p, Stream& noise) {
  Vec g(p);
  for (Index i = 0; i < p; ++i) g(i) = noise.gaussian();
  return g;
}

// V^{-1} with optional caller-owned cache; an empty cache is filled in place.
const Mat& inv_root_for(const Vec& theta, const models::LossModel& model,
                        Mat* cache, Mat& local) {
  if (cache != nullptr) {
    if (cache->size() == 0) *cache = model.moment_inv_root(theta);
    return *cache;
  }
  local = model.moment_inv_root(theta);
  return local;
}

bool is_diagonal(const Mat& v) {
  for (Index j = 0; j < v.cols(); ++j)
    for (Index i = 0; i < v.rows(); ++i)
      if (i != j && v(i, j) != 0.0) return false;
  return true;
}

// One chain given a step map; on a non-finite iterate the remaining rows are
// frozen at the last finite state and the step index is recorded.
ChainResult run_loop(const std::function<Vec(const Vec&, int)>& advance,
                     int horizon, const Vec& init) {
  ChainResult res;
  res.trajectory.resize(horizon + 1, init.size());
  res.trajectory.row(0) = init.transpose();
  Vec cur = init;
  for (int t = 1; t <= horizon; ++t) {
    Vec next;
    try {
      next = advance(cur, t - 1);
    } catch (const std::exception& e) {
      throw std::runtime_error("chain step " + std::to_string(t) + ": " +
                               e.what());
    }
    if (!next.allFinite()) {
      res.diverged_at = t;
      for (int r = t; r <= horizon; ++r) res.trajectory.row(r) = cur.transpose();
      return res;
    }
    res.trajectory.row(t) = next.transpose();
    cur = std::move(next);
  }
  return res;
}

Drift drift_for(Method method, const models::LossModel& model) {
  Drift d;
  if (method == Method::diff_masgrad) {
    d.h = [&model](const Vec& xi) {
      return Vec(model.moment_inv_root(xi) * model.population_gradient(xi));
    };
  } else {
    d.h = [&model](const Vec& xi) { return model.population_gradient(xi); };
    d.noise_transform = [&model](const Vec& xi) {
      return model.moment_root(xi);
    };
  }
  return d;
}

}  // namespace

const char* method_name(Method m) {
  switch (m) {
    case Method::sgd:
      return "sgd";
    case Method::masgrad:
      return "masgrad";
    case Method::diff_sgd:
      return "diff_sgd";
    case Method::diff_masgrad:
      return "diff_masgrad";
    case Method::gd:
      return "gd";
    case Method::masgd:
      return "masgd";
    case Method::madprox:
      return "madprox";
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view name) {
  for (Method m :
       {Method::sgd, Method::masgrad, Method::diff_sgd, Method::diff_masgrad,
        Method::gd, Method::masgd, Method::madprox}) {
    if (name == method_name(m)) return m;
  }
  return std::nullopt;
}

bool method_is_stochastic(Method m) {
  return m == Method::sgd || m == Method::masgrad || m == Method::diff_sgd ||
         m == Method::diff_masgrad;
}

std::vector<Index> sample_indices(const models::LossModel& model,
                                  const ChainConfig& cfg, Stream& indices) {
  if (cfg.batch_size <= 0)
    throw std::invalid_argument("batch_size must be positive");
  const auto n = std::uint64_t(model.pool_size());
  std::vector<Index> out(std::size_t(cfg.batch_size));
  for (auto& v : out) v = Index(indices.uniform_index(n));
  return out;
}

Vec sgd_step(const Vec& theta, const models::LossModel& model,
             const ChainConfig& cfg, Stream& indices) {
  auto idx = sample_indices(model, cfg, indices);
  Vec mean = minibatch_sum(theta, model, idx) / double(idx.size());
  return theta - cfg.eta * mean;
}

Vec masgrad_step(const Vec& theta, const models::LossModel& model,
                 const ChainConfig& cfg, Stream& indices, Mat* v_inv_cache) {
  // Indices are always drawn first so sgd and masgrad consume the stream
  // identically and stay comparable step for step.
  auto idx = sample_indices(model, cfg, indices);
  if (cfg.v_source == VSource::minibatch) {
    Mat grads(Index(idx.size()), model.dim());
    for (std::size_t r = 0; r < idx.size(); ++r)
      grads.row(Index(r)) = model.sample_gradient(theta, idx[r]).transpose();
    return theta -
           cfg.eta * moments::adjusted_direction(grads, model.moment_options());
  }
  Vec mean = minibatch_sum(theta, model, idx) / double(idx.size());
  Mat local;
  const Mat& v_inv = inv_root_for(theta, model, v_inv_cache, local);
  return theta - cfg.eta * (v_inv * mean);
}

Vec gd_step(const Vec& theta, const models::LossModel& model,
            const ChainConfig& cfg) {
  return theta - cfg.eta * model.population_gradient(theta);
}

Vec masgd_step(const Vec& theta, const models::LossModel& model,
               const ChainConfig& cfg, Mat* v_inv_cache) {
  Mat local;
  const Mat& v_inv = inv_root_for(theta, model, v_inv_cache, local);
  return theta - cfg.eta * (v_inv * model.population_gradient(theta));
}

Vec diffusion_step(const Vec& xi, const Drift& drift, const ChainConfig& cfg,
                   Stream& noise) {
  if (!drift.h) throw std::invalid_argument("drift has no vector field");
  Vec g = standard_gaussian(xi.size(), noise);
  const double amp = std::sqrt(2.0 * cfg.eta / cfg.beta());
  Vec kick = drift.noise_transform ? Vec(drift.noise_transform(xi) * g) : g;
  return xi - cfg.eta * drift.h(xi) + amp * kick;
}

Vec madprox_step(const Vec& w, const prox::ProxProblem& prob, double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
  if (w.size() != prob.dim)
    throw std::invalid_argument("iterate dimension does not match problem");
  if (prob.v_adjust.rows() != prob.dim || prob.v_adjust.cols() != prob.dim)
    throw std::invalid_argument("v_adjust must be dim x dim");

  Vec grad = prob.smooth_grad(w);

  const bool diag_path =
      prob.reg_separable && (prob.diagonal_only || is_diagonal(prob.v_adjust));
  if (diag_path) {
    Vec d = prob.v_adjust.diagonal();
    if ((d.array() <= 0.0).any())
      throw std::runtime_error("v_adjust has a non-positive diagonal entry");
    Vec anchor = w - eta * (grad.array() / d.array()).matrix();
    Vec scale = eta * d.cwiseInverse();
    return prob.reg_prox(anchor, scale);
  }

  // Dense metric: solve the weighted prox subproblem
  //   min_u (1/(2 eta)) (u - anchor)' V (u - anchor) + h(u)
  // by an accelerated proximal loop with L = lmax(V)/eta, stopping on the
  // proximal fixed-point residual.
  Eigen::LDLT<Mat> vldlt(prob.v_adjust);
  if (vldlt.info() != Eigen::Success)
    throw std::runtime_error("v_adjust is not positive definite");
  Vec anchor = w - eta * vldlt.solve(grad);

  Eigen::SelfAdjointEigenSolver<Mat> es(prob.v_adjust);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("eigendecomposition of v_adjust failed");
  const double lip = es.eigenvalues().maxCoeff() / eta;
  if (!(lip > 0.0))
    throw std::runtime_error("v_adjust is not positive definite");
  const Vec scale = Vec::Constant(prob.dim, 1.0 / lip);

  auto subgrad = [&](const Vec& u) {
    return Vec(prob.v_adjust * (u - anchor) / eta);
  };
  auto prox_point = [&](const Vec& u) {
    return prob.reg_prox(u - subgrad(u) / lip, scale);
  };

  Vec u = w;
  Vec u_prev = u;
  double tk = 1.0;
  for (int it = 0; it < kInnerCap; ++it) {
    double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    Vec y = u + ((tk - 1.0) / t_next) * (u - u_prev);
    Vec u_next = prox_point(y);
    Vec fixed = prox_point(u_next);
    if ((fixed - u_next).lpNorm<Eigen::Infinity>() <= kInnerTol) return fixed;
    u_prev = u;
    u = u_next;
    tk = t_next;
  }
  throw std::runtime_error(
      "madprox inner solve did not reach tolerance within 10000 iterations");
}

ChainResult run_chain(const models::LossModel& model, const ChainConfig& cfg,
                      const Vec& init, Method method,
                      std::uint64_t chain_index) {
  check_config(cfg, init, model.dim(), method_is_stochastic(method));
  if (method == Method::madprox)
    throw std::invalid_argument("madprox chains need run_prox_chain");

  ChainRng rng(cfg.seed, chain_index);
  Mat v_cache;

  std::function<Vec(const Vec&, int)> advance;
  switch (method) {
    case Method::sgd:
      advance = [&](const Vec& cur, int) {
        return sgd_step(cur, model, cfg, rng.indices());
      };
      break;
    case Method::masgrad:
      advance = [&](const Vec& cur, int t) {
        if (t % cfg.v_refresh_interval == 0) v_cache.resize(0, 0);
        return masgrad_step(cur, model, cfg, rng.indices(), &v_cache);
      };
      break;
    case Method::gd:
      advance = [&](const Vec& cur, int) { return gd_step(cur, model, cfg); };
      break;
    case Method::masgd:
      advance = [&](const Vec& cur, int t) {
        if (t % cfg.v_refresh_interval == 0) v_cache.resize(0, 0);
        return masgd_step(cur, model, cfg, &v_cache);
      };
      break;
    case Method::diff_sgd:
    case Method::diff_masgrad: {
      Drift drift = drift_for(method, model);
      return run_loop(
          [&, drift](const Vec& cur, int) {
            return diffusion_step(cur, drift, cfg, rng.noise());
          },
          cfg.horizon, init);
    }
    default:
      throw std::invalid_argument("unsupported method");
  }
  return run_loop(advance, cfg.horizon, init);
}

ChainResult run_chain(const Drift& drift, const ChainConfig& cfg,
                      const Vec& init, std::uint64_t chain_index) {
  check_config(cfg, init, init.size(), true);
  ChainRng rng(cfg.seed, chain_index);
  return run_loop(
      [&](const Vec& cur, int) {
        return diffusion_step(cur, drift, cfg, rng.noise());
      },
      cfg.horizon, init);
}

ChainResult run_prox_chain(const prox::ProxProblem& prob,
                           const ChainConfig& cfg, const Vec& init) {
  check_config(cfg, init, prob.dim, false);
  return run_loop(
      [&](const Vec& cur, int) { return madprox_step(cur, prob, cfg.eta); },
      cfg.horizon, init);
}

namespace {

template <typename RunOne>
TrajectoryEnsemble collect_ensemble(Method method, const Vec& init,
                                    int n_chains, int n_threads,
                                    const RunOne& run_one) {
  if (n_chains < 0) throw std::invalid_argument("n_chains must be >= 0");
  TrajectoryEnsemble out;
  out.method = method;
  out.init = init;
  out.chains.resize(std::size_t(n_chains));

  std::vector<ChainResult> results(static_cast<std::size_t>(n_chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_chains));

  int workers = n_threads > 0 ? n_threads
                              : int(std::thread::hardware_concurrency());
  if (workers < 1) workers = 1;
  if (workers > n_chains) workers = n_chains > 0 ? n_chains : 1;

  std::atomic<int> next{0};
  auto body = [&]() {
    for (int c = next.fetch_add(1); c < n_chains; c = next.fetch_add(1)) {
      try {
        results[std::size_t(c)] = run_one(std::uint64_t(c));
      } catch (...) {
        errors[std::size_t(c)] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(workers));
    for (int i = 0; i < workers; ++i) pool.emplace_back(body);
    for (auto& th : pool) th.join();
  }
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);

  for (int c = 0; c < n_chains; ++c) {
    auto& r = results[std::size_t(c)];
    if (r.diverged_at) out.divergences.emplace_back(c, *r.diverged_at);
    out.chains[std::size_t(c)] = std::move(r.trajectory);
  }
  return out;
}

}  // namespace

TrajectoryEnsemble run_ensemble(const models::LossModel& model,
                                const ChainConfig& cfg, const Vec& init,
                                Method method, int n_chains, int n_threads) {
  return collect_ensemble(method, init, n_chains, n_threads,
                          [&](std::uint64_t c) {
                            return run_chain(model, cfg, init, method, c);
                          });
}

TrajectoryEnsemble run_ensemble(const prox::ProxProblem& prob,
                                const ChainConfig& cfg, const Vec& init,
                                int n_chains) {
  return collect_ensemble(Method::madprox, init, n_chains, 1,
                          [&](std::uint64_t) {
                            return run_prox_chain(prob, cfg, init);
                          });
}

}  // namespace masgrad::chains
