#pragma once

// Experiment harness: named desk-scale experiment configurations, ensemble
// execution, and reproducible CSV/manifest/plot emission.  Re-running any
// configuration with the same seed produces byte-identical CSV bodies;
// wall-clock timestamps are confined to the manifest.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "masgrad/chains.hpp"
#include "masgrad/models.hpp"
#include "masgrad/prox.hpp"
#include "masgrad/types.hpp"

namespace masgrad::experiments {

// Resolution order: built-in per-experiment defaults, then config file
// values, then command-line flags.  Zero means "use the experiment default"
// for the numeric fields that have one.
struct ExperimentConfig {
  std::string experiment = "linear";
  int chains = 0;  // 0 picks the experiment default (100; lasso runs 1)
  int steps = 100;
  int batch = 0;      // minibatch size n; 0 picks the experiment default
  double eta = 0.0;   // 0 picks the default (linear/lasso: 1/gamma)
  std::uint64_t seed = 12345;
  int pool = 0;       // population size N; 0 picks the default
  int dim = 0;        // parameter dimension p; 0 picks the default

  // Model-specific knobs.
  double snr = 3.3;                             // mixture
  std::vector<double> means = {1.0, 2.0, 3.0};  // mixture component means
  double lambda = 0.1;                          // lasso penalty
  double noise = 0.01;                          // shallow net label noise
  int hidden = 3;                               // shallow net width
  double cond = 30.98;                          // linear Gram condition
  double sigma = 1.0;                           // linear noise scale
  int reps = 50;                                // shallow sweep repetitions

  std::vector<std::string> methods;      // empty: experiment default list
  std::vector<int> dist_steps = {10, 50, 100};
  int slope_lo = 0;
  int slope_hi = -1;  // -1: last step
  std::vector<double> init;  // explicit start point; empty: truth + Gaussian
  std::string data_csv;      // optional external pool (features..., response)
  std::string out_dir = "out";
  bool plots = false;
  int threads = 0;  // 0: hardware concurrency

  std::vector<int> bench_dims = {1, 2, 4, 8, 16, 32};
  std::vector<int> bench_counts = {100, 1000, 10000};
};

// Parses a config JSON file; a manifest (object with a "config" key) is
// accepted too, so a finished run can be replayed directly.  Unknown fields
// are an error and are named in the message.
ExperimentConfig load_config(const std::string& path);

// MASGRAD_SEED, when set, overrides the config seed.
void apply_env_seed(ExperimentConfig& cfg);

// Fully resolved experiment: defaults filled in, step size computed where
// the prescription is 1/gamma, model and start point constructed.
struct ResolvedExperiment {
  ExperimentConfig cfg;
  std::shared_ptr<const models::LossModel> model;  // trajectory experiments
  std::optional<prox::ProxProblem> lasso;          // lasso only
  Vec truth;  // log-error reference: minimizer when known, else generator
  Vec init;
  std::vector<chains::Method> methods;  // sorted by name, deduplicated
};

ResolvedExperiment resolve_experiment(const ExperimentConfig& cfg);

struct RunResult {
  std::vector<std::string> files;  // everything written, manifest last
  int divergences = 0;
  double win_fraction = -1.0;  // shallow sweep only
};

// Dispatches on cfg.experiment: linear / logistic / mixture / lasso write
// trajectories.csv, summary.csv, logerr.csv, distances.csv and manifest.json;
// shallow-nn runs the repetition sweep; bench-linalg and bound-check write
// their own tables.
RunResult run_experiment(const ExperimentConfig& cfg);

// 50 x (diff_masgrad, sgd) repetition sweep over random initializations;
// writes sweep.csv (rep, method, final_loss) and the win fraction.
RunResult run_shallow_sweep(const ExperimentConfig& cfg);

// Streaming-vs-dense inverse-root timings and error table (bench.csv).
RunResult bench_linalg(const ExperimentConfig& cfg);

// Coupled Ornstein-Uhlenbeck discretization check (boundcheck.csv).
RunResult bound_check(const ExperimentConfig& cfg);

// Shortest round-trip decimal formatting used for every CSV real.
std::string format_double(double v);

}  // namespace masgrad::experiments
