// masgrad-lab: runs the named experiments and writes CSV tables, an echoing
// manifest, and optional SVG plots.  Precedence: built-in defaults, then
// --config file values, then explicit flags.  MASGRAD_SEED overrides the seed.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "masgrad/experiments.hpp"

namespace ex = masgrad::experiments;

int main(int argc, char** argv) {
  CLI::App app{
      "masgrad-lab: moment-adjusted stochastic gradient experiment harness"};
  app.fallthrough(true);
  app.require_subcommand(0, 1);

  std::string config_path;
  app.add_option("--config", config_path,
                 "JSON config file; a finished run's manifest.json also works");

  // Flag values land here; only flags the user actually passed are applied,
  // so config-file values survive unless explicitly overridden.
  ex::ExperimentConfig f;
  auto* o_chains = app.add_option("--chains", f.chains, "chains per method");
  auto* o_steps = app.add_option("--steps", f.steps, "iterations per chain");
  auto* o_batch = app.add_option("--batch", f.batch, "minibatch size n");
  auto* o_eta = app.add_option("--eta", f.eta, "step size");
  auto* o_seed = app.add_option("--seed", f.seed, "master seed");
  auto* o_pool = app.add_option("--pool", f.pool, "pool (population) size N");
  auto* o_dim = app.add_option("--dim", f.dim, "parameter or input dimension");
  auto* o_snr = app.add_option("--snr", f.snr, "mixture separation / sigma");
  auto* o_means = app.add_option("--means", f.means, "mixture component means")
                      ->delimiter(',');
  auto* o_lambda = app.add_option("--lambda", f.lambda, "lasso penalty");
  auto* o_noise = app.add_option("--noise", f.noise, "shallow net label noise");
  auto* o_hidden = app.add_option("--hidden", f.hidden, "shallow net width");
  auto* o_cond =
      app.add_option("--cond", f.cond, "linear design Gram condition number");
  auto* o_sigma = app.add_option("--sigma", f.sigma, "linear noise scale");
  auto* o_reps = app.add_option("--reps", f.reps, "shallow sweep repetitions");
  auto* o_methods =
      app.add_option("--methods", f.methods,
                     "methods to run (sgd, masgrad, diff_sgd, diff_masgrad, "
                     "gd, masgd, madprox)")
          ->delimiter(',');
  auto* o_dist = app.add_option("--dist-steps", f.dist_steps,
                                "steps at which to compare distributions")
                     ->delimiter(',');
  auto* o_slo = app.add_option("--slope-lo", f.slope_lo,
                               "log-error slope window start");
  auto* o_shi = app.add_option("--slope-hi", f.slope_hi,
                               "log-error slope window end (-1: last step)");
  auto* o_init = app.add_option("--init", f.init,
                                "explicit start point (default: truth + "
                                "standard Gaussian)")
                     ->delimiter(',');
  auto* o_data = app.add_option(
      "--data", f.data_csv,
      "external pool CSV (feature columns, response last); linear/logistic");
  auto* o_out = app.add_option("--out", f.out_dir, "output directory");
  auto* o_plots = app.add_flag("--plots", f.plots, "write SVG plots");
  auto* o_threads =
      app.add_option("--threads", f.threads, "worker threads (0: hardware)");
  auto* o_bdims = app.add_option("--bench-dims", f.bench_dims,
                                 "bench-linalg dimensions")
                      ->delimiter(',');
  auto* o_bcounts = app.add_option("--bench-counts", f.bench_counts,
                                   "bench-linalg update counts")
                        ->delimiter(',');

  app.add_subcommand("linear", "fixed-design linear regression ensembles");
  app.add_subcommand("logistic", "logistic regression ensembles");
  app.add_subcommand("mixture", "Gaussian location mixture ensembles");
  app.add_subcommand("shallow-nn", "shallow tanh network repetition sweep");
  app.add_subcommand("lasso", "moment-adjusted proximal lasso path");
  app.add_subcommand("bench-linalg", "streaming inverse-root benchmark");
  app.add_subcommand("bound-check",
                     "coupled Ornstein-Uhlenbeck discretization bound check");

  CLI11_PARSE(app, argc, argv);

  try {
    ex::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = ex::load_config(config_path);

    if (o_chains->count()) cfg.chains = f.chains;
    if (o_steps->count()) cfg.steps = f.steps;
    if (o_batch->count()) cfg.batch = f.batch;
    if (o_eta->count()) cfg.eta = f.eta;
    if (o_seed->count()) cfg.seed = f.seed;
    if (o_pool->count()) cfg.pool = f.pool;
    if (o_dim->count()) cfg.dim = f.dim;
    if (o_snr->count()) cfg.snr = f.snr;
    if (o_means->count()) cfg.means = f.means;
    if (o_lambda->count()) cfg.lambda = f.lambda;
    if (o_noise->count()) cfg.noise = f.noise;
    if (o_hidden->count()) cfg.hidden = f.hidden;
    if (o_cond->count()) cfg.cond = f.cond;
    if (o_sigma->count()) cfg.sigma = f.sigma;
    if (o_reps->count()) cfg.reps = f.reps;
    if (o_methods->count()) cfg.methods = f.methods;
    if (o_dist->count()) cfg.dist_steps = f.dist_steps;
    if (o_slo->count()) cfg.slope_lo = f.slope_lo;
    if (o_shi->count()) cfg.slope_hi = f.slope_hi;
    if (o_init->count()) cfg.init = f.init;
    if (o_data->count()) cfg.data_csv = f.data_csv;
    if (o_out->count()) cfg.out_dir = f.out_dir;
    if (o_plots->count()) cfg.plots = f.plots;
    if (o_threads->count()) cfg.threads = f.threads;
    if (o_bdims->count()) cfg.bench_dims = f.bench_dims;
    if (o_bcounts->count()) cfg.bench_counts = f.bench_counts;

    auto subs = app.get_subcommands();
    if (!subs.empty()) cfg.experiment = subs[0]->get_name();

    ex::RunResult res = ex::run_experiment(cfg);
    for (const auto& file : res.files) std::cout << "wrote " << file << "\n";
    if (res.divergences > 0)
      std::cout << res.divergences
                << " divergent chain(s); see the manifest's divergence list\n";
    if (res.win_fraction >= 0.0)
      std::cout << "win fraction: " << ex::format_double(res.win_fraction)
                << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
