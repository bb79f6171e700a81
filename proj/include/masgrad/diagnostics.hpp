#pragma once

// Condition numbers of the adjusted and unadjusted dynamics, the (T, n)
// planners behind the convergence guarantees, closed-form discretization
// bounds for the surrogate diffusions, and empirical summaries of trajectory
// ensembles.  Everything here is a pure function over immutable inputs.

#include <string>
#include <vector>

#include "masgrad/chains.hpp"
#include "masgrad/models.hpp"
#include "masgrad/types.hpp"

namespace masgrad::diagnostics {

// Extremes of the V(w)-whitened Hessian H(v) over all grid pairs (v, w).
struct ConditionReport {
  double alpha = 0.0;  // min eigenvalue of V(w)^{-1/2} H(v) V(w)^{-1/2}
  double gamma = 0.0;  // max eigenvalue of the same family
  double kappa_gd = 0.0;       // max lmax(H) / min lmin(H) over the grid
  double kappa_masgrad = 0.0;  // gamma / alpha
  Index grid_size = 0;
};

ConditionReport condition_numbers(const models::LossModel& model,
                                  const std::vector<Vec>& theta_grid);

// Deterministic grid of points around the visited trajectory envelope,
// interpolated toward a center point (which is always included last).
std::vector<Vec> envelope_grid(const chains::TrajectoryEnsemble& e,
                               const Vec& center, int target = 50);

struct PlannerOutput {
  long long iterations = 0;  // T
  long long batch = 0;       // n
  double total_samples = 0.0;  // n * T, as a float to avoid overflow
  // Echoed inputs.
  double eps = 0.0;
  double delta = 0.0;
  double l0_gap = 0.0;
  double vmax = 0.0;
  double alpha = 0.0;
  double gamma = 0.0;
  int dim = 0;
  std::string note;
};

// T = ceil((gamma/alpha) log(2 gap / eps)), n = ceil(4 p vmax / (alpha eps)).
// eps >= 2 gap would give T <= 0; that case returns T = 1 with a note.
PlannerOutput plan_strongly_convex(double eps, double l0_gap, double alpha,
                                   double gamma, int p, double vmax);

// T = ceil((2 gamma gap + p delta^2) / eps^2 * max(vmax, 1)),
// n = ceil(T / delta^2).
PlannerOutput plan_nonconvex(double eps, double delta, double l0_gap,
                             double gamma, int p, double vmax);

struct BoundParams {
  double lipschitz = 0.0;      // drift Lipschitz constant
  double bound_m = 0.0;        // drift magnitude bound M on the visited range
  double expansiveness = 1.0;  // one-step expansiveness delta of the map
  double eta = 0.0;
  double beta = 0.0;
  int dim = 1;
  int steps = 0;  // k
};

// sqrt(2 l^2 M^2 eta^4 / 3 + 2 l^2 p eta^3 / beta) * sum_{i<k} delta^i,
// with the geometric sum in closed form.
double w2_discretization_bound(const BoundParams& b);

// (l^2 M^2 beta eta^3 / 6 + l^2 p eta^2 / 2) * k.
double kl_discretization_bound(const BoundParams& b);

struct DistanceReport {
  Vec ks;  // per-coordinate two-sample Kolmogorov-Smirnov statistic
  Vec w2;  // per-coordinate exact 1-D Wasserstein-2 (quantile coupling)
  Index size_a = 0;
  Index size_b = 0;
};

// Distances between the chain marginals of two ensembles at a given step.
DistanceReport empirical_distance(const chains::TrajectoryEnsemble& a,
                                  const chains::TrajectoryEnsemble& b,
                                  int step);

// Asymptotic two-sample KS critical value c(level) sqrt((m+n)/(m n)) at the
// 5% level.
double ks_critical_5pct(Index m, Index n);

struct EnsembleSummary {
  Mat mean;  // (steps+1) x p
  Mat lo95;  // 2.5% quantile across chains
  Mat hi95;  // 97.5% quantile across chains
};

EnsembleSummary ensemble_summary(const chains::TrajectoryEnsemble& e);

// Empirical quantile with linear interpolation between order statistics
// (rank position q (n-1)).
double interp_quantile(std::vector<double> xs, double q);

struct LogErrorSeries {
  Vec mean;  // mean over chains of log ||theta_t - theta*||, per step
  Vec lo95;
  Vec hi95;
  double slope = 0.0;  // least-squares slope of mean over the window
  int window_lo = 0;
  int window_hi = 0;
};

// Errors are floored at 1e-300 before the log so exact hits stay finite.
// window_hi = -1 means the last step.
LogErrorSeries log_error_series(const chains::TrajectoryEnsemble& e,
                                const Vec& theta_star, int window_lo = 0,
                                int window_hi = -1);

}  // namespace masgrad::diagnostics
