#include "masgrad/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

#include "masgrad/linalg.hpp"

namespace masgrad::diagnostics {

namespace {

constexpr double kLogFloor = 1e-300;

double geometric_sum(double ratio, int k) {
  if (k <= 0) return 0.0;
  if (std::abs(ratio - 1.0) < 1e-14) return double(k);
  return (1.0 - std::pow(ratio, k)) / (1.0 - ratio);
}

void check_bound_params(const BoundParams& b) {
  if (b.lipschitz < 0.0 || b.bound_m < 0.0)
    throw std::invalid_argument("lipschitz and bound_m must be non-negative");
  if (!(b.expansiveness > 0.0))
    throw std::invalid_argument("expansiveness must be positive");
  if (!(b.eta > 0.0) || !(b.beta > 0.0))
    throw std::invalid_argument("eta and beta must be positive");
  if (b.dim < 1 || b.steps < 0)
    throw std::invalid_argument("dim must be >= 1 and steps >= 0");
}

double ks_statistic(const std::vector<double>& xa,
                    const std::vector<double>& xb) {
  const double m = double(xa.size());
  const double n = double(xb.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < xa.size() && j < xb.size()) {
    double v = std::min(xa[i], xb[j]);
    while (i < xa.size() && xa[i] <= v) ++i;
    while (j < xb.size() && xb[j] <= v) ++j;
    d = std::max(d, std::abs(double(i) / m - double(j) / n));
  }
  return d;
}

// Exact 1-D W2 between two empirical measures: the quantile functions are
// step functions with breakpoints on a common 1/(m n) lattice, so the
// coupling integral is a finite sum with integer segment boundaries.
double w2_quantile_coupling(const std::vector<double>& xa,
                            const std::vector<double>& xb) {
  const long long m = (long long)(xa.size());
  const long long n = (long long)(xb.size());
  const long long total = m * n;
  long long cur = 0;
  std::size_t i = 0, j = 0;
  double acc = 0.0;
  while (cur < total) {
    long long next = std::min((long long)(i + 1) * n, (long long)(j + 1) * m);
    double d = xa[i] - xb[j];
    acc += double(next - cur) / double(total) * d * d;
    if (next == (long long)(i + 1) * n) ++i;
    if (next == (long long)(j + 1) * m) ++j;
    cur = next;
  }
  return std::sqrt(acc);
}

std::vector<double> marginal(const chains::TrajectoryEnsemble& e, int step,
                             Index coord) {
  std::vector<double> out(e.chains.size());
  for (std::size_t c = 0; c < e.chains.size(); ++c)
    out[c] = e.chains[c](step, coord);
  return out;
}

}  // namespace

ConditionReport condition_numbers(const models::LossModel& model,
                                  const std::vector<Vec>& theta_grid) {
  if (theta_grid.empty())
    throw std::invalid_argument("condition_numbers needs a nonempty grid");
  const Index p = model.dim();

  std::vector<Mat> hessians;
  hessians.reserve(theta_grid.size());
  double h_min = std::numeric_limits<double>::infinity();
  double h_max = 0.0;
  for (std::size_t g = 0; g < theta_grid.size(); ++g) {
    if (theta_grid[g].size() != p)
      throw std::invalid_argument("grid point dimension mismatch");
    Mat h = model.hessian(theta_grid[g]);
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (h + h.transpose()));
    double lmin = es.eigenvalues().minCoeff();
    if (lmin <= 0.0)
      throw std::runtime_error(
          "hessian not positive definite at grid point " + std::to_string(g) +
          " (lmin=" + std::to_string(lmin) + ")");
    h_min = std::min(h_min, lmin);
    h_max = std::max(h_max, es.eigenvalues().maxCoeff());
    hessians.push_back(std::move(h));
  }

  ConditionReport rep;
  rep.grid_size = Index(theta_grid.size());
  rep.kappa_gd = h_max / h_min;

  double alpha = std::numeric_limits<double>::infinity();
  double gamma = 0.0;
  for (const Vec& w : theta_grid) {
    Mat v = model.moment_root(w);
    Mat v_mhalf = linalg::dense_inverse_root(0.5 * (v + v.transpose()));
    for (const Mat& h : hessians) {
      Mat whitened = v_mhalf * h * v_mhalf;
      Eigen::SelfAdjointEigenSolver<Mat> es(
          0.5 * (whitened + whitened.transpose()));
      alpha = std::min(alpha, es.eigenvalues().minCoeff());
      gamma = std::max(gamma, es.eigenvalues().maxCoeff());
    }
  }
  rep.alpha = alpha;
  rep.gamma = gamma;
  rep.kappa_masgrad = gamma / alpha;
  return rep;
}

std::vector<Vec> envelope_grid(const chains::TrajectoryEnsemble& e,
                               const Vec& center, int target) {
  if (target < 1) throw std::invalid_argument("target must be >= 1");
  std::vector<Vec> grid;
  grid.reserve(std::size_t(target));
  const Index n_chains = Index(e.chains.size());
  if (n_chains == 0) return {center};
  const Index rows = e.chains[0].rows();
  for (int k = 0; k + 1 < target; ++k) {
    Index c = Index(k) % n_chains;
    Index t = Index((long long)(k)*rows / target);
    if (t >= rows) t = rows - 1;
    double mix = double(k % 3) / 3.0;  // 0, 1/3, 2/3 toward the center
    Vec point = (1.0 - mix) * e.chains[c].row(t).transpose() + mix * center;
    grid.push_back(std::move(point));
  }
  grid.push_back(center);
  return grid;
}

PlannerOutput plan_strongly_convex(double eps, double l0_gap, double alpha,
                                   double gamma, int p, double vmax) {
  if (!(eps > 0.0) || !(l0_gap > 0.0) || !(alpha > 0.0) || !(gamma > 0.0) ||
      p < 1 || !(vmax > 0.0))
    throw std::invalid_argument("planner inputs must be positive");
  PlannerOutput out;
  out.eps = eps;
  out.l0_gap = l0_gap;
  out.alpha = alpha;
  out.gamma = gamma;
  out.dim = p;
  out.vmax = vmax;

  double t_real = (gamma / alpha) * std::log(2.0 * l0_gap / eps);
  if (t_real <= 0.0) {
    out.iterations = 1;
    out.note = "eps >= 2 * initial gap; a single iteration already suffices";
  } else {
    out.iterations = (long long)(std::ceil(t_real));
  }
  out.batch = (long long)(std::ceil(4.0 * double(p) * vmax / (alpha * eps)));
  out.total_samples = double(out.iterations) * double(out.batch);
  return out;
}

PlannerOutput plan_nonconvex(double eps, double delta, double l0_gap,
                             double gamma, int p, double vmax) {
  if (!(eps > 0.0) || !(delta > 0.0) || !(l0_gap > 0.0) || !(gamma > 0.0) ||
      p < 1 || !(vmax > 0.0))
    throw std::invalid_argument("planner inputs must be positive");
  PlannerOutput out;
  out.eps = eps;
  out.delta = delta;
  out.l0_gap = l0_gap;
  out.gamma = gamma;
  out.dim = p;
  out.vmax = vmax;

  double t_real = (2.0 * gamma * l0_gap + double(p) * delta * delta) /
                  (eps * eps) * std::max(vmax, 1.0);
  out.iterations = (long long)(std::ceil(t_real));
  out.batch =
      (long long)(std::ceil(double(out.iterations) / (delta * delta)));
  out.total_samples = double(out.iterations) * double(out.batch);
  return out;
}

double w2_discretization_bound(const BoundParams& b) {
  check_bound_params(b);
  const double l2 = b.lipschitz * b.lipschitz;
  const double eta = b.eta;
  double pref = std::sqrt(2.0 * l2 * b.bound_m * b.bound_m * eta * eta * eta *
                              eta / 3.0 +
                          2.0 * l2 * double(b.dim) * eta * eta * eta / b.beta);
  return pref * geometric_sum(b.expansiveness, b.steps);
}

double kl_discretization_bound(const BoundParams& b) {
  check_bound_params(b);
  const double l2 = b.lipschitz * b.lipschitz;
  const double eta = b.eta;
  return (l2 * b.bound_m * b.bound_m * b.beta * eta * eta * eta / 6.0 +
          l2 * double(b.dim) * eta * eta / 2.0) *
         double(b.steps);
}

double ks_critical_5pct(Index m, Index n) {
  if (m < 1 || n < 1) throw std::invalid_argument("sample sizes must be >= 1");
  return 1.3581 * std::sqrt(double(m + n) / (double(m) * double(n)));
}

DistanceReport empirical_distance(const chains::TrajectoryEnsemble& a,
                                  const chains::TrajectoryEnsemble& b,
                                  int step) {
  if (a.chains.size() < 2 || b.chains.size() < 2)
    throw std::invalid_argument("both ensembles need at least 2 chains");
  if (a.dim() != b.dim())
    throw std::invalid_argument("ensemble dimensions differ");
  if (step < 0 || step > a.steps() || step > b.steps())
    throw std::invalid_argument("step not recorded in both ensembles");

  const Index p = a.dim();
  DistanceReport rep;
  rep.ks.resize(p);
  rep.w2.resize(p);
  rep.size_a = Index(a.chains.size());
  rep.size_b = Index(b.chains.size());
  for (Index j = 0; j < p; ++j) {
    auto xa = marginal(a, step, j);
    auto xb = marginal(b, step, j);
    std::sort(xa.begin(), xa.end());
    std::sort(xb.begin(), xb.end());
    rep.ks(j) = ks_statistic(xa, xb);
    rep.w2(j) = w2_quantile_coupling(xa, xb);
  }
  return rep;
}

EnsembleSummary ensemble_summary(const chains::TrajectoryEnsemble& e) {
  const std::size_t n_chains = e.chains.size();
  if (n_chains < 2)
    throw std::invalid_argument("ensemble_summary needs at least 2 chains");
  const Index rows = e.chains[0].rows();
  const Index p = e.dim();

  EnsembleSummary s;
  s.mean.resize(rows, p);
  s.lo95.resize(rows, p);
  s.hi95.resize(rows, p);
  std::vector<double> vals(n_chains);
  for (Index t = 0; t < rows; ++t) {
    for (Index j = 0; j < p; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < n_chains; ++c) {
        vals[c] = e.chains[c](t, j);
        acc += vals[c];
      }
      s.mean(t, j) = acc / double(n_chains);
      std::sort(vals.begin(), vals.end());
      // vals is already sorted; interp_quantile sorts again harmlessly.
      s.lo95(t, j) = interp_quantile(vals, 0.025);
      s.hi95(t, j) = interp_quantile(vals, 0.975);
    }
  }
  return s;
}

double interp_quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw std::invalid_argument("empty sample");
  if (!(q >= 0.0) || !(q <= 1.0))
    throw std::invalid_argument("quantile level must lie in [0, 1]");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  double h = q * double(n - 1);
  std::size_t lo = std::size_t(std::floor(h));
  if (lo + 1 >= n) return xs[n - 1];
  double frac = h - double(lo);
  return xs[lo] + frac * (xs[lo + 1] - xs[lo]);
}

LogErrorSeries log_error_series(const chains::TrajectoryEnsemble& e,
                                const Vec& theta_star, int window_lo,
                                int window_hi) {
  const std::size_t n_chains = e.chains.size();
  if (n_chains == 0) throw std::invalid_argument("empty ensemble");
  if (theta_star.size() != e.dim())
    throw std::invalid_argument("theta_star dimension mismatch");
  const Index rows = e.chains[0].rows();
  const int steps = int(rows) - 1;
  if (window_hi < 0) window_hi = steps;
  if (window_lo < 0 || window_hi > steps || window_lo >= window_hi)
    throw std::invalid_argument("slope window must satisfy 0 <= lo < hi <= T");

  LogErrorSeries out;
  out.mean.resize(rows);
  out.lo95.resize(rows);
  out.hi95.resize(rows);
  out.window_lo = window_lo;
  out.window_hi = window_hi;

  std::vector<double> le(n_chains);
  for (Index t = 0; t < rows; ++t) {
    double acc = 0.0;
    for (std::size_t c = 0; c < n_chains; ++c) {
      double err = (e.chains[c].row(t).transpose() - theta_star).norm();
      le[c] = std::log(std::max(err, kLogFloor));
      acc += le[c];
    }
    out.mean(t) = acc / double(n_chains);
    out.lo95(t) = interp_quantile(le, 0.025);
    out.hi95(t) = interp_quantile(le, 0.975);
  }

  // Least-squares slope of the mean series over the window.
  double tbar = 0.0, ybar = 0.0;
  const int nw = window_hi - window_lo + 1;
  for (int t = window_lo; t <= window_hi; ++t) {
    tbar += t;
    ybar += out.mean(t);
  }
  tbar /= nw;
  ybar /= nw;
  double num = 0.0, den = 0.0;
  for (int t = window_lo; t <= window_hi; ++t) {
    num += (t - tbar) * (out.mean(t) - ybar);
    den += (t - tbar) * (t - tbar);
  }
  out.slope = num / den;
  return out;
}

}  // namespace masgrad::diagnostics
