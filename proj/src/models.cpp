#include "masgrad/models.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "masgrad/linalg.hpp"
#include "masgrad/rng.hpp"

namespace masgrad::models {

namespace {

constexpr double kCovRatioTol = 1e-10;
// Absolute ridge floor for the plug-in moment families (mixture, net); the
// gradient scale there is O(1), so 1e-12 never disturbs a live covariance.
constexpr double kRidgeFloor = 1e-12;

Vec gaussian_vec(Index d, Stream& rng) {
  Vec v(d);
  for (Index i = 0; i < d; ++i) v(i) = rng.gaussian();
  return v;
}

Mat gaussian_mat(Index r, Index c, Stream& rng) {
  Mat m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.gaussian();
  return m;
}

double effective_ridge(const Mat& cov, const moments::MomentOptions& opts) {
  double ridge = opts.ridge;
  if (opts.auto_ridge_scale > 0.0)
    ridge += opts.auto_ridge_scale * cov.trace() / double(cov.cols());
  return ridge;
}

Mat root_from_cov(const Mat& cov, const moments::MomentOptions& opts,
                  bool inverse) {
  Mat work = cov;
  double ridge = effective_ridge(cov, opts);
  if (ridge > 0.0) work += ridge * Mat::Identity(cov.rows(), cov.cols());
  if (opts.diagonal) {
    Vec d = work.diagonal();
    double dmax = d.maxCoeff();
    if (dmax <= 0.0 || d.minCoeff() <= kCovRatioTol * dmax)
      throw std::runtime_error("moment root: singular diagonal covariance");
    Vec r = inverse ? Vec(d.cwiseSqrt().cwiseInverse()) : Vec(d.cwiseSqrt());
    return Mat(r.asDiagonal());
  }
  return inverse ? linalg::dense_inverse_root(work, kCovRatioTol)
                 : linalg::dense_root(work, kCovRatioTol);
}

}  // namespace

Mat pool_gradients(const LossModel& model, const Eigen::Ref<const Vec>& theta) {
  Mat g(model.pool_size(), model.dim());
  for (Index i = 0; i < model.pool_size(); ++i)
    g.row(i) = model.sample_gradient(theta, i).transpose();
  return g;
}

moments::MomentEstimate pool_population_moments(
    const LossModel& model, const Eigen::Ref<const Vec>& theta) {
  return moments::population_moments(pool_gradients(model, theta),
                                     model.moment_options());
}

double LossModel::population_loss(const Eigen::Ref<const Vec>& theta) const {
  double acc = 0.0;
  for (Index i = 0; i < pool_size(); ++i) acc += sample_loss(theta, i);
  return acc / double(pool_size());
}

Vec LossModel::population_gradient(const Eigen::Ref<const Vec>& theta) const {
  Vec acc = Vec::Zero(dim());
  for (Index i = 0; i < pool_size(); ++i) acc += sample_gradient(theta, i);
  return acc / double(pool_size());
}

Mat LossModel::gradient_covariance(const Eigen::Ref<const Vec>& theta) const {
  auto opts = moment_options();
  opts.want_inv_root = false;
  return moments::population_moments(pool_gradients(*this, theta), opts).cov;
}

Mat LossModel::moment_root(const Eigen::Ref<const Vec>& theta) const {
  return root_from_cov(gradient_covariance(theta), moment_options(), false);
}

Mat LossModel::moment_inv_root(const Eigen::Ref<const Vec>& theta) const {
  return root_from_cov(gradient_covariance(theta), moment_options(), true);
}

// ---- fixed-design linear ---------------------------------------------------

namespace {

class LinearModel final : public LossModel {
 public:
  LinearModel(Mat x, Vec y, double sigma) : sigma_(sigma) {
    if (sigma <= 0.0)
      throw std::invalid_argument("linear model: sigma must be positive");
    if (x.rows() < 2 || x.rows() < x.cols())
      throw std::invalid_argument("linear model: need N >= max(2, p) rows");
    if (y.size() != x.rows())
      throw std::invalid_argument("linear model: response length mismatch");
    pool_.x = std::move(x);
    pool_.y = std::move(y);
    const double n = double(pool_.x.rows());
    gram_ = pool_.x.transpose() * pool_.x / n;
    v_ = sigma_ * linalg::dense_root(gram_);  // throws if rank deficient
    v_inv_ = linalg::dense_inverse_root(gram_) / sigma_;
    theta_hat_ = gram_.ldlt().solve(pool_.x.transpose() * pool_.y / n);
  }

  Index dim() const override { return gram_.rows(); }
  Index pool_size() const override { return pool_.x.rows(); }
  const PoolData& pool() const override { return pool_; }

  double sample_loss(const Eigen::Ref<const Vec>& theta,
                     Index i) const override {
    double r = pool_.x.row(i).dot(theta) - pool_.y(i);
    return 0.5 * r * r;
  }

  Vec sample_gradient(const Eigen::Ref<const Vec>& theta,
                      Index i) const override {
    return (pool_.x.row(i).dot(theta) - pool_.y(i)) *
           pool_.x.row(i).transpose();
  }

  Mat hessian(const Eigen::Ref<const Vec>&) const override { return gram_; }

  Vec population_gradient(const Eigen::Ref<const Vec>& theta) const override {
    return gram_ * (theta - theta_hat_);
  }

  Mat gradient_covariance(const Eigen::Ref<const Vec>&) const override {
    return sigma_ * sigma_ * gram_;
  }

  Mat moment_root(const Eigen::Ref<const Vec>&) const override { return v_; }
  Mat moment_inv_root(const Eigen::Ref<const Vec>&) const override {
    return v_inv_;
  }

  std::optional<Vec> minimizer() const override { return theta_hat_; }
  Vec reference() const override { return theta_hat_; }

 private:
  PoolData pool_;
  double sigma_;
  Mat gram_, v_, v_inv_;
  Vec theta_hat_;
};

}  // namespace

std::shared_ptr<const LossModel> make_linear_fixed_design(
    const Eigen::Ref<const Mat>& x, const Eigen::Ref<const Vec>& y,
    double sigma) {
  return std::make_shared<LinearModel>(x, y, sigma);
}

std::shared_ptr<const LossModel> make_linear_fixed_design(
    const Eigen::Ref<const Mat>& x, double sigma,
    const Eigen::Ref<const Vec>& theta_star, std::uint64_t seed) {
  if (theta_star.size() != x.cols())
    throw std::invalid_argument("linear model: theta_star length mismatch");
  Stream noise(derive_key(seed, stream::noise));
  Vec y = x * theta_star;
  for (Index i = 0; i < y.size(); ++i) y(i) += sigma * noise.gaussian();
  return std::make_shared<LinearModel>(x, y, sigma);
}

Mat gram_conditioned_design(Index n, Index p, double cond, std::uint64_t seed) {
  if (cond < 1.0)
    throw std::invalid_argument("gram_conditioned_design: cond must be >= 1");
  if (n < p + 1)
    throw std::invalid_argument("gram_conditioned_design: need n > p");
  Stream rng(derive_key(seed, stream::pool));
  Mat x0 = gaussian_mat(n, p, rng);
  Mat g0 = x0.transpose() * x0 / double(n);
  Eigen::SelfAdjointEigenSolver<Mat> es(g0);
  Vec lam = es.eigenvalues();
  double lmin = lam.minCoeff(), lmax = lam.maxCoeff();
  // Affine spectrum rescale onto [1, cond] in the Gram's own eigenbasis,
  // then a basis change makes the new Gram exact.
  Vec target(p);
  for (Index i = 0; i < p; ++i)
    target(i) =
        (p == 1) ? cond
                 : 1.0 + (lam(i) - lmin) * (cond - 1.0) / (lmax - lmin);
  Mat u = es.eigenvectors();
  Mat g0_inv_root =
      u * lam.cwiseSqrt().cwiseInverse().asDiagonal() * u.transpose();
  Mat gt_root = u * target.cwiseSqrt().asDiagonal() * u.transpose();
  return x0 * g0_inv_root * gt_root;
}

// ---- generalized linear models ----------------------------------------------

const char* cumulant_name(Cumulant c) {
  switch (c) {
    case Cumulant::logistic: return "logistic";
    case Cumulant::poisson: return "poisson";
    case Cumulant::gaussian: return "gaussian";
  }
  return "unknown";
}

namespace {

constexpr double kPredictorClamp = 30.0;

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  double e = std::exp(t);
  return e / (1.0 + e);
}

class GlmModel final : public LossModel {
 public:
  GlmModel(Cumulant cumulant, Mat x, Vec y) : cumulant_(cumulant) {
    if (x.rows() < 2)
      throw std::invalid_argument("glm: need at least two pool samples");
    if (y.size() != x.rows())
      throw std::invalid_argument("glm: response length mismatch");
    pool_.x = std::move(x);
    pool_.y = std::move(y);
    solve_erm();
  }

  Index dim() const override { return pool_.x.cols(); }
  Index pool_size() const override { return pool_.x.rows(); }
  const PoolData& pool() const override { return pool_; }

  double sample_loss(const Eigen::Ref<const Vec>& theta,
                     Index i) const override {
    double t = predictor(theta, i);
    return -pool_.y(i) * t + cum_value(t);
  }

  Vec sample_gradient(const Eigen::Ref<const Vec>& theta,
                      Index i) const override {
    double t = predictor(theta, i);
    return (cum_d1(t) - pool_.y(i)) * pool_.x.row(i).transpose();
  }

  Mat hessian(const Eigen::Ref<const Vec>& theta) const override {
    Mat h = Mat::Zero(dim(), dim());
    for (Index i = 0; i < pool_size(); ++i)
      h += cum_d2(predictor(theta, i)) * pool_.x.row(i).transpose() *
           pool_.x.row(i);
    return h / double(pool_size());
  }

  std::optional<Vec> minimizer() const override { return erm_; }
  Vec reference() const override {
    if (erm_) return *erm_;
    return Vec::Zero(dim());
  }

 private:
  double predictor(const Eigen::Ref<const Vec>& theta, Index i) const {
    double t = pool_.x.row(i).dot(theta);
    if (cumulant_ == Cumulant::poisson && std::abs(t) > kPredictorClamp) {
      if (!clamp_warned_.exchange(true))
        std::fprintf(stderr,
                     "glm(poisson): linear predictor clamped to |t| <= %g\n",
                     kPredictorClamp);
      t = t > 0.0 ? kPredictorClamp : -kPredictorClamp;
    }
    return t;
  }

  double cum_value(double t) const {
    switch (cumulant_) {
      case Cumulant::logistic: return t > kPredictorClamp ? t : std::log1p(std::exp(t));
      case Cumulant::poisson: return std::exp(t);
      case Cumulant::gaussian: return 0.5 * t * t;
    }
    return 0.0;
  }

  double cum_d1(double t) const {
    switch (cumulant_) {
      case Cumulant::logistic: return sigmoid(t);
      case Cumulant::poisson: return std::exp(t);
      case Cumulant::gaussian: return t;
    }
    return 0.0;
  }

  double cum_d2(double t) const {
    switch (cumulant_) {
      case Cumulant::logistic: {
        double s = sigmoid(t);
        return s * (1.0 - s);
      }
      case Cumulant::poisson: return std::exp(t);
      case Cumulant::gaussian: return 1.0;
    }
    return 0.0;
  }

  // Damped Newton on the pool loss; the pool ERM is the plotted truth.
  void solve_erm() {
    Vec theta = Vec::Zero(dim());
    double loss = population_loss(theta);
    for (int it = 0; it < 500; ++it) {
      Vec b = population_gradient(theta);
      if (b.norm() <= 1e-10) {
        erm_ = theta;
        return;
      }
      Mat h = hessian(theta);
      h += 1e-12 * std::max(1.0, h.trace() / double(dim())) *
           Mat::Identity(dim(), dim());
      Vec step = h.ldlt().solve(b);
      if (!step.allFinite()) return;
      double s = 1.0;
      while (s > 1e-10) {
        Vec cand = theta - s * step;
        double cand_loss = population_loss(cand);
        if (std::isfinite(cand_loss) && cand_loss <= loss) {
          theta = cand;
          loss = cand_loss;
          break;
        }
        s *= 0.5;
      }
      if (s <= 1e-10) return;  // no descent: leave erm_ unset
    }
  }

  Cumulant cumulant_;
  PoolData pool_;
  std::optional<Vec> erm_;
  mutable std::atomic<bool> clamp_warned_{false};
};

}  // namespace

std::shared_ptr<const LossModel> make_glm(const GlmSpec& spec) {
  return std::make_shared<GlmModel>(spec.cumulant, spec.x, spec.y);
}

std::shared_ptr<const LossModel> make_glm_generated(Cumulant cumulant,
                                                    Index n_pool, Index p,
                                                    const Vec& w_star,
                                                    std::uint64_t seed) {
  if (w_star.size() != p)
    throw std::invalid_argument("make_glm_generated: w_star length mismatch");
  Stream pool_rng(derive_key(seed, stream::pool));
  Stream resp_rng(derive_key(seed, stream::noise));
  Mat x = gaussian_mat(n_pool, p, pool_rng);
  Vec y(n_pool);
  for (Index i = 0; i < n_pool; ++i) {
    double t = x.row(i).dot(w_star);
    switch (cumulant) {
      case Cumulant::logistic:
        y(i) = resp_rng.uniform01() < sigmoid(t) ? 1.0 : 0.0;
        break;
      case Cumulant::poisson:
        y(i) = double(resp_rng.poisson(
            std::exp(std::clamp(t, -kPredictorClamp, kPredictorClamp))));
        break;
      case Cumulant::gaussian:
        y(i) = t + resp_rng.gaussian();
        break;
    }
  }
  return std::make_shared<GlmModel>(cumulant, std::move(x), std::move(y));
}

// ---- Gaussian location mixture ----------------------------------------------

namespace {

class MixtureModel final : public LossModel {
 public:
  MixtureModel(MixtureSpec spec, Vec zs) : spec_(std::move(spec)) {
    if (spec_.means.size() < 1)
      throw std::invalid_argument("mixture: need at least one component");
    if (spec_.sigma <= 0.0)
      throw std::invalid_argument("mixture: sigma must be positive");
    if (zs.size() < 2)
      throw std::invalid_argument("mixture: need at least two pool samples");
    pool_.x = zs;
    pool_.y = Vec::Zero(zs.size());
  }

  Index dim() const override { return spec_.means.size(); }
  Index pool_size() const override { return pool_.x.rows(); }
  const PoolData& pool() const override { return pool_; }

  double sample_loss(const Eigen::Ref<const Vec>& theta,
                     Index i) const override {
    return -log_density(theta, pool_.x(i, 0));
  }

  Vec sample_gradient(const Eigen::Ref<const Vec>& theta,
                      Index i) const override {
    const double z = pool_.x(i, 0);
    Vec r = responsibilities(theta, z);
    Vec s = (Vec::Constant(dim(), z) - theta) / (spec_.sigma * spec_.sigma);
    return -r.cwiseProduct(s);
  }

  Mat hessian(const Eigen::Ref<const Vec>& theta) const override {
    const double sig2 = spec_.sigma * spec_.sigma;
    Mat h = Mat::Zero(dim(), dim());
    for (Index i = 0; i < pool_size(); ++i) {
      const double z = pool_.x(i, 0);
      Vec r = responsibilities(theta, z);
      Vec s = (Vec::Constant(dim(), z) - theta) / sig2;
      Vec rs = r.cwiseProduct(s);
      h += Mat((r / sig2 - r.cwiseProduct(s.cwiseAbs2())).asDiagonal());
      h += rs * rs.transpose();
    }
    return h / double(pool_size());
  }

  moments::MomentOptions moment_options() const override {
    moments::MomentOptions opts;
    opts.auto_ridge_scale = spec_.ridge_scale;
    // Absolute floor: the relative ridge vanishes at a fully dead parameter
    // point (zero gradient covariance), which must still root to a finite V.
    opts.ridge = kRidgeFloor;
    return opts;
  }

  Vec reference() const override { return spec_.means; }

 private:
  Vec log_weights(const Eigen::Ref<const Vec>& theta, double z) const {
    const double sig = spec_.sigma;
    Vec lw(dim());
    for (Index j = 0; j < dim(); ++j) {
      double d = (z - theta(j)) / sig;
      lw(j) = -0.5 * d * d;
    }
    return lw.array() - std::log(double(dim())) -
           std::log(sig * std::sqrt(2.0 * M_PI));
  }

  double log_density(const Eigen::Ref<const Vec>& theta, double z) const {
    Vec lw = log_weights(theta, z);
    double m = lw.maxCoeff();
    return m + std::log((lw.array() - m).exp().sum());
  }

  Vec responsibilities(const Eigen::Ref<const Vec>& theta, double z) const {
    Vec lw = log_weights(theta, z);
    double m = lw.maxCoeff();
    Vec w = (lw.array() - m).exp();
    return w / w.sum();
  }

  MixtureSpec spec_;
  PoolData pool_;
};

}  // namespace

std::shared_ptr<const LossModel> make_mixture(const MixtureSpec& spec,
                                              const Vec& pool_z) {
  return std::make_shared<MixtureModel>(spec, pool_z);
}

std::shared_ptr<const LossModel> make_mixture(const MixtureSpec& spec) {
  Stream rng(derive_key(spec.seed, stream::pool));
  Vec z(spec.n_pool);
  const Index k = spec.means.size();
  for (Index i = 0; i < spec.n_pool; ++i) {
    Index comp = static_cast<Index>(rng.uniform_index(std::uint64_t(k)));
    z(i) = spec.means(comp) + spec.sigma * rng.gaussian();
  }
  return std::make_shared<MixtureModel>(spec, z);
}

// ---- shallow ReLU network -----------------------------------------------------

Vec pack_net(const Eigen::Ref<const Mat>& w1,
             const Eigen::Ref<const Vec>& w2) {
  const Index k = w1.rows(), d = w1.cols();
  if (w2.size() != k)
    throw std::invalid_argument("pack_net: W2 length must equal hidden size");
  Vec theta(k * d + k);
  for (Index r = 0; r < k; ++r) theta.segment(r * d, d) = w1.row(r);
  theta.tail(k) = w2;
  return theta;
}

NetParams unpack_net(const ShallowNetSpec& spec,
                     const Eigen::Ref<const Vec>& theta) {
  const Index k = spec.hidden, d = spec.input_dim;
  if (theta.size() != k * d + k)
    throw std::invalid_argument("unpack_net: parameter length mismatch");
  NetParams p;
  p.w1 = Mat(k, d);
  for (Index r = 0; r < k; ++r) p.w1.row(r) = theta.segment(r * d, d);
  p.w2 = theta.tail(k);
  return p;
}

NetForward net_forward(const ShallowNetSpec& spec,
                       const Eigen::Ref<const Vec>& theta,
                       const Eigen::Ref<const Vec>& x) {
  auto p = unpack_net(spec, theta);
  NetForward f;
  f.z1 = Vec::Ones(spec.hidden) + p.w1 * x;
  Vec a1 = f.z1.cwiseMax(0.0);
  f.z2 = 1.0 + p.w2.dot(a1);
  f.out = std::max(f.z2, 0.0);
  return f;
}

namespace {

class ShallowNetModel final : public LossModel {
 public:
  ShallowNetModel(ShallowNetSpec spec, PoolData pool, Vec truth)
      : spec_(std::move(spec)), pool_(std::move(pool)), truth_(std::move(truth)) {
    if (pool_.x.cols() != spec_.input_dim)
      throw std::invalid_argument("shallow net: pool feature width mismatch");
    if (pool_.y.size() != pool_.x.rows())
      throw std::invalid_argument("shallow net: response length mismatch");
  }

  Index dim() const override {
    return spec_.hidden * spec_.input_dim + spec_.hidden;
  }
  Index pool_size() const override { return pool_.x.rows(); }
  const PoolData& pool() const override { return pool_; }

  double sample_loss(const Eigen::Ref<const Vec>& theta,
                     Index i) const override {
    auto f = net_forward(spec_, theta, pool_.x.row(i).transpose());
    double r = f.out - pool_.y(i);
    return 0.5 * r * r;
  }

  Vec sample_gradient(const Eigen::Ref<const Vec>& theta,
                      Index i) const override {
    const Index k = spec_.hidden, d = spec_.input_dim;
    auto p = unpack_net(spec_, theta);
    Vec x = pool_.x.row(i).transpose();
    Vec z1 = Vec::Ones(k) + p.w1 * x;
    Vec a1 = z1.cwiseMax(0.0);
    double z2 = 1.0 + p.w2.dot(a1);
    double out = std::max(z2, 0.0);
    double g2 = (out - pool_.y(i)) * (z2 > 0.0 ? 1.0 : 0.0);
    Vec dw2 = g2 * a1;
    Vec dz1 = (g2 * p.w2.array() * (z1.array() > 0.0).cast<double>()).matrix();
    Vec grad(dim());
    for (Index r = 0; r < k; ++r) grad.segment(r * d, d) = dz1(r) * x;
    grad.tail(k) = dw2;
    return grad;
  }

  // Pooled Hessian via central differences of the pooled gradient; the exact
  // Hessian is only defined away from the ReLU kinks anyway.
  Mat hessian(const Eigen::Ref<const Vec>& theta) const override {
    const Index p = dim();
    const double h = 1e-5 * std::max(1.0, theta.norm());
    Mat out(p, p);
    for (Index j = 0; j < p; ++j) {
      Vec tp = theta, tm = theta;
      tp(j) += h;
      tm(j) -= h;
      out.col(j) =
          (population_gradient(tp) - population_gradient(tm)) / (2.0 * h);
    }
    return 0.5 * (out + out.transpose());
  }

  moments::MomentOptions moment_options() const override {
    moments::MomentOptions opts;
    opts.auto_ridge_scale = spec_.ridge_scale;
    // Absolute floor: the relative ridge vanishes at a fully dead parameter
    // point (zero gradient covariance), which must still root to a finite V.
    opts.ridge = kRidgeFloor;
    return opts;
  }

  Vec reference() const override { return truth_; }

 private:
  ShallowNetSpec spec_;
  PoolData pool_;
  Vec truth_;
};

}  // namespace

std::shared_ptr<const LossModel> make_shallow_net(const ShallowNetSpec& spec,
                                                  const PoolData& pool) {
  Stream truth_rng(derive_key(spec.seed, stream::truth));
  Vec truth = gaussian_vec(spec.hidden * spec.input_dim + spec.hidden, truth_rng);
  return std::make_shared<ShallowNetModel>(spec, pool, truth);
}

std::shared_ptr<const LossModel> make_shallow_net(const ShallowNetSpec& spec) {
  Stream truth_rng(derive_key(spec.seed, stream::truth));
  Stream pool_rng(derive_key(spec.seed, stream::pool));
  Stream noise_rng(derive_key(spec.seed, stream::noise));
  Vec truth = gaussian_vec(spec.hidden * spec.input_dim + spec.hidden, truth_rng);
  PoolData pool;
  pool.x = gaussian_mat(spec.n_pool, spec.input_dim, pool_rng);
  pool.y = Vec(spec.n_pool);
  for (Index i = 0; i < spec.n_pool; ++i)
    pool.y(i) = net_forward(spec, truth, pool.x.row(i).transpose()).out +
                spec.noise * noise_rng.gaussian();
  return std::make_shared<ShallowNetModel>(spec, std::move(pool),
                                           std::move(truth));
}

// ---- lasso ---------------------------------------------------------------------

prox::ProxProblem make_prox_problem_lasso(const Eigen::Ref<const Mat>& x,
                                          const Eigen::Ref<const Vec>& y,
                                          double lambda,
                                          const Eigen::Ref<const Mat>& v_adjust,
                                          bool diagonal_only) {
  if (lambda < 0.0)
    throw std::invalid_argument("lasso: lambda must be non-negative");
  if (y.size() != x.rows())
    throw std::invalid_argument("lasso: response length mismatch");
  if (v_adjust.rows() != x.cols() || v_adjust.cols() != x.cols())
    throw std::invalid_argument("lasso: V shape mismatch");
  auto xs = std::make_shared<Mat>(x);
  auto ys = std::make_shared<Vec>(y);
  const double n = double(x.rows());

  prox::ProxProblem prob;
  prob.dim = x.cols();
  prob.smooth_value = [xs, ys, n](const Vec& w) {
    return (*xs * w - *ys).squaredNorm() / (2.0 * n);
  };
  prob.smooth_grad = [xs, ys, n](const Vec& w) {
    return Vec(xs->transpose() * (*xs * w - *ys) / n);
  };
  prob.reg_value = [lambda](const Vec& w) { return lambda * w.lpNorm<1>(); };
  prob.reg_prox = [lambda](const Vec& v, const Vec& s) {
    Vec u(v.size());
    for (Index i = 0; i < v.size(); ++i) {
      double thresh = lambda * s(i);
      u(i) = std::copysign(std::max(std::abs(v(i)) - thresh, 0.0), v(i));
    }
    return u;
  };
  prob.reg_separable = true;
  prob.v_adjust = v_adjust;
  prob.diagonal_only = diagonal_only;
  return prob;
}

// ---- CSV pool loader --------------------------------------------------------------

PoolData load_pool_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_pool_csv: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error("load_pool_csv: non-numeric cell '" + cell +
                                 "' in " + path);
      }
    }
    if (row.size() < 2)
      throw std::runtime_error("load_pool_csv: rows need >= 2 columns");
    if (width == 0) width = row.size();
    if (row.size() != width)
      throw std::runtime_error("load_pool_csv: ragged rows in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("load_pool_csv: empty file");
  PoolData pool;
  pool.x = Mat(rows.size(), width - 1);
  pool.y = Vec(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j + 1 < width; ++j) pool.x(i, j) = rows[i][j];
    pool.y(i) = rows[i][width - 1];
  }
  return pool;
}

}  // namespace masgrad::models
