#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "doctest.h"
#include "masgrad/models.hpp"
#include "masgrad/rng.hpp"

using masgrad::Index;
using masgrad::Mat;
using masgrad::Vec;
namespace md = masgrad::models;

namespace {

Vec random_vec(Index d, masgrad::Stream& rng) {
  Vec v(d);
  for (Index i = 0; i < d; ++i) v(i) = rng.gaussian();
  return v;
}

// Central finite difference of a per-sample loss.
Vec fd_gradient(const md::LossModel& m, const Vec& theta, Index i,
                double h = 1e-6) {
  Vec g(theta.size());
  for (Index j = 0; j < theta.size(); ++j) {
    Vec tp = theta, tm = theta;
    tp(j) += h;
    tm(j) -= h;
    g(j) = (m.sample_loss(tp, i) - m.sample_loss(tm, i)) / (2.0 * h);
  }
  return g;
}

void check_gradient_consistency(const md::LossModel& m, masgrad::Stream& rng,
                                int points = 20) {
  for (int k = 0; k < points; ++k) {
    Vec theta = random_vec(m.dim(), rng);
    Vec pooled = Vec::Zero(m.dim());
    for (Index i = 0; i < m.pool_size(); ++i)
      pooled += m.sample_gradient(theta, i);
    pooled /= double(m.pool_size());
    Vec b = m.population_gradient(theta);
    CHECK((pooled - b).norm() <= 1e-12 * std::max(1.0, b.norm()));
  }
}

void check_moment_root_consistency(const md::LossModel& m,
                                   masgrad::Stream& rng, int points = 5) {
  auto opts = m.moment_options();
  for (int k = 0; k < points; ++k) {
    Vec theta = 0.5 * random_vec(m.dim(), rng);
    Mat sigma = m.gradient_covariance(theta);
    double ridge =
        opts.ridge + opts.auto_ridge_scale * sigma.trace() / double(m.dim());
    Mat ridged = sigma + ridge * Mat::Identity(m.dim(), m.dim());

    Mat v = m.moment_root(theta);
    CHECK((v * v.transpose() - sigma).norm() <=
          1e-8 * std::max(1.0, sigma.norm()));
    Mat vi = m.moment_inv_root(theta);
    CHECK((vi * ridged * vi.transpose() - Mat::Identity(m.dim(), m.dim()))
              .norm() < 1e-6);
  }
}

}  // namespace

TEST_CASE("linear fixed design: diagonal hand case") {
  Mat x(4, 2);
  double r2 = std::sqrt(2.0);
  x << r2, 0.0, -r2, 0.0, 0.0, 2.0 * r2, 0.0, -2.0 * r2;
  Vec y = Vec::Zero(4);
  auto m = md::make_linear_fixed_design(x, y, /*sigma=*/2.0);

  // Gram = diag(1, 4), so V = sigma * diag(1, 2) and H = Gram.
  Mat v = m->moment_root(Vec::Zero(2));
  CHECK(v(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(v(1, 1) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(std::abs(v(0, 1)) < 1e-14);
  Mat h = m->hessian(Vec::Zero(2));
  CHECK(h(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(h(1, 1) == doctest::Approx(4.0).epsilon(1e-12));

  // H V^{-1} has eigenvalues {1/sigma, 2/sigma}.
  Mat hv = h * m->moment_inv_root(Vec::Zero(2));
  Eigen::SelfAdjointEigenSolver<Mat> es(hv);
  CHECK(es.eigenvalues()(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(es.eigenvalues()(1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("linear fixed design: pool-exact b, theta-independent V, H = V^2/sigma^2") {
  masgrad::Stream rng(masgrad::derive_key(11, 1));
  Mat x(50, 3);
  for (Index i = 0; i < 50; ++i) x.row(i) = random_vec(3, rng).transpose();
  Vec theta_star(3);
  theta_star << 1.0, -2.0, 0.5;
  auto m = md::make_linear_fixed_design(x, /*sigma=*/1.5, theta_star, 99);

  check_gradient_consistency(*m, rng);
  check_moment_root_consistency(*m, rng);

  Vec t1 = random_vec(3, rng), t2 = random_vec(3, rng);
  CHECK((m->moment_root(t1) - m->moment_root(t2)).norm() == 0.0);
  Mat v = m->moment_root(t1);
  Mat h = m->hessian(t1);
  CHECK((v * v - 1.5 * 1.5 * h).norm() < 1e-10 * h.norm());

  REQUIRE(m->minimizer().has_value());
  Vec opt = *m->minimizer();
  CHECK(m->population_gradient(opt).norm() < 1e-10);
  // The pool optimum sits near the generating parameter.
  CHECK((opt - theta_star).norm() < 1.0);
}

TEST_CASE("gram_conditioned_design: exact Gram condition number") {
  Mat x = md::gram_conditioned_design(500, 4, 30.98, 7);
  Mat gram = x.transpose() * x / 500.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(gram);
  double cond = es.eigenvalues()(3) / es.eigenvalues()(0);
  CHECK(cond == doctest::Approx(30.98).epsilon(1e-10));
}

TEST_CASE("logistic GLM: balanced pairs give zero gradient at the origin") {
  Mat x(4, 2);
  x << 1.0, 0.5, 1.0, 0.5, -0.3, 2.0, -0.3, 2.0;
  Vec y(4);
  y << 1.0, 0.0, 1.0, 0.0;  // each design point appears with both labels
  auto m = md::make_glm({md::Cumulant::logistic, x, y});
  CHECK(m->population_gradient(Vec::Zero(2)).norm() < 1e-15);
}

TEST_CASE("GLM: sample gradients match finite differences") {
  masgrad::Stream rng(masgrad::derive_key(11, 2));
  for (auto cum : {md::Cumulant::logistic, md::Cumulant::poisson,
                   md::Cumulant::gaussian}) {
    Vec w_star(3);
    w_star << 0.4, -0.2, 0.7;
    auto m = md::make_glm_generated(cum, 40, 3, w_star, 123);
    for (int k = 0; k < 8; ++k) {
      Vec theta = 0.5 * random_vec(3, rng);
      Index i = static_cast<Index>(rng.uniform_index(40));
      Vec g = m->sample_gradient(theta, i);
      Vec fd = fd_gradient(*m, theta, i);
      CHECK((g - fd).norm() <= 1e-5 * std::max(1.0, g.norm()));
    }
  }
}

TEST_CASE("GLM: pool consistency, PSD Hessians, Newton minimizer") {
  masgrad::Stream rng(masgrad::derive_key(11, 3));
  Vec w_star(4);
  w_star << 1.2, 1.8, 1.5, 1.1;
  auto m = md::make_glm_generated(md::Cumulant::logistic, 200, 4, w_star, 5);

  check_gradient_consistency(*m, rng);
  check_moment_root_consistency(*m, rng);

  for (int k = 0; k < 5; ++k) {
    Mat h = m->hessian(random_vec(4, rng));
    Eigen::SelfAdjointEigenSolver<Mat> es(h);
    CHECK(es.eigenvalues().minCoeff() > -1e-10);
  }

  REQUIRE(m->minimizer().has_value());
  CHECK(m->population_gradient(*m->minimizer()).norm() < 1e-8);
}

TEST_CASE("GLM: logistic labels are binary, poisson predictor is clamped") {
  Vec w(2);
  w << 40.0, 40.0;  // extreme predictor magnitudes
  auto lm = md::make_glm_generated(md::Cumulant::logistic, 30, 2, w, 3);
  for (Index i = 0; i < 30; ++i) {
    double loss = lm->sample_loss(w, i);
    CHECK(std::isfinite(loss));
  }
  auto pm = md::make_glm_generated(md::Cumulant::poisson, 30, 2, w, 3);
  CHECK(std::isfinite(pm->population_loss(w)));
  CHECK(std::isfinite(pm->population_gradient(w).norm()));
}

TEST_CASE("mixture: analytic gradients and Hessian match finite differences") {
  masgrad::Stream rng(masgrad::derive_key(11, 4));
  md::MixtureSpec spec;
  spec.means = Vec(3);
  spec.means << 1.0, 2.0, 3.0;
  spec.sigma = 1.0 / 3.3;
  spec.n_pool = 60;
  spec.seed = 17;
  auto m = md::make_mixture(spec);

  for (int k = 0; k < 10; ++k) {
    Vec theta = spec.means + 0.3 * random_vec(3, rng);
    Index i = static_cast<Index>(rng.uniform_index(spec.n_pool));
    Vec g = m->sample_gradient(theta, i);
    Vec fd = fd_gradient(*m, theta, i);
    CHECK((g - fd).norm() <= 1e-4 * std::max(1.0, g.norm()));
  }

  Vec theta = spec.means + 0.2 * random_vec(3, rng);
  Mat h = m->hessian(theta);
  Mat fd_h(3, 3);
  const double step = 1e-5;
  for (Index j = 0; j < 3; ++j) {
    Vec tp = theta, tm = theta;
    tp(j) += step;
    tm(j) -= step;
    fd_h.col(j) =
        (m->population_gradient(tp) - m->population_gradient(tm)) / (2 * step);
  }
  CHECK((h - fd_h).norm() <= 1e-5 * std::max(1.0, h.norm()));

  check_gradient_consistency(*m, rng, 5);
  check_moment_root_consistency(*m, rng, 3);
}

TEST_CASE("mixture: equal means collapse to a single Gaussian score") {
  md::MixtureSpec spec;
  spec.means = Vec::Constant(3, 2.0);
  spec.sigma = 0.5;
  spec.n_pool = 10;
  spec.seed = 4;
  auto m = md::make_mixture(spec);

  Vec theta = Vec::Constant(3, 1.3);  // all components sit at the same point
  for (Index i = 0; i < spec.n_pool; ++i) {
    Vec g = m->sample_gradient(theta, i);
    // Uniform weights: every coordinate carries q_j = 1/3 of the score.
    CHECK(std::abs(g(0) - g(1)) < 1e-13);
    CHECK(std::abs(g(1) - g(2)) < 1e-13);
    double score_fd = fd_gradient(*m, theta, i).sum();
    CHECK(g.sum() == doctest::Approx(score_fd).epsilon(1e-6));
  }
}

TEST_CASE("shallow net: backprop matches finite differences away from kinks") {
  masgrad::Stream rng(masgrad::derive_key(11, 5));
  md::ShallowNetSpec spec;
  spec.input_dim = 4;
  spec.hidden = 3;
  spec.noise = 0.01;
  spec.n_pool = 50;
  spec.seed = 21;
  auto m = md::make_shallow_net(spec);

  int accepted = 0;
  for (int k = 0; k < 200 && accepted < 12; ++k) {
    Vec theta = random_vec(m->dim(), rng);
    Index i = static_cast<Index>(rng.uniform_index(spec.n_pool));
    auto fw = md::net_forward(spec, theta, m->pool().x.row(i).transpose());
    if (fw.z1.cwiseAbs().minCoeff() < 1e-3 || std::abs(fw.z2) < 1e-3) continue;
    ++accepted;
    Vec g = m->sample_gradient(theta, i);
    Vec fd = fd_gradient(*m, theta, i);
    CHECK((g - fd).norm() <= 1e-5 * std::max(1.0, g.norm()));
  }
  CHECK(accepted >= 12);

  check_gradient_consistency(*m, rng, 5);
  check_moment_root_consistency(*m, rng, 3);
}

TEST_CASE("shallow net: well-specified truth beats random weights") {
  md::ShallowNetSpec spec;
  spec.seed = 9;
  auto m = md::make_shallow_net(spec);
  masgrad::Stream rng(masgrad::derive_key(11, 6));
  double at_truth = m->population_loss(m->reference());
  CHECK(at_truth < 0.01);  // noise 0.01 => residual variance ~ 5e-5
  double at_random = m->population_loss(random_vec(m->dim(), rng));
  CHECK(at_truth < at_random);
}

TEST_CASE("shallow net: parameter packing round-trips") {
  md::ShallowNetSpec spec;
  spec.input_dim = 2;
  spec.hidden = 2;
  Mat w1(2, 2);
  w1 << 1.0, 2.0, 3.0, 4.0;
  Vec w2(2);
  w2 << 5.0, 6.0;
  Vec packed = md::pack_net(w1, w2);
  CHECK(packed.size() == 6);
  CHECK(packed(0) == 1.0);
  CHECK(packed(1) == 2.0);  // W1 rows first, row-by-row
  CHECK(packed(4) == 5.0);
  auto parts = md::unpack_net(spec, packed);
  CHECK((parts.w1 - w1).norm() == 0.0);
  CHECK((parts.w2 - w2).norm() == 0.0);
}

TEST_CASE("pool_population_moments: two-point quadratic pool by hand") {
  Mat x(2, 1);
  x << 1.0, 1.0;
  Vec y(2);
  y << 0.0, 2.0;
  auto m = md::make_glm({md::Cumulant::gaussian, x, y});
  Vec theta(1);
  theta << 0.5;
  auto est = md::pool_population_moments(*m, theta);
  // Gradients are theta - y: {0.5, -1.5}; mean -0.5, population variance 1.
  CHECK(est.mean_grad(0) == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(est.cov(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  REQUIRE(est.inv_root.has_value());
  CHECK((*est.inv_root)(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("lasso prox problem: gradient, values, and weighted prox") {
  masgrad::Stream rng(masgrad::derive_key(11, 7));
  Mat x(30, 2);
  for (Index i = 0; i < 30; ++i) x.row(i) = random_vec(2, rng).transpose();
  Vec y(30);
  for (Index i = 0; i < 30; ++i) y(i) = rng.gaussian();
  Mat v = Vec::Constant(2, 1.0).asDiagonal();
  auto prob = md::make_prox_problem_lasso(x, y, 0.3, v);

  Vec w = random_vec(2, rng);
  CHECK(prob.reg_value(w) == doctest::Approx(0.3 * w.lpNorm<1>()));
  double f = prob.smooth_value(w);
  CHECK(f == doctest::Approx((x * w - y).squaredNorm() / 60.0).epsilon(1e-12));

  Vec g = prob.smooth_grad(w);
  const double h = 1e-6;
  for (Index j = 0; j < 2; ++j) {
    Vec wp = w, wm = w;
    wp(j) += h;
    wm(j) -= h;
    double fd = (prob.smooth_value(wp) - prob.smooth_value(wm)) / (2 * h);
    CHECK(g(j) == doctest::Approx(fd).epsilon(1e-5));
  }

  // Weighted soft threshold: point (2, -0.5), scales (1, 1/4), lambda 1.
  auto l1 = md::make_prox_problem_lasso(x, y, 1.0, v);
  Vec point(2), scales(2);
  point << 2.0, -0.5;
  scales << 1.0, 0.25;
  Vec u = l1.reg_prox(point, scales);
  CHECK(u(0) == doctest::Approx(1.0));
  CHECK(u(1) == doctest::Approx(-0.25));
}

TEST_CASE("pool CSV loader: features then response") {
  auto path = std::filesystem::temp_directory_path() / "masgrad_pool_test.csv";
  {
    std::ofstream out(path);
    out << "1.5,2.0,0.0\n-0.5,1.0,1.0\n";
  }
  auto pool = md::load_pool_csv(path.string());
  CHECK(pool.x.rows() == 2);
  CHECK(pool.x.cols() == 2);
  CHECK(pool.x(0, 0) == 1.5);
  CHECK(pool.y(1) == 1.0);
  {
    std::ofstream out(path);
    out << "1.0,2.0\n1.0\n";  // ragged
  }
  CHECK_THROWS_AS(md::load_pool_csv(path.string()), std::runtime_error);
  std::filesystem::remove(path);
}
