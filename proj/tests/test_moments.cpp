#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "masgrad/linalg.hpp"
#include "masgrad/moments.hpp"
#include "masgrad/rng.hpp"

using masgrad::Index;
using masgrad::Mat;
using masgrad::Vec;
namespace mm = masgrad::moments;

namespace {

Mat gaussian_mat(Index r, Index c, masgrad::Stream& rng) {
  Mat m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.gaussian();
  return m;
}

double rel_frob(const Mat& a, const Mat& b) {
  return (a - b).norm() / std::max(1e-300, b.norm());
}

}  // namespace

TEST_CASE("batch_moments: two-sample hand case") {
  Mat g(2, 2);
  g << 0.0, 0.0, 2.0, 0.0;
  mm::MomentOptions opts;
  opts.want_inv_root = false;  // covariance here is legitimately singular
  auto est = mm::batch_moments(g, opts);
  CHECK(est.mean_grad(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(est.mean_grad(1) == 0.0);
  CHECK(est.cov(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(est.cov(0, 1) == 0.0);
  CHECK(est.cov(1, 1) == 0.0);
  CHECK(!est.inv_root.has_value());
}

TEST_CASE("batch_moments: covariance matches two-pass oracle, root inverts it") {
  masgrad::Stream rng(masgrad::derive_key(7, 1));
  for (int rep = 0; rep < 30; ++rep) {
    Index p = 1 + static_cast<Index>(rng.uniform_index(6));
    Index n = p + 2 + static_cast<Index>(rng.uniform_index(40));
    Mat g = gaussian_mat(n, p, rng);

    Vec mean = g.colwise().mean().transpose();
    Mat centered = g.rowwise() - mean.transpose();
    Mat cov = centered.transpose() * centered / double(n - 1);

    auto est = mm::batch_moments(g);
    CHECK((est.mean_grad - mean).norm() < 1e-12 * std::max(1.0, mean.norm()));
    CHECK(rel_frob(est.cov, cov) < 1e-12);
    REQUIRE(est.inv_root.has_value());
    const Mat& r = *est.inv_root;
    CHECK(rel_frob(r * est.cov * r.transpose(), Mat::Identity(p, p)) < 1e-8);
  }
}

TEST_CASE("batch_moments: singular covariance throws unless ridged") {
  Mat g(3, 2);
  g << 1.0, 1.0, 1.0, 1.0, 1.0, 1.0;  // identical gradients
  CHECK_THROWS_AS(mm::batch_moments(g), std::runtime_error);

  mm::MomentOptions opts;
  opts.ridge = mm::default_ridge_for(Mat::Identity(2, 2));
  CHECK(opts.ridge == doctest::Approx(1e-8));
  opts.ridge = 1e-4;
  auto est = mm::batch_moments(g, opts);
  REQUIRE(est.inv_root.has_value());
  CHECK(est.inv_root->operator()(0, 0) == doctest::Approx(100.0).epsilon(1e-6));
}

TEST_CASE("batch_moments: fewer than two samples throws") {
  Mat g(1, 3);
  g << 1.0, 2.0, 3.0;
  CHECK_THROWS_AS(mm::batch_moments(g), std::invalid_argument);
}

TEST_CASE("batch_moments: diagonal mode uses only marginal variances") {
  masgrad::Stream rng(masgrad::derive_key(7, 2));
  Mat g = gaussian_mat(60, 3, rng);
  mm::MomentOptions opts;
  opts.diagonal = true;
  auto est = mm::batch_moments(g, opts);
  REQUIRE(est.inv_root.has_value());
  auto full = mm::batch_moments(g);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j) {
      if (i == j)
        CHECK((*est.inv_root)(i, i) ==
              doctest::Approx(1.0 / std::sqrt(full.cov(i, i))).epsilon(1e-12));
      else
        CHECK((*est.inv_root)(i, j) == 0.0);
    }
}

TEST_CASE("population_moments: denominator-N convention") {
  Mat g(2, 1);
  g << 0.0, 2.0;
  auto est = mm::population_moments(g);
  CHECK(est.cov(0, 0) == doctest::Approx(1.0).epsilon(1e-15));  // ((-1)^2+1^2)/2
}

TEST_CASE("adjusted_direction: agrees with inv_root * mean and converges") {
  masgrad::Stream rng(masgrad::derive_key(7, 3));
  Mat g = gaussian_mat(80, 4, rng);
  Vec dir = mm::adjusted_direction(g);
  auto est = mm::batch_moments(g);
  CHECK((dir - *est.inv_root * est.mean_grad).norm() < 1e-13);

  // Fixed Gaussian population: the plug-in direction approaches V^{-1} b.
  Vec mu(3);
  mu << 1.0, -0.5, 2.0;
  Mat a = gaussian_mat(3, 3, rng);
  Mat cov = a * a.transpose() + Mat::Identity(3, 3);
  Mat chol = cov.llt().matrixL();
  Vec target = masgrad::linalg::dense_inverse_root(cov) * mu;

  auto draw_err = [&](Index n) {
    Mat s(n, 3);
    for (Index i = 0; i < n; ++i) {
      Vec z(3);
      for (Index j = 0; j < 3; ++j) z(j) = rng.gaussian();
      s.row(i) = (mu + chol * z).transpose();
    }
    return (mm::adjusted_direction(s) - target).norm();
  };
  double coarse = draw_err(200);
  double fine = draw_err(20000);
  CHECK(fine < coarse);
}

TEST_CASE("self_normalized: one-dimensional hand case") {
  Mat x(2, 1);
  x << 0.0, 2.0;
  Vec mu = Vec::Zero(1);
  auto res = mm::self_normalized(x, mu);
  CHECK(res.m_n(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(res.correction == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(res.lhs(0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("self_normalized: identity lhs = M_n * correction") {
  masgrad::Stream rng(masgrad::derive_key(7, 4));
  for (int rep = 0; rep < 50; ++rep) {
    Index d = 1 + static_cast<Index>(rng.uniform_index(6));
    Index n = d + 2 + static_cast<Index>(rng.uniform_index(50));
    Mat x = gaussian_mat(n, d, rng);
    Vec mu(d);
    for (Index j = 0; j < d; ++j) mu(j) = rng.gaussian();
    auto res = mm::self_normalized(x, mu);
    CHECK(res.m_n.squaredNorm() < double(n));
    Vec expect = res.m_n * res.correction;
    CHECK((res.lhs - expect).norm() <
          1e-10 * std::max(1.0, expect.norm()));

    // Dual route: the symmetric inverse root of the sample covariance gives
    // a rotated check value of identical norm.
    Vec mean = x.colwise().mean().transpose();
    Mat centered = x.rowwise() - mean.transpose();
    Mat cov = centered.transpose() * centered / double(n - 1);
    Vec sym = std::sqrt(double(n)) *
              (masgrad::linalg::dense_inverse_root(cov, 1e-14) * (mean - mu));
    CHECK(sym.norm() ==
          doctest::Approx(expect.norm()).epsilon(1e-8));
  }
}

TEST_CASE("self_normalized: degenerate inputs throw") {
  Mat x(2, 3);  // fewer samples than dimensions
  x.setRandom();
  CHECK_THROWS_AS(mm::self_normalized(x, Vec::Zero(3)), std::invalid_argument);

  Mat same(4, 2);  // all samples identical: V_n singular
  same << 1, 2, 1, 2, 1, 2, 1, 2;
  CHECK_THROWS_AS(mm::self_normalized(same, Vec::Zero(2)), std::runtime_error);
}

TEST_CASE("streaming LS covariance: single point gives zero covariance") {
  auto st = mm::OnlineLsCovState::init(3);
  Vec x(3);
  x << 1.0, -2.0, 0.5;
  st = mm::ls_cov_update(st, x, 0.7);
  Vec theta(3);
  theta << 0.3, 0.1, -1.0;
  auto q = mm::streaming_ls_covariance(st, theta);
  CHECK(q.cov.norm() < 1e-12);
  Vec g = (x.dot(theta) - 0.7) * x;
  CHECK((q.mean - g).norm() < 1e-12);
}

TEST_CASE("streaming LS covariance: matches batch oracle at random queries") {
  masgrad::Stream rng(masgrad::derive_key(7, 5));
  for (int rep = 0; rep < 20; ++rep) {
    Index p = 1 + static_cast<Index>(rng.uniform_index(6));
    int t = 2 + static_cast<int>(rng.uniform_index(200));
    Mat xs = gaussian_mat(t, p, rng);
    Vec ys(t);
    for (int i = 0; i < t; ++i) ys(i) = rng.gaussian();

    auto st = mm::OnlineLsCovState::init(p);
    for (int i = 0; i < t; ++i)
      st = mm::ls_cov_update(st, xs.row(i).transpose(), ys(i));
    CHECK(st.t == t);

    for (int k = 0; k < 5; ++k) {
      Vec theta(p);
      for (Index j = 0; j < p; ++j) theta(j) = rng.gaussian();

      Mat grads(t, p);
      for (int i = 0; i < t; ++i) {
        Vec x = xs.row(i).transpose();
        grads.row(i) = ((x.dot(theta) - ys(i)) * x).transpose();
      }
      Vec mean = grads.colwise().mean().transpose();
      Mat second = grads.transpose() * grads / double(t);
      Mat cov = second - mean * mean.transpose();

      auto q = mm::streaming_ls_covariance(st, theta);
      double scale = std::max(1.0, cov.norm());
      CHECK((q.mean - mean).norm() < 1e-10 * std::max(1.0, mean.norm()));
      CHECK((q.cov - cov).norm() < 1e-10 * scale);
    }
  }
}

TEST_CASE("streaming LS covariance: dimension guards") {
  CHECK_THROWS_AS(mm::OnlineLsCovState::init(17), std::invalid_argument);
  auto st = mm::OnlineLsCovState::init(2);
  Vec bad(3);
  bad.setZero();
  CHECK_THROWS_AS(mm::ls_cov_update(st, bad, 0.0), std::invalid_argument);
  Vec theta(2);
  theta.setZero();
  CHECK_THROWS_AS(mm::streaming_ls_covariance(st, theta), std::runtime_error);
}
