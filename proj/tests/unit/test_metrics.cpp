#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <json.hpp>

#include "gsb/metrics.hpp"
#include "helpers.hpp"

using namespace gsb;
using test::max_abs;

namespace {

Batch points(std::initializer_list<std::initializer_list<double>> rows) {
  Batch b(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) b(i, j++) = v;
    ++i;
  }
  return b;
}

Batch gaussian_cloud(std::uint64_t seed, Eigen::Index n, double shift) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  Batch b(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) b.row(i) << nd(gen) + shift, 0.5 * nd(gen);
  return b;
}

// Cross-covariance of the entropic plan between two discretized 1-D
// Gaussians under cost (x - y)^2 / 2.
double discretized_cross_cov(double m0, double v0, double mT, double vT, double eps) {
  const int n = 401;
  const auto grid = [n](double m, double v) {
    Vector x(n);
    const double half = 8.0 * std::sqrt(v);
    for (int i = 0; i < n; ++i) x(i) = m - half + 2.0 * half * i / (n - 1);
    return x;
  };
  const auto weights = [](const Vector& x, double m, double v) {
    Vector w = (-(x.array() - m).square() / (2.0 * v)).exp().matrix();
    return Vector(w / w.sum());
  };
  const Vector x = grid(m0, v0);
  const Vector y = grid(mT, vT);
  const Vector a = weights(x, m0, v0);
  const Vector b = weights(y, mT, vT);
  Matrix cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cost(i, j) = 0.5 * (x(i) - y(j)) * (x(i) - y(j));
  SinkhornConfig cfg;
  cfg.epsilon = eps;
  cfg.tol = 1e-11;
  cfg.max_iters = 100000;
  const SinkhornPlan sp = sinkhorn_plan(a, b, cost, cfg);
  REQUIRE(sp.summary.converged);
  const double mx = a.dot(x);
  const double my = b.dot(y);
  return (x.array() - mx).matrix().transpose() * sp.plan * (y.array() - my).matrix();
}

}  // namespace

TEST_CASE("transport cost of point masses") {
  const Batch a = points({{0.0, 0.0}});
  CHECK(sinkhorn_weps(a, a).value == 0.0);
  SinkhornConfig cfg;
  cfg.epsilon = 0.1;
  const SinkhornResult r = sinkhorn_weps(a, points({{3.0, 4.0}}), cfg);
  CHECK(r.value == doctest::Approx(25.0).epsilon(1e-12));
  CHECK(r.converged);
}

TEST_CASE("small epsilon recovers the matching") {
  const Batch x = points({{0.0, 0.0}, {1.0, 0.0}});
  const Batch y = points({{1.0, 0.0}, {0.0, 0.0}});
  SinkhornConfig cfg;
  cfg.epsilon = 0.01;
  const SinkhornResult r = sinkhorn_weps(x, y, cfg);
  CHECK(r.converged);
  CHECK(r.value >= 0.0);
  CHECK(r.value <= 0.02);
}

TEST_CASE("transport cost is symmetric") {
  const Batch x = gaussian_cloud(1, 150, 0.0);
  const Batch y = gaussian_cloud(2, 120, 1.5);
  SinkhornConfig cfg;
  cfg.epsilon = 0.2;
  cfg.tol = 1e-11;
  cfg.max_iters = 20000;
  const SinkhornResult xy = sinkhorn_weps(x, y, cfg);
  const SinkhornResult yx = sinkhorn_weps(y, x, cfg);
  CHECK(xy.converged);
  CHECK(yx.converged);
  CHECK(std::abs(xy.value - yx.value) <= 1e-9 * std::max(1.0, xy.value));
  CHECK(default_epsilon(x, y) == doctest::Approx(default_epsilon(y, x)).epsilon(1e-14));
}

TEST_CASE("transport part of the cost grows with epsilon") {
  const Batch x = gaussian_cloud(3, 100, 0.0);
  const Batch y = gaussian_cloud(4, 100, 1.0);
  double last = -1.0;
  for (double eps : {0.01, 0.1, 1.0}) {
    SinkhornConfig cfg;
    cfg.epsilon = eps;
    cfg.tol = 1e-5;
    cfg.max_iters = 50000;
    const SinkhornResult r = sinkhorn_weps(x, y, cfg);
    CAPTURE(eps);
    CHECK(r.converged);
    CHECK(r.value >= last - 1e-9);
    last = r.value;
  }
}

TEST_CASE("log-stabilized and plain kernels agree at moderate epsilon") {
  const Batch x = gaussian_cloud(5, 80, 0.0);
  const Batch y = gaussian_cloud(6, 90, 0.7);
  SinkhornConfig cfg;
  cfg.epsilon = 0.5;
  cfg.tol = 1e-11;
  cfg.max_iters = 20000;
  const SinkhornResult stable = sinkhorn_weps(x, y, cfg);
  cfg.log_domain = false;
  const SinkhornResult plain = sinkhorn_weps(x, y, cfg);
  CHECK(stable.value == doctest::Approx(plain.value).epsilon(1e-8));
}

TEST_CASE("transport plan has the prescribed marginals") {
  const Batch x = gaussian_cloud(7, 60, 0.0);
  const Batch y = gaussian_cloud(8, 40, 2.0);
  Matrix cost(60, 40);
  for (int i = 0; i < 60; ++i)
    for (int j = 0; j < 40; ++j) cost(i, j) = (x.row(i) - y.row(j)).squaredNorm();
  SinkhornConfig cfg;
  cfg.epsilon = 0.3;
  cfg.tol = 1e-12;
  cfg.max_iters = 50000;
  const SinkhornPlan sp = sinkhorn_plan(Vector::Constant(60, 1.0 / 60), Vector::Constant(40, 1.0 / 40), cost, cfg);
  CHECK(sp.summary.converged);
  CHECK(max_abs(sp.plan.rowwise().sum().array() - 1.0 / 60) < 1e-12);
  CHECK(max_abs(sp.plan.colwise().sum().array() - 1.0 / 40) < 1e-9);
  CHECK(sp.plan.minCoeff() >= 0.0);
  CHECK(sp.summary.value == doctest::Approx((sp.plan.array() * cost.array()).sum()).epsilon(1e-12));
}

TEST_CASE("discretized Sinkhorn reproduces the static coupling") {
  // Entropic plan between N(m0, v0) and N(mT, vT) with cost (x-y)^2/2 and
  // epsilon = sigma^2 has cross-covariance c_sigma(v0, vT, sigma).
  struct Case {
    double m0, v0, mT, vT, sigma;
  };
  for (const Case& c : {Case{0.0, 1.0, 0.0, 1.0, 1.0}, Case{0.5, 1.0, -1.0, 2.0, 1.0},
                        Case{0.0, 1.0, 1.0, 0.5, 0.7}}) {
    const double expect = c_sigma(SymPsdMatrix(Matrix::Constant(1, 1, c.v0)),
                                  SymPsdMatrix(Matrix::Constant(1, 1, c.vT)), c.sigma)(0, 0);
    const double got = discretized_cross_cov(c.m0, c.v0, c.mT, c.vT, c.sigma * c.sigma);
    CAPTURE(c.v0);
    CAPTURE(c.vT);
    CHECK(std::abs(got - expect) <= 0.02 * std::abs(expect));
  }
}

TEST_CASE("result JSON") {
  SinkhornResult r;
  r.value = 1.5;
  r.epsilon = 0.25;
  r.iters = 7;
  r.converged = true;
  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j["metric"] == "W_eps");
  CHECK(j["value"] == 1.5);
  CHECK(j["epsilon"] == 0.25);
  CHECK(j["iters"] == 7);
  CHECK(j["converged"] == true);
}

TEST_CASE("moment estimate of two points") {
  const Gaussian g = estimate_moments(points({{0.0, 0.0}, {2.0, 2.0}}), 0.0);
  CHECK(max_abs(g.mean - Vector::Ones(2)) == 0.0);
  CHECK(max_abs(g.cov.matrix() - Matrix::Constant(2, 2, 2.0)) == 0.0);
  const Gaussian s = estimate_moments(points({{0.0, 0.0}, {2.0, 2.0}}), 0.1);
  // shrinkage * trace / d = 0.1 * 4 / 2
  CHECK(s.cov.matrix()(0, 0) == doctest::Approx(2.2).epsilon(1e-15));
  CHECK(s.cov.matrix()(0, 1) == 2.0);
}

TEST_CASE("moment estimate converges on Gaussian draws") {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> nd;
  Matrix l(2, 2);
  l << 1.0, 0.0, 0.6, 0.8;
  const Vector m = (Vector(2) << -1.0, 2.0).finished();
  Batch x(100000, 2);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vector z = (Vector(2) << nd(gen), nd(gen)).finished();
    x.row(i) = (m + l * z).transpose();
  }
  const Gaussian g = estimate_moments(x, 0.0);
  CHECK(max_abs(g.mean - m) < 0.02);
  CHECK(max_abs(g.cov.matrix() - l * l.transpose()) < 0.02);
}

TEST_CASE("moment estimate is translation equivariant") {
  std::mt19937_64 gen(12);
  std::uniform_int_distribution<int> u(-64, 64);
  Batch x(32, 3);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = u(gen) / 8.0;
  const Gaussian a = estimate_moments(x, 0.0);
  const Eigen::RowVectorXd shift = (Eigen::RowVectorXd(3) << 4.0, -2.0, 0.5).finished();
  const Gaussian b = estimate_moments(x.rowwise() + shift, 0.0);
  CHECK(b.mean == a.mean + shift.transpose());
  CHECK(b.cov.matrix() == a.cov.matrix());
}

TEST_CASE("moment estimate needs two points") {
  try {
    estimate_moments(points({{1.0, 2.0}}));
    FAIL("expected TooFewPoints");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooFewPoints);
  }
}
