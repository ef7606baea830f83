#include "gsb/metrics.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

#include "gsb/parallel.hpp"

namespace gsb {

namespace {

constexpr int kCheckEvery = 5;
constexpr std::size_t kRowChunk = 64;

Matrix squared_distances(const Batch& x, const Batch& y) {
  Matrix c(x.rows(), y.rows());
  parallel_chunks(static_cast<std::size_t>(x.rows()), kRowChunk, [&](std::size_t b, std::size_t e) {
    for (std::size_t ii = b; ii < e; ++ii) {
      const auto i = static_cast<Eigen::Index>(ii);
      for (Eigen::Index j = 0; j < y.rows(); ++j) c(i, j) = (x.row(i) - y.row(j)).squaredNorm();
    }
  });
  return c;
}

constexpr double kAbsorbThreshold = 1e30;

// exp((f_i + g_j - C_ij) / eps).
Matrix stabilized_kernel(const Matrix& cost, const Vector& f, const Vector& g, double eps) {
  Matrix k(cost.rows(), cost.cols());
  for (Eigen::Index j = 0; j < cost.cols(); ++j)
    k.col(j) = ((f.array() + g(j) - cost.col(j).array()) / eps).exp();
  return k;
}

// Log-stabilized scaling iterations: potentials (f, g) carry the log-domain
// state, and the scalings (u, v) are absorbed into them before they can
// overflow, so no exponent of a raw cost over eps is ever formed.
SinkhornPlan log_domain(const Vector& a, const Vector& b, const Matrix& cost, double eps,
                        const SinkhornConfig& cfg) {
  Vector f = Vector::Zero(a.size());
  Vector g = Vector::Zero(b.size());
  // Start from the c-transform of g = 0 so the first kernel is well scaled.
  for (Eigen::Index i = 0; i < cost.rows(); ++i) f(i) = cost.row(i).minCoeff();
  for (Eigen::Index j = 0; j < cost.cols(); ++j) g(j) = (cost.col(j) - f).minCoeff();
  Matrix k = stabilized_kernel(cost, f, g, eps);
  Vector u = Vector::Ones(a.size());
  Vector v = Vector::Ones(b.size());
  SinkhornPlan out;
  out.summary.epsilon = eps;
  double err = std::numeric_limits<double>::infinity();
  int it = 0;
  const auto absorb = [&] {
    f.array() += eps * u.array().log();
    g.array() += eps * v.array().log();
    u.setOnes();
    v.setOnes();
    k = stabilized_kernel(cost, f, g, eps);
  };
  while (it < cfg.max_iters) {
    u = a.cwiseQuotient(k * v);
    v = b.cwiseQuotient(k.transpose() * u);
    ++it;
    if (u.maxCoeff() > kAbsorbThreshold || v.maxCoeff() > kAbsorbThreshold ||
        u.minCoeff() < 1.0 / kAbsorbThreshold || v.minCoeff() < 1.0 / kAbsorbThreshold ||
        !u.allFinite() || !v.allFinite()) {
      if (!u.allFinite() || !v.allFinite()) {
        // Undo the overflowing half-step; restart it from absorbed potentials.
        u.setOnes();
        v.setOnes();
      }
      absorb();
    }
    if (it % kCheckEvery == 0 || it == cfg.max_iters) {
      err = (u.cwiseProduct(k * v) - a).cwiseAbs().sum();
      if (err < cfg.tol) break;
    }
  }
  absorb();
  out.plan = std::move(k);
  out.summary.iters = it;
  out.summary.marginal_error = err;
  out.summary.converged = err < cfg.tol;
  out.summary.value = out.plan.cwiseProduct(cost).sum();
  return out;
}

SinkhornPlan kernel_domain(const Vector& a, const Vector& b, const Matrix& cost, double eps,
                           const SinkhornConfig& cfg) {
  const Matrix k = (-cost / eps).array().exp().matrix();
  Vector u = Vector::Ones(a.size());
  Vector v = Vector::Ones(b.size());
  SinkhornPlan out;
  out.summary.epsilon = eps;
  double err = std::numeric_limits<double>::infinity();
  int it = 0;
  while (it < cfg.max_iters) {
    u = a.cwiseQuotient(k * v);
    v = b.cwiseQuotient(k.transpose() * u);
    ++it;
    if (!u.allFinite() || !v.allFinite()) break;
    if (it % kCheckEvery == 0 || it == cfg.max_iters) {
      err = (u.cwiseProduct(k * v) - a).cwiseAbs().sum();
      if (err < cfg.tol) break;
    }
  }
  out.plan = u.asDiagonal() * k * v.asDiagonal();
  out.summary.iters = it;
  out.summary.marginal_error = err;
  out.summary.converged = err < cfg.tol && out.plan.allFinite();
  out.summary.value = out.plan.cwiseProduct(cost).sum();
  return out;
}

}  // namespace

std::string SinkhornResult::to_json() const {
  nlohmann::json j = {{"metric", "W_eps"},
                      {"epsilon", epsilon},
                      {"value", value},
                      {"converged", converged},
                      {"iters", iters}};
  return j.dump();
}

double default_epsilon(const Batch& x, const Batch& y) {
  if (x.rows() == 0 || y.rows() == 0) throw Error(ErrorCode::InvalidParams, "empty point cloud");
  const double mx = x.rowwise().squaredNorm().mean();
  const double my = y.rowwise().squaredNorm().mean();
  const double cross = x.colwise().mean().dot(y.colwise().mean());
  return 0.05 * std::max(mx + my - 2.0 * cross, 0.0);
}

SinkhornPlan sinkhorn_plan(const Vector& a, const Vector& b, const Matrix& cost,
                           const SinkhornConfig& cfg) {
  if (!(cfg.epsilon > 0.0)) throw Error(ErrorCode::InvalidParams, "Sinkhorn epsilon must be positive");
  if (cost.rows() != a.size() || cost.cols() != b.size())
    throw Error(ErrorCode::DimensionMismatch, "cost matrix does not match the weights");
  if (a.size() == 0 || b.size() == 0) throw Error(ErrorCode::InvalidParams, "empty point cloud");
  if (!cost.allFinite()) throw Error(ErrorCode::InvalidParams, "non-finite cost matrix");
  return cfg.log_domain ? log_domain(a, b, cost, cfg.epsilon, cfg)
                        : kernel_domain(a, b, cost, cfg.epsilon, cfg);
}

SinkhornResult sinkhorn_weps(const Batch& x, const Batch& y, const SinkhornConfig& cfg) {
  if (x.cols() != y.cols()) throw Error(ErrorCode::DimensionMismatch, "point clouds differ in dimension");
  if (x.rows() == 0 || y.rows() == 0) throw Error(ErrorCode::InvalidParams, "empty point cloud");
  if (!x.allFinite() || !y.allFinite()) throw Error(ErrorCode::InvalidParams, "non-finite points");
  SinkhornConfig c = cfg;
  if (!(c.epsilon > 0.0)) c.epsilon = default_epsilon(x, y);
  // Coincident clouds of one atom give epsilon 0 under the default rule.
  if (!(c.epsilon > 0.0)) c.epsilon = 1e-3;
  const Vector a = Vector::Constant(x.rows(), 1.0 / static_cast<double>(x.rows()));
  const Vector b = Vector::Constant(y.rows(), 1.0 / static_cast<double>(y.rows()));
  return sinkhorn_plan(a, b, squared_distances(x, y), c).summary;
}

Gaussian estimate_moments(const Batch& points, double shrinkage) {
  const Eigen::Index n = points.rows();
  const Eigen::Index d = points.cols();
  if (n < 2) throw Error(ErrorCode::TooFewPoints, "moment estimation needs at least 2 points");
  if (!(shrinkage >= 0.0)) throw Error(ErrorCode::InvalidParams, "shrinkage must be nonnegative");
  if (!points.allFinite()) throw Error(ErrorCode::MomentEstimationFailure, "non-finite points");
  Vector mean = points.colwise().sum().transpose() / static_cast<double>(n);
  const Batch centered = points.rowwise() - mean.transpose();
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  cov = symmetrized(cov);
  const double inflate = shrinkage * cov.trace() / static_cast<double>(d);
  cov.diagonal().array() += inflate;
  if (shrinkage > 0.0 && !(inflate > 0.0))
    throw Error(ErrorCode::MomentEstimationFailure, "all points coincide; covariance is zero");
  return Gaussian(std::move(mean), SymPsdMatrix(cov));
}

}  // namespace gsb
