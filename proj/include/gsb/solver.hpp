#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gsb/gaussian.hpp"
#include "gsb/sde.hpp"

namespace gsb {

// Gaussian bridge problem: reference SDE plus Gaussian start and end laws.
struct GsbProblem {
  LinearSdeSpec sde;
  Gaussian n0;
  Gaussian nT;

  Eigen::Index dim() const { return n0.dim(); }
};

// Closed-form solution of a GsbProblem. Immutable once built by solve(); all
// evaluators below are pure functions of it.
class GsbSolution {
 public:
  const GsbProblem& problem() const { return problem_; }
  const LinearSdeSpec& sde() const { return problem_.sde; }
  Eigen::Index dim() const { return problem_.dim(); }
  double horizon() const { return problem_.sde.horizon; }

  double sigma_star() const { return sigma_star_; }
  const Matrix& c_star() const { return c_star_; }
  const Matrix& sigma0_inv() const { return sigma0_inv_; }
  // Sigma_T^{-1} exists only when the end covariance is nonsingular.
  const std::optional<Matrix>& sigmaT_inv() const { return sigmaT_inv_; }
  // Sigma_T - C^T Sigma_0^{-1} C: covariance of X_T given X_0.
  const SymPsdMatrix& end_given_start_cov() const { return end_given_start_; }
  // Sigma_0 - C Sigma_T^{-1} C^T: covariance of X_0 given X_T.
  const std::optional<SymPsdMatrix>& start_given_end_cov() const { return start_given_end_; }

  JointGaussian2d coupling() const;

 private:
  friend GsbSolution solve(GsbProblem problem);

  GsbProblem problem_;
  double sigma_star_ = 0.0;
  Matrix c_star_;
  Matrix sigma0_inv_;
  std::optional<Matrix> sigmaT_inv_;
  SymPsdMatrix end_given_start_;
  std::optional<SymPsdMatrix> start_given_end_;
};

GsbSolution solve(GsbProblem problem);

Gaussian marginal(const GsbSolution& sol, double t);
// d mu*_t / dt, analytic.
Vector marginal_mean_velocity(const GsbSolution& sol, double t);

// Affine form of the optimal drift: f(t, x) = a x + b.
struct DriftMatrix {
  double t = 0.0;
  Matrix a;
  Vector b;
};

// Requires 0 < t < T. Throws SingularMarginal when Sigma*_t cannot be inverted.
DriftMatrix drift_matrix(const GsbSolution& sol, double t);
Vector drift(const GsbSolution& sol, double t, const Vector& x);

Gaussian bridge_given_start(const GsbSolution& sol, double t, const Vector& x0);
Gaussian bridge_given_end(const GsbSolution& sol, double t, const Vector& xT);

struct ValidationTolerances {
  double symmetry = 1e-8;
  double ode = 1e-4;
  double boundary = 1e-10;
};

struct ValidationPoint {
  double t = 0.0;
  double symmetry_defect = 0.0;
  double ode_residual = 0.0;
  bool pass = false;
};

struct ValidationReport {
  std::vector<ValidationPoint> points;
  double boundary_error_start = 0.0;
  double boundary_error_end = 0.0;
  double max_symmetry_defect = 0.0;
  double max_ode_residual = 0.0;
  ValidationTolerances tol;
  std::string error;  // name and message of the failure that stopped validation
  bool passed = false;

  std::string to_text() const;
  std::string to_json() const;
};

// Checks on n_grid interior times: symmetry of the drift matrix, the residual
// of dSigma/dt = A Sigma + Sigma A^T + g^2 I (central differences, h = 1e-6 T),
// and exactness of both boundary marginals. Never throws.
ValidationReport validate(const GsbSolution& sol, int n_grid, const ValidationTolerances& tol = {});
// Same, but solves first; solver errors are reported instead of thrown.
ValidationReport validate(const GsbProblem& problem, int n_grid,
                          const ValidationTolerances& tol = {});

}  // namespace gsb
