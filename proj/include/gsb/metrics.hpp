#pragma once

#include <string>

#include "gsb/gaussian.hpp"

namespace gsb {

struct SinkhornConfig {
  double epsilon = 0.0;  // <= 0 selects default_epsilon(X, Y)
  int max_iters = 2000;
  double tol = 1e-8;     // L1 violation of the row marginal
  bool log_domain = true;
};

struct SinkhornResult {
  double value = 0.0;  // <P, C> without the entropy term
  double epsilon = 0.0;
  int iters = 0;
  double marginal_error = 0.0;
  bool converged = false;

  // {"metric": "W_eps", epsilon, value, converged, iters}
  std::string to_json() const;
};

// 0.05 times the mean of |x_i - y_j|^2 over all cross pairs.
double default_epsilon(const Batch& x, const Batch& y);

// Entropic transport cost between uniform point clouds with cost |x - y|^2.
// Non-convergence is reported through the flag together with the last value.
SinkhornResult sinkhorn_weps(const Batch& x, const Batch& y, const SinkhornConfig& cfg = {});

// Transport plan variant with explicit weights and cost matrix; returns the
// plan alongside the scalar summary.
struct SinkhornPlan {
  Matrix plan;
  SinkhornResult summary;
};
SinkhornPlan sinkhorn_plan(const Vector& a, const Vector& b, const Matrix& cost,
                           const SinkhornConfig& cfg);

inline constexpr double kDefaultShrinkage = 1e-3;

// Sample mean and (n - 1)-normalized covariance, with shrinkage * trace / d
// added to the diagonal. Throws TooFewPoints for n < 2.
Gaussian estimate_moments(const Batch& points, double shrinkage = kDefaultShrinkage);

}  // namespace gsb
