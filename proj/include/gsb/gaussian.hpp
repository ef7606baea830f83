#pragma once

#include "gsb/linalg.hpp"

namespace gsb {

struct Gaussian {
  Vector mean;
  SymPsdMatrix cov;

  Gaussian() = default;
  Gaussian(Vector m, SymPsdMatrix c);

  Eigen::Index dim() const { return mean.size(); }
};

// Joint law of two d-dimensional blocks (Y0, Y1). The lower-left block is the
// transpose of `cross` and is never stored.
struct JointGaussian2d {
  Vector mean0;
  Vector mean1;
  SymPsdMatrix cov00;
  Matrix cross;  // Cov(Y0, Y1), generally non-symmetric
  SymPsdMatrix cov11;

  Eigen::Index dim() const { return mean0.size(); }
  Matrix assembled_cov() const;
  Vector assembled_mean() const;
  Gaussian marginal(int index) const;
};

// D_sigma = (4 S0^{1/2} ST S0^{1/2} + sigma^4 I)^{1/2}.
Matrix d_sigma(const SymPsdMatrix& sigma0, const SymPsdMatrix& sigmaT, double sigma);

// C_sigma = (S0^{1/2} D_sigma S0^{-1/2} - sigma^2 I) / 2, the cross-covariance
// of the entropic optimal coupling between N(., S0) and N(., ST) for the cost
// |x - y|^2 / 2 with entropic weight sigma^2. Not symmetrized.
Matrix c_sigma(const SymPsdMatrix& sigma0, const SymPsdMatrix& sigmaT, double sigma);

// Law of the unobserved block given that block `observed_index` equals y.
Gaussian condition(const JointGaussian2d& joint, int observed_index, const Vector& y);

JointGaussian2d static_coupling(const Gaussian& n0, const Gaussian& nT, double sigma_star);

}  // namespace gsb
