#include "gsb/gaussian.hpp"

#include <cmath>

namespace gsb {

namespace {

struct RootPair {
  Matrix root;
  Matrix inv_root;
};

RootPair roots_of_pd(const SymPsdMatrix& m) {
  const SymEig eig = sym_eig(m.matrix());
  const double lmax = eig.values.maxCoeff();
  const double lmin = eig.values.minCoeff();
  if (!(lmax > 0.0) || lmin <= kSingularTolerance * lmax)
    throw Error(ErrorCode::SingularCovariance,
                "initial covariance is not strictly positive definite");
  const Vector r = eig.values.cwiseSqrt();
  return {symmetrized(eig.vectors * r.asDiagonal() * eig.vectors.transpose()),
          eig.vectors * r.cwiseInverse().asDiagonal() * eig.vectors.transpose()};
}

void check_dims(const SymPsdMatrix& a, const SymPsdMatrix& b) {
  if (a.dim() != b.dim()) throw Error(ErrorCode::DimensionMismatch, "covariance dimensions differ");
}

}  // namespace

Gaussian::Gaussian(Vector m, SymPsdMatrix c) : mean(std::move(m)), cov(std::move(c)) {
  if (mean.size() != cov.dim())
    throw Error(ErrorCode::DimensionMismatch, "mean length differs from covariance dimension");
}

Matrix JointGaussian2d::assembled_cov() const {
  const Eigen::Index d = dim();
  Matrix full(2 * d, 2 * d);
  full.topLeftCorner(d, d) = cov00.matrix();
  full.topRightCorner(d, d) = cross;
  full.bottomLeftCorner(d, d) = cross.transpose();
  full.bottomRightCorner(d, d) = cov11.matrix();
  return full;
}

Vector JointGaussian2d::assembled_mean() const {
  Vector m(2 * dim());
  m << mean0, mean1;
  return m;
}

Gaussian JointGaussian2d::marginal(int index) const {
  return index == 0 ? Gaussian(mean0, cov00) : Gaussian(mean1, cov11);
}

Matrix d_sigma(const SymPsdMatrix& sigma0, const SymPsdMatrix& sigmaT, double sigma) {
  check_dims(sigma0, sigmaT);
  const Matrix s0h = sqrt_psd(sigma0).matrix();
  const SymEig eig = sym_eig(symmetrized(s0h * sigmaT.matrix() * s0h));
  const double s4 = std::pow(sigma, 4);
  const Vector d = (4.0 * eig.values.cwiseMax(0.0).array() + s4).sqrt();
  return eig.vectors * d.asDiagonal() * eig.vectors.transpose();
}

Matrix c_sigma(const SymPsdMatrix& sigma0, const SymPsdMatrix& sigmaT, double sigma) {
  check_dims(sigma0, sigmaT);
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw Error(ErrorCode::InvalidParams, "sigma must be positive");
  const RootPair r0 = roots_of_pd(sigma0);
  const SymEig eig = sym_eig(symmetrized(r0.root * sigmaT.matrix() * r0.root));
  // D - sigma^2 I evaluated in the eigenbasis of S0^{1/2} ST S0^{1/2} as
  // 4m / (sqrt(4m + sigma^4) + sigma^2), which avoids cancellation for large sigma.
  const double s2 = sigma * sigma;
  const Vector m = eig.values.cwiseMax(0.0);
  const Vector shifted =
      (4.0 * m.array()) / ((4.0 * m.array() + s2 * s2).sqrt() + s2);
  const Matrix d_minus = eig.vectors * shifted.asDiagonal() * eig.vectors.transpose();
  return 0.5 * r0.root * d_minus * r0.inv_root;
}

Gaussian condition(const JointGaussian2d& joint, int observed_index, const Vector& y) {
  if (observed_index != 0 && observed_index != 1)
    throw Error(ErrorCode::InvalidParams, "observed_index must be 0 or 1");
  if (y.size() != joint.dim()) throw Error(ErrorCode::DimensionMismatch, "observation length");

  const bool obs1 = observed_index == 1;
  const Vector& mu_free = obs1 ? joint.mean0 : joint.mean1;
  const Vector& mu_obs = obs1 ? joint.mean1 : joint.mean0;
  const SymPsdMatrix& cov_free = obs1 ? joint.cov00 : joint.cov11;
  const SymPsdMatrix& cov_obs = obs1 ? joint.cov11 : joint.cov00;
  const Matrix cross = obs1 ? joint.cross : Matrix(joint.cross.transpose());  // Cov(free, obs)

  const Matrix obs_inv = inverse_spd(cov_obs);
  const Matrix gain = cross * obs_inv;
  Vector mean = mu_free + gain * (y - mu_obs);
  const Matrix cov = cov_free.matrix() - gain * cross.transpose();
  return Gaussian(std::move(mean), SymPsdMatrix(symmetrized(cov)));
}

JointGaussian2d static_coupling(const Gaussian& n0, const Gaussian& nT, double sigma_star) {
  if (n0.dim() != nT.dim()) throw Error(ErrorCode::DimensionMismatch, "marginal dimensions differ");
  return JointGaussian2d{n0.mean, nT.mean, n0.cov, c_sigma(n0.cov, nT.cov, sigma_star), nT.cov};
}

}  // namespace gsb
