#pragma once

#include <cmath>
#include <random>

#include "gsb/solver.hpp"

namespace gsb::test {

inline Matrix random_spd(std::mt19937_64& gen, Eigen::Index d, double floor = 0.2) {
  std::normal_distribution<double> n01;
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = n01(gen);
  Matrix m = a * a.transpose() / static_cast<double>(d);
  m.diagonal().array() += floor;
  return symmetrized(m);
}

inline Vector random_vector(std::mt19937_64& gen, Eigen::Index d, double scale = 1.0) {
  std::normal_distribution<double> n01;
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = scale * n01(gen);
  return v;
}

inline Gaussian scalar_gaussian(double mean, double var) {
  return Gaussian(Vector::Constant(1, mean), SymPsdMatrix(Matrix::Constant(1, 1, var)));
}

// BM nu = 1, T = 1 between N(m0, v0) and N(mT, vT) in one dimension.
inline GsbProblem bm_scalar_problem(double m0 = 0.0, double v0 = 1.0, double mT = 0.0,
                                    double vT = 1.0) {
  return GsbProblem{preset(Preset::Bm, PresetParams{}), scalar_gaussian(m0, v0),
                    scalar_gaussian(mT, vT)};
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

inline double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace gsb::test
