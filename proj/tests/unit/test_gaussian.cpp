#include <doctest.h>

#include <cmath>

#include "gsb/gaussian.hpp"
#include "helpers.hpp"

using namespace gsb;
using gsb::test::max_abs;
using gsb::test::random_spd;

TEST_CASE("sqrt_psd of identity and diagonal matrices") {
  CHECK(max_abs(sqrt_psd(SymPsdMatrix::identity(3)).matrix() - Matrix::Identity(3, 3)) < 1e-14);
  const Matrix r = sqrt_psd(SymPsdMatrix::diagonal(Vector::Map(std::array{4.0, 9.0}.data(), 2))).matrix();
  CHECK(r(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(r(1, 1) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(std::abs(r(0, 1)) < 1e-14);
}

TEST_CASE("sqrt_psd squares back to the input") {
  Matrix m(2, 2);
  m << 2, 1, 1, 2;
  const Matrix r = sqrt_psd(SymPsdMatrix(m)).matrix();
  CHECK((r - r.transpose()).norm() == 0.0);
  CHECK((r * r - m).norm() <= 1e-9 * (1.0 + m.norm()));

  std::mt19937_64 gen(11);
  for (Eigen::Index d : {1, 3, 8, 16}) {
    const Matrix s = random_spd(gen, d, 0.0);
    const Matrix root = sqrt_psd(SymPsdMatrix(s)).matrix();
    CHECK((root * root - s).norm() <= 1e-9 * s.norm());
    // Square then root recovers a PSD input.
    const Matrix back = sqrt_psd(SymPsdMatrix(root * root)).matrix();
    CHECK((back - root).norm() <= 1e-9 * root.norm());
  }
}

TEST_CASE("SymPsdMatrix rejects clearly indefinite input") {
  Matrix m(2, 2);
  m << 1, 0, 0, -1;
  CHECK_THROWS_AS(SymPsdMatrix{m}, Error);
  try {
    SymPsdMatrix bad(m);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotPsd);
  }
  // Roundoff-sized negative eigenvalues are clamped.
  Matrix tiny(2, 2);
  tiny << 1, 0, 0, -1e-13;
  CHECK(SymPsdMatrix(tiny)(1, 1) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("sym_eig reconstructs and orders eigenvalues") {
  std::mt19937_64 gen(3);
  const Matrix s = random_spd(gen, 12);
  const SymEig e = sym_eig(s);
  CHECK((e.vectors * e.values.asDiagonal() * e.vectors.transpose() - s).norm() < 1e-10 * s.norm());
  CHECK((e.vectors.transpose() * e.vectors - Matrix::Identity(12, 12)).norm() < 1e-12);
  for (Eigen::Index i = 1; i < 12; ++i) CHECK(e.values(i) >= e.values(i - 1));
}

TEST_CASE("inverse_spd flags singular matrices") {
  Matrix m(2, 2);
  m << 1, 1, 1, 1;
  CHECK_THROWS_AS(inverse_spd(SymPsdMatrix(m)), Error);
  Matrix g(2, 2);
  g << 2, 1, 1, 2;
  CHECK((inverse_spd(SymPsdMatrix(g)) * g - Matrix::Identity(2, 2)).norm() < 1e-14);
}

TEST_CASE("c_sigma scalar values") {
  const SymPsdMatrix one = SymPsdMatrix::identity(1);
  // (sqrt(4 s0 sT + sigma^4) - sigma^2) / 2 in one dimension.
  CHECK(c_sigma(one, one, 1.0)(0, 0) == doctest::Approx((std::sqrt(5.0) - 1.0) / 2.0).epsilon(1e-14));
  CHECK(c_sigma(one, one, 1.0)(0, 0) == doctest::Approx(0.6180340).epsilon(1e-7));
  const SymPsdMatrix four = SymPsdMatrix::diagonal(Vector::Constant(1, 4.0));
  const SymPsdMatrix nine = SymPsdMatrix::diagonal(Vector::Constant(1, 9.0));
  CHECK(d_sigma(four, nine, 1.0)(0, 0) == doctest::Approx(std::sqrt(145.0)).epsilon(1e-14));
  CHECK(c_sigma(four, nine, 1.0)(0, 0) == doctest::Approx(0.5 * (std::sqrt(145.0) - 1.0)).epsilon(1e-13));
  CHECK(std::abs(c_sigma(one, one, 1e4)(0, 0)) < 1e-4);
}

TEST_CASE("c_sigma commuting diagonal case reduces per coordinate") {
  const Vector d0 = (Vector(2) << 1.0, 4.0).finished();
  const Vector dT = (Vector(2) << 4.0, 1.0).finished();
  const Matrix c = c_sigma(SymPsdMatrix::diagonal(d0), SymPsdMatrix::diagonal(dT), 1.0);
  const double expect = 0.5 * (std::sqrt(17.0) - 1.0);
  CHECK(c(0, 0) == doctest::Approx(expect).epsilon(1e-13));
  CHECK(c(1, 1) == doctest::Approx(expect).epsilon(1e-13));
  CHECK(std::abs(c(0, 1)) < 1e-13);
  CHECK(std::abs(c(1, 0)) < 1e-13);
}

TEST_CASE("c_sigma needs an invertible start covariance") {
  Matrix m(2, 2);
  m << 1, 1, 1, 1;
  try {
    c_sigma(SymPsdMatrix(m), SymPsdMatrix::identity(2), 1.0);
    FAIL("expected SingularCovariance");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingularCovariance);
  }
}

TEST_CASE("static coupling is PSD, keeps its marginals and swaps to the transpose") {
  std::mt19937_64 gen(5);
  for (Eigen::Index d : {1, 2, 5, 9}) {
    for (double sigma : {0.3, 1.0, 3.0}) {
      const Gaussian n0(test::random_vector(gen, d), SymPsdMatrix(random_spd(gen, d)));
      const Gaussian nT(test::random_vector(gen, d), SymPsdMatrix(random_spd(gen, d)));
      const JointGaussian2d j = static_coupling(n0, nT, sigma);
      CHECK(j.cov00.matrix() == n0.cov.matrix());
      CHECK(j.cov11.matrix() == nT.cov.matrix());
      CHECK(j.mean0 == n0.mean);
      CHECK(j.mean1 == nT.mean);
      const SymEig e = sym_eig(j.assembled_cov());
      CHECK(e.values.minCoeff() >= -kPsdTolerance * e.values.maxCoeff());
      const Matrix swapped = c_sigma(nT.cov, n0.cov, sigma);
      CHECK(max_abs(swapped - j.cross.transpose()) < 1e-8);
    }
  }
}

TEST_CASE("condition on a scalar joint") {
  JointGaussian2d j;
  j.mean0 = Vector::Zero(1);
  j.mean1 = Vector::Zero(1);
  j.cov00 = SymPsdMatrix(Matrix::Constant(1, 1, 2.0));
  j.cov11 = SymPsdMatrix(Matrix::Constant(1, 1, 2.0));
  j.cross = Matrix::Constant(1, 1, 1.0);
  const Gaussian c = condition(j, 1, Vector::Constant(1, 2.0));
  CHECK(c.mean(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(c.cov(0, 0) == doctest::Approx(1.5).epsilon(1e-15));
  // Conditioning on the other block mirrors the formula.
  const Gaussian c0 = condition(j, 0, Vector::Constant(1, -2.0));
  CHECK(c0.mean(0) == doctest::Approx(-1.0).epsilon(1e-15));

  j.cross.setZero();
  const Gaussian indep = condition(j, 1, Vector::Constant(1, 7.0));
  CHECK(indep.mean(0) == 0.0);
  CHECK(indep.cov(0, 0) == 2.0);
}

TEST_CASE("conditioning on the observed mean returns the other mean") {
  std::mt19937_64 gen(8);
  const Gaussian n0(test::random_vector(gen, 3), SymPsdMatrix(random_spd(gen, 3)));
  const Gaussian nT(test::random_vector(gen, 3), SymPsdMatrix(random_spd(gen, 3)));
  const JointGaussian2d j = static_coupling(n0, nT, 0.7);
  CHECK(max_abs(condition(j, 1, nT.mean).mean - n0.mean) < 1e-12);
  CHECK(max_abs(condition(j, 0, n0.mean).mean - nT.mean) < 1e-12);
}

TEST_CASE("conditionals of the static coupling compound back to the marginals") {
  std::mt19937_64 gen(21);
  const Eigen::Index d = 4;
  const Gaussian n0(test::random_vector(gen, d), SymPsdMatrix(random_spd(gen, d)));
  const Gaussian nT(test::random_vector(gen, d), SymPsdMatrix(random_spd(gen, d)));
  const JointGaussian2d j = static_coupling(n0, nT, 1.3);
  // Conditional mean of block 1 is affine in y0: m(y0) = mean1 + G (y0 - mean0).
  const Gaussian at_mean = condition(j, 0, n0.mean);
  Matrix gain(d, d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const Vector y = n0.mean + Vector::Unit(d, k);
    gain.col(k) = condition(j, 0, y).mean - at_mean.mean;
  }
  // Law of total expectation and variance.
  const Vector mix_mean = at_mean.mean;
  const Matrix mix_cov = at_mean.cov.matrix() + gain * n0.cov.matrix() * gain.transpose();
  CHECK(max_abs(mix_mean - nT.mean) < 1e-12);
  CHECK(max_abs(mix_cov - nT.cov.matrix()) < 1e-10 * (1.0 + max_abs(nT.cov.matrix())));
}
