#pragma once

#include <Eigen/Dense>

#include "gsb/error.hpp"

namespace gsb {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
// n x d point clouds and path states: one sample per row.
using Batch = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Relative eigenvalue tolerance below which a symmetric matrix is still
// treated as positive semidefinite (negative eigenvalues are clamped to 0).
inline constexpr double kPsdTolerance = 1e-10;
// Relative smallest-eigenvalue floor for matrices that must be inverted.
inline constexpr double kSingularTolerance = 1e-12;

struct SymEig {
  Vector values;   // ascending
  Matrix vectors;  // columns are orthonormal eigenvectors
};

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Sweeps stop once the
// off-diagonal Frobenius mass drops below 1e-12 of the input norm, or after
// 100 sweeps.
SymEig sym_eig(const Matrix& m);

// Symmetric positive semidefinite matrix. Entries are exactly symmetric after
// construction; eigenvalues that are negative within kPsdTolerance (relative
// to the largest one) are clamped to zero.
class SymPsdMatrix {
 public:
  SymPsdMatrix() = default;
  explicit SymPsdMatrix(const Matrix& m);

  static SymPsdMatrix identity(Eigen::Index dim);
  static SymPsdMatrix diagonal(const Vector& diag);

  Eigen::Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }
  operator const Matrix&() const { return m_; }

 private:
  struct Trusted {};
  SymPsdMatrix(Matrix m, Trusted) : m_(std::move(m)) {}
  friend SymPsdMatrix sqrt_psd(const SymPsdMatrix& m);

  Matrix m_;
};

// Principal square root R (R symmetric, R R = M) via clamped eigenvalues.
SymPsdMatrix sqrt_psd(const SymPsdMatrix& m);

// Inverse of a strictly positive definite matrix through its
// eigendecomposition. Throws `code` when the smallest eigenvalue is not above
// kSingularTolerance times the largest.
Matrix inverse_spd(const SymPsdMatrix& m, ErrorCode code = ErrorCode::SingularCovariance);

// Exact symmetrization (M + M^T) / 2.
inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace gsb
