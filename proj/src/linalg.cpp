#include "gsb/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace gsb {

namespace {

constexpr double kJacobiThreshold = 1e-12;
constexpr int kJacobiMaxSweeps = 100;
constexpr double kSymmetryTolerance = 1e-8;

double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < j; ++i) s += a(i, j) * a(i, j);
  return std::sqrt(2.0 * s);
}

}  // namespace

SymEig sym_eig(const Matrix& m) {
  if (m.rows() != m.cols())
    throw Error(ErrorCode::DimensionMismatch, "sym_eig expects a square matrix");
  const Eigen::Index n = m.rows();
  Matrix a = symmetrized(m);
  Matrix v = Matrix::Identity(n, n);
  const double scale = a.norm();

  if (scale > 0.0) {
    for (int sweep = 0; sweep < kJacobiMaxSweeps; ++sweep) {
      if (off_diagonal_norm(a) <= kJacobiThreshold * scale) break;
      for (Eigen::Index p = 0; p < n; ++p) {
        for (Eigen::Index q = p + 1; q < n; ++q) {
          const double apq = a(p, q);
          if (apq == 0.0) continue;
          const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
          const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(theta, 1.0));
          const double c = 1.0 / std::sqrt(t * t + 1.0);
          const double s = t * c;
          for (Eigen::Index k = 0; k < n; ++k) {
            const double akp = a(k, p);
            const double akq = a(k, q);
            a(k, p) = c * akp - s * akq;
            a(k, q) = s * akp + c * akq;
          }
          for (Eigen::Index k = 0; k < n; ++k) {
            const double apk = a(p, k);
            const double aqk = a(q, k);
            a(p, k) = c * apk - s * aqk;
            a(q, k) = s * apk + c * aqk;
          }
          a(p, q) = 0.0;
          a(q, p) = 0.0;
          for (Eigen::Index k = 0; k < n; ++k) {
            const double vkp = v(k, p);
            const double vkq = v(k, q);
            v(k, p) = c * vkp - s * vkq;
            v(k, q) = s * vkp + c * vkq;
          }
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return a(i, i) < a(j, j); });
  SymEig out{Vector(n), Matrix(n, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = a(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

SymPsdMatrix::SymPsdMatrix(const Matrix& m) {
  if (m.rows() != m.cols())
    throw Error(ErrorCode::DimensionMismatch, "covariance must be square");
  if (!m.allFinite()) throw Error(ErrorCode::NotPsd, "matrix has non-finite entries");
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  const double mag = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (m.size() > 0 && asym > kSymmetryTolerance * mag)
    throw Error(ErrorCode::InvalidParams,
                "matrix is not symmetric (max asymmetry " + std::to_string(asym) + ")");
  m_ = symmetrized(m);
  if (m_.size() == 0) return;

  const SymEig eig = sym_eig(m_);
  const double lmax = std::max(0.0, eig.values.maxCoeff());
  const double lmin = eig.values.minCoeff();
  if (lmin < -kPsdTolerance * lmax || (lmax == 0.0 && lmin < 0.0))
    throw Error(ErrorCode::NotPsd, "eigenvalue " + std::to_string(lmin) + " below tolerance");
  if (lmin < 0.0) {
    const Vector clamped = eig.values.cwiseMax(0.0);
    m_ = symmetrized(eig.vectors * clamped.asDiagonal() * eig.vectors.transpose());
  }
}

SymPsdMatrix SymPsdMatrix::identity(Eigen::Index dim) {
  return SymPsdMatrix(Matrix::Identity(dim, dim), Trusted{});
}

SymPsdMatrix SymPsdMatrix::diagonal(const Vector& diag) {
  if ((diag.array() < 0.0).any()) throw Error(ErrorCode::NotPsd, "negative diagonal entry");
  return SymPsdMatrix(Matrix(diag.asDiagonal()), Trusted{});
}

SymPsdMatrix sqrt_psd(const SymPsdMatrix& m) {
  if (m.dim() == 0) return m;
  const SymEig eig = sym_eig(m.matrix());
  const double lmax = std::max(0.0, eig.values.maxCoeff());
  if (eig.values.minCoeff() < -kPsdTolerance * lmax)
    throw Error(ErrorCode::NotPsd, "sqrt_psd of an indefinite matrix");
  const Vector root = eig.values.cwiseMax(0.0).cwiseSqrt();
  return SymPsdMatrix(symmetrized(eig.vectors * root.asDiagonal() * eig.vectors.transpose()),
                      SymPsdMatrix::Trusted{});
}

Matrix inverse_spd(const SymPsdMatrix& m, ErrorCode code) {
  const SymEig eig = sym_eig(m.matrix());
  const double lmax = eig.values.maxCoeff();
  const double lmin = eig.values.minCoeff();
  if (!(lmax > 0.0) || lmin <= kSingularTolerance * lmax)
    throw Error(code, "smallest eigenvalue " + std::to_string(lmin) + " vs largest " +
                          std::to_string(lmax));
  const Vector recip = eig.values.cwiseInverse();
  return symmetrized(eig.vectors * recip.asDiagonal() * eig.vectors.transpose());
}

}  // namespace gsb
