#include "gsb/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace gsb {

namespace {

void check_interior(const GsbSolution& sol, double t) {
  if (!(t > 0.0 && t < sol.horizon()))
    throw Error(ErrorCode::TimeOutOfRange,
                "drift is defined on the open interval (0, T); got t = " + std::to_string(t));
}

// mu*_t with the shift terms grouped so that t = 0 and t = T reproduce the
// endpoint means exactly.
Vector mean_at(const GsbSolution& sol, const SdeScalars& s) {
  const GsbProblem& p = sol.problem();
  return s.rbar * p.n0.mean + s.r * p.nT.mean + (s.xi - s.r * s.xi_T);
}

Matrix cov_at(const GsbSolution& sol, const SdeScalars& s) {
  const GsbProblem& p = sol.problem();
  const Eigen::Index d = sol.dim();
  const Matrix& c = sol.c_star();
  return s.rbar * s.rbar * p.n0.cov.matrix() + s.r * s.r * p.nT.cov.matrix() +
         s.r * s.rbar * (c + c.transpose()) +
         s.kernel_tt * (1.0 - s.rho) * Matrix::Identity(d, d);
}

double inf_norm(const Matrix& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

}  // namespace

JointGaussian2d GsbSolution::coupling() const {
  return JointGaussian2d{problem_.n0.mean, problem_.nT.mean, problem_.n0.cov, c_star_,
                         problem_.nT.cov};
}

GsbSolution solve(GsbProblem problem) {
  if (problem.n0.dim() != problem.nT.dim())
    throw Error(ErrorCode::DimensionMismatch, "start and end Gaussians differ in dimension");
  if (problem.n0.dim() == 0) throw Error(ErrorCode::DimensionMismatch, "zero-dimensional problem");

  GsbSolution sol;
  const SdeScalars end = scalars(problem.sde, problem.sde.horizon, problem.n0.dim());
  sol.sigma_star_ = end.sigma_star;
  sol.c_star_ = c_sigma(problem.n0.cov, problem.nT.cov, sol.sigma_star_);
  sol.sigma0_inv_ = inverse_spd(problem.n0.cov);

  const Matrix& c = sol.c_star_;
  sol.end_given_start_ =
      SymPsdMatrix(symmetrized(problem.nT.cov.matrix() - c.transpose() * sol.sigma0_inv_ * c));
  try {
    sol.sigmaT_inv_ = inverse_spd(problem.nT.cov);
    sol.start_given_end_ = SymPsdMatrix(
        symmetrized(problem.n0.cov.matrix() - c * (*sol.sigmaT_inv_) * c.transpose()));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SingularCovariance) throw;
  }
  sol.problem_ = std::move(problem);
  return sol;
}

Gaussian marginal(const GsbSolution& sol, double t) {
  const SdeScalars s = scalars(sol.sde(), t, sol.dim());
  return Gaussian(mean_at(sol, s), SymPsdMatrix(symmetrized(cov_at(sol, s))));
}

Vector marginal_mean_velocity(const GsbSolution& sol, double t) {
  const SdeScalars s = scalars(sol.sde(), t, sol.dim());
  const GsbProblem& p = sol.problem();
  return s.drbar * p.n0.mean + s.dr * p.nT.mean + s.dxi - s.dr * s.xi_T;
}

DriftMatrix drift_matrix(const GsbSolution& sol, double t) {
  check_interior(sol, t);
  const SdeScalars s = scalars(sol.sde(), t, sol.dim());
  const GsbProblem& p = sol.problem();
  const Eigen::Index d = sol.dim();
  const Matrix& c = sol.c_star();

  const Matrix s_mat = s.dr * (s.r * p.nT.cov.matrix() + s.rbar * c) +
                       s.drbar * (s.rbar * p.n0.cov.matrix() + s.r * c.transpose()) +
                       (s.alpha * s.kernel_tt * (1.0 - s.rho) - s.vol * s.vol * s.rho) *
                           Matrix::Identity(d, d);
  const SymPsdMatrix cov(symmetrized(cov_at(sol, s)));
  const Matrix cov_inv = inverse_spd(cov, ErrorCode::SingularMarginal);

  DriftMatrix out;
  out.t = t;
  out.a = s_mat.transpose() * cov_inv;
  const Vector mean_velocity = s.drbar * p.n0.mean + s.dr * p.nT.mean + s.dxi - s.dr * s.xi_T;
  out.b = mean_velocity - out.a * mean_at(sol, s);
  return out;
}

Vector drift(const GsbSolution& sol, double t, const Vector& x) {
  if (x.size() != sol.dim()) throw Error(ErrorCode::DimensionMismatch, "state dimension");
  const DriftMatrix dm = drift_matrix(sol, t);
  return dm.a * x + dm.b;
}

Gaussian bridge_given_start(const GsbSolution& sol, double t, const Vector& x0) {
  if (x0.size() != sol.dim()) throw Error(ErrorCode::DimensionMismatch, "x0 dimension");
  const SdeScalars s = scalars(sol.sde(), t, sol.dim());
  const GsbProblem& p = sol.problem();
  const Eigen::Index d = sol.dim();
  const Vector end_mean = p.nT.mean + sol.c_star().transpose() * (sol.sigma0_inv() * (x0 - p.n0.mean));
  Vector mean = s.rbar * x0 + s.r * end_mean + (s.xi - s.r * s.xi_T);
  const Matrix cov = s.r * s.r * sol.end_given_start_cov().matrix() +
                     s.kernel_tt * (1.0 - s.rho) * Matrix::Identity(d, d);
  return Gaussian(std::move(mean), SymPsdMatrix(symmetrized(cov)));
}

Gaussian bridge_given_end(const GsbSolution& sol, double t, const Vector& xT) {
  if (xT.size() != sol.dim()) throw Error(ErrorCode::DimensionMismatch, "xT dimension");
  if (!sol.sigmaT_inv())
    throw Error(ErrorCode::SingularCovariance, "end covariance is singular; cannot condition on X_T");
  const SdeScalars s = scalars(sol.sde(), t, sol.dim());
  const GsbProblem& p = sol.problem();
  const Eigen::Index d = sol.dim();
  const Vector start_mean = p.n0.mean + sol.c_star() * ((*sol.sigmaT_inv()) * (xT - p.nT.mean));
  Vector mean = s.r * xT + s.rbar * start_mean + (s.xi - s.r * s.xi_T);
  const Matrix cov = s.rbar * s.rbar * sol.start_given_end_cov()->matrix() +
                     s.kernel_tt * (1.0 - s.rho) * Matrix::Identity(d, d);
  return Gaussian(std::move(mean), SymPsdMatrix(symmetrized(cov)));
}

ValidationReport validate(const GsbSolution& sol, int n_grid, const ValidationTolerances& tol) {
  ValidationReport report;
  report.tol = tol;
  try {
    if (n_grid < 3) throw Error(ErrorCode::InvalidParams, "validation grid needs n_grid >= 3");
    const GsbProblem& p = sol.problem();
    const double T = sol.horizon();
    const Eigen::Index d = sol.dim();

    const auto gaussian_gap = [](const Gaussian& a, const Gaussian& b) {
      return std::max((a.mean - b.mean).cwiseAbs().maxCoeff(),
                      (a.cov.matrix() - b.cov.matrix()).cwiseAbs().maxCoeff());
    };
    report.boundary_error_start = gaussian_gap(marginal(sol, 0.0), p.n0);
    report.boundary_error_end = gaussian_gap(marginal(sol, T), p.nT);

    const double h = 1e-6 * T;
    bool all_ok = report.boundary_error_start <= tol.boundary &&
                  report.boundary_error_end <= tol.boundary;
    for (int i = 0; i < n_grid; ++i) {
      const double t = T * static_cast<double>(i + 1) / static_cast<double>(n_grid + 1);
      ValidationPoint pt;
      pt.t = t;
      const DriftMatrix dm = drift_matrix(sol, t);
      pt.symmetry_defect = inf_norm(dm.a - dm.a.transpose()) / (1.0 + inf_norm(dm.a));

      const Matrix cov = marginal(sol, t).cov.matrix();
      const Matrix fd =
          (marginal(sol, t + h).cov.matrix() - marginal(sol, t - h).cov.matrix()) / (2.0 * h);
      const double g = sol.sde().vol(t);
      const Matrix transport = dm.a * cov + cov * dm.a.transpose();
      const Matrix diffusion = g * g * Matrix::Identity(d, d);
      const double scale =
          std::max({fd.norm(), transport.norm(), diffusion.norm(), 1e-300});
      pt.ode_residual = (fd - transport - diffusion).norm() / scale;

      pt.pass = pt.symmetry_defect <= tol.symmetry && pt.ode_residual <= tol.ode;
      all_ok = all_ok && pt.pass;
      report.max_symmetry_defect = std::max(report.max_symmetry_defect, pt.symmetry_defect);
      report.max_ode_residual = std::max(report.max_ode_residual, pt.ode_residual);
      report.points.push_back(pt);
    }
    report.passed = all_ok;
  } catch (const Error& e) {
    report.error = e.what();
    report.passed = false;
  }
  return report;
}

ValidationReport validate(const GsbProblem& problem, int n_grid, const ValidationTolerances& tol) {
  try {
    return validate(solve(problem), n_grid, tol);
  } catch (const Error& e) {
    ValidationReport report;
    report.tol = tol;
    report.error = e.what();
    return report;
  }
}

std::string ValidationReport::to_text() const {
  std::ostringstream os;
  os.precision(6);
  os << std::scientific;
  os << "GSB validation: " << (passed ? "PASS" : "FAIL") << "\n";
  if (!error.empty()) os << "  error: " << error << "\n";
  os << "  boundary error t=0: " << boundary_error_start << " (tol " << tol.boundary << ")\n";
  os << "  boundary error t=T: " << boundary_error_end << " (tol " << tol.boundary << ")\n";
  os << "  t             symmetry      ode-residual  status\n";
  for (const auto& p : points)
    os << "  " << p.t << "  " << p.symmetry_defect << "  " << p.ode_residual << "  "
       << (p.pass ? "ok" : "FAIL") << "\n";
  os << "  max symmetry defect: " << max_symmetry_defect << " (tol " << tol.symmetry << ")\n";
  os << "  max ode residual:    " << max_ode_residual << " (tol " << tol.ode << ")\n";
  return os.str();
}

std::string ValidationReport::to_json() const {
  nlohmann::json j;
  j["passed"] = passed;
  j["error"] = error;
  j["boundary_error_start"] = boundary_error_start;
  j["boundary_error_end"] = boundary_error_end;
  j["max_symmetry_defect"] = max_symmetry_defect;
  j["max_ode_residual"] = max_ode_residual;
  j["tolerances"] = {{"symmetry", tol.symmetry}, {"ode", tol.ode}, {"boundary", tol.boundary}};
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points)
    pts.push_back({{"t", p.t},
                   {"symmetry_defect", p.symmetry_defect},
                   {"ode_residual", p.ode_residual},
                   {"pass", p.pass}});
  j["points"] = pts;
  return j.dump(2);
}

}  // namespace gsb
