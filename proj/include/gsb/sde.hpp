#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "gsb/linalg.hpp"

namespace gsb {

using ScalarFn = std::function<double(double)>;
using VectorFn = std::function<Vector(double)>;

// Analytic forms of zeta_t = exp(int_0^t alpha), I(t) = int_0^t (g_s / zeta_s)^2 ds
// and xi_t = zeta_t int_0^t m_s / zeta_s ds. `xi` is empty when the shift is zero.
struct ClosedForms {
  ScalarFn zeta;
  ScalarFn integral;
  VectorFn xi;
};

// Reference SDE dY = (alpha_t Y + m_t) dt + g_t dW on [0, horizon].
struct LinearSdeSpec {
  std::string name = "custom";
  ScalarFn alpha;
  VectorFn shift;  // empty means m_t = 0
  ScalarFn vol;
  double horizon = 1.0;
  std::optional<ClosedForms> closed_forms;

  bool has_shift() const { return static_cast<bool>(shift); }
};

// Every scalar quantity of the closed-form bridge at one time t.
struct SdeScalars {
  double t = 0.0;
  double alpha = 0.0;
  double vol = 0.0;
  double zeta = 1.0;
  double zeta_T = 1.0;
  double kernel_tt = 0.0;
  double kernel_tT = 0.0;
  double kernel_TT = 0.0;
  double r = 0.0;      // K(t,T) / K(T,T)
  double rbar = 1.0;   // zeta_t - r_t zeta_T
  double rho = 0.0;    // I(t) / I(T)
  double dr = 0.0;
  double drbar = 0.0;
  double sigma_star = 0.0;  // sqrt(K(T,T) / zeta_T)
  Vector xi;
  Vector xi_T;
  Vector dxi;
};

double zeta(const LinearSdeSpec& spec, double t);
double integral(const LinearSdeSpec& spec, double t);
Vector xi(const LinearSdeSpec& spec, double t, Eigen::Index dim);

// K(t, t') = zeta_t zeta_t' I(min(t, t')); bit-exactly symmetric.
double kernel(const LinearSdeSpec& spec, double t, double tp);

SdeScalars scalars(const LinearSdeSpec& spec, double t, Eigen::Index dim);

// Adaptive Simpson tolerances for the quadrature fallback.
inline constexpr double kQuadTolerance = 1e-10;
inline constexpr int kQuadMaxDepth = 40;

// Numeric I(t) with zeta_t itself obtained by quadrature of alpha; independent
// of any closed forms `spec` carries.
double quad_integral(const LinearSdeSpec& spec, double t);
double quad_zeta(const LinearSdeSpec& spec, double t);
Vector quad_xi(const LinearSdeSpec& spec, double t, Eigen::Index dim);

// Scalar adaptive Simpson on [a, b]; throws QuadratureFailure on depth exhaustion.
double adaptive_simpson(const ScalarFn& f, double a, double b, double tol = kQuadTolerance,
                        int max_depth = kQuadMaxDepth);

enum class Preset { Bm, Vesde, Vpsde, SubVpsde, OuVasicek, Bdt };

Preset parse_preset(std::string_view name);
std::string_view preset_name(Preset p);

struct PresetParams {
  double nu = 1.0;
  double sigma_min = 0.01;
  double sigma_max = 2.0;
  double beta_min = 0.1;
  double beta_max = 20.0;
  double delta = 1.0;
  Vector b;        // constant shift (OU/Vasicek and BDT); empty means zero
  Vector b_slope;  // BDT only: m_t = b + b_slope * t
  double horizon = 1.0;
};

LinearSdeSpec preset(Preset p, const PresetParams& params);

// Copy of a spec with its closed forms dropped, forcing the quadrature route.
LinearSdeSpec without_closed_forms(LinearSdeSpec spec);

}  // namespace gsb
