#include "gsb/sde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace gsb {

namespace {

constexpr double kDegenerateKernel = 1e-14;
constexpr int kQuadMinDepth = 4;

double checked_time(const LinearSdeSpec& spec, double t) {
  const double slack = 1e-12 * spec.horizon;
  if (!(t >= -slack && t <= spec.horizon + slack))
    throw Error(ErrorCode::TimeOutOfRange,
                "t = " + std::to_string(t) + " outside [0, " + std::to_string(spec.horizon) + "]");
  return std::clamp(t, 0.0, spec.horizon);
}

template <class Value, class Fn, class Norm>
Value simpson_step(const Fn& f, const Norm& norm, double a, double b, const Value& fa,
                   const Value& fm, const Value& fb, const Value& whole, double tol, int depth,
                   int level) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const Value flm = f(lm);
  const Value frm = f(rm);
  const Value left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const Value right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const Value sum = left + right;
  const Value delta = sum - whole;
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * norm(sum);
  if (level >= kQuadMinDepth && norm(delta) <= 15.0 * std::max(tol, floor))
    return sum + delta / 15.0;
  if (depth <= 0)
    throw Error(ErrorCode::QuadratureFailure,
                "adaptive Simpson depth exhausted near t = " + std::to_string(m));
  return simpson_step<Value>(f, norm, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, level + 1) +
         simpson_step<Value>(f, norm, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, level + 1);
}

template <class Value, class Fn, class Norm>
Value simpson(const Fn& f, const Norm& norm, double a, double b, double tol, int max_depth) {
  const Value fa = f(a);
  const Value fb = f(b);
  const Value fm = f(0.5 * (a + b));
  const Value whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_step<Value>(f, norm, a, b, fa, fm, fb, whole, tol, max_depth, 0);
}

Vector zero_or(const Vector& v, Eigen::Index dim) {
  if (v.size() == 0) return Vector::Zero(dim);
  if (v.size() != dim)
    throw Error(ErrorCode::DimensionMismatch, "shift dimension " + std::to_string(v.size()) +
                                                  " differs from problem dimension " +
                                                  std::to_string(dim));
  return v;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::InvalidParams, what);
}

}  // namespace

double adaptive_simpson(const ScalarFn& f, double a, double b, double tol, int max_depth) {
  if (a == b) return 0.0;
  return simpson<double>(f, [](double v) { return std::abs(v); }, a, b, tol, max_depth);
}

double quad_zeta(const LinearSdeSpec& spec, double t) {
  t = checked_time(spec, t);
  if (t == 0.0) return 1.0;
  return std::exp(adaptive_simpson(spec.alpha, 0.0, t));
}

double quad_integral(const LinearSdeSpec& spec, double t) {
  t = checked_time(spec, t);
  if (t == 0.0) return 0.0;
  const ScalarFn integrand = [&](double s) {
    const double ratio = spec.vol(s) / quad_zeta(spec, s);
    return ratio * ratio;
  };
  return adaptive_simpson(integrand, 0.0, t);
}

Vector quad_xi(const LinearSdeSpec& spec, double t, Eigen::Index dim) {
  t = checked_time(spec, t);
  if (!spec.has_shift() || t == 0.0) return Vector::Zero(dim);
  const auto integrand = [&](double s) -> Vector {
    return zero_or(spec.shift(s), dim) / quad_zeta(spec, s);
  };
  const auto norm = [](const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; };
  const Vector inner = simpson<Vector>(integrand, norm, 0.0, t, kQuadTolerance, kQuadMaxDepth);
  return quad_zeta(spec, t) * inner;
}

double zeta(const LinearSdeSpec& spec, double t) {
  if (spec.closed_forms) return spec.closed_forms->zeta(checked_time(spec, t));
  return quad_zeta(spec, t);
}

double integral(const LinearSdeSpec& spec, double t) {
  if (spec.closed_forms) return spec.closed_forms->integral(checked_time(spec, t));
  return quad_integral(spec, t);
}

Vector xi(const LinearSdeSpec& spec, double t, Eigen::Index dim) {
  t = checked_time(spec, t);
  if (!spec.has_shift()) return Vector::Zero(dim);
  if (spec.closed_forms && spec.closed_forms->xi) return zero_or(spec.closed_forms->xi(t), dim);
  return quad_xi(spec, t, dim);
}

double kernel(const LinearSdeSpec& spec, double t, double tp) {
  const double lo = checked_time(spec, std::min(t, tp));
  const double hi = checked_time(spec, std::max(t, tp));
  return zeta(spec, lo) * zeta(spec, hi) * integral(spec, lo);
}

SdeScalars scalars(const LinearSdeSpec& spec, double t, Eigen::Index dim) {
  t = checked_time(spec, t);
  const double T = spec.horizon;

  SdeScalars s;
  s.t = t;
  s.alpha = spec.alpha(t);
  s.vol = spec.vol(t);
  s.zeta = zeta(spec, t);
  s.zeta_T = zeta(spec, T);
  const double i_t = integral(spec, t);
  const double i_T = integral(spec, T);
  s.kernel_TT = s.zeta_T * s.zeta_T * i_T;
  if (!(s.kernel_TT > kDegenerateKernel))
    throw Error(ErrorCode::DegenerateHorizon,
                "K(T,T) = " + std::to_string(s.kernel_TT) + " is numerically zero");
  s.kernel_tt = s.zeta * s.zeta * i_t;
  s.kernel_tT = s.zeta * s.zeta_T * i_t;
  s.r = t == T ? 1.0 : s.kernel_tT / s.kernel_TT;
  s.rbar = s.zeta - s.r * s.zeta_T;
  s.rho = t == T ? 1.0 : i_t / i_T;
  s.sigma_star = std::sqrt(s.kernel_TT / s.zeta_T);

  s.dr = s.alpha * s.r + s.zeta_T * s.vol * s.vol / (s.zeta * s.kernel_TT);
  s.drbar = s.alpha * s.zeta - s.dr * s.zeta_T;

  s.xi = xi(spec, t, dim);
  s.xi_T = xi(spec, T, dim);
  s.dxi = s.alpha * s.xi;
  if (spec.has_shift()) s.dxi += zero_or(spec.shift(t), dim);
  return s;
}

Preset parse_preset(std::string_view name) {
  if (name == "bm") return Preset::Bm;
  if (name == "vesde") return Preset::Vesde;
  if (name == "vpsde") return Preset::Vpsde;
  if (name == "sub_vpsde") return Preset::SubVpsde;
  if (name == "ou_vasicek") return Preset::OuVasicek;
  if (name == "bdt") return Preset::Bdt;
  throw Error(ErrorCode::InvalidParams, "unknown sde preset '" + std::string(name) + "'");
}

std::string_view preset_name(Preset p) {
  switch (p) {
    case Preset::Bm: return "bm";
    case Preset::Vesde: return "vesde";
    case Preset::Vpsde: return "vpsde";
    case Preset::SubVpsde: return "sub_vpsde";
    case Preset::OuVasicek: return "ou_vasicek";
    case Preset::Bdt: return "bdt";
  }
  return "custom";
}

LinearSdeSpec preset(Preset p, const PresetParams& q) {
  require(q.horizon > 0.0 && std::isfinite(q.horizon), "horizon must be positive");
  LinearSdeSpec spec;
  spec.name = std::string(preset_name(p));
  spec.horizon = q.horizon;

  switch (p) {
    case Preset::Bm: {
      require(q.nu > 0.0, "bm requires nu > 0");
      const double nu = q.nu;
      spec.alpha = [](double) { return 0.0; };
      spec.vol = [nu](double) { return nu; };
      spec.closed_forms = ClosedForms{[](double) { return 1.0; },
                                      [nu](double t) { return nu * nu * t; }, {}};
      break;
    }
    case Preset::Vesde: {
      require(q.sigma_min > 0.0, "vesde requires sigma_min > 0");
      require(q.sigma_max > q.sigma_min, "vesde requires sigma_max > sigma_min");
      const double smin = q.sigma_min;
      const double ratio = q.sigma_max / q.sigma_min;
      const double log_ratio = std::log(ratio);
      spec.alpha = [](double) { return 0.0; };
      spec.vol = [=](double t) { return smin * std::pow(ratio, t) * std::sqrt(2.0 * log_ratio); };
      // sigma_t^2 - sigma_min^2, so that K(0,0) = 0.
      spec.closed_forms = ClosedForms{
          [](double) { return 1.0; },
          [=](double t) { return smin * smin * std::expm1(2.0 * t * log_ratio); }, {}};
      break;
    }
    case Preset::Vpsde:
    case Preset::SubVpsde: {
      require(q.beta_min >= 0.0, "beta_min must be nonnegative");
      require(q.beta_max >= q.beta_min && q.beta_max > 0.0, "beta_max must exceed beta_min");
      const double b0 = q.beta_min;
      const double db = q.beta_max - q.beta_min;
      const auto beta = [=](double t) { return b0 + t * db; };
      const auto big_b = [=](double t) { return b0 * t + 0.5 * db * t * t; };
      spec.alpha = [=](double t) { return -0.5 * beta(t); };
      const ScalarFn zeta_fn = [=](double t) { return std::exp(-0.5 * big_b(t)); };
      if (p == Preset::Vpsde) {
        spec.vol = [=](double t) { return std::sqrt(beta(t)); };
        spec.closed_forms =
            ClosedForms{zeta_fn, [=](double t) { return std::expm1(big_b(t)); }, {}};
      } else {
        spec.vol = [=](double t) {
          return std::sqrt(beta(t) * -std::expm1(-2.0 * big_b(t)));
        };
        spec.closed_forms = ClosedForms{zeta_fn,
                                        [=](double t) {
                                          const double sh = std::sinh(0.5 * big_b(t));
                                          return 4.0 * sh * sh;
                                        },
                                        {}};
      }
      break;
    }
    case Preset::OuVasicek: {
      require(q.delta > 0.0, "ou_vasicek requires delta > 0");
      require(q.nu > 0.0, "ou_vasicek requires nu > 0");
      const double delta = q.delta;
      const double nu = q.nu;
      spec.alpha = [delta](double) { return -delta; };
      spec.vol = [nu](double) { return nu; };
      ClosedForms cf{[delta](double t) { return std::exp(-delta * t); },
                     [=](double t) { return nu * nu * std::expm1(2.0 * delta * t) / (2.0 * delta); },
                     {}};
      if (q.b.size() > 0 && !q.b.isZero(0.0)) {
        const Vector b = q.b;
        spec.shift = [b](double) { return b; };
        cf.xi = [b, delta](double t) -> Vector { return (-std::expm1(-delta * t) / delta) * b; };
      }
      spec.closed_forms = std::move(cf);
      break;
    }
    case Preset::Bdt: {
      require(q.nu > 0.0, "bdt requires nu > 0");
      const double nu = q.nu;
      spec.alpha = [](double) { return 0.0; };
      spec.vol = [nu](double) { return nu; };
      ClosedForms cf{[](double) { return 1.0; }, [nu](double t) { return nu * nu * t; }, {}};
      const bool has_b = q.b.size() > 0;
      const bool has_slope = q.b_slope.size() > 0;
      if (has_b && has_slope && q.b.size() != q.b_slope.size())
        throw Error(ErrorCode::InvalidParams, "bdt shift and slope dimensions differ");
      if (has_b || has_slope) {
        const Eigen::Index d = has_b ? q.b.size() : q.b_slope.size();
        const Vector b = has_b ? q.b : Vector::Zero(d);
        const Vector c = has_slope ? q.b_slope : Vector::Zero(d);
        spec.shift = [b, c](double t) -> Vector { return b + t * c; };
        cf.xi = [b, c](double t) -> Vector { return t * b + (0.5 * t * t) * c; };
      }
      spec.closed_forms = std::move(cf);
      break;
    }
  }
  return spec;
}

LinearSdeSpec without_closed_forms(LinearSdeSpec spec) {
  spec.closed_forms.reset();
  return spec;
}

}  // namespace gsb
