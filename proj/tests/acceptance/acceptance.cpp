// Acceptance checks: one PASS/FAIL line per criterion. Arguments select
// criteria by number (default: all); the exit status is 0 iff all pass.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gsb/config.hpp"
#include "gsb/metrics.hpp"
#include "gsb/policy.hpp"
#include "gsb/simulate.hpp"
#include "gsb/solver.hpp"
#include "gsb/trainer.hpp"

using namespace gsb;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const std::vector<Preset> kPresets = {Preset::Bm,       Preset::Vesde,     Preset::Vpsde,
                                      Preset::SubVpsde, Preset::OuVasicek, Preset::Bdt};
const std::vector<Eigen::Index> kDims = {1, 2, 8, 16};

Matrix random_spd(std::mt19937_64& gen, Eigen::Index d) {
  std::normal_distribution<double> nd;
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = nd(gen);
  Matrix m = a * a.transpose() / static_cast<double>(d);
  m.diagonal().array() += 0.2;
  return 0.5 * (m + m.transpose());
}

Vector random_vector(std::mt19937_64& gen, Eigen::Index d, double scale) {
  std::normal_distribution<double> nd;
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = scale * nd(gen);
  return v;
}

// Problem i of preset p: dimension kDims[i % 4], data multiplied by `scale`.
GsbProblem random_problem(Preset p, int i, double scale) {
  std::mt19937_64 gen(1000 * static_cast<std::uint64_t>(p) + static_cast<std::uint64_t>(i));
  const Eigen::Index d = kDims[static_cast<std::size_t>(i) % kDims.size()];
  PresetParams params;
  if (p == Preset::OuVasicek || p == Preset::Bdt) params.b = random_vector(gen, d, 0.5);
  if (p == Preset::Bdt) params.b_slope = random_vector(gen, d, 0.5);
  const Vector m0 = random_vector(gen, d, 1.0);
  const Matrix s0 = random_spd(gen, d);
  const Vector mT = random_vector(gen, d, 1.0);
  const Matrix sT = random_spd(gen, d);
  return GsbProblem{preset(p, params), Gaussian(scale * m0, SymPsdMatrix(scale * scale * s0)),
                    Gaussian(scale * mT, SymPsdMatrix(scale * scale * sT))};
}

double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

Outcome boundary_exactness(double scale) {
  double worst = 0.0;
  for (Preset p : kPresets)
    for (int i = 0; i < 10; ++i) {
      const GsbProblem prob = random_problem(p, i, scale);
      const GsbSolution sol = solve(prob);
      const Gaussian a = marginal(sol, 0.0);
      const Gaussian b = marginal(sol, sol.horizon());
      worst = std::max({worst, max_abs(a.mean - prob.n0.mean),
                        max_abs(a.cov.matrix() - prob.n0.cov.matrix()),
                        max_abs(b.mean - prob.nT.mean),
                        max_abs(b.cov.matrix() - prob.nT.cov.matrix())});
    }
  return {worst <= 1e-10, "max boundary error " + fmt("%.3e", worst) + " over 60 problems"};
}

// Scalar BM nu = 1, T = 1 between N(0, s) and N(0, s), where r = t, rbar = 1 - t,
// K(1 - rho) = t (1 - t):
//   C = (sqrt(4 s^2 + 1) - 1) / 2
//   Sigma*_t = (rbar^2 + r^2) s + 2 r rbar C + t (1 - t)
//   A_t = ((r - rbar) s + (rbar - r) C - t) / Sigma*_t   (dr = 1, drbar = -1, g = 1)
//   X_t | X_0 = x ~ N(rbar x + r C x / s, r^2 (s - C^2 / s) + t (1 - t)).
struct ScalarOracle {
  double c, sigma_half, drift_half, bridge_mean, bridge_var;
};

ScalarOracle scalar_oracle(double s, double x) {
  const double c = 0.5 * (std::sqrt(4.0 * s * s + 1.0) - 1.0);
  const double t = 0.5, r = t, rb = 1.0 - t;
  const double sig = (rb * rb + r * r) * s + 2.0 * r * rb * c + t * (1.0 - t);
  const double a = ((r - rb) * s + (rb - r) * c - t) / sig;
  return {c, sig, a * x, rb * x + r * c * x / s, r * r * (s - c * c / s) + t * (1.0 - t)};
}

Outcome golden_values(double scale) {
  const double s = scale * scale;
  const double x = scale;
  const GsbSolution sol = solve(GsbProblem{preset(Preset::Bm, PresetParams{}),
                                           Gaussian(Vector::Zero(1), SymPsdMatrix(Matrix::Constant(1, 1, s))),
                                           Gaussian(Vector::Zero(1), SymPsdMatrix(Matrix::Constant(1, 1, s)))});
  const Vector x0 = Vector::Constant(1, x);
  const Gaussian br = bridge_given_start(sol, 0.5, x0);
  const std::vector<double> got = {sol.c_star()(0, 0), marginal(sol, 0.5).cov(0, 0),
                                   drift(sol, 0.5, x0)(0), br.mean(0), br.cov(0, 0)};
  std::vector<double> want;
  if (scale == 1.0) {
    want = {0.6180340, 1.0590170, -0.4721360, 0.8090170, 0.4045085};
  } else {
    const ScalarOracle o = scalar_oracle(s, x);
    want = {o.c, o.sigma_half, o.drift_half, o.bridge_mean, o.bridge_var};
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i)
    worst = std::max(worst, std::abs(got[i] - want[i]) / std::max(1.0, std::abs(want[i])));
  return {worst <= 1e-6, "max deviation " + fmt("%.3e", worst)};
}

Outcome drift_symmetry(double scale) {
  double worst = 0.0;
  for (Preset p : kPresets)
    for (int i = 0; i < 10; ++i) {
      const GsbSolution sol = solve(random_problem(p, i, scale));
      for (int k = 1; k <= 20; ++k) {
        const Matrix a = drift_matrix(sol, sol.horizon() * k / 21.0).a;
        worst = std::max(worst, max_abs(a - a.transpose()) / std::max(max_abs(a), 1e-300));
      }
    }
  return {worst <= 1e-8, "max relative asymmetry " + fmt("%.3e", worst)};
}

Outcome covariance_ode(double scale) {
  double worst = 0.0;
  for (Preset p : kPresets)
    for (int i = 0; i < 10; ++i) {
      const GsbSolution sol = solve(random_problem(p, i, scale));
      const double h = 1e-6 * sol.horizon();
      const Eigen::Index d = sol.dim();
      for (int k = 1; k <= 20; ++k) {
        const double t = sol.horizon() * k / 21.0;
        const Matrix cov = marginal(sol, t).cov.matrix();
        const Matrix a = drift_matrix(sol, t).a;
        const Matrix fd = (marginal(sol, t + h).cov.matrix() - marginal(sol, t - h).cov.matrix()) / (2.0 * h);
        const double g = sol.sde().vol(t);
        const Matrix rhs = a * cov + cov * a.transpose() + g * g * Matrix::Identity(d, d);
        worst = std::max(worst, (fd - rhs).norm() / std::max(fd.norm(), rhs.norm()));
      }
    }
  return {worst <= 1e-4, "max relative residual " + fmt("%.3e", worst)};
}

Outcome sinkhorn_oracle() {
  const GsbSolution sol = solve(GsbProblem{preset(Preset::Bm, PresetParams{}),
                                           Gaussian(Vector::Zero(1), SymPsdMatrix(Matrix::Identity(1, 1))),
                                           Gaussian(Vector::Zero(1), SymPsdMatrix(Matrix::Identity(1, 1)))});
  const int n = 401;
  Vector x(n);
  for (int i = 0; i < n; ++i) x(i) = -8.0 + 16.0 * i / (n - 1);
  Vector w = (-0.5 * x.array().square()).exp().matrix();
  w /= w.sum();
  Matrix cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cost(i, j) = 0.5 * (x(i) - x(j)) * (x(i) - x(j));
  SinkhornConfig cfg;
  cfg.epsilon = sol.sigma_star() * sol.sigma_star();
  cfg.tol = 1e-11;
  cfg.max_iters = 100000;
  const SinkhornPlan sp = sinkhorn_plan(w, w, cost, cfg);
  const double m = w.dot(x);
  const double cross = (x.array() - m).matrix().transpose() * sp.plan * (x.array() - m).matrix();
  const double target = sol.c_star()(0, 0);
  const double rel = std::abs(cross - target) / target;
  return {sp.summary.converged && rel <= 0.02,
          "cross-covariance " + fmt("%.6f", cross) + " vs " + fmt("%.6f", target) + " (rel " +
              fmt("%.2e", rel) + ")"};
}

Outcome monte_carlo() {
  const GsbSolution sol = solve(GsbProblem{preset(Preset::Bm, PresetParams{}),
                                           Gaussian(Vector::Zero(1), SymPsdMatrix(Matrix::Identity(1, 1))),
                                           Gaussian(Vector::Zero(1), SymPsdMatrix(Matrix::Identity(1, 1)))});
  std::mt19937_64 gen(2024);
  std::normal_distribution<double> nd;
  Batch x0(10000, 1);
  for (Eigen::Index i = 0; i < x0.rows(); ++i) x0(i, 0) = nd(gen);
  const TimeGrid grid(1.0, 200);
  const TrajectoryBatch tr = euler_forward(sol, {}, x0, grid, 11);
  double mean_err = 0.0;
  double var_err = 0.0;
  for (double target : {0.25, 0.5, 0.75, grid.t_end()}) {
    int k = 0;
    for (int j = 0; j < grid.n_steps(); ++j)
      if (std::abs(grid.time(j) - target) < std::abs(grid.time(k) - target)) k = j;
    const Batch s = tr.slice(k);
    const Gaussian m = marginal(sol, grid.time(k));
    const double mean = s.col(0).mean();
    const double var = (s.col(0).array() - mean).square().sum() / static_cast<double>(s.rows() - 1);
    mean_err = std::max(mean_err, std::abs(mean - m.mean(0)));
    var_err = std::max(var_err, std::abs(var - m.cov(0, 0)));
  }
  return {mean_err <= 0.05 && var_err <= 0.1,
          "max mean error " + fmt("%.4f", mean_err) + ", max variance error " + fmt("%.4f", var_err)};
}

PolicyArchitecture tiny_arch(Eigen::Index d) {
  PolicyArchitecture a;
  a.dim = d;
  a.hidden = {6, 5};
  a.final_layer_zero = false;
  return a;
}

PolicyNetwork scaled_net(Eigen::Index d, std::uint64_t seed) {
  PolicyNetwork net(tiny_arch(d), seed);
  net.params() *= 1.5;
  return net;
}

Outcome gradient_gates() {
  std::mt19937_64 gen(7);
  std::normal_distribution<double> nd;
  const auto cloud = [&](Eigen::Index n, Eigen::Index d) {
    Batch b(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) b(i, j) = nd(gen);
    return b;
  };

  double div_err = 0.0;
  for (Eigen::Index d : {1, 2, 4}) {
    const PolicyNetwork net = scaled_net(d, 10 + static_cast<std::uint64_t>(d));
    const Batch x = cloud(6, d);
    const Vector div = divergence(net, 0.4, x);
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double fd = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        Batch xp = x.row(i), xm = x.row(i);
        xp(0, j) += h;
        xm(0, j) -= h;
        fd += (policy_eval(net, 0.4, xp)(0, j) - policy_eval(net, 0.4, xm)(0, j)) / (2.0 * h);
      }
      div_err = std::max(div_err, std::abs(div(i) - fd) / std::max({std::abs(fd), std::abs(div(i)), 1e-8}));
    }
  }

  const Eigen::Index d = 2;
  const GsbSolution sol = solve(GsbProblem{preset(Preset::Bm, PresetParams{}),
                                           Gaussian(Vector::Zero(d), SymPsdMatrix::identity(d)),
                                           Gaussian(Vector::Ones(d), SymPsdMatrix::identity(d))});
  const TimeGrid grid(1.0, 10);
  const TrajectoryBatch fwd = euler_forward(sol, {}, cloud(8, d), grid, 1);
  const TrajectoryBatch bwd = euler_backward(sol, {}, cloud(8, d), grid, 2);
  PolicyNetwork f = scaled_net(d, 30);
  PolicyNetwork b = scaled_net(d, 31);
  double grad_err = 0.0;
  for (int which = 0; which < 2; ++which) {
    PolicyNetwork& trained = which == 0 ? b : f;
    const auto loss = [&] {
      return which == 0 ? loss_and_grad_backward(fwd, &f, b, sol.sde())
                        : loss_and_grad_forward(bwd, &b, f, sol.sde());
    };
    const Vector grad = loss().grad;
    const Vector p0 = trained.params();
    const double h = 1e-6;
    for (Eigen::Index k = 0; k < p0.size(); ++k) {
      Vector p = p0;
      p(k) += h;
      trained.set_params(p);
      const double up = loss().total;
      p(k) -= 2.0 * h;
      trained.set_params(p);
      const double down = loss().total;
      const double fd = (up - down) / (2.0 * h);
      grad_err = std::max(grad_err, std::abs(grad(k) - fd) / std::max({std::abs(fd), std::abs(grad(k)), 1e-6}));
    }
    trained.set_params(p0);
  }
  return {div_err <= 1e-5 && grad_err <= 1e-4,
          "divergence " + fmt("%.2e", div_err) + ", loss gradients " + fmt("%.2e", grad_err)};
}

// Full default run: pretraining, W_eps of the pretrained policies, the
// alternating phase, and W_eps again.
struct TrainingRun {
  double wf_pre = 0.0, wb_pre = 0.0, wf = 0.0, wb = 0.0;
  bool failed = false;
  std::string failure;
  std::string checkpoints;
  std::string metrics;
};

TrainingRun training_run(const std::vector<std::string>& overrides) {
  json doc{{"config_version", kConfigVersion}};
  for (const std::string& o : overrides) apply_override(doc, o);
  const RunConfig c = parse_config(doc);
  const Batch d0 = load_data(c, true);
  const Batch dT = load_data(c, false);
  const Batch src0 = d0.topRows(std::min<Eigen::Index>(c.eval.n_generate, d0.rows()));
  const Batch srcT = dT.topRows(std::min<Eigen::Index>(c.eval.n_generate, dT.rows()));
  TrainingRun out;
  RunState st = init_run(c.train, c.net, c.sde_spec(), d0, dT);
  const auto measure = [&](double& wf, double& wb) {
    const SinkhornResult f = sinkhorn_weps(generate(st, Direction::Forward, src0, c.eval.n_steps, c.train.seed), dT, c.eval.sinkhorn);
    const SinkhornResult b = sinkhorn_weps(generate(st, Direction::Backward, srcT, c.eval.n_steps, c.train.seed), d0, c.eval.sinkhorn);
    wf = f.value;
    wb = b.value;
    out.metrics += f.to_json() + b.to_json();
  };
  try {
    pretrain(st, c.train, d0, dT);
    measure(out.wf_pre, out.wb_pre);
    train_alternating(st, c.train, d0, dT);
    measure(out.wf, out.wb);
  } catch (const Error& e) {
    out.failed = true;
    out.failure = e.what();
    return out;
  }
  std::ostringstream ck;
  write_checkpoint(Checkpoint{st.net_f, st.opt_f, c.train.seed}, ck);
  write_checkpoint(Checkpoint{st.net_b, st.opt_b, c.train.seed}, ck);
  out.checkpoints = ck.str();
  out.metrics += loss_history_csv(st.history);
  for (const LossRecord& r : st.history)
    if (!std::isfinite(r.loss)) out.failed = true;
  return out;
}

std::vector<std::string> seed_overrides(int seed) {
  return {"data.seed=" + std::to_string(seed), "train.seed=" + std::to_string(seed)};
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

Outcome synthetic_training() {
  const double t0 = cpu_seconds();
  bool ok = true;
  std::string detail;
  for (int seed = 0; seed < 3; ++seed) {
    const TrainingRun r = training_run(seed_overrides(seed));
    if (r.failed) {
      ok = false;
      detail += "seed " + std::to_string(seed) + " failed: " + r.failure + "; ";
      continue;
    }
    const double rf = r.wf / r.wf_pre;
    const double rb = r.wb / r.wb_pre;
    ok = ok && rf <= 0.5 && rb <= 0.5;
    const std::string line = "seed " + std::to_string(seed) + " forward " + fmt("%.4f", r.wf_pre) +
                             "->" + fmt("%.4f", r.wf) + " (" + fmt("%.0f%%", 100 * rf) +
                             "), backward " + fmt("%.4f", r.wb_pre) + "->" + fmt("%.4f", r.wb) +
                             " (" + fmt("%.0f%%", 100 * rb) + "); ";
    detail += line;
    std::fprintf(stderr, "criterion 8 %s\n", line.c_str());
  }
  const double cpu = cpu_seconds() - t0;
  ok = ok && cpu < 20 * 60;
  return {ok, detail + "cpu " + fmt("%.0f s", cpu)};
}

Outcome scale_robustness() {
  const double scale = 20.0;
  bool ok = true;
  std::string detail;
  const std::vector<std::pair<const char*, std::function<Outcome(double)>>> closed = {
      {"c1", boundary_exactness}, {"c2", golden_values}, {"c3", drift_symmetry}, {"c4", covariance_ode}};
  for (const auto& [name, check] : closed) {
    const Outcome o = check(scale);
    ok = ok && o.pass;
    detail += std::string(name) + (o.pass ? " pass" : " FAIL") + " (" + o.detail + "); ";
  }
  for (int seed = 0; seed < 3; ++seed) {
    std::vector<std::string> ov = seed_overrides(seed);
    ov.push_back("data.scale=20");
    const TrainingRun r = training_run(ov);
    ok = ok && !r.failed;
    const std::string line = "seed " + std::to_string(seed) + (r.failed ? " diverged: " + r.failure : " finite") + "; ";
    detail += line;
    std::fprintf(stderr, "criterion 9 %s\n", line.c_str());
  }
  return {ok, detail};
}

Outcome determinism() {
  const std::vector<std::string> ov = {"train.pretrain_f=100", "train.pretrain_b=100", "train.outer=2",
                                       "train.inner=20", "train.cache_every=10", "train.seed=5",
                                       "data.seed=5"};
  const TrainingRun a = training_run(ov);
  const TrainingRun b = training_run(ov);
  const bool same = !a.failed && !b.failed && a.checkpoints == b.checkpoints && a.metrics == b.metrics;
  return {same, same ? "checkpoints (" + std::to_string(a.checkpoints.size()) +
                           " bytes) and metrics identical"
                     : "runs differ"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria = {
      [] { return boundary_exactness(1.0); },
      [] { return golden_values(1.0); },
      [] { return drift_symmetry(1.0); },
      [] { return covariance_ode(1.0); },
      sinkhorn_oracle,
      monte_carlo,
      gradient_gates,
      synthetic_training,
      scale_robustness,
      determinism,
  };
  // Wall-clock limits from the criteria, in seconds (0: none).
  const std::vector<double> limits = {10, 0, 0, 0, 30, 60, 0, 0, 0, 0};

  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k < 1 || k > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "unknown criterion '%s'\n", argv[i]);
      return 2;
    }
    selected.push_back(k);
  }
  if (selected.empty())
    for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) selected.push_back(k);

  bool all = true;
  for (int k : selected) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[static_cast<std::size_t>(k - 1)]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double limit = limits[static_cast<std::size_t>(k - 1)];
    if (limit > 0 && secs >= limit) {
      o.pass = false;
      o.detail += "; over the " + fmt("%.0f s", limit) + " limit";
    }
    all = all && o.pass;
    std::printf("criterion %d: %s  %s  [%.1f s]\n", k, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
