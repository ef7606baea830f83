#include "gsb/trainer.hpp"

#include <sstream>

#include <json.hpp>

#include "gsb/metrics.hpp"
#include "gsb/rng.hpp"

namespace gsb {

namespace {

enum Phase : std::uint64_t { kPretrainB = 1, kPretrainF = 2, kTrainB = 3, kTrainF = 4, kGenerate = 5 };

std::string_view phase_name(Phase p) {
  switch (p) {
    case kPretrainB: return "pretrain_b";
    case kPretrainF: return "pretrain_f";
    case kTrainB: return "train_b";
    case kTrainF: return "train_f";
    case kGenerate: return "generate";
  }
  return "unknown";
}

std::uint64_t tag(Phase p, std::uint64_t a, std::uint64_t b = 0) {
  return (static_cast<std::uint64_t>(p) << 56) ^ (a << 24) ^ b;
}

PolicyFn as_policy(const PolicyNetwork& net) {
  return [&net](double t, const Batch& x) { return policy_eval(net, t, x); };
}

// n rows drawn uniformly with replacement from `data`.
Batch resample(const Batch& data, Eigen::Index n, std::uint64_t seed, std::uint64_t stream_tag) {
  Batch out(n, data.cols());
  const auto m = static_cast<std::uint64_t>(data.rows());
  for (Eigen::Index i = 0; i < n; ++i)
    out.row(i) = data.row(static_cast<Eigen::Index>(
        rng::index(rng::key(seed, rng::kResample, stream_tag, static_cast<std::uint64_t>(i)), m)));
  return out;
}

// Minibatch weights n_steps * w_k / B make the sum an unbiased estimate of the
// trapezoid time integral of the path-mean integrand.
void fill_time_node(EvalPoints& pts, Eigen::Index row, const TimeGrid& grid,
                    const std::vector<double>& w, int k, int batch, const LinearSdeSpec& sde) {
  pts.t(row) = grid.time(k);
  pts.weight(row) = static_cast<double>(grid.n_steps()) * w[static_cast<std::size_t>(k)] /
                    static_cast<double>(batch);
  pts.vol(row) = sde.vol(pts.t(row));
}

EvalPoints alloc_points(int batch, Eigen::Index d) {
  EvalPoints pts;
  pts.t.resize(batch);
  pts.x.resize(batch, d);
  pts.weight.resize(batch);
  pts.vol.resize(batch);
  return pts;
}

EvalPoints bridge_minibatch(const BridgeSampler& sampler, const Batch& data, int batch,
                            std::uint64_t seed, std::uint64_t step_tag, const LinearSdeSpec& sde) {
  const TimeGrid& grid = sampler.grid();
  const std::vector<double> w = grid.trapezoid_weights();
  EvalPoints pts = alloc_points(batch, data.cols());
  const auto n_data = static_cast<std::uint64_t>(data.rows());
  const auto n_nodes = static_cast<std::uint64_t>(grid.n_steps());
  for (int b = 0; b < batch; ++b) {
    const auto bu = static_cast<std::uint64_t>(b);
    const auto i = static_cast<Eigen::Index>(
        rng::index(rng::key(seed, rng::kMinibatch, step_tag, bu, 0), n_data));
    const int k = static_cast<int>(rng::index(rng::key(seed, rng::kMinibatch, step_tag, bu, 1), n_nodes));
    fill_time_node(pts, b, grid, w, k, batch, sde);
    pts.x.row(b) = sampler.draw(data.row(i), k, rng::key(seed, rng::kBridgeNoise, step_tag, bu));
  }
  return pts;
}

EvalPoints cache_minibatch(const TrajectoryBatch& traj, const PolicyNetwork* counterpart, int batch,
                           std::uint64_t seed, std::uint64_t step_tag, const LinearSdeSpec& sde) {
  const TimeGrid& grid = traj.grid;
  const std::vector<double> w = grid.trapezoid_weights();
  EvalPoints pts = alloc_points(batch, traj.dim);
  const auto n_paths = static_cast<std::uint64_t>(traj.n_paths);
  const auto n_nodes = static_cast<std::uint64_t>(grid.n_steps());
  for (int b = 0; b < batch; ++b) {
    const auto bu = static_cast<std::uint64_t>(b);
    const auto p = static_cast<Eigen::Index>(
        rng::index(rng::key(seed, rng::kMinibatch, step_tag, bu, 0), n_paths));
    const int k = static_cast<int>(rng::index(rng::key(seed, rng::kMinibatch, step_tag, bu, 1), n_nodes));
    fill_time_node(pts, b, grid, w, k, batch, sde);
    pts.x.row(b) = traj.state(p, k);
  }
  if (counterpart) pts.counterpart = policy_eval(*counterpart, pts.t, pts.x);
  return pts;
}

void update(PolicyNetwork& net, OptimizerState& opt, const EvalPoints& pts, RunState& state,
            Phase phase) {
  const LossTerms loss = policy_loss(net, pts, true);
  adam_step(net, loss.grad, opt);
  ema_update(opt, net);
  state.history.push_back({state.iteration++, std::string(phase_name(phase)), loss.total});
}

void check_data(const Batch& data0, const Batch& dataT) {
  if (data0.rows() == 0 || dataT.rows() == 0)
    throw Error(ErrorCode::TooFewPoints, "training data must be nonempty");
  if (data0.cols() != dataT.cols())
    throw Error(ErrorCode::DimensionMismatch, "start and end data differ in dimension");
}

}  // namespace

void TrainConfig::validate() const {
  const auto need = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::ConfigError, what);
  };
  need(pretrain_f >= 0 && pretrain_b >= 0, "pretrain iteration counts must be >= 0");
  need(outer >= 0, "outer iteration count must be >= 0");
  need(inner >= 1, "inner iteration count must be >= 1");
  need(cache_every >= 1 && cache_every <= inner, "caching frequency must satisfy 1 <= F <= N");
  need(lr_f > 0.0 && lr_b > 0.0, "learning rates must be positive");
  need(batch_size >= 1, "batch size must be >= 1");
  need(n_steps >= 2, "n_steps must be >= 2");
  need(sim_paths >= 1, "sim_paths must be >= 1");
  need(shrinkage >= 0.0, "shrinkage must be >= 0");
}

std::string FailureRecord::to_json() const {
  nlohmann::json j = {{"failed", failed}, {"code", code},   {"message", message},
                      {"phase", phase},   {"outer", outer}, {"inner", inner}};
  return j.dump();
}

RunState init_run(const TrainConfig& cfg, PolicyArchitecture arch, const LinearSdeSpec& sde,
                  const Batch& data0, const Batch& dataT) {
  cfg.validate();
  check_data(data0, dataT);
  RunState state;
  state.problem = GsbProblem{sde, estimate_moments(data0, cfg.shrinkage),
                             estimate_moments(dataT, cfg.shrinkage)};
  state.sol = solve(state.problem);
  arch.dim = data0.cols();
  arch.horizon = sde.horizon;
  arch.final_layer_zero = true;
  state.net_f = PolicyNetwork(arch, rng::key(cfg.seed, rng::kInit, 1));
  state.net_b = PolicyNetwork(arch, rng::key(cfg.seed, rng::kInit, 2));
  AdamConfig adam_f;
  adam_f.lr = cfg.lr_f;
  AdamConfig adam_b;
  adam_b.lr = cfg.lr_b;
  state.opt_f = OptimizerState(state.net_f, adam_f);
  state.opt_b = OptimizerState(state.net_b, adam_b);
  return state;
}

void pretrain(RunState& state, const TrainConfig& cfg, const Batch& data0, const Batch& dataT) {
  cfg.validate();
  check_data(data0, dataT);
  if (cfg.cold_start) return;
  const TimeGrid grid(state.sol.horizon(), cfg.n_steps);
  const LinearSdeSpec& sde = state.sol.sde();
  if (cfg.pretrain_b > 0) {
    const BridgeSampler from_start(state.sol, BridgeEndpoint::Start, grid);
    for (int k = 0; k < cfg.pretrain_b; ++k) {
      const EvalPoints pts = bridge_minibatch(from_start, data0, cfg.batch_size, cfg.seed,
                                              tag(kPretrainB, static_cast<std::uint64_t>(k)), sde);
      update(state.net_b, state.opt_b, pts, state, kPretrainB);
    }
  }
  if (cfg.pretrain_f > 0 && !cfg.generative) {
    const BridgeSampler from_end(state.sol, BridgeEndpoint::End, grid);
    for (int k = 0; k < cfg.pretrain_f; ++k) {
      const EvalPoints pts = bridge_minibatch(from_end, dataT, cfg.batch_size, cfg.seed,
                                              tag(kPretrainF, static_cast<std::uint64_t>(k)), sde);
      update(state.net_f, state.opt_f, pts, state, kPretrainF);
    }
  }
}

void train_alternating(RunState& state, const TrainConfig& cfg, const Batch& data0,
                       const Batch& dataT, const OuterHook& on_outer) {
  cfg.validate();
  check_data(data0, dataT);
  const TimeGrid grid(state.sol.horizon(), cfg.n_steps);
  const DriftTable table(state.sol, grid);
  const LinearSdeSpec& sde = state.sol.sde();

  struct Snapshot {
    PolicyNetwork f, b;
    OptimizerState of, ob;
  };
  Snapshot good{state.net_f, state.net_b, state.opt_f, state.opt_b};
  Phase phase = kTrainB;
  int outer = 0;
  int inner = 0;
  try {
    for (outer = 0; outer < cfg.outer; ++outer) {
      const auto ou = static_cast<std::uint64_t>(outer);
      phase = kTrainB;
      for (inner = 0; inner < cfg.inner; ++inner) {
        const auto ju = static_cast<std::uint64_t>(inner);
        if (inner % cfg.cache_every == 0) {
          const Batch x0 = resample(data0, cfg.sim_paths, cfg.seed, tag(kTrainB, ou, ju));
          const PolicyFn pf = cfg.generative ? PolicyFn{} : as_policy(state.net_f);
          state.cache_forward = euler_forward(table, pf, x0, rng::key(cfg.seed, kTrainB, ou, ju));
          ++state.ledger.forward_sims;
          state.ledger.entries.push_back({Direction::Forward, outer, inner});
        }
        const EvalPoints pts =
            cache_minibatch(*state.cache_forward, cfg.generative ? nullptr : &state.net_f,
                            cfg.batch_size, cfg.seed, tag(kTrainB, ou, ju), sde);
        update(state.net_b, state.opt_b, pts, state, kTrainB);
      }
      if (!cfg.generative) {
        phase = kTrainF;
        for (inner = 0; inner < cfg.inner; ++inner) {
          const auto ju = static_cast<std::uint64_t>(inner);
          if (inner % cfg.cache_every == 0) {
            const Batch xT = resample(dataT, cfg.sim_paths, cfg.seed, tag(kTrainF, ou, ju));
            state.cache_backward = euler_backward(table, as_policy(state.net_b), xT,
                                                  rng::key(cfg.seed, kTrainF, ou, ju));
            ++state.ledger.backward_sims;
            state.ledger.entries.push_back({Direction::Backward, outer, inner});
          }
          const EvalPoints pts = cache_minibatch(*state.cache_backward, &state.net_b,
                                                 cfg.batch_size, cfg.seed, tag(kTrainF, ou, ju), sde);
          update(state.net_f, state.opt_f, pts, state, kTrainF);
        }
      }
      good = Snapshot{state.net_f, state.net_b, state.opt_f, state.opt_b};
      if (on_outer) on_outer(state, outer);
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DivergedSimulation && e.code() != ErrorCode::NonFiniteLoss) throw;
    state.net_f = good.f;
    state.net_b = good.b;
    state.opt_f = good.of;
    state.opt_b = good.ob;
    state.failure = FailureRecord{true,  std::string(error_name(e.code())), e.what(),
                                  std::string(phase_name(phase)), outer, inner};
    throw;
  }
}

TrajectoryBatch generate_paths(const RunState& state, Direction direction, const Batch& source,
                               int n_steps, std::uint64_t seed, bool generative) {
  const TimeGrid grid(state.sol.horizon(), n_steps);
  const auto key = rng::key(seed, kGenerate, static_cast<std::uint64_t>(direction));
  if (direction == Direction::Forward) {
    const PolicyNetwork ema_f = ema_network(state.net_f, state.opt_f);
    return euler_forward(state.sol, generative ? PolicyFn{} : as_policy(ema_f), source, grid, key);
  }
  const PolicyNetwork ema_b = ema_network(state.net_b, state.opt_b);
  return euler_backward(state.sol, as_policy(ema_b), source, grid, key);
}

Batch generate(const RunState& state, Direction direction, const Batch& source, int n_steps,
               std::uint64_t seed, bool generative) {
  if (source.rows() == 0) return Batch(0, state.sol.dim());
  const TrajectoryBatch traj = generate_paths(state, direction, source, n_steps, seed, generative);
  return traj.slice(direction == Direction::Forward ? traj.grid.n_steps() - 1 : 0);
}

std::string loss_history_csv(const std::vector<LossRecord>& history) {
  std::ostringstream os;
  os.precision(17);
  os << "iter,phase,loss\n";
  for (const LossRecord& r : history) os << r.iter << "," << r.phase << "," << r.loss << "\n";
  return os.str();
}

}  // namespace gsb
