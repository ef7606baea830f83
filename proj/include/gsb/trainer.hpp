#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gsb/policy.hpp"
#include "gsb/simulate.hpp"
#include "gsb/solver.hpp"

namespace gsb {

struct TrainConfig {
  int pretrain_f = 1000;  // N_f
  int pretrain_b = 1000;  // N_b
  int outer = 20;         // M
  int inner = 200;        // N
  int cache_every = 50;   // F
  double lr_f = 2e-4;
  double lr_b = 2e-4;
  int batch_size = 512;   // (path, time) pairs per gradient step
  int n_steps = 100;      // grid nodes for simulation and the loss integral
  int sim_paths = 1000;   // paths per cached simulation
  std::uint64_t seed = 0;
  double shrinkage = 1e-3;
  bool generative = false;  // forward policy pinned to zero
  bool cold_start = false;  // skip pretraining

  // Throws ConfigError unless all counts are positive (M, N_f, N_b may be 0)
  // and 1 <= F <= N.
  void validate() const;
};

struct LossRecord {
  std::uint64_t iter = 0;
  std::string phase;  // pretrain_b, pretrain_f, train_b, train_f
  double loss = 0.0;
};

// Every trajectory simulation of the alternating phase, with the (outer,
// inner) index at which it happened.
struct CacheLedger {
  struct Entry {
    Direction direction;
    int outer;
    int inner;
  };
  std::uint64_t forward_sims = 0;
  std::uint64_t backward_sims = 0;
  std::vector<Entry> entries;
};

struct FailureRecord {
  bool failed = false;
  std::string code;
  std::string message;
  std::string phase;
  int outer = -1;
  int inner = -1;

  std::string to_json() const;
};

struct RunState {
  GsbProblem problem;
  GsbSolution sol;
  PolicyNetwork net_f;
  PolicyNetwork net_b;
  OptimizerState opt_f;
  OptimizerState opt_b;
  std::uint64_t iteration = 0;
  std::vector<LossRecord> history;
  CacheLedger ledger;
  std::optional<TrajectoryBatch> cache_forward;
  std::optional<TrajectoryBatch> cache_backward;
  FailureRecord failure;
};

// Estimates both moments, solves the Gaussian bridge under `sde`, and builds
// zero-output policies of architecture `arch` (dim and horizon are taken from
// the data and the SDE).
RunState init_run(const TrainConfig& cfg, PolicyArchitecture arch, const LinearSdeSpec& sde,
                  const Batch& data0, const Batch& dataT);

// Forward and backward pretraining from exact bridge draws: N_b backward
// steps conditioned on x0 ~ data0, then N_f forward steps conditioned on
// xT ~ dataT, each with the other policy frozen at zero. Never simulates.
void pretrain(RunState& state, const TrainConfig& cfg, const Batch& data0, const Batch& dataT);

// Called after every completed outer iteration with its 0-based index.
using OuterHook = std::function<void(const RunState&, int outer)>;

// M outer iterations of a backward block then a forward block of N steps;
// each block resimulates its cache when j mod F == 0 (j = 0..N-1). On a
// numerical failure the networks are restored to the end of the last
// completed outer iteration, `failure` is filled in, and the error rethrown.
void train_alternating(RunState& state, const TrainConfig& cfg, const Batch& data0,
                       const Batch& dataT, const OuterHook& on_outer = {});

// Terminal states of the controlled SDE started from `source` with EMA
// policies: forward maps start-side points to time T, backward maps end-side
// points to time 0.
Batch generate(const RunState& state, Direction direction, const Batch& source, int n_steps,
               std::uint64_t seed, bool generative = false);
// Full sample paths behind generate(); same seed, same draws.
TrajectoryBatch generate_paths(const RunState& state, Direction direction, const Batch& source,
                               int n_steps, std::uint64_t seed, bool generative = false);

// CSV "iter,phase,loss".
std::string loss_history_csv(const std::vector<LossRecord>& history);

}  // namespace gsb
