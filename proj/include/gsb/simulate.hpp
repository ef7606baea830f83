#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "gsb/solver.hpp"

namespace gsb {

// Uniform grid of n_steps nodes on [t_start, t_end], both kept at least
// 1e-3 T away from the endpoints where the drift is singular.
class TimeGrid {
 public:
  static constexpr double kEndpointGuard = 1e-3;

  TimeGrid() = default;
  // Full clipped horizon [1e-3 T, T - 1e-3 T].
  TimeGrid(double horizon, int n_steps);
  // Requested interval, clipped into the guarded range.
  TimeGrid(double horizon, int n_steps, double t_start, double t_end);

  int n_steps() const { return n_steps_; }
  double horizon() const { return horizon_; }
  double t_start() const { return t_start_; }
  double t_end() const { return t_end_; }
  double dt() const { return dt_; }
  double time(int k) const;
  // Trapezoid weights over the nodes; they sum to t_end - t_start.
  std::vector<double> trapezoid_weights() const;

 private:
  int n_steps_ = 0;
  double horizon_ = 1.0;
  double t_start_ = 0.0;
  double t_end_ = 0.0;
  double dt_ = 0.0;
};

enum class Direction : std::uint32_t { Forward = 0, Backward = 1 };

// Discretized sample paths. Row path * n_steps + step of `states` holds the
// state of one path at one grid node.
struct TrajectoryBatch {
  TimeGrid grid;
  Direction direction = Direction::Forward;
  std::uint64_t seed = 0;
  Eigen::Index n_paths = 0;
  Eigen::Index dim = 0;
  Batch states;

  Eigen::Index row(Eigen::Index path, int step) const { return path * grid.n_steps() + step; }
  auto state(Eigen::Index path, int step) const { return states.row(row(path, step)); }
  auto state(Eigen::Index path, int step) { return states.row(row(path, step)); }
  // States of all paths at one node, n_paths x dim.
  Batch slice(int step) const;
};

// Learned drift correction Z(t, x) evaluated on a batch of rows. An empty
// function stands for Z = 0.
using PolicyFn = std::function<Batch(double t, const Batch& x)>;

// Drift matrices (A_k, b_k) and volatilities at every grid node, shared by
// the forward and backward integrators.
class DriftTable {
 public:
  DriftTable(const GsbSolution& sol, const TimeGrid& grid);

  const TimeGrid& grid() const { return grid_; }
  const DriftMatrix& at(int k) const { return drift_[static_cast<std::size_t>(k)]; }
  double vol(int k) const { return vol_[static_cast<std::size_t>(k)]; }
  Eigen::Index dim() const { return dim_; }

 private:
  TimeGrid grid_;
  Eigen::Index dim_ = 0;
  std::vector<DriftMatrix> drift_;
  std::vector<double> vol_;
};

// X_{k+1} = X_k + (f(t_k, X_k) + g_k Z(t_k, X_k)) dt + g_k sqrt(dt) eps_k with
// eps keyed by (seed, path, step). Throws DivergedSimulation on a non-finite state.
TrajectoryBatch euler_forward(const DriftTable& table, const PolicyFn& policy_f,
                              const Batch& x0, std::uint64_t seed);
TrajectoryBatch euler_forward(const GsbSolution& sol, const PolicyFn& policy_f, const Batch& x0,
                              const TimeGrid& grid, std::uint64_t seed);

// X_{k-1} = X_k - (f(t_k, X_k) - g_k Z(t_k, X_k)) dt + g_k sqrt(dt) eps_k,
// started from xT at the last node.
TrajectoryBatch euler_backward(const DriftTable& table, const PolicyFn& policy_b,
                               const Batch& xT, std::uint64_t seed);
TrajectoryBatch euler_backward(const GsbSolution& sol, const PolicyFn& policy_b, const Batch& xT,
                               const TimeGrid& grid, std::uint64_t seed);

enum class BridgeEndpoint { Start, End };

// Exact sampler for the bridge law at grid nodes given one endpoint. The law
// at node k is N(gain_k x + offset_k, root_k root_k).
class BridgeSampler {
 public:
  BridgeSampler(const GsbSolution& sol, BridgeEndpoint endpoint, const TimeGrid& grid);

  BridgeEndpoint endpoint() const { return endpoint_; }
  const TimeGrid& grid() const { return grid_; }
  // One draw at node k given the endpoint x; `key` seeds its d normals.
  Eigen::RowVectorXd draw(const Eigen::Ref<const Eigen::RowVectorXd>& x, int k,
                          std::uint64_t key) const;

 private:
  struct Node {
    Matrix gain;
    Vector offset;
    Matrix root;
  };
  BridgeEndpoint endpoint_;
  TimeGrid grid_;
  std::vector<Node> nodes_;
};

// Independent bridge draws at every grid node for every endpoint row. Paths
// are not pathwise consistent; each node is an exact marginal draw.
TrajectoryBatch sample_bridge(const GsbSolution& sol, BridgeEndpoint endpoint, const Batch& points,
                              const TimeGrid& grid, std::uint64_t seed);

// Process-wide call counts, for asserting which code paths a routine used.
struct SimulationCounters {
  std::atomic<std::uint64_t> forward{0};
  std::atomic<std::uint64_t> backward{0};
  std::atomic<std::uint64_t> bridge{0};
};
SimulationCounters& simulation_counters();

// Binary layout: "GSBT", u32 version, u64 n_paths, u64 n_steps, u64 dim,
// u64 seed, row-major f64 states, then f64 t_start, f64 t_end, f64 horizon,
// u32 direction. Little-endian host order.
void write_binary(const TrajectoryBatch& batch, std::ostream& out);
TrajectoryBatch read_binary(std::istream& in);
// Columns: path, step, t, x0..x{d-1}.
void write_csv(const TrajectoryBatch& batch, std::ostream& out);

}  // namespace gsb
