#include "gsb/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "gsb/parallel.hpp"
#include "gsb/rng.hpp"

namespace gsb {

namespace {

constexpr std::size_t kPathChunk = 256;
constexpr char kMagic[4] = {'G', 'S', 'B', 'T'};
constexpr std::uint32_t kVersion = 1;

void fill_normals(Eigen::Ref<Eigen::RowVectorXd> out, std::uint64_t seed, std::uint64_t stream,
                  std::uint64_t path, std::uint64_t step) {
  for (Eigen::Index j = 0; j < out.size(); ++j)
    out(j) = rng::normal(rng::key(seed, stream, path, step, static_cast<std::uint64_t>(j)));
}

void check_finite(const Batch& x, int step) {
  if (!x.allFinite())
    throw Error(ErrorCode::DivergedSimulation,
                "non-finite state at grid step " + std::to_string(step));
}

TrajectoryBatch empty_batch(const TimeGrid& grid, Direction dir, std::uint64_t seed,
                            Eigen::Index n, Eigen::Index d) {
  TrajectoryBatch out;
  out.grid = grid;
  out.direction = dir;
  out.seed = seed;
  out.n_paths = n;
  out.dim = d;
  out.states.resize(n * grid.n_steps(), d);
  return out;
}

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error(ErrorCode::IoError, "truncated trajectory file");
  return v;
}

}  // namespace

TimeGrid::TimeGrid(double horizon, int n_steps) : TimeGrid(horizon, n_steps, 0.0, horizon) {}

TimeGrid::TimeGrid(double horizon, int n_steps, double t_start, double t_end) {
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw Error(ErrorCode::InvalidParams, "grid horizon must be positive");
  if (n_steps < 2) throw Error(ErrorCode::InvalidParams, "time grid needs n_steps >= 2");
  const double guard = kEndpointGuard * horizon;
  horizon_ = horizon;
  n_steps_ = n_steps;
  t_start_ = std::clamp(t_start, guard, horizon - guard);
  t_end_ = std::clamp(t_end, guard, horizon - guard);
  if (!(t_end_ > t_start_)) throw Error(ErrorCode::InvalidParams, "empty time grid interval");
  dt_ = (t_end_ - t_start_) / static_cast<double>(n_steps - 1);
}

double TimeGrid::time(int k) const {
  if (k == n_steps_ - 1) return t_end_;
  return t_start_ + static_cast<double>(k) * dt_;
}

std::vector<double> TimeGrid::trapezoid_weights() const {
  std::vector<double> w(static_cast<std::size_t>(n_steps_), dt_);
  w.front() = 0.5 * dt_;
  w.back() = 0.5 * dt_;
  return w;
}

Batch TrajectoryBatch::slice(int step) const {
  Batch out(n_paths, dim);
  for (Eigen::Index p = 0; p < n_paths; ++p) out.row(p) = state(p, step);
  return out;
}

DriftTable::DriftTable(const GsbSolution& sol, const TimeGrid& grid) : grid_(grid), dim_(sol.dim()) {
  drift_.reserve(static_cast<std::size_t>(grid.n_steps()));
  vol_.reserve(static_cast<std::size_t>(grid.n_steps()));
  for (int k = 0; k < grid.n_steps(); ++k) {
    drift_.push_back(drift_matrix(sol, grid.time(k)));
    vol_.push_back(sol.sde().vol(grid.time(k)));
  }
}

TrajectoryBatch euler_forward(const DriftTable& table, const PolicyFn& policy_f, const Batch& x0,
                              std::uint64_t seed) {
  if (x0.cols() != table.dim()) throw Error(ErrorCode::DimensionMismatch, "x0 dimension");
  simulation_counters().forward.fetch_add(1);
  const TimeGrid& grid = table.grid();
  TrajectoryBatch out = empty_batch(grid, Direction::Forward, seed, x0.rows(), x0.cols());
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);

  parallel_chunks(static_cast<std::size_t>(x0.rows()), kPathChunk, [&](std::size_t b, std::size_t e) {
    const auto first = static_cast<Eigen::Index>(b);
    const auto m = static_cast<Eigen::Index>(e - b);
    Batch x = x0.middleRows(first, m);
    Batch noise(m, x0.cols());
    for (Eigen::Index p = 0; p < m; ++p) out.state(first + p, 0) = x.row(p);
    for (int k = 0; k + 1 < grid.n_steps(); ++k) {
      const DriftMatrix& dm = table.at(k);
      const double g = table.vol(k);
      Batch f = x * dm.a.transpose();
      f.rowwise() += dm.b.transpose();
      if (policy_f) f += g * policy_f(grid.time(k), x);
      for (Eigen::Index p = 0; p < m; ++p)
        fill_normals(noise.row(p), seed, rng::kForwardNoise, static_cast<std::uint64_t>(first + p),
                     static_cast<std::uint64_t>(k));
      x += dt * f + (g * sqdt) * noise;
      check_finite(x, k + 1);
      for (Eigen::Index p = 0; p < m; ++p) out.state(first + p, k + 1) = x.row(p);
    }
  });
  return out;
}

TrajectoryBatch euler_forward(const GsbSolution& sol, const PolicyFn& policy_f, const Batch& x0,
                              const TimeGrid& grid, std::uint64_t seed) {
  return euler_forward(DriftTable(sol, grid), policy_f, x0, seed);
}

TrajectoryBatch euler_backward(const DriftTable& table, const PolicyFn& policy_b, const Batch& xT,
                               std::uint64_t seed) {
  if (xT.cols() != table.dim()) throw Error(ErrorCode::DimensionMismatch, "xT dimension");
  simulation_counters().backward.fetch_add(1);
  const TimeGrid& grid = table.grid();
  TrajectoryBatch out = empty_batch(grid, Direction::Backward, seed, xT.rows(), xT.cols());
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);
  const int last = grid.n_steps() - 1;

  parallel_chunks(static_cast<std::size_t>(xT.rows()), kPathChunk, [&](std::size_t b, std::size_t e) {
    const auto first = static_cast<Eigen::Index>(b);
    const auto m = static_cast<Eigen::Index>(e - b);
    Batch x = xT.middleRows(first, m);
    Batch noise(m, xT.cols());
    for (Eigen::Index p = 0; p < m; ++p) out.state(first + p, last) = x.row(p);
    for (int k = last; k > 0; --k) {
      const DriftMatrix& dm = table.at(k);
      const double g = table.vol(k);
      Batch f = x * dm.a.transpose();
      f.rowwise() += dm.b.transpose();
      if (policy_b) f -= g * policy_b(grid.time(k), x);
      for (Eigen::Index p = 0; p < m; ++p)
        fill_normals(noise.row(p), seed, rng::kBackwardNoise,
                     static_cast<std::uint64_t>(first + p), static_cast<std::uint64_t>(k));
      x += (g * sqdt) * noise - dt * f;
      check_finite(x, k - 1);
      for (Eigen::Index p = 0; p < m; ++p) out.state(first + p, k - 1) = x.row(p);
    }
  });
  return out;
}

TrajectoryBatch euler_backward(const GsbSolution& sol, const PolicyFn& policy_b, const Batch& xT,
                               const TimeGrid& grid, std::uint64_t seed) {
  return euler_backward(DriftTable(sol, grid), policy_b, xT, seed);
}

BridgeSampler::BridgeSampler(const GsbSolution& sol, BridgeEndpoint endpoint, const TimeGrid& grid)
    : endpoint_(endpoint), grid_(grid) {
  const GsbProblem& p = sol.problem();
  const Eigen::Index d = sol.dim();
  const Matrix id = Matrix::Identity(d, d);
  Matrix link;  // conditional-mean map of the free endpoint
  Vector link_offset;
  const SymPsdMatrix* residual = nullptr;
  if (endpoint == BridgeEndpoint::Start) {
    link = sol.c_star().transpose() * sol.sigma0_inv();
    link_offset = p.nT.mean - link * p.n0.mean;
    residual = &sol.end_given_start_cov();
  } else {
    if (!sol.sigmaT_inv())
      throw Error(ErrorCode::SingularCovariance, "end covariance is singular; cannot condition on X_T");
    link = sol.c_star() * (*sol.sigmaT_inv());
    link_offset = p.n0.mean - link * p.nT.mean;
    residual = &*sol.start_given_end_cov();
  }
  nodes_.reserve(static_cast<std::size_t>(grid.n_steps()));
  for (int k = 0; k < grid.n_steps(); ++k) {
    const SdeScalars s = scalars(sol.sde(), grid.time(k), d);
    const double own = endpoint == BridgeEndpoint::Start ? s.rbar : s.r;
    const double other = endpoint == BridgeEndpoint::Start ? s.r : s.rbar;
    Node node;
    node.gain = own * id + other * link;
    node.offset = other * link_offset + (s.xi - s.r * s.xi_T);
    const Matrix cov =
        other * other * residual->matrix() + s.kernel_tt * (1.0 - s.rho) * id;
    node.root = sqrt_psd(SymPsdMatrix(symmetrized(cov))).matrix();
    nodes_.push_back(std::move(node));
  }
}

Eigen::RowVectorXd BridgeSampler::draw(const Eigen::Ref<const Eigen::RowVectorXd>& x, int k,
                                       std::uint64_t key) const {
  const Node& node = nodes_.at(static_cast<std::size_t>(k));
  Vector eps(x.size());
  for (Eigen::Index j = 0; j < eps.size(); ++j)
    eps(j) = rng::normal(rng::mix(key ^ rng::mix(static_cast<std::uint64_t>(j) + 1)));
  return (node.gain * x.transpose() + node.offset + node.root * eps).transpose();
}

TrajectoryBatch sample_bridge(const GsbSolution& sol, BridgeEndpoint endpoint, const Batch& points,
                              const TimeGrid& grid, std::uint64_t seed) {
  if (points.cols() != sol.dim()) throw Error(ErrorCode::DimensionMismatch, "endpoint dimension");
  simulation_counters().bridge.fetch_add(1);
  const BridgeSampler sampler(sol, endpoint, grid);
  const Direction dir = endpoint == BridgeEndpoint::Start ? Direction::Forward : Direction::Backward;
  TrajectoryBatch out = empty_batch(grid, dir, seed, points.rows(), points.cols());
  parallel_chunks(static_cast<std::size_t>(points.rows()), kPathChunk,
                  [&](std::size_t b, std::size_t e) {
                    for (std::size_t p = b; p < e; ++p) {
                      const auto i = static_cast<Eigen::Index>(p);
                      for (int k = 0; k < grid.n_steps(); ++k)
                        out.state(i, k) = sampler.draw(
                            points.row(i), k, rng::key(seed, rng::kBridgeNoise, p, k));
                    }
                  });
  return out;
}

SimulationCounters& simulation_counters() {
  static SimulationCounters counters;
  return counters;
}

void write_binary(const TrajectoryBatch& batch, std::ostream& out) {
  out.write(kMagic, 4);
  put(out, kVersion);
  put(out, static_cast<std::uint64_t>(batch.n_paths));
  put(out, static_cast<std::uint64_t>(batch.grid.n_steps()));
  put(out, static_cast<std::uint64_t>(batch.dim));
  put(out, batch.seed);
  out.write(reinterpret_cast<const char*>(batch.states.data()),
            static_cast<std::streamsize>(sizeof(double) * batch.states.size()));
  put(out, batch.grid.t_start());
  put(out, batch.grid.t_end());
  put(out, batch.grid.horizon());
  put(out, static_cast<std::uint32_t>(batch.direction));
  if (!out) throw Error(ErrorCode::IoError, "failed writing trajectory batch");
}

TrajectoryBatch read_binary(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw Error(ErrorCode::IoError, "not a trajectory file (bad magic)");
  if (get<std::uint32_t>(in) != kVersion)
    throw Error(ErrorCode::IoError, "unsupported trajectory file version");
  const auto n_paths = get<std::uint64_t>(in);
  const auto n_steps = get<std::uint64_t>(in);
  const auto dim = get<std::uint64_t>(in);
  const auto seed = get<std::uint64_t>(in);
  Batch states(static_cast<Eigen::Index>(n_paths * n_steps), static_cast<Eigen::Index>(dim));
  in.read(reinterpret_cast<char*>(states.data()),
          static_cast<std::streamsize>(sizeof(double) * states.size()));
  if (!in) throw Error(ErrorCode::IoError, "truncated trajectory file");
  const auto t_start = get<double>(in);
  const auto t_end = get<double>(in);
  const auto horizon = get<double>(in);
  const auto dir = get<std::uint32_t>(in);
  TrajectoryBatch out;
  out.grid = TimeGrid(horizon, static_cast<int>(n_steps), t_start, t_end);
  out.direction = dir == 0 ? Direction::Forward : Direction::Backward;
  out.seed = seed;
  out.n_paths = static_cast<Eigen::Index>(n_paths);
  out.dim = static_cast<Eigen::Index>(dim);
  out.states = std::move(states);
  return out;
}

void write_csv(const TrajectoryBatch& batch, std::ostream& out) {
  out << "path,step,t";
  for (Eigen::Index j = 0; j < batch.dim; ++j) out << ",x" << j;
  out << "\n";
  out.precision(17);
  for (Eigen::Index p = 0; p < batch.n_paths; ++p)
    for (int k = 0; k < batch.grid.n_steps(); ++k) {
      out << p << "," << k << "," << batch.grid.time(k);
      for (Eigen::Index j = 0; j < batch.dim; ++j) out << "," << batch.state(p, k)(j);
      out << "\n";
    }
  if (!out) throw Error(ErrorCode::IoError, "failed writing trajectory CSV");
}

}  // namespace gsb
