#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "gsb/linalg.hpp"
#include "gsb/sde.hpp"
#include "gsb/simulate.hpp"

namespace gsb {

// fourier4 appends (t/T, sin 2pi t/T, cos 2pi t/T, sqrt(t/T)) to the state.
enum class TimeFeatures : std::uint32_t { Fourier4 = 0, None = 1 };

TimeFeatures parse_time_features(std::string_view name);
std::string_view time_features_name(TimeFeatures f);

struct PolicyArchitecture {
  Eigen::Index dim = 2;
  std::vector<int> hidden = {128, 128, 128, 128};
  TimeFeatures time_features = TimeFeatures::Fourier4;
  double horizon = 1.0;
  bool final_layer_zero = true;

  Eigen::Index time_dim() const { return time_features == TimeFeatures::Fourier4 ? 4 : 0; }
  Eigen::Index input_dim() const { return dim + time_dim(); }
};

// Time-conditioned MLP R^d -> R^d with SiLU hidden activations and an affine
// output layer. Parameters live in one flat vector, layer by layer: weight
// (out x in, column-major) followed by bias.
class PolicyNetwork {
 public:
  PolicyNetwork() = default;
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init from a counter RNG; the
  // output layer is all zeros when final_layer_zero is set.
  PolicyNetwork(PolicyArchitecture arch, std::uint64_t init_seed);

  const PolicyArchitecture& arch() const { return arch_; }
  Eigen::Index dim() const { return arch_.dim; }
  Eigen::Index n_params() const { return params_.size(); }
  const Vector& params() const { return params_; }
  Vector& params() { return params_; }
  void set_params(const Vector& p);

  int n_layers() const { return static_cast<int>(layers_.size()); }
  Eigen::Map<const Matrix> weight(int layer) const;
  Eigen::Map<const Vector> bias(int layer) const;
  Eigen::Map<Matrix> weight(int layer);
  Eigen::Map<Vector> bias(int layer);

  // Rows [x, tau(t)] for per-row times.
  Matrix inputs(const Vector& t, const Batch& x) const;

 private:
  struct Layer {
    Eigen::Index in = 0;
    Eigen::Index out = 0;
    Eigen::Index offset = 0;  // start of the weight block in params_
  };
  void build_layout();

  PolicyArchitecture arch_;
  std::vector<Layer> layers_;
  Vector params_;
};

// Largest state dimension for the exact divergence.
inline constexpr Eigen::Index kMaxExactDivergenceDim = 64;

Batch policy_eval(const PolicyNetwork& net, double t, const Batch& x);
Batch policy_eval(const PolicyNetwork& net, const Vector& t, const Batch& x);

// Exact sum_i dZ_i/dx_i through d forward-mode tangent passes.
Vector divergence(const PolicyNetwork& net, double t, const Batch& x);
Vector divergence(const PolicyNetwork& net, const Vector& t, const Batch& x);

// Weighted sample of the likelihood integrand
//   sum_p w_p (|Z(t_p, x_p)|^2 / 2 + g_p div Z(t_p, x_p) + <z_p, Z(t_p, x_p)>)
// where z_p is the frozen counterpart policy output (empty means zero).
struct EvalPoints {
  Vector t;
  Batch x;
  Vector weight;
  Vector vol;
  Batch counterpart;

  Eigen::Index size() const { return t.size(); }
};

struct LossTerms {
  double total = 0.0;
  double quadratic = 0.0;
  double divergence = 0.0;
  double cross = 0.0;
  Vector grad;  // empty unless requested
};

// Exact value and parameter gradient of the weighted integrand. The gradient
// of the divergence term runs reverse mode over the tangent passes. Throws
// NonFiniteLoss when the value is not finite.
LossTerms policy_loss(const PolicyNetwork& net, const EvalPoints& pts, bool with_grad = true);

// Every node of every path, with trapezoid weights over the grid divided by
// the path count. `counterpart` may be null for a zero counterpart.
EvalPoints trajectory_points(const TrajectoryBatch& traj, const PolicyNetwork* counterpart,
                             const LinearSdeSpec& sde);

// Backward-policy loss along forward trajectories, gradient w.r.t. net_b.
LossTerms loss_and_grad_backward(const TrajectoryBatch& traj, const PolicyNetwork* net_f,
                                 const PolicyNetwork& net_b, const LinearSdeSpec& sde);
// Forward-policy loss along backward trajectories, gradient w.r.t. net_f.
LossTerms loss_and_grad_forward(const TrajectoryBatch& traj, const PolicyNetwork* net_b,
                                const PolicyNetwork& net_f, const LinearSdeSpec& sde);

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
  double ema_decay = 0.99;
};

struct OptimizerState {
  AdamConfig cfg;
  Vector m;
  Vector v;
  std::uint64_t step = 0;
  Vector ema;  // shadow parameters

  OptimizerState() = default;
  // Zero moments; shadow starts at the network's parameters.
  OptimizerState(const PolicyNetwork& net, AdamConfig cfg);
};

// Bias-corrected Adam update of the raw parameters.
void adam_step(PolicyNetwork& net, const Vector& grad, OptimizerState& opt);
// shadow <- decay * shadow + (1 - decay) * params.
void ema_update(OptimizerState& opt, const PolicyNetwork& net);
// Copy of `net` carrying the EMA shadow parameters.
PolicyNetwork ema_network(const PolicyNetwork& net, const OptimizerState& opt);

// Binary layout: "GSBP", u32 version, architecture (u64 dim, u32 time
// features, f64 horizon, u32 final-zero, u64 n_hidden, u64 widths...),
// u64 n_params, raw params, EMA params, Adam (f64 lr, beta1, beta2, eps,
// ema_decay, u64 step, m, v), u64 seed. Little-endian host order.
struct Checkpoint {
  PolicyNetwork net;
  OptimizerState opt;
  std::uint64_t seed = 0;
};

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);
// Architecture and hyperparameters as a JSON document.
std::string checkpoint_sidecar_json(const Checkpoint& ckpt);

}  // namespace gsb
