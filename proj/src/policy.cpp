#include "gsb/policy.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>

#include <json.hpp>

#include "gsb/parallel.hpp"
#include "gsb/rng.hpp"

namespace gsb {

namespace {

constexpr std::size_t kRowChunk = 256;
constexpr char kMagic[4] = {'G', 'S', 'B', 'P'};
constexpr std::uint32_t kVersion = 1;

// Activations of one batched pass. a[0] holds the inputs, a[l + 1] the SiLU
// of hidden pre-activation l; s1, s2 are its first and second derivatives.
// g[l][i], tan[l][i] are the pre- and post-activation tangents of layer l
// along input coordinate i.
struct Pass {
  std::vector<Matrix> a;
  std::vector<Matrix> s1;
  std::vector<Matrix> s2;
  std::vector<std::vector<Matrix>> g;
  std::vector<std::vector<Matrix>> tan;
  Matrix z;
  Vector div;
};

Pass run_pass(const PolicyNetwork& net, Matrix inputs, bool with_div) {
  const int hidden = net.n_layers() - 1;
  const Eigen::Index n = inputs.rows();
  const Eigen::Index d = net.dim();
  Pass p;
  p.a.reserve(static_cast<std::size_t>(hidden + 1));
  p.a.push_back(std::move(inputs));
  for (int l = 0; l < hidden; ++l) {
    Matrix h = p.a.back() * net.weight(l).transpose();
    h.rowwise() += net.bias(l).transpose();
    const Eigen::ArrayXXd sig = 1.0 / (1.0 + (-h.array()).exp());
    p.a.push_back((h.array() * sig).matrix());
    if (with_div) {
      p.s1.push_back((sig * (1.0 + h.array() * (1.0 - sig))).matrix());
      p.s2.push_back((sig * (1.0 - sig) * (2.0 + h.array() * (1.0 - 2.0 * sig))).matrix());
    }
  }
  p.z = p.a.back() * net.weight(hidden).transpose();
  p.z.rowwise() += net.bias(hidden).transpose();
  if (!with_div) return p;

  const auto w_out = net.weight(hidden);
  p.div = Vector::Zero(n);
  if (hidden == 0) {
    p.div.setConstant(w_out.leftCols(d).diagonal().sum());
    return p;
  }
  p.g.assign(static_cast<std::size_t>(hidden), std::vector<Matrix>(static_cast<std::size_t>(d)));
  p.tan.assign(static_cast<std::size_t>(hidden), std::vector<Matrix>(static_cast<std::size_t>(d)));
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    p.g[0][iu] = Vector::Ones(n) * net.weight(0).col(i).transpose();
    p.tan[0][iu] = p.s1[0].cwiseProduct(p.g[0][iu]);
    for (int l = 1; l < hidden; ++l) {
      const auto lu = static_cast<std::size_t>(l);
      p.g[lu][iu] = p.tan[lu - 1][iu] * net.weight(l).transpose();
      p.tan[lu][iu] = p.s1[lu].cwiseProduct(p.g[lu][iu]);
    }
    p.div += p.tan[static_cast<std::size_t>(hidden - 1)][iu] * w_out.row(i).transpose();
  }
  return p;
}

struct ChunkResult {
  double quadratic = 0.0;
  double divergence = 0.0;
  double cross = 0.0;
  Vector grad;
};

ChunkResult loss_chunk(const PolicyNetwork& net, const EvalPoints& pts, Eigen::Index first,
                       Eigen::Index m, bool with_grad) {
  const Eigen::Index d = net.dim();
  const int hidden = net.n_layers() - 1;
  const Vector t = pts.t.segment(first, m);
  const Batch x = pts.x.middleRows(first, m);
  const Vector w = pts.weight.segment(first, m);
  const Vector vol = pts.vol.segment(first, m);
  const bool has_other = pts.counterpart.size() > 0;

  Pass p = run_pass(net, net.inputs(t, x), true);
  ChunkResult r;
  r.quadratic = 0.5 * w.dot(p.z.rowwise().squaredNorm());
  r.divergence = w.dot(vol.cwiseProduct(p.div));
  Matrix zsum = p.z;
  if (has_other) {
    const Matrix other = pts.counterpart.middleRows(first, m);
    r.cross = w.dot(other.cwiseProduct(p.z).rowwise().sum());
    zsum += other;
  }
  if (!with_grad) return r;

  r.grad = Vector::Zero(net.n_params());
  PolicyNetwork views = net;  // gradient buffer with the network's layout
  views.params().setZero();

  const Matrix zbar = w.asDiagonal() * zsum;
  const Vector q = w.cwiseProduct(vol);
  const auto w_out = net.weight(hidden);
  views.weight(hidden) = zbar.transpose() * p.a.back();
  views.bias(hidden) = zbar.colwise().sum().transpose();
  if (hidden == 0) {
    for (Eigen::Index i = 0; i < d; ++i) views.weight(hidden)(i, i) += q.sum();
    r.grad = views.params();
    return r;
  }

  const auto last = static_cast<std::size_t>(hidden - 1);
  Matrix abar = zbar * w_out;
  std::vector<Matrix> tbar(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    views.weight(hidden).row(i) += q.transpose() * p.tan[last][iu];
    tbar[iu] = q * w_out.row(i);
  }
  for (int l = hidden - 1; l >= 0; --l) {
    const auto lu = static_cast<std::size_t>(l);
    Matrix hbar = p.s1[lu].cwiseProduct(abar);
    std::vector<Matrix> gbar(static_cast<std::size_t>(d));
    for (Eigen::Index i = 0; i < d; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      gbar[iu] = p.s1[lu].cwiseProduct(tbar[iu]);
      hbar += p.s2[lu].cwiseProduct(p.g[lu][iu]).cwiseProduct(tbar[iu]);
    }
    auto gw = views.weight(l);
    gw = hbar.transpose() * p.a[lu];
    views.bias(l) = hbar.colwise().sum().transpose();
    if (l > 0) {
      abar = hbar * net.weight(l);
      for (Eigen::Index i = 0; i < d; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        gw += gbar[iu].transpose() * p.tan[lu - 1][iu];
        tbar[iu] = gbar[iu] * net.weight(l);
      }
    } else {
      for (Eigen::Index i = 0; i < d; ++i)
        gw.col(i) += gbar[static_cast<std::size_t>(i)].colwise().sum().transpose();
    }
  }
  r.grad = views.params();
  return r;
}

void check_dim(const PolicyNetwork& net, const Batch& x) {
  if (x.cols() != net.dim()) throw Error(ErrorCode::DimensionMismatch, "policy input dimension");
}

void check_divergence_dim(const PolicyNetwork& net) {
  if (net.dim() > kMaxExactDivergenceDim)
    throw Error(ErrorCode::DimensionTooLarge,
                "exact divergence supports d <= " + std::to_string(kMaxExactDivergenceDim));
}

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_vec(std::ostream& out, const Vector& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double) * v.size()));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error(ErrorCode::IoError, "truncated checkpoint");
  return v;
}

Vector get_vec(std::istream& in, Eigen::Index n) {
  Vector v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(sizeof(double) * n));
  if (!in) throw Error(ErrorCode::IoError, "truncated checkpoint");
  return v;
}

}  // namespace

TimeFeatures parse_time_features(std::string_view name) {
  if (name == "fourier4") return TimeFeatures::Fourier4;
  if (name == "none") return TimeFeatures::None;
  throw Error(ErrorCode::ConfigError, "unknown time features '" + std::string(name) + "'");
}

std::string_view time_features_name(TimeFeatures f) {
  return f == TimeFeatures::Fourier4 ? "fourier4" : "none";
}

PolicyNetwork::PolicyNetwork(PolicyArchitecture arch, std::uint64_t init_seed)
    : arch_(std::move(arch)) {
  if (arch_.dim <= 0) throw Error(ErrorCode::InvalidParams, "policy dimension must be positive");
  if (!(arch_.horizon > 0.0)) throw Error(ErrorCode::InvalidParams, "policy horizon must be positive");
  for (int w : arch_.hidden)
    if (w <= 0) throw Error(ErrorCode::InvalidParams, "hidden widths must be positive");
  build_layout();
  for (int l = 0; l < n_layers(); ++l) {
    const Layer& L = layers_[static_cast<std::size_t>(l)];
    const bool zero = arch_.final_layer_zero && l + 1 == n_layers();
    const double bound = 1.0 / std::sqrt(static_cast<double>(L.in));
    const Eigen::Index count = L.out * L.in + L.out;
    for (Eigen::Index j = 0; j < count; ++j) {
      const double u = rng::uniform(rng::key(init_seed, rng::kInit, static_cast<std::uint64_t>(l),
                                             static_cast<std::uint64_t>(j)));
      params_(L.offset + j) = zero ? 0.0 : bound * (2.0 * u - 1.0);
    }
  }
}

void PolicyNetwork::build_layout() {
  layers_.clear();
  Eigen::Index in = arch_.input_dim();
  Eigen::Index offset = 0;
  std::vector<Eigen::Index> widths(arch_.hidden.begin(), arch_.hidden.end());
  widths.push_back(arch_.dim);
  for (Eigen::Index out : widths) {
    layers_.push_back({in, out, offset});
    offset += out * in + out;
    in = out;
  }
  params_ = Vector::Zero(offset);
}

void PolicyNetwork::set_params(const Vector& p) {
  if (p.size() != params_.size()) throw Error(ErrorCode::DimensionMismatch, "parameter count");
  params_ = p;
}

Eigen::Map<const Matrix> PolicyNetwork::weight(int layer) const {
  const Layer& L = layers_.at(static_cast<std::size_t>(layer));
  return {params_.data() + L.offset, L.out, L.in};
}
Eigen::Map<const Vector> PolicyNetwork::bias(int layer) const {
  const Layer& L = layers_.at(static_cast<std::size_t>(layer));
  return {params_.data() + L.offset + L.out * L.in, L.out};
}
Eigen::Map<Matrix> PolicyNetwork::weight(int layer) {
  const Layer& L = layers_.at(static_cast<std::size_t>(layer));
  return {params_.data() + L.offset, L.out, L.in};
}
Eigen::Map<Vector> PolicyNetwork::bias(int layer) {
  const Layer& L = layers_.at(static_cast<std::size_t>(layer));
  return {params_.data() + L.offset + L.out * L.in, L.out};
}

Matrix PolicyNetwork::inputs(const Vector& t, const Batch& x) const {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = arch_.dim;
  Matrix u(n, arch_.input_dim());
  u.leftCols(d) = x;
  if (arch_.time_features == TimeFeatures::Fourier4) {
    for (Eigen::Index r = 0; r < n; ++r) {
      const double s = std::max(t(r) / arch_.horizon, 0.0);
      u(r, d) = s;
      u(r, d + 1) = std::sin(2.0 * std::numbers::pi * s);
      u(r, d + 2) = std::cos(2.0 * std::numbers::pi * s);
      u(r, d + 3) = std::sqrt(s);
    }
  }
  return u;
}

Batch policy_eval(const PolicyNetwork& net, double t, const Batch& x) {
  return policy_eval(net, Vector::Constant(x.rows(), t), x);
}

Batch policy_eval(const PolicyNetwork& net, const Vector& t, const Batch& x) {
  check_dim(net, x);
  if (x.rows() == 0) return Batch(0, net.dim());
  return run_pass(net, net.inputs(t, x), false).z;
}

Vector divergence(const PolicyNetwork& net, double t, const Batch& x) {
  return divergence(net, Vector::Constant(x.rows(), t), x);
}

Vector divergence(const PolicyNetwork& net, const Vector& t, const Batch& x) {
  check_dim(net, x);
  check_divergence_dim(net);
  if (x.rows() == 0) return Vector(0);
  return run_pass(net, net.inputs(t, x), true).div;
}

LossTerms policy_loss(const PolicyNetwork& net, const EvalPoints& pts, bool with_grad) {
  check_dim(net, pts.x);
  check_divergence_dim(net);
  const Eigen::Index n = pts.size();
  if (pts.x.rows() != n || pts.weight.size() != n || pts.vol.size() != n ||
      (pts.counterpart.size() > 0 &&
       (pts.counterpart.rows() != n || pts.counterpart.cols() != net.dim())))
    throw Error(ErrorCode::DimensionMismatch, "evaluation point arrays differ in length");

  const std::size_t n_chunks = (static_cast<std::size_t>(n) + kRowChunk - 1) / kRowChunk;
  std::vector<ChunkResult> parts(n_chunks);
  parallel_chunks(static_cast<std::size_t>(n), kRowChunk, [&](std::size_t b, std::size_t e) {
    parts[b / kRowChunk] = loss_chunk(net, pts, static_cast<Eigen::Index>(b),
                                      static_cast<Eigen::Index>(e - b), with_grad);
  });

  LossTerms out;
  if (with_grad) out.grad = Vector::Zero(net.n_params());
  for (const ChunkResult& r : parts) {
    out.quadratic += r.quadratic;
    out.divergence += r.divergence;
    out.cross += r.cross;
    if (with_grad) out.grad += r.grad;
  }
  out.total = out.quadratic + out.divergence + out.cross;
  if (!std::isfinite(out.total) || (with_grad && !out.grad.allFinite()))
    throw Error(ErrorCode::NonFiniteLoss, "policy loss or gradient is not finite");
  return out;
}

EvalPoints trajectory_points(const TrajectoryBatch& traj, const PolicyNetwork* counterpart,
                             const LinearSdeSpec& sde) {
  const int steps = traj.grid.n_steps();
  const Eigen::Index n = traj.n_paths * steps;
  if (traj.n_paths == 0) throw Error(ErrorCode::InvalidParams, "empty trajectory batch");
  const std::vector<double> w = traj.grid.trapezoid_weights();
  EvalPoints pts;
  pts.t.resize(n);
  pts.weight.resize(n);
  pts.vol.resize(n);
  pts.x = traj.states;
  for (Eigen::Index p = 0; p < traj.n_paths; ++p)
    for (int k = 0; k < steps; ++k) {
      const Eigen::Index r = traj.row(p, k);
      pts.t(r) = traj.grid.time(k);
      pts.weight(r) = w[static_cast<std::size_t>(k)] / static_cast<double>(traj.n_paths);
      pts.vol(r) = sde.vol(pts.t(r));
    }
  if (counterpart) pts.counterpart = policy_eval(*counterpart, pts.t, pts.x);
  return pts;
}

LossTerms loss_and_grad_backward(const TrajectoryBatch& traj, const PolicyNetwork* net_f,
                                 const PolicyNetwork& net_b, const LinearSdeSpec& sde) {
  return policy_loss(net_b, trajectory_points(traj, net_f, sde), true);
}

LossTerms loss_and_grad_forward(const TrajectoryBatch& traj, const PolicyNetwork* net_b,
                                const PolicyNetwork& net_f, const LinearSdeSpec& sde) {
  return policy_loss(net_f, trajectory_points(traj, net_b, sde), true);
}

OptimizerState::OptimizerState(const PolicyNetwork& net, AdamConfig c)
    : cfg(c),
      m(Vector::Zero(net.n_params())),
      v(Vector::Zero(net.n_params())),
      ema(net.params()) {}

void adam_step(PolicyNetwork& net, const Vector& grad, OptimizerState& opt) {
  if (grad.size() != net.n_params() || opt.m.size() != net.n_params())
    throw Error(ErrorCode::DimensionMismatch, "optimizer state does not match the network");
  const AdamConfig& c = opt.cfg;
  ++opt.step;
  opt.m = c.beta1 * opt.m + (1.0 - c.beta1) * grad;
  opt.v = c.beta2 * opt.v + (1.0 - c.beta2) * grad.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(opt.step));
  net.params().array() -=
      c.lr * (opt.m.array() / bc1) / ((opt.v.array() / bc2).sqrt() + c.eps);
}

void ema_update(OptimizerState& opt, const PolicyNetwork& net) {
  if (opt.ema.size() != net.n_params())
    throw Error(ErrorCode::DimensionMismatch, "EMA shadow does not match the network");
  opt.ema = opt.cfg.ema_decay * opt.ema + (1.0 - opt.cfg.ema_decay) * net.params();
}

PolicyNetwork ema_network(const PolicyNetwork& net, const OptimizerState& opt) {
  PolicyNetwork out = net;
  out.set_params(opt.ema);
  return out;
}

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  const PolicyArchitecture& a = ckpt.net.arch();
  out.write(kMagic, 4);
  put(out, kVersion);
  put(out, static_cast<std::uint64_t>(a.dim));
  put(out, static_cast<std::uint32_t>(a.time_features));
  put(out, a.horizon);
  put(out, static_cast<std::uint32_t>(a.final_layer_zero ? 1 : 0));
  put(out, static_cast<std::uint64_t>(a.hidden.size()));
  for (int w : a.hidden) put(out, static_cast<std::uint64_t>(w));
  put(out, static_cast<std::uint64_t>(ckpt.net.n_params()));
  put_vec(out, ckpt.net.params());
  put_vec(out, ckpt.opt.ema);
  const AdamConfig& c = ckpt.opt.cfg;
  put(out, c.lr);
  put(out, c.beta1);
  put(out, c.beta2);
  put(out, c.eps);
  put(out, c.ema_decay);
  put(out, ckpt.opt.step);
  put_vec(out, ckpt.opt.m);
  put_vec(out, ckpt.opt.v);
  put(out, ckpt.seed);
  if (!out) throw Error(ErrorCode::IoError, "failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw Error(ErrorCode::IoError, "not a policy checkpoint (bad magic)");
  if (get<std::uint32_t>(in) != kVersion)
    throw Error(ErrorCode::IoError, "unsupported checkpoint version");
  PolicyArchitecture a;
  a.dim = static_cast<Eigen::Index>(get<std::uint64_t>(in));
  a.time_features = static_cast<TimeFeatures>(get<std::uint32_t>(in));
  a.horizon = get<double>(in);
  a.final_layer_zero = get<std::uint32_t>(in) != 0;
  const auto n_hidden = get<std::uint64_t>(in);
  if (n_hidden > 1024) throw Error(ErrorCode::IoError, "corrupt checkpoint architecture");
  a.hidden.clear();
  for (std::uint64_t i = 0; i < n_hidden; ++i)
    a.hidden.push_back(static_cast<int>(get<std::uint64_t>(in)));
  Checkpoint ckpt;
  ckpt.net = PolicyNetwork(a, 0);
  const auto n_params = static_cast<Eigen::Index>(get<std::uint64_t>(in));
  if (n_params != ckpt.net.n_params())
    throw Error(ErrorCode::IoError, "checkpoint parameter count does not match its architecture");
  ckpt.net.set_params(get_vec(in, n_params));
  ckpt.opt.ema = get_vec(in, n_params);
  ckpt.opt.cfg.lr = get<double>(in);
  ckpt.opt.cfg.beta1 = get<double>(in);
  ckpt.opt.cfg.beta2 = get<double>(in);
  ckpt.opt.cfg.eps = get<double>(in);
  ckpt.opt.cfg.ema_decay = get<double>(in);
  ckpt.opt.step = get<std::uint64_t>(in);
  ckpt.opt.m = get_vec(in, n_params);
  ckpt.opt.v = get_vec(in, n_params);
  ckpt.seed = get<std::uint64_t>(in);
  return ckpt;
}

std::string checkpoint_sidecar_json(const Checkpoint& ckpt) {
  const PolicyArchitecture& a = ckpt.net.arch();
  nlohmann::json j;
  j["format"] = "GSBP";
  j["version"] = kVersion;
  j["architecture"] = {{"dim", a.dim},
                       {"hidden", a.hidden},
                       {"activation", "silu"},
                       {"time_features", time_features_name(a.time_features)},
                       {"horizon", a.horizon},
                       {"final_layer_zero", a.final_layer_zero},
                       {"n_params", ckpt.net.n_params()}};
  j["optimizer"] = {{"kind", "adam"},
                    {"lr", ckpt.opt.cfg.lr},
                    {"beta1", ckpt.opt.cfg.beta1},
                    {"beta2", ckpt.opt.cfg.beta2},
                    {"eps", ckpt.opt.cfg.eps},
                    {"ema_decay", ckpt.opt.cfg.ema_decay},
                    {"step", ckpt.opt.step}};
  j["seed"] = ckpt.seed;
  return j.dump(2);
}

}  // namespace gsb
