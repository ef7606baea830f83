// gsb: command-line entry point for the Gaussian bridge solver and the
// bridge-flow training pipeline.

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gsb/config.hpp"
#include "gsb/datasets.hpp"
#include "gsb/hashing.hpp"
#include "gsb/metrics.hpp"
#include "gsb/policy.hpp"
#include "gsb/simulate.hpp"
#include "gsb/solver.hpp"
#include "gsb/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gsb;

namespace {

constexpr const char* kToolVersion = "1.0.0";

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Run configuration JSON (config_version 1)");
  cmd->add_option("--out", o.out, "Output directory (overrides output.directory)");
  cmd->add_option("--seed", o.seed, "Training seed (overrides train.seed)");
  cmd->add_option("--override", o.overrides, "Dotted config override key=value (repeatable)");
}

struct Loaded {
  json doc;  // resolved configuration
  RunConfig cfg;
};

Loaded load(const CommonOptions& o) {
  json user = load_config_json(o.config, o.overrides);
  if (o.seed) apply_override(user, "train.seed=" + std::to_string(*o.seed));
  if (!o.out.empty()) user["output"]["directory"] = o.out;
  Loaded l;
  l.doc = resolved_config_json(user);
  l.cfg = parse_config(user);
  return l;
}

// Exclusive lock file inside the output directory, removed on destruction.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".gsb.lock") {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create output directory '" + dir.string() + "'");
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      if (errno == EEXIST)
        throw Error(ErrorCode::IoError, "output directory '" + dir.string() +
                                            "' is locked by another run (" + path_.string() + ")");
      throw Error(ErrorCode::IoError, "cannot create lock file " + path_.string());
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    (void)!::write(fd_, pid.data(), pid.size());
  }
  ~DirLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

// Files written by a command, hashed into its manifest.
class Artifacts {
 public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {}

  const fs::path& dir() const { return dir_; }

  fs::path path(const std::string& name) const { return dir_ / name; }

  void text(const std::string& name, const std::string& content) {
    fs::create_directories(path(name).parent_path());
    std::ofstream out(path(name), std::ios::binary);
    out << content;
    out.close();
    if (!out) throw Error(ErrorCode::IoError, "failed writing " + path(name).string());
    record(name);
  }

  template <class Writer>
  void stream(const std::string& name, Writer&& write) {
    fs::create_directories(path(name).parent_path());
    std::ofstream out(path(name), std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot create " + path(name).string());
    write(out);
    out.close();
    if (!out) throw Error(ErrorCode::IoError, "failed writing " + path(name).string());
    record(name);
  }

  void record(const std::string& name) {
    list_.push_back({{"path", name}, {"sha256", sha256_file(path(name).string())}});
  }

  const json& list() const { return list_; }

 private:
  fs::path dir_;
  json list_ = json::array();
};

void write_manifest(Artifacts& art, const std::string& command, const Loaded& l,
                    const json& metrics, const json& extra = json::object()) {
  json m;
  m["tool"] = "gsb";
  m["version"] = kToolVersion;
  m["command"] = command;
  m["config"] = l.doc;
  m["seeds"] = {{"data", l.cfg.data.seed}, {"train", l.cfg.train.seed}};
  m["artifacts"] = art.list();
  m["metrics"] = metrics;
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  std::ofstream out(art.path("manifest.json"));
  out << m.dump(2) << "\n";
  if (!out) throw Error(ErrorCode::IoError, "failed writing manifest");
}

LinearSdeSpec sde_of(const RunConfig& c) {
  try {
    return c.sde_spec();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidParams) throw Error(ErrorCode::ConfigError, e.what());
    throw;
  }
}

GsbProblem problem_of(const RunConfig& c) {
  const LinearSdeSpec sde = sde_of(c);
  if (c.problem.source == "direct")
    return GsbProblem{sde, Gaussian(c.problem.mean0, SymPsdMatrix(c.problem.cov0)),
                      Gaussian(c.problem.meanT, SymPsdMatrix(c.problem.covT))};
  return GsbProblem{sde, estimate_moments(load_data(c, true), c.problem.shrinkage),
                    estimate_moments(load_data(c, false), c.problem.shrinkage)};
}

// n evenly spaced times including both endpoints.
std::string marginals_csv(const GsbSolution& sol, int n) {
  std::ostringstream os;
  os.precision(17);
  const Eigen::Index d = sol.dim();
  os << "t";
  for (Eigen::Index i = 0; i < d; ++i) os << ",mu" << i;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) os << ",sigma" << i << "_" << j;
  os << "\n";
  for (int k = 0; k < n; ++k) {
    const double t = sol.horizon() * k / (n - 1);
    const Gaussian g = marginal(sol, t);
    os << t;
    for (Eigen::Index i = 0; i < d; ++i) os << "," << g.mean(i);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) os << "," << g.cov(i, j);
    os << "\n";
  }
  return os.str();
}

std::string drift_csv(const GsbSolution& sol, const TimeGrid& grid) {
  std::ostringstream os;
  os.precision(17);
  const Eigen::Index d = sol.dim();
  os << "t";
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) os << ",a" << i << "_" << j;
  for (Eigen::Index i = 0; i < d; ++i) os << ",b" << i;
  os << "\n";
  for (int k = 0; k < grid.n_steps(); ++k) {
    const DriftMatrix dm = drift_matrix(sol, grid.time(k));
    os << dm.t;
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) os << "," << dm.a(i, j);
    for (Eigen::Index i = 0; i < d; ++i) os << "," << dm.b(i);
    os << "\n";
  }
  return os.str();
}

bool wants(const RunConfig& c, const std::string& fmt) {
  return std::find(c.output.formats.begin(), c.output.formats.end(), fmt) != c.output.formats.end();
}

void save_checkpoint(Artifacts& art, const std::string& stem, const PolicyNetwork& net,
                     const OptimizerState& opt, std::uint64_t seed) {
  const Checkpoint ck{net, opt, seed};
  art.stream(stem + ".gsbp", [&](std::ostream& o) { write_checkpoint(ck, o); });
  art.text(stem + ".json", checkpoint_sidecar_json(ck) + "\n");
}

Checkpoint load_checkpoint_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open checkpoint '" + p.string() + "'");
  return read_checkpoint(in);
}

// Rebuilds the run state from config and data, then installs checkpoints
// found in `from` (net_f.gsbp, net_b.gsbp).
RunState restore(const RunConfig& c, const Batch& d0, const Batch& dT, const std::string& from) {
  RunState st = init_run(c.train, c.net, sde_of(c), d0, dT);
  if (from.empty()) return st;
  const Checkpoint f = load_checkpoint_file(fs::path(from) / "net_f.gsbp");
  const Checkpoint b = load_checkpoint_file(fs::path(from) / "net_b.gsbp");
  if (f.net.dim() != d0.cols() || b.net.dim() != d0.cols())
    throw Error(ErrorCode::DimensionMismatch, "checkpoint dimension does not match the data");
  st.net_f = f.net;
  st.opt_f = f.opt;
  st.net_b = b.net;
  st.opt_b = b.opt;
  return st;
}

json weps_json(const SinkhornResult& r) { return json::parse(r.to_json()); }

json evaluate(const RunState& st, const RunConfig& c, const Batch& d0, const Batch& dT,
              Artifacts* art) {
  json metrics = json::object();
  const std::uint64_t seed = c.train.seed;
  const auto pick = [&](const Batch& data) -> Batch {
    return data.topRows(std::min<Eigen::Index>(c.eval.n_generate, data.rows()));
  };
  if (c.eval.direction != "backward") {
    const Batch gen = generate(st, Direction::Forward, pick(d0), c.eval.n_steps, seed,
                               c.train.generative);
    metrics["forward"] = weps_json(sinkhorn_weps(gen, dT, c.eval.sinkhorn));
    if (art) art->stream("samples_forward.csv", [&](std::ostream& o) { write_points_csv(gen, o); });
  }
  if (c.eval.direction != "forward") {
    const Batch gen = generate(st, Direction::Backward, pick(dT), c.eval.n_steps, seed);
    metrics["backward"] = weps_json(sinkhorn_weps(gen, d0, c.eval.sinkhorn));
    if (art) art->stream("samples_backward.csv", [&](std::ostream& o) { write_points_csv(gen, o); });
  }
  return metrics;
}

int cmd_solve(const CommonOptions& o, bool check_only) {
  const Loaded l = load(o);
  const RunConfig& c = l.cfg;
  const GsbProblem problem = problem_of(c);
  const GsbSolution sol = solve(problem);
  const ValidationReport report = validate(sol, c.eval.validate_grid);
  std::cout << report.to_text();
  if (!check_only) {
    const fs::path dir = c.output.directory;
    DirLock lock(dir);
    Artifacts art(dir);
    art.text("marginals.csv", marginals_csv(sol, c.eval.n_steps + 1));
    art.text("drift.csv", drift_csv(sol, TimeGrid(sol.horizon(), c.eval.n_steps)));
    art.text("validation.txt", report.to_text());
    art.text("validation.json", report.to_json() + "\n");
    json extra = {{"status", report.passed ? "ok" : "validation_failed"},
                  {"sigma_star", sol.sigma_star()}};
    write_manifest(art, "solve", l, json::parse(report.to_json()), extra);
  }
  return report.passed ? 0 : 3;
}

int cmd_validate(const CommonOptions& o, bool as_json) {
  const Loaded l = load(o);
  const ValidationReport report = validate(problem_of(l.cfg), l.cfg.eval.validate_grid);
  std::cout << (as_json ? report.to_json() + "\n" : report.to_text());
  return report.passed ? 0 : 3;
}

struct MakeDataOptions {
  std::string kind = "moons";
  Eigen::Index n = 1000;
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::string out;
  int components = 8;
  double radius = 2.0;
  double component_std = 0.1;
};

int cmd_make_data(const MakeDataOptions& m) {
  DatasetParams p;
  p.n = m.n;
  p.noise = m.noise;
  p.seed = m.seed;
  p.components = m.components;
  p.radius = m.radius;
  p.component_std = m.component_std;
  const Batch pts = make_dataset(parse_dataset_kind(m.kind), p);
  if (m.out.empty() || m.out == "-") {
    write_points_csv(pts, std::cout);
  } else {
    const fs::path target(m.out);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    write_points_csv_file(pts, m.out);
  }
  return 0;
}

int cmd_pretrain(const CommonOptions& o) {
  const Loaded l = load(o);
  const RunConfig& c = l.cfg;
  const Batch d0 = load_data(c, true);
  const Batch dT = load_data(c, false);
  const fs::path dir = c.output.directory;
  DirLock lock(dir);
  Artifacts art(dir);
  RunState st = init_run(c.train, c.net, sde_of(c), d0, dT);
  pretrain(st, c.train, d0, dT);
  save_checkpoint(art, "net_f", st.net_f, st.opt_f, c.train.seed);
  save_checkpoint(art, "net_b", st.net_b, st.opt_b, c.train.seed);
  art.text("loss.csv", loss_history_csv(st.history));
  write_manifest(art, "pretrain", l, json::object(), {{"status", "ok"}, {"steps", st.iteration}});
  return 0;
}

int cmd_train(const CommonOptions& o, const std::string& from, bool skip_eval) {
  const Loaded l = load(o);
  const RunConfig& c = l.cfg;
  const Batch d0 = load_data(c, true);
  const Batch dT = load_data(c, false);
  const fs::path dir = c.output.directory;
  DirLock lock(dir);
  Artifacts art(dir);
  RunState st = restore(c, d0, dT, from);
  if (from.empty()) pretrain(st, c.train, d0, dT);
  try {
    train_alternating(st, c.train, d0, dT, [&](const RunState& s, int k) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "ckpt/outer_%03d", k);
      save_checkpoint(art, std::string(stem) + "_f", s.net_f, s.opt_f, c.train.seed);
      save_checkpoint(art, std::string(stem) + "_b", s.net_b, s.opt_b, c.train.seed);
    });
  } catch (const Error& e) {
    if (!st.failure.failed) throw;
    save_checkpoint(art, "net_f", st.net_f, st.opt_f, c.train.seed);
    save_checkpoint(art, "net_b", st.net_b, st.opt_b, c.train.seed);
    art.text("loss.csv", loss_history_csv(st.history));
    art.text("failure.json", st.failure.to_json() + "\n");
    write_manifest(art, "train", l, json::object(),
                   {{"status", "failed"}, {"failure", json::parse(st.failure.to_json())}});
    throw;
  }
  save_checkpoint(art, "net_f", st.net_f, st.opt_f, c.train.seed);
  save_checkpoint(art, "net_b", st.net_b, st.opt_b, c.train.seed);
  art.text("loss.csv", loss_history_csv(st.history));
  const json metrics = skip_eval ? json::object() : evaluate(st, c, d0, dT, &art);
  if (!skip_eval) art.text("metrics.json", metrics.dump(2) + "\n");
  json ledger = {{"forward_sims", st.ledger.forward_sims}, {"backward_sims", st.ledger.backward_sims}};
  write_manifest(art, "train", l, metrics, {{"status", "ok"}, {"steps", st.iteration}, {"cache", ledger}});
  return 0;
}

int cmd_generate(const CommonOptions& o, const std::string& from, const std::string& direction,
                 bool trajectories) {
  const Loaded l = load(o);
  const RunConfig& c = l.cfg;
  if (from.empty()) throw Error(ErrorCode::ConfigError, "generate needs --from <checkpoint dir>");
  const Batch d0 = load_data(c, true);
  const Batch dT = load_data(c, false);
  const std::string dir_name = direction.empty() ? c.eval.direction : direction;
  if (dir_name != "forward" && dir_name != "backward" && dir_name != "both")
    throw Error(ErrorCode::ConfigError, "--direction must be forward, backward or both");
  const fs::path dir = c.output.directory;
  DirLock lock(dir);
  Artifacts art(dir);
  const RunState st = restore(c, d0, dT, from);
  const TimeGrid grid(st.sol.horizon(), c.eval.n_steps);
  const auto run = [&](Direction dirn, const Batch& src, const std::string& name) {
    const Batch source = src.topRows(std::min<Eigen::Index>(c.eval.n_generate, src.rows()));
    const TrajectoryBatch traj =
        generate_paths(st, dirn, source, c.eval.n_steps, c.train.seed, c.train.generative);
    const Batch out = traj.slice(dirn == Direction::Forward ? grid.n_steps() - 1 : 0);
    art.stream("samples_" + name + ".csv", [&](std::ostream& os) { write_points_csv(out, os); });
    if (trajectories) {
      if (wants(c, "binary"))
        art.stream("trajectories_" + name + ".gsbt", [&](std::ostream& os) { write_binary(traj, os); });
      if (wants(c, "csv"))
        art.stream("trajectories_" + name + ".csv", [&](std::ostream& os) { write_csv(traj, os); });
    }
  };
  if (dir_name != "backward") run(Direction::Forward, d0, "forward");
  if (dir_name != "forward") run(Direction::Backward, dT, "backward");
  write_manifest(art, "generate", l, json::object(), {{"status", "ok"}, {"from", from}});
  return 0;
}

int cmd_eval(const CommonOptions& o, std::string samples, std::string reference) {
  const Loaded l = load(o);
  const RunConfig& c = l.cfg;
  if (samples.empty()) samples = c.eval.samples;
  if (reference.empty()) reference = c.eval.reference;
  if (samples.empty() || reference.empty())
    throw Error(ErrorCode::ConfigError, "eval needs --samples and --reference CSV files");
  const Batch x = read_points_csv_file(samples);
  const Batch y = read_points_csv_file(reference);
  const SinkhornResult r = sinkhorn_weps(x, y, c.eval.sinkhorn);
  std::cout << r.to_json() << "\n";
  if (!o.out.empty() || !o.config.empty()) {
    const fs::path dir = c.output.directory;
    DirLock lock(dir);
    Artifacts art(dir);
    art.text("metrics.json", json{{"W_eps", weps_json(r)}}.dump(2) + "\n");
    write_manifest(art, "eval", l, weps_json(r),
                   {{"status", "ok"}, {"samples", samples}, {"reference", reference}});
  }
  return 0;
}

void report_error(const std::string& code, const std::string& message, int exit_code) {
  std::cerr << json{{"error", code}, {"message", message}, {"exit_code", exit_code}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian Schrodinger bridge solver and bridge-flow trainer", "gsb"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  CommonOptions common;
  bool check_only = false;
  auto* solve_cmd = app.add_subcommand("solve", "Solve the Gaussian bridge in closed form and dump marginals and drift");
  add_common(solve_cmd, common);
  solve_cmd->add_flag("--check", check_only, "Only run validation; exit 0 iff it passes");

  bool validate_json = false;
  auto* validate_cmd = app.add_subcommand("validate", "Validate the closed-form solution (symmetry, covariance ODE, boundaries)");
  add_common(validate_cmd, common);
  validate_cmd->add_flag("--json", validate_json, "Print the machine-readable report");

  MakeDataOptions md;
  auto* make_cmd = app.add_subcommand("make-data", "Write a builtin 2-D point cloud as CSV");
  make_cmd->add_option("--kind", md.kind, "moons | spiral | gaussians")->capture_default_str();
  make_cmd->add_option("--n", md.n, "Number of points")->capture_default_str();
  make_cmd->add_option("--noise", md.noise, "Gaussian jitter standard deviation")->capture_default_str();
  make_cmd->add_option("--seed", md.seed, "Random seed")->capture_default_str();
  make_cmd->add_option("--out", md.out, "Output CSV path ('-' or empty for stdout)");
  make_cmd->add_option("--components", md.components, "gaussians: number of modes")->capture_default_str();
  make_cmd->add_option("--radius", md.radius, "gaussians: radius of the mode circle")->capture_default_str();
  make_cmd->add_option("--component-std", md.component_std, "gaussians: per-mode standard deviation")->capture_default_str();

  auto* pretrain_cmd = app.add_subcommand("pretrain", "Pretrain both policies from exact bridge samples");
  add_common(pretrain_cmd, common);

  std::string from;
  bool skip_eval = false;
  auto* train_cmd = app.add_subcommand("train", "Pretrain (unless --from) and run alternating training");
  add_common(train_cmd, common);
  train_cmd->add_option("--from", from, "Directory with pretrained net_f.gsbp and net_b.gsbp");
  train_cmd->add_flag("--no-eval", skip_eval, "Skip the final W_eps evaluation");

  std::string direction;
  bool trajectories = false;
  auto* generate_cmd = app.add_subcommand("generate", "Sample terminal states with trained EMA policies");
  add_common(generate_cmd, common);
  generate_cmd->add_option("--from", from, "Directory with net_f.gsbp and net_b.gsbp");
  generate_cmd->add_option("--direction", direction, "forward | backward | both (default: eval.direction)");
  generate_cmd->add_flag("--trajectories", trajectories, "Also write full sample paths");

  std::string samples;
  std::string reference;
  auto* eval_cmd = app.add_subcommand("eval", "Entropic transport cost W_eps between two point-cloud CSVs");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--samples", samples, "Samples CSV (default: eval.samples)");
  eval_cmd->add_option("--reference", reference, "Reference CSV (default: eval.reference)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*solve_cmd) return cmd_solve(common, check_only);
    if (*validate_cmd) return cmd_validate(common, validate_json);
    if (*make_cmd) return cmd_make_data(md);
    if (*pretrain_cmd) return cmd_pretrain(common);
    if (*train_cmd) return cmd_train(common, from, skip_eval);
    if (*generate_cmd) return cmd_generate(common, from, direction, trajectories);
    if (*eval_cmd) return cmd_eval(common, samples, reference);
  } catch (const Error& e) {
    const int rc = exit_code_for(e.code());
    report_error(std::string(error_name(e.code())), e.what(), rc);
    return rc;
  } catch (const nlohmann::json::exception& e) {
    report_error("ConfigError", e.what(), 2);
    return 2;
  } catch (const fs::filesystem_error& e) {
    report_error("IoError", e.what(), 4);
    return 4;
  } catch (const std::exception& e) {
    report_error("InternalError", e.what(), 3);
    return 3;
  }
  return 0;
}
