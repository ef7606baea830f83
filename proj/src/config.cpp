#include "gsb/config.hpp"

#include <fstream>

#include "gsb/rng.hpp"

namespace gsb {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

bool compatible(const json& def, const json& val) {
  if (def.is_number()) return val.is_number();
  if (def.is_array()) return val.is_array();
  if (def.is_string()) return val.is_string();
  if (def.is_boolean()) return val.is_boolean();
  if (def.is_object()) return val.is_object();
  return true;
}

void overlay(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) fail("'" + path + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) fail("unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (!compatible(slot, it.value())) fail("config key '" + key + "' has the wrong type");
    if (slot.is_object())
      overlay(slot, it.value(), key);
    else
      slot = it.value();
  }
}

template <class T>
T as(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(std::string("config key '") + key + "': " + e.what());
  }
}

Vector as_vector(const json& arr, const std::string& what) {
  Vector v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) fail(what + " must contain numbers");
    v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
  }
  return v;
}

Matrix as_matrix(const json& arr, const std::string& what) {
  const auto n = static_cast<Eigen::Index>(arr.size());
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const json& row = arr[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
      fail(what + " must be a square array of arrays");
    m.row(i) = as_vector(row, what).transpose();
  }
  return m;
}

template <class T>
T positive_count(const json& j, const char* key) {
  const auto v = as<std::int64_t>(j, key);
  if (v < 0) fail(std::string("config key '") + key + "' must be nonnegative");
  return static_cast<T>(v);
}

}  // namespace

json default_config_json() {
  const PresetParams pp;
  const TrainConfig tc;
  const PolicyArchitecture arch;
  const SinkhornConfig sk;
  return json{
      {"config_version", kConfigVersion},
      {"data",
       {{"source", "builtin"},
        {"start", "spiral"},
        {"end", "moons"},
        {"n_points", 2000},
        {"noise", 0.05},
        {"seed", 0},
        {"normalize", false},
        {"scale", 1.0}}},
      {"sde",
       {{"preset", "bm"},
        {"horizon", pp.horizon},
        {"params",
         {{"nu", pp.nu},
          {"sigma_min", pp.sigma_min},
          {"sigma_max", pp.sigma_max},
          {"beta_min", pp.beta_min},
          {"beta_max", pp.beta_max},
          {"delta", pp.delta},
          {"b", json::array()},
          {"b_slope", json::array()}}}}},
      {"problem",
       {{"source", "data"},
        {"mean0", json::array()},
        {"cov0", json::array()},
        {"meanT", json::array()},
        {"covT", json::array()},
        {"shrinkage", 1e-3}}},
      {"net",
       {{"hidden", arch.hidden},
        {"time_features", std::string(time_features_name(arch.time_features))}}},
      {"train",
       {{"pretrain_f", tc.pretrain_f},
        {"pretrain_b", tc.pretrain_b},
        {"outer", tc.outer},
        {"inner", tc.inner},
        {"cache_every", tc.cache_every},
        {"lr_f", tc.lr_f},
        {"lr_b", tc.lr_b},
        {"batch_size", tc.batch_size},
        {"n_steps", tc.n_steps},
        {"sim_paths", tc.sim_paths},
        {"seed", tc.seed},
        {"shrinkage", tc.shrinkage},
        {"generative", tc.generative},
        {"cold_start", tc.cold_start}}},
      {"eval",
       {{"epsilon", sk.epsilon},
        {"max_iters", sk.max_iters},
        {"tol", sk.tol},
        {"log_domain", sk.log_domain},
        {"n_generate", 2000},
        {"n_steps", 100},
        {"validate_grid", 20},
        {"direction", "both"},
        {"samples", ""},
        {"reference", ""}}},
      {"output", {{"directory", "gsb_run"}, {"formats", json::array({"csv", "binary"})}}},
  };
}

json resolved_config_json(const json& user) {
  if (!user.is_object()) fail("config document must be a JSON object");
  if (!user.contains("config_version")) fail("config_version is required");
  if (!user["config_version"].is_number_integer() || user["config_version"].get<int>() != kConfigVersion)
    fail("unsupported config_version (expected " + std::to_string(kConfigVersion) + ")");
  json doc = default_config_json();
  overlay(doc, user, "");
  return doc;
}

RunConfig parse_config(const json& user) {
  const json doc = resolved_config_json(user);
  RunConfig c;

  const json& d = doc["data"];
  c.data.source = as<std::string>(d, "source");
  if (c.data.source != "builtin" && c.data.source != "csv") fail("data.source must be builtin or csv");
  c.data.start = as<std::string>(d, "start");
  c.data.end = as<std::string>(d, "end");
  c.data.n_points = positive_count<Eigen::Index>(d, "n_points");
  c.data.noise = as<double>(d, "noise");
  c.data.seed = as<std::uint64_t>(d, "seed");
  c.data.normalize = as<bool>(d, "normalize");
  c.data.scale = as<double>(d, "scale");
  if (!(c.data.scale > 0.0)) fail("data.scale must be positive");

  const json& s = doc["sde"];
  try {
    c.sde.preset = parse_preset(as<std::string>(s, "preset"));
  } catch (const Error& e) {
    fail(e.what());
  }
  c.sde.params.horizon = as<double>(s, "horizon");
  const json& p = s["params"];
  c.sde.params.nu = as<double>(p, "nu");
  c.sde.params.sigma_min = as<double>(p, "sigma_min");
  c.sde.params.sigma_max = as<double>(p, "sigma_max");
  c.sde.params.beta_min = as<double>(p, "beta_min");
  c.sde.params.beta_max = as<double>(p, "beta_max");
  c.sde.params.delta = as<double>(p, "delta");
  c.sde.params.b = as_vector(p["b"], "sde.params.b");
  c.sde.params.b_slope = as_vector(p["b_slope"], "sde.params.b_slope");

  const json& pr = doc["problem"];
  c.problem.source = as<std::string>(pr, "source");
  if (c.problem.source != "data" && c.problem.source != "direct")
    fail("problem.source must be data or direct");
  c.problem.mean0 = as_vector(pr["mean0"], "problem.mean0");
  c.problem.cov0 = as_matrix(pr["cov0"], "problem.cov0");
  c.problem.meanT = as_vector(pr["meanT"], "problem.meanT");
  c.problem.covT = as_matrix(pr["covT"], "problem.covT");
  c.problem.shrinkage = as<double>(pr, "shrinkage");
  if (c.problem.source == "direct" &&
      (c.problem.mean0.size() == 0 || c.problem.mean0.size() != c.problem.cov0.rows() ||
       c.problem.meanT.size() != c.problem.mean0.size() ||
       c.problem.covT.rows() != c.problem.mean0.size()))
    fail("problem.source = direct needs mean0, cov0, meanT, covT of one dimension");

  const json& n = doc["net"];
  c.net.hidden.clear();
  for (const json& w : n["hidden"]) {
    if (!w.is_number_integer() || w.get<int>() <= 0) fail("net.hidden must list positive integers");
    c.net.hidden.push_back(w.get<int>());
  }
  c.net.time_features = parse_time_features(as<std::string>(n, "time_features"));

  const json& t = doc["train"];
  c.train.pretrain_f = positive_count<int>(t, "pretrain_f");
  c.train.pretrain_b = positive_count<int>(t, "pretrain_b");
  c.train.outer = positive_count<int>(t, "outer");
  c.train.inner = positive_count<int>(t, "inner");
  c.train.cache_every = positive_count<int>(t, "cache_every");
  c.train.lr_f = as<double>(t, "lr_f");
  c.train.lr_b = as<double>(t, "lr_b");
  c.train.batch_size = positive_count<int>(t, "batch_size");
  c.train.n_steps = positive_count<int>(t, "n_steps");
  c.train.sim_paths = positive_count<int>(t, "sim_paths");
  c.train.seed = as<std::uint64_t>(t, "seed");
  c.train.shrinkage = as<double>(t, "shrinkage");
  c.train.generative = as<bool>(t, "generative");
  c.train.cold_start = as<bool>(t, "cold_start");
  c.train.validate();

  const json& e = doc["eval"];
  c.eval.sinkhorn.epsilon = as<double>(e, "epsilon");
  c.eval.sinkhorn.max_iters = positive_count<int>(e, "max_iters");
  c.eval.sinkhorn.tol = as<double>(e, "tol");
  c.eval.sinkhorn.log_domain = as<bool>(e, "log_domain");
  c.eval.n_generate = positive_count<Eigen::Index>(e, "n_generate");
  c.eval.n_steps = positive_count<int>(e, "n_steps");
  c.eval.validate_grid = positive_count<int>(e, "validate_grid");
  c.eval.direction = as<std::string>(e, "direction");
  if (c.eval.direction != "forward" && c.eval.direction != "backward" && c.eval.direction != "both")
    fail("eval.direction must be forward, backward or both");
  c.eval.samples = as<std::string>(e, "samples");
  c.eval.reference = as<std::string>(e, "reference");
  if (c.eval.n_steps < 2) fail("eval.n_steps must be >= 2");

  const json& o = doc["output"];
  c.output.directory = as<std::string>(o, "directory");
  c.output.formats.clear();
  for (const json& f : o["formats"]) {
    if (!f.is_string() || (f != "csv" && f != "binary")) fail("output.formats entries must be csv or binary");
    c.output.formats.push_back(f.get<std::string>());
  }
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) fail("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) fail("override key '" + path + "' has an empty segment");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    json& next = (*node)[key];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) fail("override key '" + path + "' descends into a non-object");
    node = &next;
    start = dot + 1;
  }
}

json load_config_json(const std::string& path, const std::vector<std::string>& overrides) {
  json doc;
  if (path.empty()) {
    doc = json{{"config_version", kConfigVersion}};
  } else {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config '" + path + "'");
    doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) fail("config '" + path + "' is not valid JSON");
  }
  for (const std::string& o : overrides) apply_override(doc, o);
  return doc;
}

Batch load_data(const RunConfig& c, bool start) {
  const std::string& what = start ? c.data.start : c.data.end;
  Batch pts;
  if (c.data.source == "csv") {
    pts = read_points_csv_file(what);
  } else {
    DatasetParams p;
    p.n = c.data.n_points;
    p.noise = c.data.noise;
    p.seed = rng::key(c.data.seed, rng::kDataset, start ? 0 : 1);
    try {
      pts = make_dataset(parse_dataset_kind(what), p);
    } catch (const Error& e) {
      fail(e.what());
    }
  }
  if (c.data.normalize) pts = standardized(pts);
  if (c.data.scale != 1.0) pts *= c.data.scale;
  return pts;
}

}  // namespace gsb
