#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gsb/datasets.hpp"
#include "gsb/metrics.hpp"
#include "gsb/policy.hpp"
#include "gsb/sde.hpp"
#include "gsb/solver.hpp"
#include "gsb/trainer.hpp"

namespace gsb {

inline constexpr int kConfigVersion = 1;

struct DataSection {
  std::string source = "builtin";  // builtin | csv
  std::string start = "spiral";    // builtin name or CSV path for time 0
  std::string end = "moons";       // builtin name or CSV path for time T
  Eigen::Index n_points = 2000;
  double noise = 0.05;
  std::uint64_t seed = 0;
  bool normalize = false;
  double scale = 1.0;  // applied after normalization
};

struct SdeSection {
  Preset preset = Preset::Bm;
  PresetParams params;
};

// Gaussians for `solve`: from data moments, or given directly.
struct ProblemSection {
  std::string source = "data";  // data | direct
  Vector mean0;
  Matrix cov0;
  Vector meanT;
  Matrix covT;
  double shrinkage = 1e-3;
};

struct EvalSection {
  SinkhornConfig sinkhorn;
  Eigen::Index n_generate = 2000;
  int n_steps = 100;
  int validate_grid = 20;
  std::string direction = "both";  // forward | backward | both
  std::string samples;             // eval: samples CSV
  std::string reference;           // eval: reference CSV
};

struct OutputSection {
  std::string directory = "gsb_run";
  std::vector<std::string> formats = {"csv", "binary"};
};

struct RunConfig {
  DataSection data;
  SdeSection sde;
  ProblemSection problem;
  PolicyArchitecture net;
  TrainConfig train;
  EvalSection eval;
  OutputSection output;

  LinearSdeSpec sde_spec() const { return preset(sde.preset, sde.params); }
};

// Every key with its default value.
nlohmann::json default_config_json();

// Overlays `user` on the defaults and parses strictly: unknown keys, wrong
// types, and a missing or different config_version raise ConfigError.
RunConfig parse_config(const nlohmann::json& user);

// Reads a JSON file, applies dotted key=value overrides (values parsed as
// JSON when possible, else taken as strings), and returns the merged document.
nlohmann::json load_config_json(const std::string& path, const std::vector<std::string>& overrides);
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Fully resolved document, suitable for echoing into a manifest.
nlohmann::json resolved_config_json(const nlohmann::json& user);

// Point cloud for time 0 (`start`) or time T: a CSV file or a builtin dataset
// seeded from data.seed and the side, then normalized and scaled.
Batch load_data(const RunConfig& c, bool start);

}  // namespace gsb
