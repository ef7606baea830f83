#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

#include "gsb/linalg.hpp"

namespace gsb {

enum class DatasetKind { Moons, Spiral, Gaussians };

DatasetKind parse_dataset_kind(std::string_view name);

struct DatasetParams {
  Eigen::Index n = 1000;
  double noise = 0.0;
  std::uint64_t seed = 0;
  // gaussians only: `components` equal-weight modes on a circle of `radius`.
  int components = 8;
  double radius = 2.0;
  double component_std = 0.1;
};

// Two interleaving unit half circles: the upper arc centered at the origin,
// the lower arc centered at (1, -0.5). Arc positions are evenly spaced, the
// first ceil(n/2) points on the upper arc, then isotropic N(0, noise^2) jitter.
Batch make_moons(const DatasetParams& p);
// Two arms r = 0.3 + 0.12 phi with phi ~ U[0, 3 pi]; odd rows are rotated by pi.
Batch make_spiral(const DatasetParams& p);
Batch make_gaussians(const DatasetParams& p);
Batch make_dataset(DatasetKind kind, const DatasetParams& p);

// Header "x0,...,x{d-1}" then one point per row.
void write_points_csv(const Batch& points, std::ostream& out);
Batch read_points_csv(std::istream& in);
Batch read_points_csv_file(const std::string& path);
void write_points_csv_file(const Batch& points, const std::string& path);

// Per-coordinate standardization to zero mean and unit variance.
Batch standardized(const Batch& points);

}  // namespace gsb
