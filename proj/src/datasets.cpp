#include "gsb/datasets.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <vector>

#include "gsb/rng.hpp"

namespace gsb {

namespace {

double jitter(const DatasetParams& p, Eigen::Index row, int coord) {
  if (p.noise == 0.0) return 0.0;
  return p.noise * rng::normal(rng::key(p.seed, rng::kDataset, static_cast<std::uint64_t>(row),
                                        static_cast<std::uint64_t>(coord), 1));
}

double uniform(const DatasetParams& p, Eigen::Index row, std::uint64_t slot) {
  return rng::uniform(rng::key(p.seed, rng::kDataset, static_cast<std::uint64_t>(row), slot, 2));
}

void check(const DatasetParams& p) {
  if (p.n < 1) throw Error(ErrorCode::InvalidParams, "dataset size must be >= 1");
  if (!(p.noise >= 0.0) || !std::isfinite(p.noise))
    throw Error(ErrorCode::InvalidParams, "noise must be a nonnegative number");
}

}  // namespace

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "moons") return DatasetKind::Moons;
  if (name == "spiral") return DatasetKind::Spiral;
  if (name == "gaussians") return DatasetKind::Gaussians;
  throw Error(ErrorCode::InvalidParams, "unknown dataset '" + std::string(name) + "'");
}

Batch make_moons(const DatasetParams& p) {
  check(p);
  const Eigen::Index n_upper = (p.n + 1) / 2;
  const Eigen::Index n_lower = p.n - n_upper;
  const auto angle = [](Eigen::Index i, Eigen::Index count) {
    return count <= 1 ? 0.0
                      : std::numbers::pi * static_cast<double>(i) / static_cast<double>(count - 1);
  };
  Batch out(p.n, 2);
  for (Eigen::Index i = 0; i < n_upper; ++i) {
    const double a = angle(i, n_upper);
    out(i, 0) = std::cos(a);
    out(i, 1) = std::sin(a);
  }
  for (Eigen::Index i = 0; i < n_lower; ++i) {
    const double a = angle(i, n_lower);
    out(n_upper + i, 0) = 1.0 - std::cos(a);
    out(n_upper + i, 1) = -0.5 - std::sin(a);
  }
  for (Eigen::Index r = 0; r < p.n; ++r) {
    out(r, 0) += jitter(p, r, 0);
    out(r, 1) += jitter(p, r, 1);
  }
  return out;
}

Batch make_spiral(const DatasetParams& p) {
  check(p);
  Batch out(p.n, 2);
  for (Eigen::Index r = 0; r < p.n; ++r) {
    const double phi = 3.0 * std::numbers::pi * uniform(p, r, 0);
    const double radius = 0.3 + 0.12 * phi;
    const double arm = (r % 2 == 0) ? 0.0 : std::numbers::pi;
    out(r, 0) = radius * std::cos(phi + arm) + jitter(p, r, 0);
    out(r, 1) = radius * std::sin(phi + arm) + jitter(p, r, 1);
  }
  return out;
}

Batch make_gaussians(const DatasetParams& p) {
  check(p);
  if (p.components < 1) throw Error(ErrorCode::InvalidParams, "gaussians need >= 1 component");
  if (!(p.component_std >= 0.0)) throw Error(ErrorCode::InvalidParams, "component_std must be >= 0");
  Batch out(p.n, 2);
  for (Eigen::Index r = 0; r < p.n; ++r) {
    const auto c = static_cast<int>(rng::index(
        rng::key(p.seed, rng::kDataset, static_cast<std::uint64_t>(r), 3, 3),
        static_cast<std::uint64_t>(p.components)));
    const double a = 2.0 * std::numbers::pi * c / p.components;
    for (int j = 0; j < 2; ++j) {
      const double z = rng::normal(rng::key(p.seed, rng::kDataset, static_cast<std::uint64_t>(r),
                                            static_cast<std::uint64_t>(j), 4));
      out(r, j) = p.radius * (j == 0 ? std::cos(a) : std::sin(a)) + p.component_std * z +
                  jitter(p, r, j);
    }
  }
  return out;
}

Batch make_dataset(DatasetKind kind, const DatasetParams& p) {
  switch (kind) {
    case DatasetKind::Moons:
      return make_moons(p);
    case DatasetKind::Spiral:
      return make_spiral(p);
    case DatasetKind::Gaussians:
      return make_gaussians(p);
  }
  throw Error(ErrorCode::InvalidParams, "unknown dataset kind");
}

void write_points_csv(const Batch& points, std::ostream& out) {
  for (Eigen::Index j = 0; j < points.cols(); ++j) out << (j ? "," : "") << "x" << j;
  out << "\n";
  out.precision(17);
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) out << (j ? "," : "") << points(r, j);
    out << "\n";
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing points CSV");
}

Batch read_points_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::IoError, "points CSV is empty");
  Eigen::Index d = 1;
  for (char ch : line) d += ch == ',';
  std::vector<double> values;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string cell;
    Eigen::Index cols = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw Error(ErrorCode::IoError, "non-numeric cell '" + cell + "' in points CSV row " +
                                            std::to_string(rows + 1));
      }
      ++cols;
    }
    if (cols != d)
      throw Error(ErrorCode::IoError, "points CSV row " + std::to_string(rows + 1) + " has " +
                                          std::to_string(cols) + " columns, header has " +
                                          std::to_string(d));
    ++rows;
  }
  Batch out(rows, d);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index j = 0; j < d; ++j) out(r, j) = values[static_cast<std::size_t>(r * d + j)];
  return out;
}

Batch read_points_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  return read_points_csv(in);
}

void write_points_csv_file(const Batch& points, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot create '" + path + "'");
  write_points_csv(points, out);
}

Batch standardized(const Batch& points) {
  if (points.rows() < 2) throw Error(ErrorCode::TooFewPoints, "standardization needs >= 2 points");
  const Eigen::RowVectorXd mean = points.colwise().mean();
  Batch centered = points.rowwise() - mean;
  const Eigen::RowVectorXd sd =
      (centered.colwise().squaredNorm() / static_cast<double>(points.rows() - 1)).cwiseSqrt();
  for (Eigen::Index j = 0; j < points.cols(); ++j)
    if (sd(j) > 0.0) centered.col(j) /= sd(j);
  return centered;
}

}  // namespace gsb
