#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cropway/common.hpp"

namespace cropway {

/// Binary top-view raster: 1 marks plant rows, 0 free terrain.
struct OccupancyGrid {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> data;  // values in {0,1}

  OccupancyGrid() = default;
  OccupancyGrid(int height, int width)
      : h(height), w(width), data(std::size_t(height) * width, 0) {}

  std::uint8_t& at(int y, int x) { return data[std::size_t(y) * w + x]; }
  std::uint8_t at(int y, int x) const { return data[std::size_t(y) * w + x]; }

  std::size_t occupied_count() const;
};

struct Waypoint {
  double x = 0;
  double y = 0;
  int cluster = 0;  // 0 = region A (row starts), 1 = region B (row ends)
  double confidence = 1.0;
};

using WaypointSet = std::vector<Waypoint>;

struct GenConfig {
  int height = 800;
  int width = 800;
  int n_min = 10;
  int n_max = 50;
  double alpha_min = -M_PI / 2;
  double alpha_max = M_PI / 2;
  double radius_min = 1.0;
  double radius_max = 2.0;
  double spacing_min = 8.0;
  double spacing_max = 16.0;
  double hole_rate = 2.0;      // expected holes per row (Poisson)
  double hole_min_len = 3.0;   // hole length along the row, px
  double hole_max_len = 15.0;
  double noise_sigma = 1.5;    // displacement noise on sampled points, px
  bool curved = false;         // allow curved rows
  double curve_prob = 0.5;     // fraction of curved images when enabled
  double curve_strength = 0.15;  // control-point offset cap, rel. row length
  double border_margin = 40.0;
  double min_row_length = 40.0;

  void validate() const;
};

struct HoleStats {
  double rate = 2.0;
  double min_len = 3.0;
  double max_len = 15.0;
};

/// One crop row as a quadratic Bézier (p1 == chord midpoint for straight
/// rows) plus its base stroke radius.
struct RowSpec {
  Vec2 p0, p1, p2;
  double radius = 1.0;
};

struct FieldSpec {
  int n = 0;  // rows actually present
  double alpha = 0.0;
  bool curved = false;
  std::vector<RowSpec> rows;
  std::array<Vec2, 4> border{};
};

struct FieldSample {
  OccupancyGrid grid;
  WaypointSet waypoints;
  FieldSpec spec;
};

/// (1-t)^2 P0 + 2(1-t)t P1 + t^2 P2.
Vec2 bezier_point(Vec2 p0, Vec2 p1, Vec2 p2, double t);

/// Polyline along the row curve with consecutive samples at most
/// `max_step` px apart.
std::vector<Vec2> sample_row_curve(const RowSpec& row, double max_step);

/// Stamps a disc of radius r at every sample; a pixel is set when its
/// center lies within r of a sample point.
void rasterize_row(const std::vector<Vec2>& samples, double radius,
                   OccupancyGrid& grid);

/// Zeroes Poisson-many random intervals of each row's stroke. At least half
/// of every row's pixels survive.
void carve_holes(OccupancyGrid& grid, const FieldSpec& spec,
                 const HoleStats& stats, std::uint64_t seed);

/// Runs the full synthetic procedure. Deterministic per (config, seed).
FieldSample generate_field(const GenConfig& config, std::uint64_t seed);

struct DatasetCounts {
  int train = 0;
  int val = 0;
  int test = 0;
  int total() const { return train + val + test; }
};

/// Writes images/%05d.png, labels/%05d.json and manifest.json.
void generate_dataset(const GenConfig& config, DatasetCounts counts,
                      std::uint64_t seed, const std::string& out_dir);

// ----------------------------------------------------------------------------
// Dataset loading (same formats accept externally annotated grids)
// ----------------------------------------------------------------------------

struct Sample {
  OccupancyGrid grid;
  WaypointSet waypoints;
  int n_rows = 0;
  bool curved = false;
  std::uint64_t seed = 0;
};

struct SplitRange {
  int offset = 0;
  int count = 0;
};

struct Manifest {
  std::uint64_t seed = 0;
  GenConfig config;
  SplitRange train, val, test;

  SplitRange split(const std::string& name) const;
};

Manifest load_manifest(const std::string& dir);
Sample load_sample(const std::string& dir, int index);
std::vector<Sample> load_split(const std::string& dir,
                               const std::string& split_name);

}  // namespace cropway
