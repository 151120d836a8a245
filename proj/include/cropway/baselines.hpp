#pragma once

#include <vector>

#include "cropway/common.hpp"

namespace cropway {

struct DbscanConfig {
  double eps = 25.0;
  int min_pts = 2;

  void validate() const {
    if (eps <= 0.0) throw ConfigError("dbscan: eps must be positive");
    if (min_pts < 1) throw ConfigError("dbscan: min_pts must be >= 1");
  }
};

/// Euclidean 2-means in the image plane, deterministic farthest-pair init.
std::vector<int> kmeans_image(const std::vector<Vec2>& points, int iters);

/// Classic density clustering. Returns one id per point, -1 for noise.
std::vector<int> dbscan(const std::vector<Vec2>& points,
                        const DbscanConfig& config);

/// Orientation of the row direction, estimated as the second principal
/// component of the waypoint cloud (the first is the cross-row axis).
/// Result in (-pi/2, pi/2].
double estimate_row_angle(const std::vector<Vec2>& points);

/// DBSCAN with geometric fallback: two found clusters are used directly
/// (noise adopted by the nearest labeled point); otherwise points are split
/// at the median of their projections onto the estimated row direction.
std::vector<int> dbscan_pipeline(const std::vector<Vec2>& points,
                                 const DbscanConfig& config);

}  // namespace cropway
