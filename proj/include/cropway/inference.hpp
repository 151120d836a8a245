#pragma once

#include <span>
#include <vector>

#include "cropway/fieldgen.hpp"
#include "cropway/model.hpp"

namespace cropway {

struct DecodeConfig {
  double t_p = 0.4;    // confidence threshold
  double t_sup = 8.0;  // suppression radius, px
  int kmeans_iters = 100;

  void validate() const {
    if (!(t_p > 0.0 && t_p < 1.0))
      throw ConfigError("decode: t_p must be in (0,1)");
    if (t_sup <= 0.0) throw ConfigError("decode: t_sup must be positive");
  }
};

/// A thresholded cell prediction mapped back to image coordinates.
struct Candidate {
  double x = 0;
  double y = 0;
  double confidence = 0;
  int cell_x = 0;
  int cell_y = 0;
};

/// One candidate per cell with probability >= t_p. Image position is
/// cell*K + K/2 + delta*K/2 per axis.
std::vector<Candidate> decode_waypoints(std::span<const float> estimation,
                                        int gh, int gw, int K, double t_p);

/// Greedy confidence-ordered suppression: highest confidence first
/// (ties by (y,x)), a candidate survives iff every already-accepted point
/// is farther than t_sup away. Output in acceptance order.
WaypointSet suppress(const std::vector<Candidate>& candidates, double t_sup);

/// Latent vector of the cell containing each point.
std::vector<std::vector<double>> gather_latent(std::span<const float> latent,
                                               int gh, int gw, int D,
                                               const WaypointSet& points,
                                               int K);

struct ClusterResult {
  std::vector<int> labels;  // 0/1, arbitrary up to swap
  bool degenerate = false;  // all features identical: single cluster
};

/// Spherical 2-means: features are unit-normalized, centroids start at the
/// pair with minimum cosine similarity, Lloyd iterations follow.
ClusterResult cluster_latent(
    const std::vector<std::vector<double>>& features, int iters);

/// forward -> decode -> suppress -> gather -> cluster, one network pass.
WaypointSet predict(const nn::Model& model, const OccupancyGrid& grid,
                    const DecodeConfig& config);

}  // namespace cropway
