#include "cropway/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cropway {

std::vector<Candidate> decode_waypoints(std::span<const float> estimation,
                                        int gh, int gw, int K, double t_p) {
  if (int(estimation.size()) != gh * gw * 3)
    throw ShapeError("decode: estimation map size " +
                     std::to_string(estimation.size()) + " does not match " +
                     std::to_string(gh) + "x" + std::to_string(gw) + "x3");
  std::vector<Candidate> out;
  const double half = K / 2.0;
  for (int cy = 0; cy < gh; ++cy)
    for (int cx = 0; cx < gw; ++cx) {
      const float* cell = estimation.data() + (std::size_t(cy) * gw + cx) * 3;
      if (cell[0] < t_p) continue;
      Candidate c;
      c.confidence = cell[0];
      c.cell_x = cx;
      c.cell_y = cy;
      c.x = cx * K + half + double(cell[1]) * half;
      c.y = cy * K + half + double(cell[2]) * half;
      out.push_back(c);
    }
  return out;
}

WaypointSet suppress(const std::vector<Candidate>& candidates, double t_sup) {
  if (t_sup <= 0.0) throw ConfigError("suppress: t_sup must be positive");
  std::vector<int> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (candidates[a].confidence != candidates[b].confidence)
      return candidates[a].confidence > candidates[b].confidence;
    if (candidates[a].y != candidates[b].y)
      return candidates[a].y < candidates[b].y;
    return candidates[a].x < candidates[b].x;
  });
  WaypointSet accepted;
  for (int idx : order) {
    const Candidate& c = candidates[idx];
    bool blocked = false;
    for (const Waypoint& a : accepted) {
      const double dx = a.x - c.x, dy = a.y - c.y;
      if (std::sqrt(dx * dx + dy * dy) <= t_sup) {
        blocked = true;
        break;
      }
    }
    if (!blocked) accepted.push_back({c.x, c.y, 0, c.confidence});
  }
  return accepted;
}

std::vector<std::vector<double>> gather_latent(std::span<const float> latent,
                                               int gh, int gw, int D,
                                               const WaypointSet& points,
                                               int K) {
  if (int(latent.size()) != gh * gw * D)
    throw ShapeError("gather_latent: latent map size " +
                     std::to_string(latent.size()) + " does not match " +
                     std::to_string(gh) + "x" + std::to_string(gw) + "x" +
                     std::to_string(D));
  std::vector<std::vector<double>> out;
  out.reserve(points.size());
  for (const Waypoint& p : points) {
    const int cx = int(p.x / K), cy = int(p.y / K);
    if (cx < 0 || cx >= gw || cy < 0 || cy >= gh)
      throw Error("gather_latent: point (" + std::to_string(p.x) + "," +
                  std::to_string(p.y) + ") falls outside the latent map");
    const float* cell = latent.data() + (std::size_t(cy) * gw + cx) * D;
    out.emplace_back(cell, cell + D);
  }
  return out;
}

ClusterResult cluster_latent(
    const std::vector<std::vector<double>>& features, int iters) {
  const std::size_t n = features.size();
  if (n < 2) throw Error("cluster_latent: need at least 2 features");
  const std::size_t d = features[0].size();

  std::vector<std::vector<double>> unit(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].size() != d)
      throw ShapeError("cluster_latent: inconsistent feature dimensions");
    double norm = 0;
    for (double v : features[i]) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0)
      throw Error("cluster_latent: zero-norm feature cannot be normalized");
    for (std::size_t k = 0; k < d; ++k) unit[i][k] = features[i][k] / norm;
  }

  auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
  };

  // Deterministic init: the most antipodal pair.
  double best = std::numeric_limits<double>::infinity();
  std::size_t bi = 0, bj = 1;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = dot(unit[i], unit[j]);
      if (s < best) {
        best = s;
        bi = i;
        bj = j;
      }
    }

  ClusterResult res;
  res.labels.assign(n, 0);
  if (best > 1.0 - 1e-12) {
    res.degenerate = true;  // every feature points the same way
    return res;
  }

  std::vector<std::vector<double>> centroid = {unit[bi], unit[bj]};
  for (int it = 0; it < iters; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const int label =
          dot(unit[i], centroid[0]) >= dot(unit[i], centroid[1]) ? 0 : 1;
      if (label != res.labels[i]) {
        res.labels[i] = label;
        changed = true;
      }
    }
    if (!changed && it > 0) break;
    for (int c = 0; c < 2; ++c) {
      std::vector<double> mean(d, 0.0);
      int count = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (res.labels[i] != c) continue;
        for (std::size_t k = 0; k < d; ++k) mean[k] += unit[i][k];
        ++count;
      }
      if (count == 0) continue;  // keep previous centroid
      double norm = 0;
      for (double v : mean) norm += v * v;
      norm = std::sqrt(norm);
      if (norm == 0.0) continue;
      for (double& v : mean) v /= norm;
      centroid[c] = std::move(mean);
    }
  }
  return res;
}

WaypointSet predict(const nn::Model& model, const OccupancyGrid& grid,
                    const DecodeConfig& config) {
  config.validate();
  nn::Model frozen = model;
  frozen.freeze_backbone = frozen.freeze_estimation =
      frozen.freeze_clustering = true;

  ag::Graph<float> g;
  auto pv = frozen.bind(g);
  auto input =
      frozen.input_leaf(g, std::span<const std::uint8_t>(grid.data), grid.h,
                        grid.w);
  auto fwd = frozen.forward(g, pv, input);

  const int K = model.cfg.K();
  const int gh = grid.h / K, gw = grid.w / K;
  auto candidates =
      decode_waypoints(fwd.estimation.value(), gh, gw, K, config.t_p);
  WaypointSet points = suppress(candidates, config.t_sup);
  if (points.size() >= 2) {
    auto features = gather_latent(fwd.latent.value(), gh, gw, model.cfg.D,
                                  points, K);
    bool clusterable = true;
    for (const auto& f : features) {
      double norm = 0;
      for (double v : f) norm += v * v;
      if (norm == 0.0) clusterable = false;  // degenerate (untrained) head
    }
    if (clusterable) {
      ClusterResult clusters = cluster_latent(features, config.kmeans_iters);
      for (std::size_t i = 0; i < points.size(); ++i)
        points[i].cluster = clusters.labels[i];
    }
  }
  return points;
}

}  // namespace cropway
