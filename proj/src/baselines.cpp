#include "cropway/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace cropway {

std::vector<int> kmeans_image(const std::vector<Vec2>& points, int iters) {
  const std::size_t n = points.size();
  if (n < 2) throw Error("kmeans_image: need at least 2 points");

  // Farthest pair init.
  double best = -1.0;
  std::size_t bi = 0, bj = 1;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = distance(points[i], points[j]);
      if (d > best) {
        best = d;
        bi = i;
        bj = j;
      }
    }
  Vec2 c0 = points[bi], c1 = points[bj];

  std::vector<int> labels(n, 0);
  for (int it = 0; it < iters; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const int l = distance(points[i], c0) <= distance(points[i], c1) ? 0 : 1;
      if (l != labels[i]) {
        labels[i] = l;
        changed = true;
      }
    }
    if (!changed && it > 0) break;
    Vec2 sum0{}, sum1{};
    int n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] == 0) {
        sum0 = sum0 + points[i];
        ++n0;
      } else {
        sum1 = sum1 + points[i];
        ++n1;
      }
    }
    if (n0 > 0) c0 = sum0 * (1.0 / n0);
    if (n1 > 0) c1 = sum1 * (1.0 / n1);
  }
  return labels;
}

std::vector<int> dbscan(const std::vector<Vec2>& points,
                        const DbscanConfig& config) {
  config.validate();
  const std::size_t n = points.size();
  const double eps2 = config.eps * config.eps;

  auto neighbours = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = points[i].x - points[j].x;
      const double dy = points[i].y - points[j].y;
      if (dx * dx + dy * dy <= eps2) out.push_back(j);
    }
    return out;  // includes i itself
  };

  std::vector<int> labels(n, -1);
  std::vector<bool> core(n, false);
  for (std::size_t i = 0; i < n; ++i)
    core[i] = neighbours(i).size() >= std::size_t(config.min_pts);

  int next_id = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i] || labels[i] != -1) continue;
    const int id = next_id++;
    std::queue<std::size_t> frontier;
    labels[i] = id;
    frontier.push(i);
    while (!frontier.empty()) {
      const std::size_t p = frontier.front();
      frontier.pop();
      if (!core[p]) continue;  // border points do not expand
      for (std::size_t q : neighbours(p)) {
        if (labels[q] != -1) continue;
        labels[q] = id;
        frontier.push(q);
      }
    }
  }
  return labels;
}

namespace {

// Normalized within-cluster variance of the best two-way split of sorted
// 1-D projections. Near zero when the projections form two tight lumps,
// as they do along the start/end axis.
double bimodal_split_cost(std::vector<double> proj) {
  const std::size_t n = proj.size();
  std::sort(proj.begin(), proj.end());
  double total = 0, mean = 0;
  for (double v : proj) mean += v;
  mean /= double(n);
  for (double v : proj) total += (v - mean) * (v - mean);
  if (total < 1e-12) return 0.0;  // no spread at all: trivially split
  std::vector<double> pre(n + 1, 0.0), pre2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    pre[i + 1] = pre[i] + proj[i];
    pre2[i + 1] = pre2[i] + proj[i] * proj[i];
  }
  auto ss = [&](std::size_t lo, std::size_t hi) {  // [lo, hi)
    const double cnt = double(hi - lo);
    const double s = pre[hi] - pre[lo];
    return (pre2[hi] - pre2[lo]) - s * s / cnt;
  };
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t cut = 1; cut < n; ++cut)
    best = std::min(best, ss(0, cut) + ss(cut, n));
  return best / total;
}

}  // namespace

double estimate_row_angle(const std::vector<Vec2>& points) {
  const std::size_t n = points.size();
  if (n < 2) throw Error("estimate_row_angle: need at least 2 points");
  Vec2 mean{};
  for (const Vec2& p : points) mean = mean + p;
  mean = mean * (1.0 / double(n));
  double sxx = 0, sxy = 0, syy = 0;
  for (const Vec2& p : points) {
    const double dx = p.x - mean.x, dy = p.y - mean.y;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx + syy < 1e-9)
    throw Error("estimate_row_angle: points are collocated");
  const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);

  // The row direction is one of the two principal axes: the one whose
  // projections split into two tight lumps (starts vs ends). Which axis
  // carries more raw variance depends on field proportions, so the split
  // cost decides, not the eigenvalue order.
  double best_angle = theta;
  double best_cost = std::numeric_limits<double>::infinity();
  for (double angle : {theta, theta + M_PI / 2.0}) {
    const Vec2 axis{std::cos(angle), std::sin(angle)};
    std::vector<double> proj(n);
    for (std::size_t i = 0; i < n; ++i)
      proj[i] = (points[i] - mean).dot(axis);
    const double cost = bimodal_split_cost(std::move(proj));
    if (cost < best_cost) {
      best_cost = cost;
      best_angle = angle;
    }
  }
  while (best_angle > M_PI / 2.0) best_angle -= M_PI;
  while (best_angle <= -M_PI / 2.0) best_angle += M_PI;
  return best_angle;
}

std::vector<int> dbscan_pipeline(const std::vector<Vec2>& points,
                                 const DbscanConfig& config) {
  const std::size_t n = points.size();
  if (n < 2) throw Error("dbscan_pipeline: need at least 2 points");
  std::vector<int> ids = dbscan(points, config);
  int max_id = -1;
  for (int id : ids) max_id = std::max(max_id, id);

  if (max_id + 1 == 2) {
    std::vector<int> labels(n, -1);
    for (std::size_t i = 0; i < n; ++i)
      if (ids[i] >= 0) labels[i] = ids[i];
    // Noise joins the nearest labeled point's cluster.
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] != -1) continue;
      double best = std::numeric_limits<double>::infinity();
      int best_label = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (ids[j] < 0) continue;
        const double d = distance(points[i], points[j]);
        if (d < best) {
          best = d;
          best_label = ids[j];
        }
      }
      labels[i] = best_label;
    }
    return labels;
  }

  // Fallback: split along the estimated row direction at the median.
  const double angle = estimate_row_angle(points);
  const Vec2 u{std::cos(angle), std::sin(angle)};
  std::vector<double> proj(n);
  for (std::size_t i = 0; i < n; ++i) proj[i] = points[i].dot(u);
  std::vector<double> sorted = proj;
  std::sort(sorted.begin(), sorted.end());
  const double median = (n % 2 == 1)
                            ? sorted[n / 2]
                            : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = proj[i] > median ? 1 : 0;
  return labels;
}

}  // namespace cropway
