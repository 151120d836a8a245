#include "cropway/planner.hpp"

#include <algorithm>
#include <cmath>

namespace cropway {

namespace {

Vec2 principal_axis(const WaypointSet& points) {
  Vec2 mean{};
  for (const Waypoint& p : points) mean = mean + Vec2{p.x, p.y};
  mean = mean * (1.0 / double(points.size()));
  double sxx = 0, sxy = 0, syy = 0;
  for (const Waypoint& p : points) {
    const double dx = p.x - mean.x, dy = p.y - mean.y;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  Vec2 axis{std::cos(theta), std::sin(theta)};
  // Fix the sign so ordering does not depend on eigenvector orientation.
  if (axis.x < 0 || (axis.x == 0 && axis.y < 0)) axis = axis * -1.0;
  return axis;
}

}  // namespace

OrderedClusters order_within_clusters(const WaypointSet& points) {
  OrderedClusters out;
  for (const Waypoint& p : points)
    (p.cluster == 0 ? out.a : out.b).push_back(p);
  if (out.a.empty() || out.b.empty())
    throw Error("planner: both clusters must be non-empty");
  const int diff = int(out.a.size()) - int(out.b.size());
  if (diff > 1 || diff < -1)
    throw Error("planner: cluster sizes " + std::to_string(out.a.size()) +
                " vs " + std::to_string(out.b.size()) +
                " differ by more than one; clustering upstream likely "
                "failed");

  const Vec2 axis = principal_axis(points);
  auto proj = [&](const Waypoint& p) { return Vec2{p.x, p.y}.dot(axis); };
  auto by_axis = [&](const Waypoint& l, const Waypoint& r) {
    const double pl = proj(l), pr = proj(r);
    if (pl != pr) return pl < pr;
    if (l.y != r.y) return l.y < r.y;
    return l.x < r.x;
  };
  std::sort(out.a.begin(), out.a.end(), by_axis);
  std::sort(out.b.begin(), out.b.end(), by_axis);

  // Rank correspondence check: the i-th point of A should be nearest, by
  // projection, to the i-th point of B.
  const std::size_t m = std::min(out.a.size(), out.b.size());
  for (std::size_t i = 0; i < m; ++i) {
    const double pa = proj(out.a[i]);
    std::size_t nearest = 0;
    double best = std::abs(proj(out.b[0]) - pa);
    for (std::size_t j = 1; j < out.b.size(); ++j) {
      const double d = std::abs(proj(out.b[j]) - pa);
      if (d < best) {
        best = d;
        nearest = j;
      }
    }
    if (nearest != i) ++out.rank_mismatches;
  }

  // The starting side is the one owning the overall minimal-projection
  // point, so the result is invariant under swapping cluster labels.
  const double first_a = proj(out.a.front());
  const double first_b = proj(out.b.front());
  bool a_starts;
  if (first_a != first_b) {
    a_starts = first_a < first_b;
  } else {
    const Waypoint& fa = out.a.front();
    const Waypoint& fb = out.b.front();
    a_starts = (fa.y != fb.y) ? fa.y < fb.y : fa.x <= fb.x;
  }
  out.start_cluster = a_starts ? out.a.front().cluster : out.b.front().cluster;
  return out;
}

CoveragePath plan_coverage(const WaypointSet& points) {
  OrderedClusters oc = order_within_clusters(points);
  const std::vector<Waypoint>* start = &oc.a;
  const std::vector<Waypoint>* other = &oc.b;
  if (!oc.b.empty() && oc.start_cluster == oc.b.front().cluster) {
    std::swap(start, other);
  }

  CoveragePath path;
  const std::size_t rows = std::max(start->size(), other->size());
  for (std::size_t i = 0; i < rows; ++i) {
    const Waypoint* first = i < start->size() ? &(*start)[i] : nullptr;
    const Waypoint* second = i < other->size() ? &(*other)[i] : nullptr;
    if (i % 2 == 1) std::swap(first, second);
    for (const Waypoint* p : {first, second}) {
      if (!p) continue;
      PathPoint pp{p->x, p->y, p->cluster, SegmentKind::Intra};
      if (!path.points.empty()) {
        const PathPoint& prev = path.points.back();
        pp.segment = (prev.cluster != pp.cluster) ? SegmentKind::Intra
                                                  : SegmentKind::Inter;
        path.total_length += std::hypot(pp.x - prev.x, pp.y - prev.y);
      }
      path.points.push_back(pp);
    }
  }
  return path;
}

double path_length(const std::vector<Vec2>& points) {
  if (points.size() < 2)
    throw Error("path_length: need at least 2 points");
  double total = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i)
    total += distance(points[i - 1], points[i]);
  return total;
}

}  // namespace cropway
