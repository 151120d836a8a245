#pragma once

#include <vector>

#include "cropway/fieldgen.hpp"

namespace cropway {

enum class SegmentKind { Intra, Inter };

struct PathPoint {
  double x = 0;
  double y = 0;
  int cluster = 0;
  SegmentKind segment = SegmentKind::Intra;  // leg arriving at this point
};

struct CoveragePath {
  std::vector<PathPoint> points;
  double total_length = 0.0;
};

struct OrderedClusters {
  std::vector<Waypoint> a;  // sorted along the cross-row axis
  std::vector<Waypoint> b;
  int start_cluster = 0;    // cluster tag of the side the path starts on
  int rank_mismatches = 0;  // diagnostic: A/B ranks that do not line up
};

/// Sorts each cluster by projection onto the first principal direction of
/// all points (the cross-row axis). Cluster size mismatch greater than one
/// is rejected as an upstream clustering failure.
OrderedClusters order_within_clusters(const WaypointSet& points);

/// A-B-B-A traversal: start side S, then S1,T1,T2,S2,S3,T3,... so intra-row
/// and inter-row legs alternate and every waypoint is visited exactly once.
CoveragePath plan_coverage(const WaypointSet& points);

double path_length(const std::vector<Vec2>& points);

}  // namespace cropway
