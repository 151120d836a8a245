#pragma once

#include <functional>
#include <map>
#include <vector>

#include "cropway/fieldgen.hpp"
#include "cropway/inference.hpp"

namespace cropway {

struct MatchPair {
  int pred = -1;
  int gt = -1;
  double dist = 0.0;
};

struct Matching {
  std::vector<MatchPair> pairs;
  std::vector<int> unmatched_preds;
  std::vector<int> unmatched_gts;
};

/// Greedy by descending confidence (ties by index): every prediction takes
/// its nearest still-unmatched ground truth within radius r.
Matching match_waypoints(const WaypointSet& preds, const WaypointSet& gts,
                         double r);

/// Area under the monotone precision envelope of the PR curve swept over
/// every distinct confidence value. Errors on an empty ground truth.
double average_precision(const WaypointSet& preds, const WaypointSet& gts,
                         double r);

/// 2a-1 clamped to [0,1], where a is the best of the two label-permutation
/// accuracies. All-one-cluster scores 0, perfect scores 1.
double adjusted_accuracy(const std::vector<int>& pred_labels,
                         const std::vector<int>& gt_labels);

/// Permutation-minimized count of wrongly labeled points.
int clustering_error(const std::vector<int>& pred_labels,
                     const std::vector<int>& gt_labels);

struct PerImageEval {
  int gt_count = 0;
  int pred_count = 0;
  int matched = 0;
  double adjusted_accuracy = 0.0;
  int clustering_error = 0;
};

struct EvalReport {
  std::map<int, double> ap;        // radius -> pooled AP
  double adjusted_accuracy = 0.0;  // mean over images
  double clustering_error = 0.0;   // mean over images (fractional)
  std::vector<PerImageEval> images;
};

/// Produces labeled waypoints for one sample; the model pipeline and the
/// classical baselines both fit behind this signature.
using Predictor = std::function<WaypointSet(const Sample&)>;

/// Runs the predictor on every sample. AP is pooled over the whole set per
/// radius; clustering metrics are computed on predictions matched to ground
/// truth within match_radius (t_sup) and averaged per image.
EvalReport evaluate_dataset(const Predictor& predictor,
                            const std::vector<Sample>& samples,
                            const std::vector<int>& radii,
                            double match_radius);

}  // namespace cropway
