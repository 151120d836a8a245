#include "cropway/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cropway {

namespace {

std::vector<int> confidence_order(const WaypointSet& preds) {
  std::vector<int> order(preds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return preds[a].confidence > preds[b].confidence;
  });
  return order;
}

}  // namespace

Matching match_waypoints(const WaypointSet& preds, const WaypointSet& gts,
                         double r) {
  if (r <= 0.0) throw ConfigError("match_waypoints: radius must be positive");
  Matching m;
  std::vector<bool> gt_taken(gts.size(), false);
  std::vector<bool> pred_matched(preds.size(), false);
  for (int pi : confidence_order(preds)) {
    double best = std::numeric_limits<double>::infinity();
    int best_gt = -1;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (gt_taken[gi]) continue;
      const double dx = preds[pi].x - gts[gi].x;
      const double dy = preds[pi].y - gts[gi].y;
      const double d = std::sqrt(dx * dx + dy * dy);
      if (d <= r && d < best) {
        best = d;
        best_gt = int(gi);
      }
    }
    if (best_gt >= 0) {
      gt_taken[best_gt] = true;
      pred_matched[pi] = true;
      m.pairs.push_back({pi, best_gt, best});
    }
  }
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (!pred_matched[i]) m.unmatched_preds.push_back(int(i));
  for (std::size_t i = 0; i < gts.size(); ++i)
    if (!gt_taken[i]) m.unmatched_gts.push_back(int(i));
  return m;
}

namespace {

// PR points at every distinct confidence cut, from a list of
// (confidence, is_true_positive) already sorted by descending confidence.
double auc_from_flags(const std::vector<std::pair<double, bool>>& flags,
                      std::size_t gt_total) {
  struct PrPoint {
    double recall, precision;
  };
  std::vector<PrPoint> points;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    tp += flags[i].second ? 1 : 0;
    ++seen;
    const bool boundary =
        (i + 1 == flags.size()) || flags[i + 1].first != flags[i].first;
    if (boundary)
      points.push_back({double(tp) / double(gt_total),
                        double(tp) / double(seen)});
  }
  // Monotone envelope, integrated over recall steps from zero.
  double auc = 0.0;
  double env = 0.0;
  double prev_recall = points.empty() ? 0.0 : points.back().recall;
  for (auto it = points.rbegin(); it != points.rend(); ++it) {
    // Walk from the low-confidence end: envelope is the running max.
    env = std::max(env, it->precision);
    const double lower =
        (it + 1 != points.rend()) ? (it + 1)->recall : 0.0;
    auc += (it->recall - lower) * env;
    prev_recall = it->recall;
  }
  (void)prev_recall;
  return auc;
}

}  // namespace

double average_precision(const WaypointSet& preds, const WaypointSet& gts,
                         double r) {
  if (gts.empty())
    throw Error("average_precision: undefined with zero ground truths");
  if (preds.empty()) return 0.0;
  Matching m = match_waypoints(preds, gts, r);
  std::vector<bool> tp(preds.size(), false);
  for (const MatchPair& p : m.pairs) tp[p.pred] = true;
  std::vector<std::pair<double, bool>> flags;
  flags.reserve(preds.size());
  for (int pi : confidence_order(preds))
    flags.emplace_back(preds[pi].confidence, tp[pi]);
  return auc_from_flags(flags, gts.size());
}

double adjusted_accuracy(const std::vector<int>& pred_labels,
                         const std::vector<int>& gt_labels) {
  const std::size_t n = pred_labels.size();
  if (n == 0 || gt_labels.size() != n)
    throw Error("adjusted_accuracy: need equal non-empty label vectors");
  std::size_t direct = 0, swapped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (pred_labels[i] == gt_labels[i]) ++direct;
    if ((1 - pred_labels[i]) == gt_labels[i]) ++swapped;
  }
  const double a = double(std::max(direct, swapped)) / double(n);
  return std::clamp(2.0 * a - 1.0, 0.0, 1.0);
}

int clustering_error(const std::vector<int>& pred_labels,
                     const std::vector<int>& gt_labels) {
  const std::size_t n = pred_labels.size();
  if (n == 0 || gt_labels.size() != n)
    throw Error("clustering_error: need equal non-empty label vectors");
  int direct = 0, swapped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (pred_labels[i] != gt_labels[i]) ++direct;
    if ((1 - pred_labels[i]) != gt_labels[i]) ++swapped;
  }
  return std::min(direct, swapped);
}

EvalReport evaluate_dataset(const Predictor& predictor,
                            const std::vector<Sample>& samples,
                            const std::vector<int>& radii,
                            double match_radius) {
  if (samples.empty()) throw Error("evaluate_dataset: empty dataset");
  EvalReport report;
  report.images.resize(samples.size());

  std::vector<WaypointSet> predictions(samples.size());
  parallel_for(int(samples.size()),
               [&](int i) { predictions[i] = predictor(samples[i]); });

  std::size_t gt_total = 0;
  for (const Sample& s : samples) gt_total += s.waypoints.size();
  if (gt_total == 0)
    throw Error("evaluate_dataset: dataset has no ground-truth waypoints");

  // Pooled AP per radius: per-image greedy matching, then one global
  // confidence sweep.
  for (int r : radii) {
    std::vector<std::pair<double, bool>> flags;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      Matching m =
          match_waypoints(predictions[i], samples[i].waypoints, double(r));
      std::vector<bool> tp(predictions[i].size(), false);
      for (const MatchPair& p : m.pairs) tp[p.pred] = true;
      for (int pi : confidence_order(predictions[i]))
        flags.emplace_back(predictions[i][pi].confidence, tp[pi]);
    }
    std::stable_sort(flags.begin(), flags.end(),
                     [](const auto& a, const auto& b) {
                       return a.first > b.first;
                     });
    report.ap[r] = flags.empty() ? 0.0 : auc_from_flags(flags, gt_total);
  }

  // Clustering metrics on matched pairs at the suppression radius.
  double acc_sum = 0.0;
  double err_sum = 0.0;
  std::size_t scored = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    PerImageEval& im = report.images[i];
    im.gt_count = int(samples[i].waypoints.size());
    im.pred_count = int(predictions[i].size());
    Matching m =
        match_waypoints(predictions[i], samples[i].waypoints, match_radius);
    im.matched = int(m.pairs.size());
    if (m.pairs.empty()) {
      // Nothing matched: worst clustering outcome, every gt point missed
      // counts as unlabeled rather than mislabeled.
      im.adjusted_accuracy = 0.0;
      im.clustering_error = 0;
      acc_sum += 0.0;
      ++scored;
      continue;
    }
    std::vector<int> pred_labels, gt_labels;
    for (const MatchPair& p : m.pairs) {
      pred_labels.push_back(predictions[i][p.pred].cluster);
      gt_labels.push_back(samples[i].waypoints[p.gt].cluster);
    }
    im.adjusted_accuracy = adjusted_accuracy(pred_labels, gt_labels);
    im.clustering_error = clustering_error(pred_labels, gt_labels);
    acc_sum += im.adjusted_accuracy;
    err_sum += im.clustering_error;
    ++scored;
  }
  report.adjusted_accuracy = acc_sum / double(scored);
  report.clustering_error = err_sum / double(scored);
  return report;
}

}  // namespace cropway
