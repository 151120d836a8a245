#pragma once

#include <cstdint>
#include <vector>

#include "cropway/fieldgen.hpp"
#include "cropway/model.hpp"

namespace cropway::nn {

enum class TrainPhase { Estimation, Clustering, Both };

struct TrainConfig {
  double lambda = 0.7;  // positive-cell weight of the estimation loss
  double lr = 3e-4;
  int batch = 16;
  int epochs = 60;  // per phase
  TrainPhase phase = TrainPhase::Both;
  std::uint64_t seed = 0;
  int count_limit = -1;  // cap on training samples, -1 = all
  int log_every = 0;     // epochs between stderr progress lines, 0 = quiet

  void validate() const;
};

struct TrainResult {
  std::vector<double> estimation_loss;  // mean loss per epoch
  std::vector<double> clustering_loss;  // mean loss per epoch
};

/// Two-phase schedule: estimation head and backbone together first, then
/// the clustering head alone with the backbone frozen. Deterministic given
/// the seed and CW_THREADS-independent.
TrainResult train(Model& model, const std::vector<Sample>& dataset,
                  const TrainConfig& config);

}  // namespace cropway::nn
