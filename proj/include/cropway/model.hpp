#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cropway/autograd.hpp"
#include "cropway/common.hpp"

namespace cropway::nn {

/// Backbone/head hyperparameters. The compression factor K = 2^(R+1) is
/// derived and equals the prediction cell size in pixels.
struct ModelConfig {
  int R = 2;            // residual reduction modules
  int C = 16;           // channel width of every internal conv
  int kernel_size = 5;  // odd
  int D = 3;            // latent dimensionality of the clustering head

  int K() const { return 1 << (R + 1); }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class Part { Backbone, Estimation, Clustering };

template <typename T>
struct NamedTensor {
  std::string name;
  ag::Shape shape;
  std::vector<T> data;
  Part part = Part::Backbone;
};

/// Ground-truth regression target: one (p, dx, dy) triple per output cell,
/// p in {0,1} and displacements in [-1,1] relative to half the cell size.
struct TargetGrid {
  int h = 0;
  int w = 0;
  std::vector<float> cells;  // h*w*3

  float* at(int cy, int cx) { return cells.data() + (std::size_t(cy) * w + cx) * 3; }
  const float* at(int cy, int cx) const {
    return cells.data() + (std::size_t(cy) * w + cx) * 3;
  }
};

/// Two-head convolutional network: shared attention backbone, estimation
/// head (p, dx, dy per cell) and contrastive clustering head (D channels).
template <typename T>
struct Network {
  ModelConfig cfg;
  std::vector<NamedTensor<T>> params;
  bool freeze_backbone = false;
  bool freeze_estimation = false;
  bool freeze_clustering = false;

  static Network build(const ModelConfig& cfg, std::uint64_t seed);

  std::size_t parameter_count() const;

  /// Registers every parameter as a graph leaf. A parameter requires
  /// gradients iff its part is not frozen.
  std::vector<ag::Var<T>> bind(ag::Graph<T>& g) const;

  /// Backbone features for an H×W×1 input (dims must divide by K).
  ag::Var<T> backbone(ag::Graph<T>& g, const std::vector<ag::Var<T>>& pv,
                      ag::Var<T> input) const;
  ag::Var<T> estimation_head(ag::Graph<T>& g,
                             const std::vector<ag::Var<T>>& pv,
                             ag::Var<T> features) const;
  ag::Var<T> clustering_head(ag::Graph<T>& g,
                             const std::vector<ag::Var<T>>& pv,
                             ag::Var<T> features) const;

  struct Forward {
    ag::Var<T> estimation;  // (H/K)×(W/K)×3, sigmoid/tanh activated
    ag::Var<T> latent;      // (H/K)×(W/K)×D, linear
  };

  /// Single backbone pass feeding both heads.
  Forward forward(ag::Graph<T>& g, const std::vector<ag::Var<T>>& pv,
                  ag::Var<T> input) const;

  /// Convenience: input leaf from a raw occupancy bitmap (values 0/1).
  ag::Var<T> input_leaf(ag::Graph<T>& g, std::span<const std::uint8_t> grid,
                        int H, int W) const;

  int param_index(const std::string& name) const;
};

using Model = Network<float>;

// ----------------------------------------------------------------------------
// Targets and losses
// ----------------------------------------------------------------------------

/// Inverse of the decoding equation: cell = floor(coord/K),
/// delta = (coord - cell*K - K/2) / (K/2). Waypoints must lie inside
/// [0,W)×[0,H); two waypoints in one cell are rejected.
TargetGrid build_target(const std::vector<Vec2>& waypoints, int H, int W,
                        int K);

/// Weighted MSE of Eq-style per-cell targets: lambda on waypoint cells,
/// (1-lambda) on the rest, mean over cells.
template <typename T>
ag::Var<T> estimation_loss(ag::Graph<T>& g, ag::Var<T> pred,
                           const TargetGrid& target, double lambda);

/// Pairwise contrastive loss over latent vectors: binary cross-entropy of
/// the sigmoid of cosine similarity against the same-cluster indicator,
/// averaged over ordered pairs. Requires both clusters present.
template <typename T>
ag::Var<T> clustering_loss(ag::Graph<T>& g,
                           const std::vector<ag::Var<T>>& features,
                           const std::vector<int>& labels);

double cosine_sim(std::span<const double> u, std::span<const double> v);

// ----------------------------------------------------------------------------
// Checkpoints
// ----------------------------------------------------------------------------

// Binary format, little-endian: "CWAY" magic, u32 version, u32 R/C/kernel/D,
// u32 tensor count, then per tensor u32 name length, name bytes, u32 rank,
// u32 dims, raw float32 data.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace cropway::nn
