#include "cropway/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace cropway::nn {

void TrainConfig::validate() const {
  if (!(lambda > 0.0 && lambda < 1.0))
    throw ConfigError("train: lambda must be in (0,1)");
  if (lr <= 0.0) throw ConfigError("train: learning rate must be positive");
  if (batch < 1) throw ConfigError("train: batch size must be >= 1");
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
}

namespace {

struct ImageTask {
  const Sample* sample = nullptr;
  TargetGrid target;
  std::vector<std::pair<int, int>> gt_cells;  // (cy, cx)
  std::vector<int> labels;
};

std::vector<int> trainable_indices(const Model& model) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const auto& p = model.params[i];
    const bool frozen = (p.part == Part::Backbone && model.freeze_backbone) ||
                        (p.part == Part::Estimation &&
                         model.freeze_estimation) ||
                        (p.part == Part::Clustering &&
                         model.freeze_clustering);
    if (!frozen) idx.push_back(int(i));
  }
  return idx;
}

void shuffle(std::vector<int>& order, Rng& rng) {
  for (int i = int(order.size()) - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(0, i)]);
}

// Runs one optimization phase over per-image closures that fill the
// gradient buffers for the trainable parameters. Per-image work runs in
// parallel; gradients are summed in batch order so results do not depend
// on the worker count.
template <typename PerImage>
std::vector<double> run_phase(Model& model, std::size_t image_count,
                              const TrainConfig& cfg, const char* phase_name,
                              PerImage&& per_image) {
  const std::vector<int> tidx = trainable_indices(model);
  if (tidx.empty()) throw Error("train: no trainable parameters in phase");

  std::vector<std::vector<float>*> tparams;
  std::vector<std::string> tnames;
  for (int i : tidx) {
    tparams.push_back(&model.params[i].data);
    tnames.push_back(model.params[i].name);
  }
  ag::AdamState<float> adam;

  std::vector<int> order(image_count);
  for (std::size_t i = 0; i < image_count; ++i) order[i] = int(i);
  Rng rng(Rng::derive(cfg.seed, 0x5eed));

  std::vector<double> history;
  history.reserve(cfg.epochs);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < image_count; start += cfg.batch) {
      const int bsz =
          int(std::min<std::size_t>(cfg.batch, image_count - start));
      std::vector<std::vector<std::vector<float>>> grads(bsz);
      std::vector<double> losses(bsz, 0.0);
      parallel_for(bsz, [&](int b) {
        losses[b] = per_image(order[start + b], tidx, grads[b]);
      });
      for (double l : losses) epoch_loss += l;

      std::vector<std::vector<float>> summed(tidx.size());
      for (std::size_t t = 0; t < tidx.size(); ++t) {
        summed[t].assign(model.params[tidx[t]].data.size(), 0.0f);
        for (int b = 0; b < bsz; ++b)
          for (std::size_t e = 0; e < summed[t].size(); ++e)
            summed[t][e] += grads[b][t][e];
        const float inv = 1.0f / float(bsz);
        for (float& v : summed[t]) v *= inv;
      }
      std::vector<std::span<const float>> gspans;
      gspans.reserve(summed.size());
      for (const auto& gvec : summed) gspans.emplace_back(gvec);
      ag::adam_step<float>(tparams, gspans, tnames, adam, float(cfg.lr));
    }
    history.push_back(epoch_loss / double(image_count));
    if (cfg.log_every > 0 &&
        (epoch % cfg.log_every == 0 || epoch + 1 == cfg.epochs))
      std::fprintf(stderr, "[train] %s epoch %d/%d loss %.6f\n", phase_name,
                   epoch + 1, cfg.epochs, history.back());
  }
  return history;
}

}  // namespace

TrainResult train(Model& model, const std::vector<Sample>& dataset,
                  const TrainConfig& config) {
  config.validate();
  if (dataset.empty()) throw Error("train: empty dataset");

  std::size_t count = dataset.size();
  if (config.count_limit > 0)
    count = std::min<std::size_t>(count, std::size_t(config.count_limit));

  const int K = model.cfg.K();
  std::vector<ImageTask> tasks(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Sample& s = dataset[i];
    tasks[i].sample = &s;
    std::vector<Vec2> pts;
    pts.reserve(s.waypoints.size());
    for (const Waypoint& w : s.waypoints) {
      pts.push_back({w.x, w.y});
      tasks[i].gt_cells.emplace_back(int(w.y / K), int(w.x / K));
      tasks[i].labels.push_back(w.cluster);
    }
    tasks[i].target = build_target(pts, s.grid.h, s.grid.w, K);
  }

  const bool saved_fb = model.freeze_backbone;
  const bool saved_fe = model.freeze_estimation;
  const bool saved_fc = model.freeze_clustering;
  TrainResult result;

  if (config.phase == TrainPhase::Estimation ||
      config.phase == TrainPhase::Both) {
    model.freeze_backbone = false;
    model.freeze_estimation = false;
    model.freeze_clustering = true;
    result.estimation_loss = run_phase(
        model, count, config, "estimation",
        [&](int idx, const std::vector<int>& tidx,
            std::vector<std::vector<float>>& out_grads) {
          const ImageTask& task = tasks[idx];
          ag::Graph<float> g;
          auto pv = model.bind(g);
          auto input = model.input_leaf(
              g, std::span<const std::uint8_t>(task.sample->grid.data),
              task.sample->grid.h, task.sample->grid.w);
          auto features = model.backbone(g, pv, input);
          auto est = model.estimation_head(g, pv, features);
          auto loss = estimation_loss(g, est, task.target, config.lambda);
          g.backward(loss);
          out_grads.resize(tidx.size());
          for (std::size_t t = 0; t < tidx.size(); ++t) {
            auto gs = pv[tidx[t]].grad();
            out_grads[t].assign(gs.begin(), gs.end());
          }
          return double(loss.value()[0]);
        });
  }

  if (config.phase == TrainPhase::Clustering ||
      config.phase == TrainPhase::Both) {
    model.freeze_backbone = true;
    model.freeze_estimation = true;
    model.freeze_clustering = false;

    // The backbone is frozen, so its features per image are constants:
    // compute them once and train the head against the cache.
    struct Cached {
      ag::Shape shape;
      std::vector<float> values;
    };
    std::vector<Cached> cache(count);
    parallel_for(int(count), [&](int i) {
      const Sample& s = *tasks[i].sample;
      ag::Graph<float> g;
      Model frozen = model;
      frozen.freeze_clustering = true;  // no gradients anywhere
      auto pv = frozen.bind(g);
      auto input = frozen.input_leaf(
          g, std::span<const std::uint8_t>(s.grid.data), s.grid.h, s.grid.w);
      auto features = frozen.backbone(g, pv, input);
      cache[i].shape = features.shape();
      auto vals = features.value();
      cache[i].values.assign(vals.begin(), vals.end());
    });

    result.clustering_loss = run_phase(
        model, count, config, "clustering",
        [&](int idx, const std::vector<int>& tidx,
            std::vector<std::vector<float>>& out_grads) {
          const ImageTask& task = tasks[idx];
          ag::Graph<float> g;
          auto pv = model.bind(g);
          auto features =
              g.constant(cache[idx].shape, cache[idx].values);
          auto latent = model.clustering_head(g, pv, features);
          std::vector<ag::Var<float>> feats;
          feats.reserve(task.gt_cells.size());
          for (const auto& [cy, cx] : task.gt_cells)
            feats.push_back(g.slice_cell(latent, cy, cx));
          auto loss = clustering_loss(g, feats, task.labels);
          g.backward(loss);
          out_grads.resize(tidx.size());
          for (std::size_t t = 0; t < tidx.size(); ++t) {
            auto gs = pv[tidx[t]].grad();
            out_grads[t].assign(gs.begin(), gs.end());
          }
          return double(loss.value()[0]);
        });
  }

  model.freeze_backbone = saved_fb;
  model.freeze_estimation = saved_fe;
  model.freeze_clustering = saved_fc;
  return result;
}

}  // namespace cropway::nn
