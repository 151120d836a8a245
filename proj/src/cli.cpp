#include "cropway/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cropway/baselines.hpp"
#include "cropway/eval.hpp"
#include "cropway/fieldgen.hpp"
#include "cropway/image.hpp"
#include "cropway/inference.hpp"
#include "cropway/model.hpp"
#include "cropway/planner.hpp"
#include "cropway/train.hpp"
#include "json.hpp"

using nlohmann::json;

namespace cropway {

namespace {

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(std::stoi(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream os(path);
  os << j.dump(2) << "\n";
  if (!os) throw IoError("cannot write '" + path + "'");
}

json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  return json::parse(is, nullptr, true);
}

WaypointSet read_waypoints_json(const std::string& path) {
  const json j = load_json_file(path);
  WaypointSet out;
  for (const json& w : j.at("waypoints"))
    out.push_back({w.at("x").get<double>(), w.at("y").get<double>(),
                   w.value("cluster", 0), w.value("confidence", 1.0)});
  return out;
}

json waypoints_json(const WaypointSet& points, bool with_confidence) {
  json arr = json::array();
  for (const Waypoint& p : points) {
    json w = {{"x", p.x}, {"y", p.y}, {"cluster", p.cluster}};
    if (with_confidence) w["confidence"] = p.confidence;
    arr.push_back(w);
  }
  return arr;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string out;
  std::string count = "10,2,4";
  std::uint64_t seed = 0;
  int size = 800;
  GenConfig cfg;
  bool curved = false;
  double curve_prob = -1.0;
};

int cmd_generate(const GenerateArgs& a) {
  GenConfig cfg = a.cfg;
  cfg.height = cfg.width = a.size;
  cfg.curved = a.curved || a.curve_prob >= 0.0;
  if (a.curve_prob >= 0.0) cfg.curve_prob = a.curve_prob;

  auto counts = parse_int_list(a.count);
  if (counts.size() != 3)
    throw ConfigError("--count expects train,val,test");
  DatasetCounts dc{counts[0], counts[1], counts[2]};
  generate_dataset(cfg, dc, a.seed, a.out);
  std::printf("generated %d images in %s\n", dc.total(), a.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string split = "train";
  std::string out = "model.cwck";
  std::string checkpoint;  // starting point (required for clustering phase)
  std::string phase = "both";
  nn::ModelConfig model_cfg;
  nn::TrainConfig cfg;
  bool verbose = false;
};

int cmd_train(const TrainArgs& a) {
  nn::TrainConfig cfg = a.cfg;
  if (a.phase == "estimation")
    cfg.phase = nn::TrainPhase::Estimation;
  else if (a.phase == "clustering")
    cfg.phase = nn::TrainPhase::Clustering;
  else if (a.phase == "both")
    cfg.phase = nn::TrainPhase::Both;
  else
    throw ConfigError("--phase must be estimation, clustering or both");
  if (a.verbose) cfg.log_every = 1;

  nn::Model model = a.checkpoint.empty()
                        ? nn::Model::build(a.model_cfg, cfg.seed)
                        : nn::load_checkpoint(a.checkpoint);
  if (cfg.phase == nn::TrainPhase::Clustering && a.checkpoint.empty())
    throw ConfigError(
        "train: the clustering phase needs --checkpoint with a trained "
        "backbone");

  std::vector<Sample> dataset = load_split(a.data, a.split);
  nn::TrainResult result = nn::train(model, dataset, cfg);
  nn::save_checkpoint(model, a.out);

  {
    std::ofstream os(a.out + ".loss.csv");
    os << "phase,epoch,loss\n";
    char line[96];
    for (std::size_t e = 0; e < result.estimation_loss.size(); ++e) {
      std::snprintf(line, sizeof(line), "estimation,%zu,%.9g\n", e + 1,
                    result.estimation_loss[e]);
      os << line;
    }
    for (std::size_t e = 0; e < result.clustering_loss.size(); ++e) {
      std::snprintf(line, sizeof(line), "clustering,%zu,%.9g\n", e + 1,
                    result.clustering_loss[e]);
      os << line;
    }
    if (!os) throw IoError("cannot write loss history CSV");
  }

  json run = {{"command", "train"},
              {"data", a.data},
              {"split", a.split},
              {"phase", a.phase},
              {"epochs", cfg.epochs},
              {"batch", cfg.batch},
              {"lr", cfg.lr},
              {"lambda", cfg.lambda},
              {"seed", cfg.seed},
              {"count_limit", cfg.count_limit},
              {"model",
               {{"R", model.cfg.R},
                {"C", model.cfg.C},
                {"kernel_size", model.cfg.kernel_size},
                {"D", model.cfg.D}}}};
  write_json_file(a.out + ".run.json", run);
  std::printf("checkpoint written to %s (%zu parameters)\n", a.out.c_str(),
              model.parameter_count());
  return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint;
  std::string image;
  std::string out = "prediction.json";
  DecodeConfig decode;
};

OccupancyGrid load_grid_png(const std::string& path) {
  GrayImage img = read_png_gray(path);
  OccupancyGrid grid(img.h, img.w);
  for (std::size_t i = 0; i < img.px.size(); ++i)
    grid.data[i] = img.px[i] > 127 ? 1 : 0;
  return grid;
}

json decode_config_json(const DecodeConfig& d) {
  return {{"t_p", d.t_p}, {"t_sup", d.t_sup}, {"kmeans_iters", d.kmeans_iters}};
}

int cmd_predict(const PredictArgs& a) {
  nn::Model model = nn::load_checkpoint(a.checkpoint);
  OccupancyGrid grid = load_grid_png(a.image);
  WaypointSet points = predict(model, grid, a.decode);
  json out = {{"waypoints", waypoints_json(points, true)},
              {"run_config",
               {{"command", "predict"},
                {"checkpoint", a.checkpoint},
                {"image", a.image},
                {"decode", decode_config_json(a.decode)}}}};
  write_json_file(a.out, out);
  std::printf("%zu waypoints -> %s\n", points.size(), a.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string data;
  std::string split = "test";
  std::string baseline = "model";
  std::string points = "model";  // model | gt
  std::vector<std::string> checkpoints;
  std::string out;
  std::string radii = "2,3,4,6,8";
  DecodeConfig decode;
  DbscanConfig dbscan;
};

json report_json(const EvalReport& r) {
  json ap = json::object();
  for (const auto& [radius, value] : r.ap)
    ap["AP_" + std::to_string(radius)] = value;
  json images = json::array();
  for (const PerImageEval& im : r.images)
    images.push_back({{"gt", im.gt_count},
                      {"pred", im.pred_count},
                      {"matched", im.matched},
                      {"adjusted_accuracy", im.adjusted_accuracy},
                      {"clustering_error", im.clustering_error}});
  return {{"ap", ap},
          {"adjusted_accuracy", r.adjusted_accuracy},
          {"clustering_error", r.clustering_error},
          {"images", images}};
}

int cmd_eval(const EvalArgs& a) {
  a.decode.validate();
  a.dbscan.validate();
  const std::vector<int> radii = parse_int_list(a.radii);
  std::vector<Sample> samples = load_split(a.data, a.split);

  const bool use_gt_points = a.points == "gt";
  if (a.points != "gt" && a.points != "model")
    throw ConfigError("--points must be model or gt");
  if (a.baseline != "model" && a.baseline != "kmeans" &&
      a.baseline != "dbscan")
    throw ConfigError("--baseline must be model, kmeans or dbscan");
  if ((a.baseline == "model" || !use_gt_points) && a.checkpoints.empty())
    throw ConfigError("eval: this pipeline needs at least one --checkpoint");

  auto cluster_with_baseline = [&](WaypointSet points) {
    std::vector<Vec2> pts;
    pts.reserve(points.size());
    for (const Waypoint& p : points) pts.push_back({p.x, p.y});
    if (points.size() >= 2) {
      const std::vector<int> labels = a.baseline == "kmeans"
                                          ? kmeans_image(pts, 100)
                                          : dbscan_pipeline(pts, a.dbscan);
      for (std::size_t i = 0; i < points.size(); ++i)
        points[i].cluster = labels[i];
    }
    return points;
  };

  std::vector<EvalReport> reports;
  if (a.baseline != "model" && use_gt_points) {
    Predictor p = [&](const Sample& s) {
      return cluster_with_baseline(s.waypoints);
    };
    reports.push_back(evaluate_dataset(p, samples, radii, a.decode.t_sup));
  } else {
    for (const std::string& ck : a.checkpoints) {
      nn::Model model = nn::load_checkpoint(ck);
      Predictor p = [&](const Sample& s) {
        WaypointSet points = predict(model, s.grid, a.decode);
        if (a.baseline != "model") points = cluster_with_baseline(points);
        return points;
      };
      reports.push_back(evaluate_dataset(p, samples, radii, a.decode.t_sup));
    }
  }

  // Mean and standard deviation across runs (checkpoints).
  auto stats = [&](auto&& get) {
    double mean = 0.0;
    for (const EvalReport& r : reports) mean += get(r);
    mean /= double(reports.size());
    double var = 0.0;
    for (const EvalReport& r : reports)
      var += (get(r) - mean) * (get(r) - mean);
    const double stddev =
        reports.size() > 1 ? std::sqrt(var / double(reports.size() - 1))
                           : 0.0;
    return std::make_pair(mean, stddev);
  };

  std::printf("%-22s %12s %12s\n", "metric", "mean", "std");
  json summary = json::object();
  for (int r : radii) {
    auto [m, s] = stats([&](const EvalReport& rep) { return rep.ap.at(r); });
    std::printf("%-22s %12.4f %12.4f\n", ("AP_" + std::to_string(r)).c_str(),
                m, s);
    summary["AP_" + std::to_string(r)] = {{"mean", m}, {"std", s}};
  }
  {
    auto [m, s] =
        stats([](const EvalReport& rep) { return rep.adjusted_accuracy; });
    std::printf("%-22s %12.4f %12.4f\n", "adjusted_accuracy", m, s);
    summary["adjusted_accuracy"] = {{"mean", m}, {"std", s}};
  }
  {
    auto [m, s] =
        stats([](const EvalReport& rep) { return rep.clustering_error; });
    std::printf("%-22s %12.4f %12.4f\n", "clustering_error", m, s);
    summary["clustering_error"] = {{"mean", m}, {"std", s}};
  }

  if (!a.out.empty()) {
    json runs = json::array();
    for (const EvalReport& r : reports) runs.push_back(report_json(r));
    json out = {{"summary", summary},
                {"runs", runs},
                {"run_config",
                 {{"command", "eval"},
                  {"data", a.data},
                  {"split", a.split},
                  {"baseline", a.baseline},
                  {"points", a.points},
                  {"checkpoints", a.checkpoints},
                  {"radii", radii},
                  {"decode", decode_config_json(a.decode)},
                  {"dbscan",
                   {{"eps", a.dbscan.eps}, {"min_pts", a.dbscan.min_pts}}}}}};
    write_json_file(a.out, out);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// plan
// ---------------------------------------------------------------------------

struct PlanArgs {
  std::string waypoints;
  std::string out = "path.json";
};

int cmd_plan(const PlanArgs& a) {
  WaypointSet points = read_waypoints_json(a.waypoints);
  CoveragePath path = plan_coverage(points);
  json arr = json::array();
  for (const PathPoint& p : path.points)
    arr.push_back({{"x", p.x},
                   {"y", p.y},
                   {"cluster", p.cluster},
                   {"segment",
                    p.segment == SegmentKind::Intra ? "intra" : "inter"}});
  json out = {{"path", arr},
              {"total_length", path.total_length},
              {"run_config",
               {{"command", "plan"}, {"waypoints", a.waypoints}}}};
  write_json_file(a.out, out);
  std::printf("%zu-point path, length %.1f px -> %s\n", path.points.size(),
              path.total_length, a.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// render
// ---------------------------------------------------------------------------

struct RenderArgs {
  std::string image;
  std::string waypoints;
  std::string path;
  std::string out = "overlay.png";
};

int cmd_render(const RenderArgs& a) {
  OccupancyGrid grid = load_grid_png(a.image);
  RgbImage img(grid.h, grid.w, {0, 0, 0});
  for (int y = 0; y < grid.h; ++y)
    for (int x = 0; x < grid.w; ++x)
      if (grid.at(y, x)) img.set(y, x, {120, 120, 120});

  json run = {{"command", "render"}, {"image", a.image}};
  if (!a.path.empty()) {
    const json j = load_json_file(a.path);
    const json& arr = j.at("path");
    for (std::size_t i = 1; i < arr.size(); ++i)
      draw_line(img, arr[i - 1].at("x").get<double>(),
                arr[i - 1].at("y").get<double>(), arr[i].at("x").get<double>(),
                arr[i].at("y").get<double>(), {70, 200, 90});
    run["path"] = a.path;
  }
  if (!a.waypoints.empty()) {
    for (const Waypoint& p : read_waypoints_json(a.waypoints))
      draw_disc(img, p.x, p.y, 4.0,
                p.cluster == 0 ? std::array<std::uint8_t, 3>{230, 60, 60}
                               : std::array<std::uint8_t, 3>{60, 90, 230});
    run["waypoints"] = a.waypoints;
  }
  write_png(a.out, img, {{"cropway", run.dump()}});
  std::printf("overlay -> %s\n", a.out.c_str());
  return 0;
}

}  // namespace

int cli_run(int argc, const char* const* argv) {
  CLI::App app{
      "cropway: waypoint detection, contrastive clustering and coverage "
      "paths for row-crop occupancy grids"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "synthesize a labeled dataset");
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--count", gen.count, "train,val,test image counts");
  g->add_option("--seed", gen.seed, "master seed");
  g->add_option("--size", gen.size, "square image size in px");
  g->add_flag("--curved", gen.curved, "mix curved rows in (50% of images)");
  g->add_option("--curve-prob", gen.curve_prob,
                "fraction of curved images (implies --curved)");
  g->add_option("--curve-strength", gen.cfg.curve_strength,
                "control point offset cap, rel. row length");
  g->add_option("--n-min", gen.cfg.n_min, "minimum row count");
  g->add_option("--n-max", gen.cfg.n_max, "maximum row count");
  g->add_option("--spacing-min", gen.cfg.spacing_min, "min inter-row px");
  g->add_option("--spacing-max", gen.cfg.spacing_max, "max inter-row px");
  g->add_option("--noise", gen.cfg.noise_sigma, "coordinate noise sigma");
  g->add_option("--hole-rate", gen.cfg.hole_rate, "expected holes per row");
  g->add_option("--margin", gen.cfg.border_margin, "border margin px");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train the two-head network");
  t->add_option("--data", tr.data, "dataset directory")->required();
  t->add_option("--split", tr.split, "dataset split to train on");
  t->add_option("--out", tr.out, "checkpoint output path");
  t->add_option("--checkpoint", tr.checkpoint, "starting checkpoint");
  t->add_option("--phase", tr.phase, "estimation | clustering | both");
  t->add_option("--epochs", tr.cfg.epochs, "epochs per phase");
  t->add_option("--batch", tr.cfg.batch, "batch size");
  t->add_option("--lr", tr.cfg.lr, "learning rate");
  t->add_option("--lambda", tr.cfg.lambda, "positive-cell loss weight");
  t->add_option("--seed", tr.cfg.seed, "master seed");
  t->add_option("--count-limit", tr.cfg.count_limit,
                "cap on training images");
  t->add_option("--R", tr.model_cfg.R, "residual reduction modules");
  t->add_option("--C", tr.model_cfg.C, "channel width");
  t->add_option("--kernel", tr.model_cfg.kernel_size, "conv kernel size");
  t->add_option("--D", tr.model_cfg.D, "latent dimensionality");
  t->add_flag("--verbose", tr.verbose, "per-epoch progress on stderr");

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "detect and cluster waypoints");
  p->add_option("--checkpoint", pr.checkpoint, "model checkpoint")
      ->required();
  p->add_option("--image", pr.image, "occupancy grid PNG")->required();
  p->add_option("--out", pr.out, "prediction JSON path");
  p->add_option("--tp", pr.decode.t_p, "confidence threshold");
  p->add_option("--tsup", pr.decode.t_sup, "suppression radius px");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate detection and clustering");
  e->add_option("--data", ev.data, "dataset directory")->required();
  e->add_option("--split", ev.split, "dataset split");
  e->add_option("--baseline", ev.baseline, "model | kmeans | dbscan");
  e->add_option("--points", ev.points,
                "cluster model-predicted or gt waypoints (model | gt)");
  e->add_option("--checkpoint", ev.checkpoints,
                "model checkpoint (repeat for mean/std across runs)");
  e->add_option("--radii", ev.radii, "AP radii, comma separated");
  e->add_option("--out", ev.out, "report JSON path");
  e->add_option("--tp", ev.decode.t_p, "confidence threshold");
  e->add_option("--tsup", ev.decode.t_sup, "suppression radius px");
  e->add_option("--dbscan-eps", ev.dbscan.eps, "DBSCAN neighborhood px");
  e->add_option("--dbscan-minpts", ev.dbscan.min_pts, "DBSCAN min points");

  PlanArgs pl;
  auto* q = app.add_subcommand("plan", "A-B-B-A coverage path");
  q->add_option("--waypoints", pl.waypoints, "labeled waypoint JSON")
      ->required();
  q->add_option("--out", pl.out, "path JSON output");

  RenderArgs re;
  auto* r = app.add_subcommand("render", "draw waypoints/path over the grid");
  r->add_option("--image", re.image, "occupancy grid PNG")->required();
  r->add_option("--waypoints", re.waypoints, "waypoint JSON");
  r->add_option("--path", re.path, "path JSON");
  r->add_option("--out", re.out, "overlay PNG output");

  try {
    app.parse(argc, argv);
    if (g->parsed()) return cmd_generate(gen);
    if (t->parsed()) return cmd_train(tr);
    if (p->parsed()) return cmd_predict(pr);
    if (e->parsed()) return cmd_eval(ev);
    if (q->parsed()) return cmd_plan(pl);
    if (r->parsed()) return cmd_render(re);
    return 2;
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? 0 : 2;
  } catch (const ConfigError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 2;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
}

}  // namespace cropway
