#include "cropway/fieldgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>

#include "cropway/image.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cropway {

std::size_t OccupancyGrid::occupied_count() const {
  std::size_t n = 0;
  for (std::uint8_t v : data) n += v;
  return n;
}

void GenConfig::validate() const {
  if (height < 32 || width < 32)
    throw ConfigError("fieldgen: image dims must be at least 32 px");
  if (n_min < 2 || n_max < n_min)
    throw ConfigError("fieldgen: need 2 <= n_min <= n_max");
  if (spacing_min < 1.0 || spacing_max < spacing_min)
    throw ConfigError("fieldgen: invalid inter-row spacing range");
  if (radius_min < 0.5 || radius_max < radius_min)
    throw ConfigError("fieldgen: invalid stroke radius range");
  if (curve_prob < 0.0 || curve_prob > 1.0)
    throw ConfigError("fieldgen: curve_prob must be in [0,1]");
  if (curve_strength < 0.0 || curve_strength > 0.5)
    throw ConfigError("fieldgen: curve_strength must be in [0,0.5]");
  const double quad_gap = std::min(height, width) / 8.0;
  if (border_margin < 1.0 ||
      border_margin >= std::min(height, width) / 2.0 - quad_gap)
    throw ConfigError("fieldgen: border_margin leaves no room for borders");
}

Vec2 bezier_point(Vec2 p0, Vec2 p1, Vec2 p2, double t) {
  const double s = 1.0 - t;
  return p0 * (s * s) + p1 * (2.0 * s * t) + p2 * (t * t);
}

std::vector<Vec2> sample_row_curve(const RowSpec& row, double max_step) {
  // Arc length is bounded by |P1-P0| + |P2-P1|.
  const double bound = distance(row.p0, row.p1) + distance(row.p1, row.p2);
  const int n = std::max(2, int(std::ceil(bound / max_step)) + 1);
  std::vector<Vec2> pts(n);
  for (int i = 0; i < n; ++i)
    pts[i] = bezier_point(row.p0, row.p1, row.p2, double(i) / (n - 1));
  return pts;
}

void rasterize_row(const std::vector<Vec2>& samples, double radius,
                   OccupancyGrid& grid) {
  const double r2 = radius * radius;
  for (const Vec2& p : samples) {
    const int x0 = std::max(0, int(std::floor(p.x - radius - 0.5)));
    const int x1 = std::min(grid.w - 1, int(std::ceil(p.x + radius)));
    const int y0 = std::max(0, int(std::floor(p.y - radius - 0.5)));
    const int y1 = std::min(grid.h - 1, int(std::ceil(p.y + radius)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - p.x;
        const double dy = y + 0.5 - p.y;
        if (dx * dx + dy * dy <= r2) grid.at(y, x) = 1;
      }
  }
}

void carve_holes(OccupancyGrid& grid, const FieldSpec& spec,
                 const HoleStats& stats, std::uint64_t seed) {
  Rng rng(seed);
  for (const RowSpec& row : spec.rows) {
    const int holes = rng.poisson(stats.rate);
    if (holes == 0) continue;
    std::vector<Vec2> samples = sample_row_curve(row, 0.4);
    double arc = 0.0;
    for (std::size_t i = 1; i < samples.size(); ++i)
      arc += distance(samples[i - 1], samples[i]);
    const double eraser = row.radius + 1.5;
    // Keep at least half of the stroke: cap the total erased arc.
    const double budget = 0.45 * arc;
    double used = 0.0;
    std::vector<std::pair<double, double>> spans;  // arc positions
    for (int h = 0; h < holes; ++h) {
      const double center = rng.uniform() * arc;
      const double len = rng.uniform(stats.min_len, stats.max_len);
      if (used + len + 2.0 * eraser > budget) continue;
      used += len + 2.0 * eraser;
      spans.emplace_back(center - len / 2.0, center + len / 2.0);
    }
    if (spans.empty()) continue;
    double pos = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (i > 0) pos += distance(samples[i - 1], samples[i]);
      for (const auto& [lo, hi] : spans) {
        if (pos < lo || pos > hi) continue;
        const Vec2 p = samples[i];
        const int x0 = std::max(0, int(std::floor(p.x - eraser - 0.5)));
        const int x1 = std::min(grid.w - 1, int(std::ceil(p.x + eraser)));
        const int y0 = std::max(0, int(std::floor(p.y - eraser - 0.5)));
        const int y1 = std::min(grid.h - 1, int(std::ceil(p.y + eraser)));
        for (int y = y0; y <= y1; ++y)
          for (int x = x0; x <= x1; ++x) {
            const double dx = x + 0.5 - p.x;
            const double dy = y + 0.5 - p.y;
            if (dx * dx + dy * dy <= eraser * eraser) grid.at(y, x) = 0;
          }
        break;
      }
    }
  }
}

namespace {

std::optional<std::pair<double, double>> clip_line(
    Vec2 c, Vec2 u, const std::array<Vec2, 4>& quad) {
  double tlo = -1e18, thi = 1e18;
  for (int i = 0; i < 4; ++i) {
    const Vec2 a = quad[i];
    const Vec2 b = quad[(i + 1) % 4];
    const Vec2 opp = quad[(i + 2) % 4];
    Vec2 n{-(b.y - a.y), b.x - a.x};
    if (n.dot(opp - a) < 0) n = n * -1.0;  // inward
    const double denom = n.dot(u);
    const double num = n.dot(a - c);
    if (std::abs(denom) < 1e-12) {
      if (n.dot(c - a) < 0) return std::nullopt;
      continue;
    }
    const double t = num / denom;
    if (denom > 0)
      tlo = std::max(tlo, t);
    else
      thi = std::min(thi, t);
  }
  if (tlo >= thi) return std::nullopt;
  return std::make_pair(tlo, thi);
}

bool convex(const std::array<Vec2, 4>& q) {
  double sign = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Vec2 a = q[i], b = q[(i + 1) % 4], c = q[(i + 2) % 4];
    const double cross =
        (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
    if (std::abs(cross) < 1e-9) return false;
    if (sign == 0.0)
      sign = cross;
    else if (sign * cross < 0)
      return false;
  }
  return true;
}

struct Candidate {
  FieldSpec spec;
  WaypointSet waypoints;
};

// One sampling pass over the generation procedure. Returns nullopt when the
// draw violates a geometric guarantee; the caller retries with the same
// stream, so results stay deterministic per seed.
std::optional<Candidate> try_field(const GenConfig& cfg, Rng& rng) {
  const double W = cfg.width, H = cfg.height;
  const int n = rng.uniform_int(cfg.n_min, cfg.n_max);
  const double alpha = rng.uniform(cfg.alpha_min, cfg.alpha_max);
  const bool curved = cfg.curved && rng.uniform() < cfg.curve_prob;

  // Random convex border quadrilateral, one vertex per image quadrant.
  const double m = cfg.border_margin;
  const double gap = std::min(W, H) / 8.0;
  std::array<Vec2, 4> quad;
  bool ok = false;
  for (int attempt = 0; attempt < 40 && !ok; ++attempt) {
    quad[0] = {rng.uniform(m, W / 2 - gap), rng.uniform(m, H / 2 - gap)};
    quad[1] = {rng.uniform(W / 2 + gap, W - m), rng.uniform(m, H / 2 - gap)};
    quad[2] = {rng.uniform(W / 2 + gap, W - m),
               rng.uniform(H / 2 + gap, H - m)};
    quad[3] = {rng.uniform(m, W / 2 - gap), rng.uniform(H / 2 + gap, H - m)};
    ok = convex(quad);
  }
  if (!ok) return std::nullopt;

  const Vec2 u{std::cos(alpha), std::sin(alpha)};
  const Vec2 v{-std::sin(alpha), std::cos(alpha)};
  const Vec2 center{W / 2, H / 2};

  // Row offsets along v, centered, with clamped noisy spacing.
  std::vector<double> offsets(n);
  if (n > 1) {
    std::vector<double> spacing(n - 1);
    for (double& s : spacing) s = rng.uniform(cfg.spacing_min, cfg.spacing_max);
    offsets[0] = 0.0;
    for (int i = 1; i < n; ++i) offsets[i] = offsets[i - 1] + spacing[i - 1];
    const double span = offsets.back();
    for (double& o : offsets) o -= span / 2.0;
  }
  for (double& o : offsets) o += rng.gaussian(0.0, cfg.noise_sigma);
  // Re-impose the minimum spacing after noise.
  for (int i = 1; i < n; ++i)
    offsets[i] = std::max(offsets[i], offsets[i - 1] + cfg.spacing_min);

  double curve_mag = 0.0, curve_sign = 1.0;
  if (curved) {
    curve_mag = rng.uniform(0.3, 1.0) * cfg.curve_strength;
    curve_sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
  }

  FieldSpec spec;
  spec.alpha = alpha;
  spec.curved = curved;
  spec.border = quad;
  std::vector<Vec2> starts, ends;
  for (int i = 0; i < n; ++i) {
    const Vec2 c = center + v * offsets[i];
    // Every row consumes the same number of draws whether or not it
    // survives clipping, so feasibility does not shift the stream.
    const Vec2 noise_a{rng.gaussian(0.0, cfg.noise_sigma),
                       rng.gaussian(0.0, cfg.noise_sigma)};
    const Vec2 noise_b{rng.gaussian(0.0, cfg.noise_sigma),
                       rng.gaussian(0.0, cfg.noise_sigma)};
    const double radius = rng.uniform(cfg.radius_min, cfg.radius_max);
    const double jitter = rng.uniform(-0.1, 0.1);

    auto seg = clip_line(c, u, quad);
    if (!seg) continue;
    Vec2 p0 = c + u * seg->first + noise_a;
    Vec2 p2 = c + u * seg->second + noise_b;
    const double len = distance(p0, p2);
    if (len < cfg.min_row_length) continue;

    Vec2 p1 = (p0 + p2) * 0.5;
    if (curved) {
      const Vec2 chord = (p2 - p0) * (1.0 / len);
      const Vec2 normal{-chord.y, chord.x};
      p1 = p1 + normal * (curve_sign * curve_mag * (1.0 + jitter) * len);
      p1.x = std::clamp(p1.x, m, W - m);
      p1.y = std::clamp(p1.y, m, H - m);
    }
    spec.rows.push_back({p0, p1, p2, radius});
    starts.push_back(p0);
    ends.push_back(p2);
  }
  spec.n = int(spec.rows.size());
  if (spec.n < std::max(2, cfg.n_min)) return std::nullopt;

  Candidate cand;
  for (std::size_t i = 0; i + 1 < starts.size(); ++i) {
    const Vec2 a = (starts[i] + starts[i + 1]) * 0.5;
    const Vec2 b = (ends[i] + ends[i + 1]) * 0.5;
    cand.waypoints.push_back({a.x, a.y, 0, 1.0});
    cand.waypoints.push_back({b.x, b.y, 1, 1.0});
  }

  for (const Waypoint& p : cand.waypoints)
    if (p.x < 0.5 || p.x >= W - 0.5 || p.y < 0.5 || p.y >= H - 0.5)
      return std::nullopt;

  // Minimum waypoint separation (Chebyshev, so no two share a K<=8 cell
  // and Euclidean separation matches the suppression radius).
  for (std::size_t i = 0; i < cand.waypoints.size(); ++i)
    for (std::size_t j = i + 1; j < cand.waypoints.size(); ++j) {
      const double dx = std::abs(cand.waypoints[i].x - cand.waypoints[j].x);
      const double dy = std::abs(cand.waypoints[i].y - cand.waypoints[j].y);
      if (std::max(dx, dy) < 8.0) return std::nullopt;
    }

  if (!curved) {
    // Straight fields must keep the two regions separable along the row
    // direction (the property the clustering baselines rely on).
    double max_a = -1e18, min_b = 1e18;
    for (const Waypoint& p : cand.waypoints) {
      const double proj = Vec2{p.x, p.y}.dot(u);
      if (p.cluster == 0)
        max_a = std::max(max_a, proj);
      else
        min_b = std::min(min_b, proj);
    }
    if (max_a + 2.0 > min_b) return std::nullopt;
  } else {
    // Adjacent curves must stay clear of each other mid-field, or strokes
    // and hole erasers would merge rows.
    for (std::size_t i = 0; i + 1 < spec.rows.size(); ++i) {
      for (int s = 0; s <= 32; ++s) {
        const double t = s / 32.0;
        const Vec2 pa =
            bezier_point(spec.rows[i].p0, spec.rows[i].p1, spec.rows[i].p2,
                         t);
        const Vec2 pb = bezier_point(spec.rows[i + 1].p0, spec.rows[i + 1].p1,
                                     spec.rows[i + 1].p2, t);
        if (distance(pa, pb) < 5.5) return std::nullopt;
      }
    }
  }

  cand.spec = std::move(spec);
  return cand;
}

}  // namespace

FieldSample generate_field(const GenConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  for (int attempt = 0; attempt < 500; ++attempt) {
    auto cand = try_field(config, rng);
    if (!cand) continue;

    FieldSample out;
    out.spec = std::move(cand->spec);
    out.waypoints = std::move(cand->waypoints);
    out.grid = OccupancyGrid(config.height, config.width);
    for (const RowSpec& row : out.spec.rows) {
      std::vector<Vec2> samples = sample_row_curve(row, 0.4);
      // Stamp in chunks with jittered radius so the stroke width varies
      // along the row.
      const std::size_t chunk = 12;
      for (std::size_t i = 0; i < samples.size(); i += chunk) {
        const std::size_t end = std::min(samples.size(), i + chunk + 1);
        const double r =
            std::clamp(row.radius + rng.uniform(-0.25, 0.25),
                       config.radius_min, config.radius_max);
        rasterize_row(
            std::vector<Vec2>(samples.begin() + i, samples.begin() + end), r,
            out.grid);
      }
    }
    carve_holes(out.grid, out.spec,
                {config.hole_rate, config.hole_min_len, config.hole_max_len},
                rng.next_u64());
    return out;
  }
  throw Error(
      "generate_field: no feasible field after 500 attempts; the config "
      "yields zero valid rows");
}

// ----------------------------------------------------------------------------
// Dataset I/O
// ----------------------------------------------------------------------------

void to_json(json& j, const GenConfig& c) {
  j = json{{"height", c.height},
           {"width", c.width},
           {"n_min", c.n_min},
           {"n_max", c.n_max},
           {"alpha_min", c.alpha_min},
           {"alpha_max", c.alpha_max},
           {"radius_min", c.radius_min},
           {"radius_max", c.radius_max},
           {"spacing_min", c.spacing_min},
           {"spacing_max", c.spacing_max},
           {"hole_rate", c.hole_rate},
           {"hole_min_len", c.hole_min_len},
           {"hole_max_len", c.hole_max_len},
           {"noise_sigma", c.noise_sigma},
           {"curved", c.curved},
           {"curve_prob", c.curve_prob},
           {"curve_strength", c.curve_strength},
           {"border_margin", c.border_margin},
           {"min_row_length", c.min_row_length}};
}

void from_json(const json& j, GenConfig& c) {
  j.at("height").get_to(c.height);
  j.at("width").get_to(c.width);
  j.at("n_min").get_to(c.n_min);
  j.at("n_max").get_to(c.n_max);
  j.at("alpha_min").get_to(c.alpha_min);
  j.at("alpha_max").get_to(c.alpha_max);
  j.at("radius_min").get_to(c.radius_min);
  j.at("radius_max").get_to(c.radius_max);
  j.at("spacing_min").get_to(c.spacing_min);
  j.at("spacing_max").get_to(c.spacing_max);
  j.at("hole_rate").get_to(c.hole_rate);
  j.at("hole_min_len").get_to(c.hole_min_len);
  j.at("hole_max_len").get_to(c.hole_max_len);
  j.at("noise_sigma").get_to(c.noise_sigma);
  j.at("curved").get_to(c.curved);
  j.at("curve_prob").get_to(c.curve_prob);
  j.at("curve_strength").get_to(c.curve_strength);
  j.at("border_margin").get_to(c.border_margin);
  j.at("min_row_length").get_to(c.min_row_length);
}

namespace {

std::string index_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05d", index);
  return buf;
}

}  // namespace

void generate_dataset(const GenConfig& config, DatasetCounts counts,
                      std::uint64_t seed, const std::string& out_dir) {
  config.validate();
  if (counts.total() <= 0)
    throw ConfigError("generate_dataset: nothing to generate");
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "labels");

  const int total = counts.total();
  std::vector<std::string> errors(total);
  parallel_for(total, [&](int i) {
    try {
      const std::uint64_t image_seed = Rng::derive(seed, std::uint64_t(i));
      FieldSample sample = generate_field(config, image_seed);

      GrayImage img;
      img.h = sample.grid.h;
      img.w = sample.grid.w;
      img.px.resize(sample.grid.data.size());
      for (std::size_t p = 0; p < img.px.size(); ++p)
        img.px[p] = sample.grid.data[p] ? 255 : 0;
      write_png((fs::path(out_dir) / "images" / (index_name(i) + ".png"))
                    .string(),
                img);

      json wps = json::array();
      for (const Waypoint& p : sample.waypoints)
        wps.push_back({{"x", p.x}, {"y", p.y}, {"cluster", p.cluster}});
      json label = {{"waypoints", wps},
                    {"n_rows", sample.spec.n},
                    {"curved", sample.spec.curved},
                    {"seed", image_seed}};
      std::ofstream os(fs::path(out_dir) / "labels" / (index_name(i) + ".json"));
      os << label.dump(2) << "\n";
      if (!os) errors[i] = "write failed";
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (int i = 0; i < total; ++i)
    if (!errors[i].empty())
      throw IoError("generate_dataset: image " + std::to_string(i) + ": " +
                    errors[i]);

  json manifest = {
      {"seed", seed},
      {"config", config},
      {"total", total},
      {"splits",
       {{"train", {{"offset", 0}, {"count", counts.train}}},
        {"val", {{"offset", counts.train}, {"count", counts.val}}},
        {"test",
         {{"offset", counts.train + counts.val}, {"count", counts.test}}}}}};
  std::ofstream os(fs::path(out_dir) / "manifest.json");
  os << manifest.dump(2) << "\n";
  if (!os) throw IoError("generate_dataset: cannot write manifest");
}

SplitRange Manifest::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  if (name == "all")
    return {0, train.count + val.count + test.count};
  throw ConfigError("dataset: unknown split '" + name + "'");
}

Manifest load_manifest(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "manifest.json");
  if (!is) throw IoError("dataset: cannot open manifest in '" + dir + "'");
  json j = json::parse(is, nullptr, true);
  Manifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config = j.at("config").get<GenConfig>();
  auto rd = [&](const char* name) {
    const json& s = j.at("splits").at(name);
    return SplitRange{s.at("offset").get<int>(), s.at("count").get<int>()};
  };
  m.train = rd("train");
  m.val = rd("val");
  m.test = rd("test");
  return m;
}

Sample load_sample(const std::string& dir, int index) {
  Sample s;
  const std::string stem = index_name(index);
  GrayImage img =
      read_png_gray((fs::path(dir) / "images" / (stem + ".png")).string());
  s.grid = OccupancyGrid(img.h, img.w);
  for (std::size_t i = 0; i < img.px.size(); ++i)
    s.grid.data[i] = img.px[i] > 127 ? 1 : 0;

  std::ifstream is(fs::path(dir) / "labels" / (stem + ".json"));
  if (!is)
    throw IoError("dataset: missing label file for index " +
                  std::to_string(index));
  json j = json::parse(is, nullptr, true);
  for (const json& w : j.at("waypoints"))
    s.waypoints.push_back({w.at("x").get<double>(), w.at("y").get<double>(),
                           w.at("cluster").get<int>(), 1.0});
  s.n_rows = j.value("n_rows", 0);
  s.curved = j.value("curved", false);
  s.seed = j.value("seed", std::uint64_t(0));
  return s;
}

std::vector<Sample> load_split(const std::string& dir,
                               const std::string& split_name) {
  Manifest m = load_manifest(dir);
  SplitRange r = m.split(split_name);
  std::vector<Sample> out(r.count);
  parallel_for(r.count,
               [&](int i) { out[i] = load_sample(dir, r.offset + i); });
  return out;
}

}  // namespace cropway
