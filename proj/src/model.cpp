#include "cropway/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>

namespace cropway::nn {

void ModelConfig::validate() const {
  if (R < 1) throw ConfigError("model: R must be >= 1");
  if (C < 2 || C % 2 != 0)
    throw ConfigError("model: channel width C must be even and >= 2");
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw ConfigError("model: kernel_size must be odd, got " +
                      std::to_string(kernel_size));
  if (D < 2)
    throw ConfigError(
        "model: clustering dimensionality D must be >= 2 (normalization "
        "removes one degree of freedom), got " +
        std::to_string(D));
}

namespace {

template <typename T>
NamedTensor<T> init_tensor(const std::string& name, ag::Shape shape,
                           std::size_t fan_in, Part part, Rng& rng) {
  NamedTensor<T> t;
  t.name = name;
  t.shape = std::move(shape);
  t.part = part;
  const double bound = std::sqrt(6.0 / double(fan_in));
  t.data.resize(ag::numel(t.shape));
  for (T& v : t.data) v = T(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
NamedTensor<T> zero_tensor(const std::string& name, ag::Shape shape,
                           Part part) {
  NamedTensor<T> t;
  t.name = name;
  t.shape = std::move(shape);
  t.part = part;
  t.data.assign(ag::numel(t.shape), T(0));
  return t;
}

}  // namespace

template <typename T>
Network<T> Network<T>::build(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Network<T> net;
  net.cfg = cfg;
  Rng rng(seed);
  const int k = cfg.kernel_size;
  const int C = cfg.C;
  const int Ch = C / 2;

  auto conv = [&](const std::string& name, int ci, int co, Part part) {
    net.params.push_back(init_tensor<T>(name + ".kernel", {k, k, ci, co},
                                        std::size_t(k) * k * ci, part, rng));
    net.params.push_back(zero_tensor<T>(name + ".bias", {co}, part));
  };
  auto conv1x1 = [&](const std::string& name, int ci, int co, Part part) {
    net.params.push_back(init_tensor<T>(name + ".kernel", {1, 1, ci, co},
                                        std::size_t(ci), part, rng));
    net.params.push_back(zero_tensor<T>(name + ".bias", {co}, part));
  };
  auto dense = [&](const std::string& name, int n, int m, Part part) {
    net.params.push_back(
        init_tensor<T>(name + ".weight", {n, m}, std::size_t(n), part, rng));
    net.params.push_back(zero_tensor<T>(name + ".bias", {m}, part));
  };

  conv("backbone.stem", 1, C, Part::Backbone);
  for (int r = 1; r <= cfg.R; ++r) {
    const std::string base = "backbone.rrm" + std::to_string(r);
    conv(base + ".res.conv", C, C, Part::Backbone);
    dense(base + ".res.ca.fc1", C, Ch, Part::Backbone);
    dense(base + ".res.ca.fc2", Ch, C, Part::Backbone);
    conv(base + ".res.sa.conv", 2, 1, Part::Backbone);
    conv(base + ".red", C, C, Part::Backbone);
  }
  conv("backbone.down1", C, C, Part::Backbone);
  conv("backbone.down2", C, C, Part::Backbone);
  // Transposed conv kernel, laid out for the downsampling direction.
  net.params.push_back(init_tensor<T>("backbone.up.kernel", {k, k, C, C},
                                      std::size_t(k) * k * C, Part::Backbone,
                                      rng));
  net.params.push_back(
      zero_tensor<T>("backbone.up.bias", {C}, Part::Backbone));
  conv1x1("estimation.conv", C, 3, Part::Estimation);
  conv(std::string("clustering.conv1"), C, C, Part::Clustering);
  conv(std::string("clustering.conv2"), C, C, Part::Clustering);
  conv1x1("clustering.proj", C, cfg.D, Part::Clustering);

  return net;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.data.size();
  return n;
}

template <typename T>
int Network<T>::param_index(const std::string& name) const {
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].name == name) return int(i);
  throw Error("model: unknown parameter '" + name + "'");
}

template <typename T>
std::vector<ag::Var<T>> Network<T>::bind(ag::Graph<T>& g) const {
  std::vector<ag::Var<T>> vars;
  vars.reserve(params.size());
  for (const auto& p : params) {
    bool frozen = (p.part == Part::Backbone && freeze_backbone) ||
                  (p.part == Part::Estimation && freeze_estimation) ||
                  (p.part == Part::Clustering && freeze_clustering);
    vars.push_back(g.leaf(p.shape, p.data, !frozen));
  }
  return vars;
}

template <typename T>
ag::Var<T> Network<T>::input_leaf(ag::Graph<T>& g,
                                  std::span<const std::uint8_t> grid, int H,
                                  int W) const {
  if (int(grid.size()) != H * W)
    throw ShapeError("model: grid size " + std::to_string(grid.size()) +
                     " does not match " + std::to_string(H) + "x" +
                     std::to_string(W));
  std::vector<T> data(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    data[i] = grid[i] ? T(1) : T(0);
  return g.leaf({H, W, 1}, std::move(data), false);
}

namespace {

// CBAM-style channel then spatial attention over h×w×C features.
template <typename T>
ag::Var<T> attention(ag::Graph<T>& g, const std::vector<ag::Var<T>>& pv,
                     const Network<T>& net, const std::string& base,
                     ag::Var<T> x) {
  const int C = x.shape()[2];
  auto P = [&](const std::string& n) { return pv[net.param_index(base + n)]; };

  auto mlp = [&](ag::Var<T> pooled) {
    auto flat = g.reshape(pooled, {C});
    auto h = g.activation(
        g.dense(flat, P(".ca.fc1.weight"), P(".ca.fc1.bias")), ag::Act::Mish);
    auto o = g.dense(h, P(".ca.fc2.weight"), P(".ca.fc2.bias"));
    return g.reshape(o, {1, 1, C});
  };
  auto avg = g.reduce(x, ag::Red::Mean, {0, 1}, true);
  auto mx = g.reduce(x, ag::Red::Max, {0, 1}, true);
  auto ca = g.activation(g.add(mlp(avg), mlp(mx)), ag::Act::Sigmoid);
  auto xc = g.mul(x, ca);

  auto cmean = g.reduce(xc, ag::Red::Mean, {2}, true);
  auto cmax = g.reduce(xc, ag::Red::Max, {2}, true);
  auto smap = g.activation(
      g.conv2d(g.concat_channels(cmean, cmax), P(".sa.conv.kernel"),
               P(".sa.conv.bias"), 1),
      ag::Act::Sigmoid);
  return g.mul(xc, smap);
}

}  // namespace

template <typename T>
ag::Var<T> Network<T>::backbone(ag::Graph<T>& g,
                                const std::vector<ag::Var<T>>& pv,
                                ag::Var<T> input) const {
  const ag::Shape& s = input.shape();
  if (s.size() != 3 || s[2] != 1)
    throw ShapeError("model: input must be H×W×1, got " + ag::shape_str(s));
  const int K = cfg.K();
  if (s[0] % K != 0 || s[1] % K != 0)
    throw ShapeError("model: input dims " + std::to_string(s[0]) + "x" +
                     std::to_string(s[1]) + " are not divisible by K=" +
                     std::to_string(K) +
                     "; pad the grid to a multiple of K");

  auto P = [&](const std::string& n) { return pv[param_index(n)]; };
  auto act_conv = [&](ag::Var<T> x, const std::string& n, int stride) {
    return g.activation(g.conv2d(x, P(n + ".kernel"), P(n + ".bias"), stride),
                        ag::Act::Mish);
  };

  auto x = act_conv(input, "backbone.stem", 1);
  for (int r = 1; r <= cfg.R; ++r) {
    const std::string base = "backbone.rrm" + std::to_string(r);
    auto t = act_conv(x, base + ".res.conv", 1);
    t = attention(g, pv, *this, base + ".res", t);
    x = g.add(x, t);
    x = act_conv(x, base + ".red", 2);
  }
  auto x1 = act_conv(x, "backbone.down1", 2);
  auto x2 = act_conv(x1, "backbone.down2", 2);
  auto up = g.activation(
      g.conv2d_transpose(x2, P("backbone.up.kernel"), P("backbone.up.bias"),
                         2),
      ag::Act::Mish);
  return g.add(x1, up);
}

template <typename T>
ag::Var<T> Network<T>::estimation_head(ag::Graph<T>& g,
                                       const std::vector<ag::Var<T>>& pv,
                                       ag::Var<T> features) const {
  auto raw = g.conv2d(features, pv[param_index("estimation.conv.kernel")],
                      pv[param_index("estimation.conv.bias")], 1);
  return g.head_activation(raw);
}

template <typename T>
ag::Var<T> Network<T>::clustering_head(ag::Graph<T>& g,
                                       const std::vector<ag::Var<T>>& pv,
                                       ag::Var<T> features) const {
  auto P = [&](const std::string& n) { return pv[param_index(n)]; };
  auto h = g.activation(g.conv2d(features, P("clustering.conv1.kernel"),
                                 P("clustering.conv1.bias"), 1),
                        ag::Act::Mish);
  h = g.activation(g.conv2d(h, P("clustering.conv2.kernel"),
                            P("clustering.conv2.bias"), 1),
                   ag::Act::Mish);
  return g.conv2d(h, P("clustering.proj.kernel"), P("clustering.proj.bias"),
                  1);
}

template <typename T>
typename Network<T>::Forward Network<T>::forward(
    ag::Graph<T>& g, const std::vector<ag::Var<T>>& pv,
    ag::Var<T> input) const {
  auto features = backbone(g, pv, input);
  return {estimation_head(g, pv, features), clustering_head(g, pv, features)};
}

// ----------------------------------------------------------------------------
// Targets and losses
// ----------------------------------------------------------------------------

TargetGrid build_target(const std::vector<Vec2>& waypoints, int H, int W,
                        int K) {
  if (H % K != 0 || W % K != 0)
    throw ShapeError("build_target: dims " + std::to_string(H) + "x" +
                     std::to_string(W) + " are not divisible by K=" +
                     std::to_string(K));
  TargetGrid t;
  t.h = H / K;
  t.w = W / K;
  t.cells.assign(std::size_t(t.h) * t.w * 3, 0.0f);
  const double half = K / 2.0;
  for (const Vec2& p : waypoints) {
    if (p.x < 0 || p.x >= W || p.y < 0 || p.y >= H)
      throw Error("build_target: waypoint (" + std::to_string(p.x) + "," +
                  std::to_string(p.y) + ") outside " + std::to_string(W) +
                  "x" + std::to_string(H) + " image");
    const int cx = int(p.x / K);
    const int cy = int(p.y / K);
    float* cell = t.at(cy, cx);
    if (cell[0] != 0.0f)
      throw Error("build_target: two waypoints fall into cell (" +
                  std::to_string(cx) + "," + std::to_string(cy) +
                  "); degenerate field");
    cell[0] = 1.0f;
    cell[1] = float((p.x - cx * K - half) / half);
    cell[2] = float((p.y - cy * K - half) / half);
  }
  return t;
}

template <typename T>
ag::Var<T> estimation_loss(ag::Graph<T>& g, ag::Var<T> pred,
                           const TargetGrid& target, double lambda) {
  const ag::Shape& s = pred.shape();
  if (s.size() != 3 || s[0] != target.h || s[1] != target.w || s[2] != 3)
    throw ShapeError("estimation_loss: prediction " + ag::shape_str(s) +
                     " does not match target " + std::to_string(target.h) +
                     "x" + std::to_string(target.w) + "x3");
  if (!(lambda > 0.0 && lambda < 1.0))
    throw ConfigError("estimation_loss: lambda must be in (0,1)");

  const std::size_t cells = std::size_t(target.h) * target.w;
  std::vector<T> tdata(cells * 3);
  std::vector<T> wdata(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    const float* c = target.cells.data() + i * 3;
    tdata[i * 3 + 0] = T(c[0]);
    tdata[i * 3 + 1] = T(c[1]);
    tdata[i * 3 + 2] = T(c[2]);
    wdata[i] = T(c[0] != 0.0f ? lambda : 1.0 - lambda);
  }
  auto tv = g.constant({target.h, target.w, 3}, std::move(tdata));
  auto wv = g.constant({target.h, target.w, 1}, std::move(wdata));
  auto diff = g.sub(tv, pred);
  auto weighted = g.mul(g.mul(diff, diff), wv);
  auto total = g.reduce(weighted, ag::Red::Sum, {0, 1, 2}, false);
  return g.scale(total, T(1.0 / double(cells)));
}

template <typename T>
ag::Var<T> clustering_loss(ag::Graph<T>& g,
                           const std::vector<ag::Var<T>>& features,
                           const std::vector<int>& labels) {
  const std::size_t n = features.size();
  if (n < 2 || labels.size() != n)
    throw Error("clustering_loss: need >= 2 labeled feature vectors");
  bool has0 = false, has1 = false;
  for (int l : labels) (l == 0 ? has0 : has1) = true;
  if (!has0 || !has1)
    throw Error(
        "clustering_loss: both clusters must be present in the batch");

  std::vector<ag::Var<T>> norms(n);
  for (std::size_t i = 0; i < n; ++i)
    norms[i] = g.sqrt_op(
        g.reduce(g.mul(features[i], features[i]), ag::Red::Sum, {0}, false));

  std::vector<ag::Var<T>> pair_losses;
  pair_losses.reserve(n * (n - 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      auto dot = g.reduce(g.mul(features[i], features[j]), ag::Red::Sum, {0},
                          false);
      auto sim = g.div(dot, g.mul(norms[i], norms[j]));
      // -log(sig(s)) = softplus(-s); -log(1 - sig(s)) = softplus(s)
      auto arg = (labels[i] == labels[j]) ? g.scale(sim, T(-1)) : sim;
      pair_losses.push_back(g.activation(arg, ag::Act::Softplus));
    }
  }
  auto total = g.add_n(pair_losses);
  return g.scale(total, T(1.0 / double(n * (n - 1))));
}

double cosine_sim(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw ShapeError("cosine_sim: dimension mismatch " +
                     std::to_string(u.size()) + " vs " +
                     std::to_string(v.size()));
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0)
    throw Error("cosine_sim: zero vector has no direction");
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

// ----------------------------------------------------------------------------
// Checkpoints
// ----------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'C', 'W', 'A', 'Y'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v & 0xff),
                        (unsigned char)((v >> 8) & 0xff),
                        (unsigned char)((v >> 16) & 0xff),
                        (unsigned char)((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw IoError(std::string("checkpoint: truncated file while reading ") +
                  what);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open '" + path + "' for write");
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, std::uint32_t(model.cfg.R));
  write_u32(os, std::uint32_t(model.cfg.C));
  write_u32(os, std::uint32_t(model.cfg.kernel_size));
  write_u32(os, std::uint32_t(model.cfg.D));
  write_u32(os, std::uint32_t(model.params.size()));
  for (const auto& p : model.params) {
    write_u32(os, std::uint32_t(p.name.size()));
    os.write(p.name.data(), std::streamsize(p.name.size()));
    write_u32(os, std::uint32_t(p.shape.size()));
    for (int d : p.shape) write_u32(os, std::uint32_t(d));
    os.write(reinterpret_cast<const char*>(p.data.data()),
             std::streamsize(p.data.size() * sizeof(float)));
  }
  if (!os) throw IoError("checkpoint: write to '" + path + "' failed");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("checkpoint: bad magic bytes in '" + path + "'");
  const std::uint32_t version = read_u32(is, "version");
  if (version != kVersion)
    throw IoError("checkpoint: unsupported format version " +
                  std::to_string(version));
  ModelConfig cfg;
  cfg.R = int(read_u32(is, "R"));
  cfg.C = int(read_u32(is, "C"));
  cfg.kernel_size = int(read_u32(is, "kernel_size"));
  cfg.D = int(read_u32(is, "D"));
  cfg.validate();

  Model model = Model::build(cfg, 0);
  std::set<std::string> filled;
  const std::uint32_t count = read_u32(is, "tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t name_len = read_u32(is, "name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw IoError("checkpoint: truncated file while reading tensor name");
    int idx;
    try {
      idx = model.param_index(name);
    } catch (const Error&) {
      throw IoError("checkpoint: unknown tensor name '" + name + "'");
    }
    auto& p = model.params[idx];
    const std::uint32_t rank = read_u32(is, "rank");
    ag::Shape shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d)
      shape[d] = int(read_u32(is, "dim"));
    if (shape != p.shape)
      throw IoError("checkpoint: tensor '" + name + "' has shape " +
                    ag::shape_str(shape) + ", expected " +
                    ag::shape_str(p.shape));
    if (!is.read(reinterpret_cast<char*>(p.data.data()),
                 std::streamsize(p.data.size() * sizeof(float))))
      throw IoError("checkpoint: truncated data for tensor '" + name + "'");
    filled.insert(name);
  }
  if (filled.size() != model.params.size())
    throw IoError("checkpoint: file provides " +
                  std::to_string(filled.size()) + " tensors, model needs " +
                  std::to_string(model.params.size()));
  return model;
}

// ----------------------------------------------------------------------------

template struct Network<float>;
template struct Network<double>;
template ag::Var<float> estimation_loss<float>(ag::Graph<float>&,
                                               ag::Var<float>,
                                               const TargetGrid&, double);
template ag::Var<double> estimation_loss<double>(ag::Graph<double>&,
                                                 ag::Var<double>,
                                                 const TargetGrid&, double);
template ag::Var<float> clustering_loss<float>(
    ag::Graph<float>&, const std::vector<ag::Var<float>>&,
    const std::vector<int>&);
template ag::Var<double> clustering_loss<double>(
    ag::Graph<double>&, const std::vector<ag::Var<double>>&,
    const std::vector<int>&);

}  // namespace cropway::nn
