#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "cropway/autograd.hpp"
#include "cropway/common.hpp"
#include "doctest.h"

using namespace cropway;
using namespace cropway::ag;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -1.0,
                               double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Independent dense reference for conv2d: direct summation over the
// definition, no padding helpers or microkernels shared with the library.
std::vector<double> conv_reference(const std::vector<double>& x, int H, int W,
                                   int Ci, const std::vector<double>& ker,
                                   int k, const std::vector<double>& bias,
                                   int Co, int stride) {
  int Ho = (H + stride - 1) / stride;
  int Wo = (W + stride - 1) / stride;
  int pad_h = std::max((Ho - 1) * stride + k - H, 0) / 2;
  int pad_w = std::max((Wo - 1) * stride + k - W, 0) / 2;
  std::vector<double> y(std::size_t(Ho) * Wo * Co, 0.0);
  for (int oy = 0; oy < Ho; ++oy)
    for (int ox = 0; ox < Wo; ++ox)
      for (int co = 0; co < Co; ++co) {
        double acc = bias[co];
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx)
            for (int ci = 0; ci < Ci; ++ci) {
              int iy = oy * stride + ky - pad_h;
              int ix = ox * stride + kx - pad_w;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += x[(std::size_t(iy) * W + ix) * Ci + ci] *
                     ker[((std::size_t(ky) * k + kx) * Ci + ci) * Co + co];
            }
        y[(std::size_t(oy) * Wo + ox) * Co + co] = acc;
      }
  return y;
}

}  // namespace

TEST_CASE("conv2d identity kernel keeps input") {
  Graph<double> g;
  std::vector<double> data(16);
  for (int i = 0; i < 16; ++i) data[i] = i * 0.25 - 2.0;
  auto x = g.leaf({4, 4, 1}, data, false);
  auto k = g.constant({1, 1, 1, 1}, {1.0});
  auto b = g.constant({1}, {0.0});
  auto y = g.conv2d(x, k, b, 1);
  CHECK(y.shape() == Shape{4, 4, 1});
  for (int i = 0; i < 16; ++i) CHECK(y.value()[i] == doctest::Approx(data[i]));
}

TEST_CASE("conv2d stride 2 halves spatial dims with same padding") {
  Graph<double> g;
  auto x = g.leaf({8, 8, 1}, std::vector<double>(64, 1.0), false);
  auto k = g.constant({3, 3, 1, 1}, std::vector<double>(9, 0.1));
  auto b = g.constant({1}, {0.0});
  auto y = g.conv2d(x, k, b, 2);
  CHECK(y.shape() == Shape{4, 4, 1});

  // Odd sizes round up.
  auto x2 = g.leaf({7, 5, 1}, std::vector<double>(35, 1.0), false);
  auto y2 = g.conv2d(x2, k, b, 2);
  CHECK(y2.shape() == Shape{4, 3, 1});
}

TEST_CASE("conv2d forward matches dense reference on random shapes") {
  Rng rng(2024);
  for (int trial = 0; trial < 30; ++trial) {
    int H = rng.uniform_int(3, 9), W = rng.uniform_int(3, 9);
    int Ci = rng.uniform_int(1, 4), Co = rng.uniform_int(1, 5);
    int k = 2 * rng.uniform_int(0, 2) + 1;
    int stride = rng.uniform_int(1, 2);
    auto xd = random_vec(rng, std::size_t(H) * W * Ci);
    auto kd = random_vec(rng, std::size_t(k) * k * Ci * Co);
    auto bd = random_vec(rng, Co);
    Graph<double> g;
    auto y = g.conv2d(g.leaf({H, W, Ci}, xd, false),
                      g.constant({k, k, Ci, Co}, kd), g.constant({Co}, bd),
                      stride);
    auto ref = conv_reference(xd, H, W, Ci, kd, k, bd, Co, stride);
    REQUIRE(y.value().size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i)
      CHECK(y.value()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(7);
  const int H = 5, W = 5, Ci = 2, Co = 2, k = 3;
  auto kd = random_vec(rng, std::size_t(k) * k * Ci * Co);
  auto bd = random_vec(rng, Co);
  auto wd = random_vec(rng, std::size_t(H) * W * Co);  // loss weights

  for (int stride : {1, 2}) {
    // w.r.t. input
    auto f_input = [&](const std::vector<double>& x,
                       std::vector<double>* grad) {
      Graph<double> g;
      auto xv = g.leaf({H, W, Ci}, x, grad != nullptr);
      auto y = g.conv2d(xv, g.constant({k, k, Ci, Co}, kd),
                        g.constant({Co}, bd), stride);
      int Ho = y.shape()[0], Wo = y.shape()[1];
      std::vector<double> w(wd.begin(),
                            wd.begin() + std::size_t(Ho) * Wo * Co);
      auto loss =
          g.reduce(g.mul(y, g.constant({Ho, Wo, Co}, w)), Red::Sum, {0, 1, 2},
                   false);
      if (grad) {
        g.backward(loss);
        auto gx = xv.grad();
        grad->assign(gx.begin(), gx.end());
      }
      return loss.value()[0];
    };
    auto x0 = random_vec(rng, std::size_t(H) * W * Ci);
    CHECK(grad_check<double>(f_input, x0, 1e-5) < 1e-5);

    // w.r.t. kernel and bias, concatenated
    auto f_params = [&](const std::vector<double>& p,
                        std::vector<double>* grad) {
      Graph<double> g;
      std::vector<double> kk(p.begin(), p.begin() + kd.size());
      std::vector<double> bb(p.begin() + kd.size(), p.end());
      auto kv = g.leaf({k, k, Ci, Co}, kk, grad != nullptr);
      auto bv = g.leaf({Co}, bb, grad != nullptr);
      auto y = g.conv2d(g.constant({H, W, Ci}, x0), kv, bv, stride);
      int Ho = y.shape()[0], Wo = y.shape()[1];
      std::vector<double> w(wd.begin(),
                            wd.begin() + std::size_t(Ho) * Wo * Co);
      auto loss =
          g.reduce(g.mul(y, g.constant({Ho, Wo, Co}, w)), Red::Sum, {0, 1, 2},
                   false);
      if (grad) {
        g.backward(loss);
        grad->clear();
        grad->insert(grad->end(), kv.grad().begin(), kv.grad().end());
        grad->insert(grad->end(), bv.grad().begin(), bv.grad().end());
      }
      return loss.value()[0];
    };
    std::vector<double> p0 = kd;
    p0.insert(p0.end(), bd.begin(), bd.end());
    CHECK(grad_check<double>(f_params, p0, 1e-5) < 1e-5);
  }
}

TEST_CASE("conv2d rejects mismatched shapes with a dim in the message") {
  Graph<double> g;
  auto x = g.leaf({4, 4, 3}, std::vector<double>(48, 0.0), false);
  auto k = g.constant({3, 3, 2, 1}, std::vector<double>(18, 0.0));
  auto b = g.constant({1}, {0.0});
  CHECK_THROWS_WITH_AS(g.conv2d(x, k, b, 1),
                       doctest::Contains("input channels 3"), ShapeError);
}

TEST_CASE("conv2d_transpose doubles spatial dims") {
  Graph<double> g;
  Rng rng(3);
  auto xd = random_vec(rng, 16 * 2);
  auto kd = random_vec(rng, 3 * 3 * 1 * 2);
  auto x = g.leaf({4, 4, 2}, xd, false);
  auto k = g.constant({3, 3, 1, 2}, kd);
  auto b = g.constant({1}, {0.0});
  auto y = g.conv2d_transpose(x, k, b, 2);
  CHECK(y.shape() == Shape{8, 8, 1});
}

TEST_CASE("conv2d_transpose forward equals conv backward-data") {
  Rng rng(11);
  const int H = 8, W = 6, Ci = 3, Co = 2, k = 5, stride = 2;
  const int h = H / stride, w = W / stride;
  auto xd = random_vec(rng, std::size_t(H) * W * Ci);
  auto kd = random_vec(rng, std::size_t(k) * k * Ci * Co);
  auto ud = random_vec(rng, std::size_t(h) * w * Co);  // upstream grad

  // Route 1: conv x -> y, backward from loss = sum(y * u); input grad is
  // the backward-data pass of u.
  Graph<double> g1;
  auto xv = g1.leaf({H, W, Ci}, xd, true);
  auto y = g1.conv2d(xv, g1.constant({k, k, Ci, Co}, kd),
                     g1.constant({Co}, std::vector<double>(Co, 0.0)), stride);
  auto loss = g1.reduce(g1.mul(y, g1.constant({h, w, Co}, ud)), Red::Sum,
                        {0, 1, 2}, false);
  g1.backward(loss);

  // Route 2: transpose-conv forward on u with the same kernel.
  Graph<double> g2;
  auto t = g2.conv2d_transpose(g2.leaf({h, w, Co}, ud, false),
                               g2.constant({k, k, Ci, Co}, kd),
                               g2.constant({Ci}, std::vector<double>(Ci, 0.0)),
                               stride);
  REQUIRE(t.shape() == Shape{H, W, Ci});
  for (std::size_t i = 0; i < xd.size(); ++i)
    CHECK(t.value()[i] == doctest::Approx(xv.grad()[i]).epsilon(1e-12));
}

TEST_CASE("conv2d_transpose gradients match finite differences") {
  Rng rng(13);
  const int h = 3, w = 4, Ci = 2, Co = 2, k = 3, stride = 2;
  auto kd = random_vec(rng, std::size_t(k) * k * Ci * Co);
  auto bd = random_vec(rng, Ci);
  auto wd = random_vec(rng, std::size_t(h) * stride * w * stride * Ci);

  auto f = [&](const std::vector<double>& p, std::vector<double>* grad) {
    Graph<double> g;
    std::size_t nx = std::size_t(h) * w * Co;
    std::vector<double> xx(p.begin(), p.begin() + nx);
    std::vector<double> kk(p.begin() + nx, p.begin() + nx + kd.size());
    std::vector<double> bb(p.begin() + nx + kd.size(), p.end());
    auto xv = g.leaf({h, w, Co}, xx, grad != nullptr);
    auto kv = g.leaf({k, k, Ci, Co}, kk, grad != nullptr);
    auto bv = g.leaf({Ci}, bb, grad != nullptr);
    auto y = g.conv2d_transpose(xv, kv, bv, stride);
    auto loss = g.reduce(
        g.mul(y, g.constant({h * stride, w * stride, Ci}, wd)), Red::Sum,
        {0, 1, 2}, false);
    if (grad) {
      g.backward(loss);
      grad->clear();
      grad->insert(grad->end(), xv.grad().begin(), xv.grad().end());
      grad->insert(grad->end(), kv.grad().begin(), kv.grad().end());
      grad->insert(grad->end(), bv.grad().begin(), bv.grad().end());
    }
    return loss.value()[0];
  };
  auto p0 = random_vec(rng, std::size_t(h) * w * Co);
  p0.insert(p0.end(), kd.begin(), kd.end());
  p0.insert(p0.end(), bd.begin(), bd.end());
  CHECK(grad_check<double>(f, p0, 1e-5) < 1e-5);
}

TEST_CASE("activations: fixed points and ranges") {
  Graph<double> g;
  auto x = g.leaf({1}, {0.0}, false);
  CHECK(g.activation(x, Act::Sigmoid).value()[0] == doctest::Approx(0.5));
  CHECK(g.activation(x, Act::Tanh).value()[0] == doctest::Approx(0.0));
  CHECK(g.activation(x, Act::Mish).value()[0] == doctest::Approx(0.0));

  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    auto v = g.leaf({1}, {rng.uniform(-15.0, 15.0)}, false);
    double s = g.activation(v, Act::Sigmoid).value()[0];
    double t = g.activation(v, Act::Tanh).value()[0];
    CHECK(s > 0.0);
    CHECK(s < 1.0);
    CHECK(t > -1.0);
    CHECK(t < 1.0);
  }
}

TEST_CASE("activation gradients match finite differences") {
  Rng rng(17);
  for (Act kind : {Act::Sigmoid, Act::Tanh, Act::Relu, Act::Mish,
                   Act::Softplus, Act::Linear}) {
    auto wd = random_vec(rng, 12);
    auto f = [&](const std::vector<double>& x, std::vector<double>* grad) {
      Graph<double> g;
      auto xv = g.leaf({3, 4}, x, grad != nullptr);
      auto loss = g.reduce(
          g.mul(g.activation(xv, kind), g.constant({3, 4}, wd)), Red::Sum,
          {0, 1}, false);
      if (grad) {
        g.backward(loss);
        grad->assign(xv.grad().begin(), xv.grad().end());
      }
      return loss.value()[0];
    };
    // Keep relu inputs away from the kink.
    std::vector<double> x0 = random_vec(rng, 12);
    for (double& v : x0)
      if (std::abs(v) < 0.05) v += 0.1;
    CHECK(grad_check<double>(f, x0, 1e-6) < 1e-5);
  }
}

TEST_CASE("reduce: basics and gradients") {
  Graph<double> g;
  auto c = g.leaf({3, 4}, std::vector<double>(12, 2.5), false);
  CHECK(g.reduce(c, Red::Mean, {0, 1}, false).value()[0] ==
        doctest::Approx(2.5));

  Rng rng(19);
  auto xd = random_vec(rng, 12);
  auto x = g.leaf({3, 4}, xd, false);
  double total = g.reduce(x, Red::Sum, {0, 1}, false).value()[0];
  double mean = g.reduce(x, Red::Mean, {0, 1}, false).value()[0];
  CHECK(mean == doctest::Approx(total / 12.0));

  CHECK_THROWS_AS(g.reduce(x, Red::Sum, {}, false), ShapeError);

  for (Red kind : {Red::Sum, Red::Mean, Red::Max}) {
    for (std::vector<int> axes :
         std::vector<std::vector<int>>{{0}, {1}, {0, 1}}) {
      auto wd = random_vec(rng, 12);
      auto f = [&](const std::vector<double>& xin,
                   std::vector<double>* grad) {
        Graph<double> gg;
        auto xv = gg.leaf({3, 4}, xin, grad != nullptr);
        auto r = gg.reduce(xv, kind, axes, false);
        std::vector<double> w(wd.begin(), wd.begin() + numel(r.shape()));
        auto loss = gg.reduce(gg.mul(r, gg.constant(r.shape(), w)), Red::Sum,
                              {0}, false);
        if (grad) {
          gg.backward(loss);
          grad->assign(xv.grad().begin(), xv.grad().end());
        }
        return loss.value()[0];
      };
      // Distinct, well-separated values so max arguments are stable.
      std::vector<double> x0(12);
      for (int i = 0; i < 12; ++i) x0[i] = 0.37 * i - 2.0;
      for (int i = 0; i < 12; ++i) std::swap(x0[i], x0[rng.uniform_int(0, 11)]);
      CHECK(grad_check<double>(f, x0, 1e-6) < 1e-6);
    }
  }
}

TEST_CASE("reduce max routes gradient to first maximal element") {
  Graph<double> g;
  auto x = g.leaf({4}, {1.0, 3.0, 3.0, 2.0}, true);
  auto m = g.reduce(x, Red::Max, {0}, false);
  CHECK(m.value()[0] == doctest::Approx(3.0));
  g.backward(m);
  CHECK(x.grad()[0] == doctest::Approx(0.0));
  CHECK(x.grad()[1] == doctest::Approx(1.0));  // first of the tie
  CHECK(x.grad()[2] == doctest::Approx(0.0));
  CHECK(x.grad()[3] == doctest::Approx(0.0));
}

TEST_CASE("elementwise identities and broadcasting") {
  Graph<double> g;
  Rng rng(23);
  auto xd = random_vec(rng, 6);
  auto x = g.leaf({2, 3}, xd, false);
  auto zero = g.constant({2, 3}, std::vector<double>(6, 0.0));
  auto one = g.constant({2, 3}, std::vector<double>(6, 1.0));
  auto sum = g.add(x, zero);
  auto prod = g.mul(x, one);
  for (int i = 0; i < 6; ++i) {
    CHECK(sum.value()[i] == doctest::Approx(xd[i]));
    CHECK(prod.value()[i] == doctest::Approx(xd[i]));
  }

  // [2,3] * [1,3] broadcasts rows.
  auto row = g.constant({1, 3}, {1.0, 2.0, 3.0});
  auto scaled = g.mul(x, row);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c)
      CHECK(scaled.value()[r * 3 + c] ==
            doctest::Approx(xd[r * 3 + c] * (c + 1)));

  auto bad = g.constant({2, 2}, std::vector<double>(4, 0.0));
  CHECK_THROWS_AS(g.add(x, bad), ShapeError);
}

TEST_CASE("elementwise and dense gradients match finite differences") {
  Rng rng(29);
  for (Ew kind : {Ew::Add, Ew::Sub, Ew::Mul, Ew::Div}) {
    auto f = [&](const std::vector<double>& p, std::vector<double>* grad) {
      Graph<double> g;
      std::vector<double> aa(p.begin(), p.begin() + 6);
      std::vector<double> bb(p.begin() + 6, p.begin() + 9);
      auto av = g.leaf({2, 3}, aa, grad != nullptr);
      auto bv = g.leaf({1, 3}, bb, grad != nullptr);
      auto loss =
          g.reduce(g.elementwise(av, bv, kind), Red::Sum, {0, 1}, false);
      if (grad) {
        g.backward(loss);
        grad->clear();
        grad->insert(grad->end(), av.grad().begin(), av.grad().end());
        grad->insert(grad->end(), bv.grad().begin(), bv.grad().end());
      }
      return loss.value()[0];
    };
    std::vector<double> p0 = random_vec(rng, 9);
    // Keep divisors away from zero.
    for (int i = 6; i < 9; ++i) p0[i] += (p0[i] >= 0 ? 1.5 : -1.5);
    CHECK(grad_check<double>(f, p0, 1e-6) < 1e-6);
  }

  // dense with identity weights and zero bias leaves input unchanged
  {
    Graph<double> g;
    std::vector<double> eye(16, 0.0);
    for (int i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
    auto xd = random_vec(rng, 4);
    auto y = g.dense(g.leaf({4}, xd, false), g.constant({4, 4}, eye),
                     g.constant({4}, std::vector<double>(4, 0.0)));
    for (int i = 0; i < 4; ++i) CHECK(y.value()[i] == doctest::Approx(xd[i]));
  }

  auto fdense = [&](const std::vector<double>& p, std::vector<double>* grad) {
    Graph<double> g;
    std::vector<double> xx(p.begin(), p.begin() + 3);
    std::vector<double> ww(p.begin() + 3, p.begin() + 9);
    std::vector<double> bb(p.begin() + 9, p.end());
    auto xv = g.leaf({3}, xx, grad != nullptr);
    auto wv = g.leaf({3, 2}, ww, grad != nullptr);
    auto bv = g.leaf({2}, bb, grad != nullptr);
    auto y = g.dense(xv, wv, bv);
    auto loss = g.reduce(g.mul(y, y), Red::Sum, {0}, false);
    if (grad) {
      g.backward(loss);
      grad->clear();
      grad->insert(grad->end(), xv.grad().begin(), xv.grad().end());
      grad->insert(grad->end(), wv.grad().begin(), wv.grad().end());
      grad->insert(grad->end(), bv.grad().begin(), bv.grad().end());
    }
    return loss.value()[0];
  };
  CHECK(grad_check<double>(fdense, random_vec(rng, 11), 1e-6) < 1e-6);
}

TEST_CASE("backward: analytic gradients of simple losses") {
  Graph<double> g;
  Rng rng(31);
  auto xd = random_vec(rng, 8);

  auto x = g.leaf({8}, xd, true);
  auto s = g.reduce(x, Red::Sum, {0}, false);
  g.backward(s);
  for (int i = 0; i < 8; ++i) CHECK(x.grad()[i] == doctest::Approx(1.0));

  Graph<double> g2;
  auto x2 = g2.leaf({8}, xd, true);
  auto half_sq = g2.scale(g2.reduce(g2.mul(x2, x2), Red::Sum, {0}, false),
                          0.5);
  g2.backward(half_sq);
  for (int i = 0; i < 8; ++i) CHECK(x2.grad()[i] == doctest::Approx(xd[i]));

  // Non-scalar loss is rejected.
  Graph<double> g3;
  auto x3 = g3.leaf({2, 2}, std::vector<double>(4, 0.0), true);
  CHECK_THROWS_AS(g3.backward(x3), ShapeError);
}

TEST_CASE("backward sums contributions of shared subexpressions") {
  Graph<double> g;
  auto x = g.leaf({3}, {0.4, -0.7, 1.3}, true);
  // y = sum(x*x) + sum(x) : dy/dx = 2x + 1
  auto y = g.add(g.reduce(g.mul(x, x), Red::Sum, {0}, false),
                 g.reduce(x, Red::Sum, {0}, false));
  g.backward(y);
  for (int i = 0; i < 3; ++i)
    CHECK(x.grad()[i] == doctest::Approx(2.0 * x.value()[i] + 1.0));
}

TEST_CASE("repeated backward without reset accumulates leaf gradients") {
  Graph<double> g;
  auto x = g.leaf({3}, {1.0, 2.0, 3.0}, true);
  auto s = g.reduce(x, Red::Sum, {0}, false);
  g.backward(s);
  g.backward(s);
  for (int i = 0; i < 3; ++i) CHECK(x.grad()[i] == doctest::Approx(2.0));
  g.zero_grads();
  g.backward(s);
  for (int i = 0; i < 3; ++i) CHECK(x.grad()[i] == doctest::Approx(1.0));
}

TEST_CASE("composed network loss passes finite-difference check") {
  Rng rng(37);
  const int H = 6, W = 6;
  auto k1 = random_vec(rng, 3 * 3 * 1 * 2);
  auto k2 = random_vec(rng, 3 * 3 * 2 * 1);
  auto f = [&](const std::vector<double>& x, std::vector<double>* grad) {
    Graph<double> g;
    auto xv = g.leaf({H, W, 1}, x, grad != nullptr);
    auto h1 = g.activation(
        g.conv2d(xv, g.constant({3, 3, 1, 2}, k1),
                 g.constant({2}, {0.1, -0.2}), 2),
        Act::Mish);
    auto h2 = g.activation(
        g.conv2d(h1, g.constant({3, 3, 2, 1}, k2), g.constant({1}, {0.05}),
                 1),
        Act::Sigmoid);
    auto loss = g.reduce(g.mul(h2, h2), Red::Mean, {0, 1, 2}, false);
    if (grad) {
      g.backward(loss);
      grad->assign(xv.grad().begin(), xv.grad().end());
    }
    return loss.value()[0];
  };
  CHECK(grad_check<double>(f, random_vec(rng, H * W), 1e-5) < 1e-5);
}

TEST_CASE("slice_cell / concat / sqrt / add_n gradients") {
  Rng rng(41);
  auto f = [&](const std::vector<double>& x, std::vector<double>* grad) {
    Graph<double> g;
    auto xv = g.leaf({2, 2, 2}, x, grad != nullptr);
    auto a = g.slice_cell(xv, 0, 1);
    auto b = g.slice_cell(xv, 1, 0);
    auto dot = g.reduce(g.mul(a, b), Red::Sum, {0}, false);
    auto na = g.sqrt_op(g.reduce(g.mul(a, a), Red::Sum, {0}, false));
    auto nb = g.sqrt_op(g.reduce(g.mul(b, b), Red::Sum, {0}, false));
    auto sim = g.div(dot, g.mul(na, nb));
    auto cat = g.concat_channels(xv, xv);
    auto extra = g.reduce(cat, Red::Mean, {0, 1, 2}, false);
    auto loss = g.add_n({sim, extra, sim});
    if (grad) {
      g.backward(loss);
      grad->assign(xv.grad().begin(), xv.grad().end());
    }
    return loss.value()[0];
  };
  // Bounded away from zero so norms are well-conditioned.
  std::vector<double> x0 = random_vec(rng, 8);
  for (double& v : x0) v += (v >= 0 ? 0.5 : -0.5);
  CHECK(grad_check<double>(f, x0, 1e-6) < 1e-6);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged at t=1") {
  std::vector<double> p = {1.0, -2.0, 3.0};
  std::vector<double> orig = p;
  std::vector<double> zero(3, 0.0);
  AdamState<double> st;
  adam_step<double>({&p}, {std::span<const double>(zero)}, {"p"}, st, 0.1);
  CHECK(st.t == 1);
  for (int i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(orig[i]));
}

TEST_CASE("adam: first step size is about the learning rate") {
  std::vector<double> p = {1.0, -2.0, 3.0};
  std::vector<double> g = {0.3, -4.0, 0.001};
  AdamState<double> st;
  adam_step<double>({&p}, {std::span<const double>(g)}, {"p"}, st, 0.05);
  CHECK(p[0] == doctest::Approx(1.0 - 0.05).epsilon(1e-4));
  CHECK(p[1] == doctest::Approx(-2.0 + 0.05).epsilon(1e-4));
  CHECK(p[2] == doctest::Approx(3.0 - 0.05).epsilon(1e-4));
}

TEST_CASE("adam: 100 steps reach the quadratic bowl minimum within 1e-3") {
  // loss = 0.5 * sum((p - c)^2), minimum at c.
  std::vector<double> c = {3.0, -1.0, 0.25};
  std::vector<double> p = {4.0, -2.0, 1.25};
  AdamState<double> st;
  for (int step = 0; step < 100; ++step) {
    std::vector<double> g(3);
    for (int i = 0; i < 3; ++i) g[i] = p[i] - c[i];
    adam_step<double>({&p}, {std::span<const double>(g)}, {"p"}, st, 0.15);
  }
  for (int i = 0; i < 3; ++i) CHECK(std::abs(p[i] - c[i]) < 1e-3);
}

TEST_CASE("adam: NaN gradient raises an error naming the parameter") {
  std::vector<double> p = {1.0};
  std::vector<double> g = {std::nan("")};
  AdamState<double> st;
  CHECK_THROWS_WITH_AS(
      adam_step<double>({&p}, {std::span<const double>(g)}, {"stem.kernel"},
                        st, 0.1),
      doctest::Contains("stem.kernel"), Error);
}

TEST_CASE("grad_check: linear function error is at machine-epsilon level") {
  auto f = [](const std::vector<double>& x, std::vector<double>* grad) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (i + 1.0) * x[i];
    if (grad) {
      grad->resize(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) (*grad)[i] = i + 1.0;
    }
    return s;
  };
  CHECK(grad_check<double>(f, {0.2, -0.4, 0.6}, 1e-3) < 1e-9);
}

TEST_CASE("grad_check: deliberately wrong gradient is detected") {
  auto f = [](const std::vector<double>& x, std::vector<double>* grad) {
    double s = 0.0;
    for (double v : x) s += v * v;
    if (grad) grad->assign(x.size(), 1.0);  // wrong on purpose
    return s;
  };
  CHECK(grad_check<double>(f, {0.7, -1.1}, 1e-5) > 1e-2);
}

TEST_CASE("all differentiable ops pass randomized gradient checks") {
  // One randomized end-to-end expression per seed touching every op kind.
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + seed);
    const int H = 4 + 2 * rng.uniform_int(0, 1);
    const int W = 4 + 2 * rng.uniform_int(0, 1);
    const int Ci = rng.uniform_int(1, 3);
    const int Co = rng.uniform_int(1, 3);
    auto kd = random_vec(rng, 3 * 3 * std::size_t(Ci) * Co);
    auto bd = random_vec(rng, Co);
    Act act = std::vector<Act>{Act::Sigmoid, Act::Tanh, Act::Mish,
                               Act::Softplus}[rng.uniform_int(0, 3)];
    auto f = [&](const std::vector<double>& x, std::vector<double>* grad) {
      Graph<double> g;
      auto xv = g.leaf({H, W, Ci}, x, grad != nullptr);
      auto c = g.conv2d(xv, g.constant({3, 3, Ci, Co}, kd),
                        g.constant({Co}, bd), 2);
      auto a = g.activation(c, act);
      auto pooled = g.reduce(a, Red::Mean, {0, 1}, true);
      auto scaled = g.mul(a, pooled);
      auto mx = g.reduce(scaled, Red::Max, {0, 1}, false);
      auto total = g.add(g.reduce(scaled, Red::Mean, {0, 1, 2}, false),
                         g.reduce(mx, Red::Sum, {0}, false));
      if (grad) {
        g.backward(total);
        grad->assign(xv.grad().begin(), xv.grad().end());
      }
      return total.value()[0];
    };
    auto x0 = random_vec(rng, std::size_t(H) * W * Ci);
    CHECK(grad_check<double>(f, x0, 1e-5) < 1e-4);
  }
}

TEST_CASE("operations are bit-deterministic across repeated runs") {
  Rng rng(71);
  auto xd = random_vec(rng, 9 * 9 * 3);
  auto kd = random_vec(rng, 5 * 5 * 3 * 4);
  auto bd = random_vec(rng, 4);
  std::vector<float> fx(xd.begin(), xd.end());
  std::vector<float> fk(kd.begin(), kd.end());
  std::vector<float> fb(bd.begin(), bd.end());

  auto run = [&]() {
    Graph<float> g;
    auto x = g.leaf({9, 9, 3}, fx, true);
    auto y = g.activation(g.conv2d(x, g.constant({5, 5, 3, 4}, fk),
                                   g.constant({4}, fb), 2),
                          Act::Mish);
    auto loss = g.reduce(y, Red::Mean, {0, 1, 2}, false);
    g.backward(loss);
    std::vector<float> out(y.value().begin(), y.value().end());
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    return out;
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
