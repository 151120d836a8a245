#include "cropway/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

namespace cropway::ag {

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= std::size_t(d);
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace {

// Same-padding amounts for an H -> ceil(H/stride) convolution.
struct Pad {
  int before = 0;
  int after = 0;
};

Pad same_pad(int size, int k, int stride) {
  int out = (size + stride - 1) / stride;
  int total = std::max((out - 1) * stride + k - size, 0);
  return {total / 2, total - total / 2};
}

// ---------------------------------------------------------------------------
// Convolution kernels.
//
// Layouts: input H×W×Ci, kernel k×k×Ci×Co, output Ho×Wo×Co, all row-major
// with channels innermost. The hot path keeps a 16-lane accumulator in
// vector registers (the backbone channel width); everything else takes the
// generic loop. Per-element accumulation order is fixed in both paths.
// ---------------------------------------------------------------------------

template <typename T>
struct Vec16;
template <>
struct Vec16<float> {
  typedef float type __attribute__((vector_size(64), aligned(4)));
};
template <>
struct Vec16<double> {
  typedef double type __attribute__((vector_size(128), aligned(8)));
};

template <typename T>
void conv_fwd_lanes16(const T* __restrict x, int H, int W, int Ci,
                      const T* __restrict ker, int k,
                      const T* __restrict bias, int stride, Pad ph, Pad pw,
                      T* __restrict y, int Ho, int Wo) {
  using V = typename Vec16<T>::type;
  const T zeros[16] = {};
  const V vbias = *(const V*)(bias ? bias : zeros);
  for (int oy = 0; oy < Ho; ++oy) {
    const int iy0 = oy * stride - ph.before;
    for (int ox = 0; ox < Wo; ++ox) {
      const int ix0 = ox * stride - pw.before;
      V acc = vbias;
      for (int ky = 0; ky < k; ++ky) {
        const int iy = iy0 + ky;
        if (unsigned(iy) >= unsigned(H)) continue;
        const T* __restrict xrow = x + std::size_t(iy) * W * Ci;
        const T* __restrict krow =
            ker + std::size_t(ky) * k * Ci * 16;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ix0 + kx;
          if (unsigned(ix) >= unsigned(W)) continue;
          const T* __restrict xp = xrow + std::size_t(ix) * Ci;
          const T* __restrict kp = krow + std::size_t(kx) * Ci * 16;
          for (int ci = 0; ci < Ci; ++ci)
            acc += xp[ci] * (*(const V*)(kp + std::size_t(ci) * 16));
        }
      }
      *(V*)(y + (std::size_t(oy) * Wo + ox) * 16) = acc;
    }
  }
}

template <typename T>
void conv_fwd_any(const T* x, int H, int W, int Ci, const T* ker, int k,
                  const T* bias, int stride, Pad ph, Pad pw, T* y, int Ho,
                  int Wo, int Co) {
  std::vector<T> acc(Co);
  for (int oy = 0; oy < Ho; ++oy) {
    const int iy0 = oy * stride - ph.before;
    for (int ox = 0; ox < Wo; ++ox) {
      const int ix0 = ox * stride - pw.before;
      for (int c = 0; c < Co; ++c) acc[c] = bias ? bias[c] : T(0);
      for (int ky = 0; ky < k; ++ky) {
        const int iy = iy0 + ky;
        if (unsigned(iy) >= unsigned(H)) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ix0 + kx;
          if (unsigned(ix) >= unsigned(W)) continue;
          const T* xp = x + (std::size_t(iy) * W + ix) * Ci;
          const T* kp = ker + (std::size_t(ky) * k + kx) * Ci * Co;
          for (int ci = 0; ci < Ci; ++ci) {
            const T xv = xp[ci];
            const T* kc = kp + std::size_t(ci) * Co;
            for (int c = 0; c < Co; ++c) acc[c] += xv * kc[c];
          }
        }
      }
      T* yp = y + (std::size_t(oy) * Wo + ox) * Co;
      for (int c = 0; c < Co; ++c) yp[c] = acc[c];
    }
  }
}

template <typename T>
void conv_forward(const T* x, int H, int W, int Ci, const T* ker, int k,
                  const T* bias, int stride, Pad ph, Pad pw, T* y, int Ho,
                  int Wo, int Co) {
  if (Co == 16) {
    conv_fwd_lanes16(x, H, W, Ci, ker, k, bias, stride, ph, pw, y, Ho, Wo);
    return;
  }
  conv_fwd_any(x, H, W, Ci, ker, k, bias, stride, ph, pw, y, Ho, Wo, Co);
}

// Kernel transposed to k×k×Co×Ci so the backward-data inner loop is
// contiguous over Ci.
template <typename T>
std::vector<T> transpose_kernel(const T* ker, int k, int Ci, int Co) {
  std::vector<T> kt(std::size_t(k) * k * Ci * Co);
  for (int t = 0; t < k * k; ++t) {
    const T* src = ker + std::size_t(t) * Ci * Co;
    T* dst = kt.data() + std::size_t(t) * Ci * Co;
    for (int ci = 0; ci < Ci; ++ci)
      for (int co = 0; co < Co; ++co)
        dst[std::size_t(co) * Ci + ci] = src[std::size_t(ci) * Co + co];
  }
  return kt;
}

// dx[iy][ix][ci] += sum over taps of dy[oy][ox][co] * ker[ky][kx][ci][co],
// where iy = oy*stride + ky - pad. `kt` is the transposed kernel (k×k×Co×Ci).
template <typename T>
void conv_bwd_data_lanes16(const T* __restrict dy, int Ho, int Wo, int Co,
                           const T* __restrict kt, int k, int stride, Pad ph,
                           Pad pw, T* __restrict dx, int H, int W) {
  using V = typename Vec16<T>::type;
  const T zeros[16] = {};
  const V vzero = *(const V*)zeros;
  for (int iy = 0; iy < H; ++iy) {
    for (int ix = 0; ix < W; ++ix) {
      V acc = vzero;
      for (int ky = 0; ky < k; ++ky) {
        const int ny = iy + ph.before - ky;
        if (ny % stride != 0) continue;
        const int oy = ny / stride;
        if (unsigned(oy) >= unsigned(Ho)) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int nx = ix + pw.before - kx;
          if (nx % stride != 0) continue;
          const int ox = nx / stride;
          if (unsigned(ox) >= unsigned(Wo)) continue;
          const T* __restrict yp = dy + (std::size_t(oy) * Wo + ox) * Co;
          const T* __restrict kp =
              kt + (std::size_t(ky) * k + kx) * std::size_t(16) * Co;
          for (int co = 0; co < Co; ++co)
            acc += yp[co] * (*(const V*)(kp + std::size_t(co) * 16));
        }
      }
      T* __restrict xp = dx + (std::size_t(iy) * W + ix) * 16;
      *(V*)xp = *(const V*)xp + acc;
    }
  }
}

template <typename T>
void conv_bwd_data_any(const T* dy, int Ho, int Wo, int Co, const T* kt,
                       int k, int stride, Pad ph, Pad pw, T* dx, int H, int W,
                       int Ci) {
  std::vector<T> acc(Ci);
  for (int iy = 0; iy < H; ++iy) {
    for (int ix = 0; ix < W; ++ix) {
      std::fill(acc.begin(), acc.end(), T(0));
      for (int ky = 0; ky < k; ++ky) {
        const int ny = iy + ph.before - ky;
        if (ny % stride != 0) continue;
        const int oy = ny / stride;
        if (unsigned(oy) >= unsigned(Ho)) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int nx = ix + pw.before - kx;
          if (nx % stride != 0) continue;
          const int ox = nx / stride;
          if (unsigned(ox) >= unsigned(Wo)) continue;
          const T* yp = dy + (std::size_t(oy) * Wo + ox) * Co;
          const T* kp = kt + (std::size_t(ky) * k + kx) * Ci * Co;
          for (int co = 0; co < Co; ++co) {
            const T yv = yp[co];
            const T* kc = kp + std::size_t(co) * Ci;
            for (int c = 0; c < Ci; ++c) acc[c] += yv * kc[c];
          }
        }
      }
      T* xp = dx + (std::size_t(iy) * W + ix) * Ci;
      for (int c = 0; c < Ci; ++c) xp[c] += acc[c];
    }
  }
}

template <typename T>
void conv_backward_data(const T* dy, int Ho, int Wo, int Co, const T* ker,
                        int k, int stride, Pad ph, Pad pw, T* dx, int H,
                        int W, int Ci) {
  std::vector<T> kt = transpose_kernel(ker, k, Ci, Co);
  if (Ci == 16) {
    conv_bwd_data_lanes16(dy, Ho, Wo, Co, kt.data(), k, stride, ph, pw, dx, H,
                          W);
    return;
  }
  conv_bwd_data_any(dy, Ho, Wo, Co, kt.data(), k, stride, ph, pw, dx, H, W,
                    Ci);
}

// dk[ky][kx][ci][co] += x[iy][ix][ci] * dy[oy][ox][co].
template <typename T>
void conv_bwd_kernel_lanes16(const T* __restrict x, int H, int W, int Ci,
                             const T* __restrict dy, int Ho, int Wo, int k,
                             int stride, Pad ph, Pad pw, T* __restrict dk) {
  using V = typename Vec16<T>::type;
  for (int ky = 0; ky < k; ++ky) {
    for (int kx = 0; kx < k; ++kx) {
      T* __restrict dkp = dk + (std::size_t(ky) * k + kx) * Ci * 16;
      for (int oy = 0; oy < Ho; ++oy) {
        const int iy = oy * stride - ph.before + ky;
        if (unsigned(iy) >= unsigned(H)) continue;
        for (int ox = 0; ox < Wo; ++ox) {
          const int ix = ox * stride - pw.before + kx;
          if (unsigned(ix) >= unsigned(W)) continue;
          const T* __restrict xp = x + (std::size_t(iy) * W + ix) * Ci;
          const V dyv = *(const V*)(dy + (std::size_t(oy) * Wo + ox) * 16);
          for (int ci = 0; ci < Ci; ++ci) {
            V* row = (V*)(dkp + std::size_t(ci) * 16);
            *row = *row + xp[ci] * dyv;
          }
        }
      }
    }
  }
}

template <typename T>
void conv_backward_kernel(const T* x, int H, int W, int Ci, const T* dy,
                          int Ho, int Wo, int Co, int k, int stride, Pad ph,
                          Pad pw, T* dk) {
  if (Co == 16) {
    conv_bwd_kernel_lanes16(x, H, W, Ci, dy, Ho, Wo, k, stride, ph, pw, dk);
    return;
  }
  for (int ky = 0; ky < k; ++ky) {
    for (int kx = 0; kx < k; ++kx) {
      T* dkp = dk + (std::size_t(ky) * k + kx) * Ci * Co;
      for (int oy = 0; oy < Ho; ++oy) {
        const int iy = oy * stride - ph.before + ky;
        if (unsigned(iy) >= unsigned(H)) continue;
        for (int ox = 0; ox < Wo; ++ox) {
          const int ix = ox * stride - pw.before + kx;
          if (unsigned(ix) >= unsigned(W)) continue;
          const T* __restrict xp = x + (std::size_t(iy) * W + ix) * Ci;
          const T* __restrict yp = dy + (std::size_t(oy) * Wo + ox) * Co;
          for (int ci = 0; ci < Ci; ++ci) {
            const T xv = xp[ci];
            T* __restrict row = dkp + std::size_t(ci) * Co;
            for (int co = 0; co < Co; ++co) row[co] += xv * yp[co];
          }
        }
      }
    }
  }
}

template <typename T>
void conv_backward_bias(const T* dy, std::size_t cells, int Co, T* db) {
  for (std::size_t i = 0; i < cells; ++i) {
    const T* yp = dy + i * Co;
    for (int c = 0; c < Co; ++c) db[c] += yp[c];
  }
}

// ---------------------------------------------------------------------------
// Scalar math helpers
// ---------------------------------------------------------------------------

template <typename T>
T sigmoid_fn(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
T softplus_fn(T x) {
  if (x > T(20)) return x;
  return std::log1p(std::exp(x));
}

// tanh(softplus(x)) with a single exp: with s = e^x, tanh(log(1+s)) =
// ((1+s)^2 - 1) / ((1+s)^2 + 1). The +-20 cutoffs are exact at working
// precision.
template <typename T>
T tanh_softplus_fn(T x) {
  if (x > T(20)) return T(1);
  if (x < T(-20)) return T(0);
  const T s = std::exp(x);
  const T q = s * s + T(2) * s;
  return q / (q + T(2));
}

template <typename T>
T mish_fn(T x) {
  return x * tanh_softplus_fn(x);
}

// d/dx mish = tsp + x * (1 - tsp^2) * sigmoid(x), sharing one exp.
template <typename T>
T mish_grad_fn(T x) {
  if (x > T(20)) return T(1);
  if (x < T(-20)) return T(0);
  const T s = std::exp(x);
  const T q = s * s + T(2) * s;
  const T tsp = q / (q + T(2));
  const T sig = s / (T(1) + s);
  return tsp + x * (T(1) - tsp * tsp) * sig;
}

// ---------------------------------------------------------------------------
// Broadcasting iteration (rank <= 4, axes equal or 1)
// ---------------------------------------------------------------------------

struct Bcast {
  int dims[4] = {1, 1, 1, 1};
  std::size_t sa[4] = {0, 0, 0, 0};
  std::size_t sb[4] = {0, 0, 0, 0};
  std::size_t so[4] = {0, 0, 0, 0};
  Shape out;
};

Bcast make_bcast(const Shape& a, const Shape& b, const char* op) {
  if (a.size() != b.size() || a.size() > 4)
    throw ShapeError(std::string(op) + ": incompatible ranks " +
                     shape_str(a) + " vs " + shape_str(b));
  Bcast bc;
  int rank = int(a.size());
  bc.out.resize(rank);
  for (int i = 0; i < rank; ++i) {
    if (a[i] != b[i] && a[i] != 1 && b[i] != 1)
      throw ShapeError(std::string(op) + ": axis " + std::to_string(i) +
                       " mismatch " + shape_str(a) + " vs " + shape_str(b));
    bc.out[i] = std::max(a[i], b[i]);
  }
  int off = 4 - rank;
  std::size_t stra = 1, strb = 1, stro = 1;
  for (int i = rank - 1; i >= 0; --i) {
    bc.dims[off + i] = bc.out[i];
    bc.sa[off + i] = (a[i] == 1 && bc.out[i] != 1) ? 0 : stra;
    bc.sb[off + i] = (b[i] == 1 && bc.out[i] != 1) ? 0 : strb;
    bc.so[off + i] = stro;
    stra *= std::size_t(a[i]);
    strb *= std::size_t(b[i]);
    stro *= std::size_t(bc.out[i]);
  }
  return bc;
}

template <typename T, typename F>
void bcast_loop(const Bcast& bc, F&& f) {
  for (int i0 = 0; i0 < bc.dims[0]; ++i0)
    for (int i1 = 0; i1 < bc.dims[1]; ++i1)
      for (int i2 = 0; i2 < bc.dims[2]; ++i2) {
        std::size_t pa = i0 * bc.sa[0] + i1 * bc.sa[1] + i2 * bc.sa[2];
        std::size_t pb = i0 * bc.sb[0] + i1 * bc.sb[1] + i2 * bc.sb[2];
        std::size_t po = i0 * bc.so[0] + i1 * bc.so[1] + i2 * bc.so[2];
        for (int i3 = 0; i3 < bc.dims[3]; ++i3)
          f(pa + i3 * bc.sa[3], pb + i3 * bc.sb[3], po + i3 * bc.so[3]);
      }
}

}  // namespace

// ---------------------------------------------------------------------------
// Var accessors
// ---------------------------------------------------------------------------

template <typename T>
const Shape& Var<T>::shape() const {
  return graph->shape(id);
}

template <typename T>
std::span<const T> Var<T>::value() const {
  return graph->value(id);
}

template <typename T>
std::span<const T> Var<T>::grad() const {
  return graph->grad(id);
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

template <typename T>
Var<T> Graph<T>::make(Shape shape, std::vector<T> val, bool requires_grad,
                      bool is_leaf) {
  if (val.size() != numel(shape))
    throw ShapeError("tensor data length " + std::to_string(val.size()) +
                     " does not match shape " + shape_str(shape));
  Node n;
  n.shape = std::move(shape);
  n.val = std::move(val);
  n.requires_grad = requires_grad;
  n.is_leaf = is_leaf;
  nodes_.push_back(std::move(n));
  return Var<T>{this, int(nodes_.size()) - 1};
}

template <typename T>
Var<T> Graph<T>::leaf(Shape shape, std::vector<T> data, bool requires_grad) {
  return make(std::move(shape), std::move(data), requires_grad, true);
}

template <typename T>
Var<T> Graph<T>::constant(Shape shape, std::vector<T> data) {
  return make(std::move(shape), std::move(data), false, true);
}

template <typename T>
Var<T> Graph<T>::scalar(T v) {
  return constant({1}, {v});
}

template <typename T>
std::vector<T>& Graph<T>::grad_buf(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.val.size()) n.grad.assign(n.val.size(), T(0));
  return n.grad;
}

template <typename T>
std::span<const T> Graph<T>::grad(int id) const {
  const Node& n = nodes_[id];
  if (n.grad.size() != n.val.size())
    throw Error("gradient not materialized; run backward() first");
  return n.grad;
}

template <typename T>
void Graph<T>::check_owned(Var<T> v, const char* op) const {
  if (!v.valid() || v.graph != this || v.id >= int(nodes_.size()))
    throw Error(std::string(op) + ": variable does not belong to this graph");
}

template <typename T>
Var<T> Graph<T>::conv2d(Var<T> x, Var<T> kernel, Var<T> bias, int stride) {
  check_owned(x, "conv2d");
  check_owned(kernel, "conv2d");
  check_owned(bias, "conv2d");
  const Shape& xs = shape(x.id);
  const Shape& ks = shape(kernel.id);
  if (xs.size() != 3)
    throw ShapeError("conv2d: input must be H×W×C, got " + shape_str(xs));
  if (ks.size() != 4 || ks[0] != ks[1])
    throw ShapeError("conv2d: kernel must be k×k×Cin×Cout, got " +
                     shape_str(ks));
  const int H = xs[0], W = xs[1], Ci = xs[2];
  const int k = ks[0], Co = ks[3];
  if (k % 2 == 0)
    throw ShapeError("conv2d: kernel size " + std::to_string(k) +
                     " must be odd");
  if (ks[2] != Ci)
    throw ShapeError("conv2d: input channels " + std::to_string(Ci) +
                     " do not match kernel channels " + std::to_string(ks[2]));
  if (stride != 1 && stride != 2)
    throw ShapeError("conv2d: stride must be 1 or 2, got " +
                     std::to_string(stride));
  const Shape& bs = shape(bias.id);
  if (bs.size() != 1 || bs[0] != Co)
    throw ShapeError("conv2d: bias shape " + shape_str(bs) +
                     " does not match output channels " + std::to_string(Co));

  const Pad ph = same_pad(H, k, stride), pw = same_pad(W, k, stride);
  const int Ho = (H + stride - 1) / stride, Wo = (W + stride - 1) / stride;

  std::vector<T> out(std::size_t(Ho) * Wo * Co);
  conv_forward(value(x.id).data(), H, W, Ci, value(kernel.id).data(), k,
               value(bias.id).data(), stride, ph, pw, out.data(), Ho, Wo, Co);

  bool rg = req(x) || req(kernel) || req(bias);
  Var<T> y = make({Ho, Wo, Co}, std::move(out), rg, false);
  if (rg) {
    int xid = x.id, kid = kernel.id, bid = bias.id, yid = y.id;
    nodes_[y.id].back = [this, xid, kid, bid, yid, H, W, Ci, k, Co, stride,
                         ph, pw, Ho, Wo]() {
      const T* dy = grad_buf(yid).data();
      if (nodes_[xid].requires_grad)
        conv_backward_data(dy, Ho, Wo, Co, nodes_[kid].val.data(), k, stride,
                           ph, pw, grad_buf(xid).data(), H, W, Ci);
      if (nodes_[kid].requires_grad)
        conv_backward_kernel(nodes_[xid].val.data(), H, W, Ci, dy, Ho, Wo, Co,
                             k, stride, ph, pw, grad_buf(kid).data());
      if (nodes_[bid].requires_grad)
        conv_backward_bias(dy, std::size_t(Ho) * Wo, Co,
                           grad_buf(bid).data());
    };
  }
  return y;
}

template <typename T>
Var<T> Graph<T>::conv2d_transpose(Var<T> x, Var<T> kernel, Var<T> bias,
                                  int stride) {
  check_owned(x, "conv2d_transpose");
  check_owned(kernel, "conv2d_transpose");
  check_owned(bias, "conv2d_transpose");
  const Shape& xs = shape(x.id);
  const Shape& ks = shape(kernel.id);
  if (xs.size() != 3)
    throw ShapeError("conv2d_transpose: input must be H×W×C, got " +
                     shape_str(xs));
  if (ks.size() != 4 || ks[0] != ks[1])
    throw ShapeError("conv2d_transpose: kernel must be k×k×Cin×Cout, got " +
                     shape_str(ks));
  const int h = xs[0], w = xs[1];
  const int k = ks[0], Ci = ks[2], Co = ks[3];
  if (k % 2 == 0)
    throw ShapeError("conv2d_transpose: kernel size " + std::to_string(k) +
                     " must be odd");
  if (xs[2] != Co)
    throw ShapeError("conv2d_transpose: input channels " +
                     std::to_string(xs[2]) +
                     " do not match kernel output channels " +
                     std::to_string(Co));
  if (stride != 1 && stride != 2)
    throw ShapeError("conv2d_transpose: stride must be 1 or 2, got " +
                     std::to_string(stride));
  const Shape& bs = shape(bias.id);
  if (bs.size() != 1 || bs[0] != Ci)
    throw ShapeError("conv2d_transpose: bias shape " + shape_str(bs) +
                     " does not match output channels " + std::to_string(Ci));

  // Geometry of the conv this op is adjoint to: (h*stride) -> h.
  const int H = h * stride, W = w * stride;
  const Pad ph = same_pad(H, k, stride), pw = same_pad(W, k, stride);

  std::vector<T> out(std::size_t(H) * W * Ci, T(0));
  conv_backward_data(value(x.id).data(), h, w, Co, value(kernel.id).data(), k,
                     stride, ph, pw, out.data(), H, W, Ci);
  const T* b = value(bias.id).data();
  for (std::size_t cell = 0; cell < std::size_t(H) * W; ++cell)
    for (int c = 0; c < Ci; ++c) out[cell * Ci + c] += b[c];

  bool rg = req(x) || req(kernel) || req(bias);
  Var<T> y = make({H, W, Ci}, std::move(out), rg, false);
  if (rg) {
    int xid = x.id, kid = kernel.id, bid = bias.id, yid = y.id;
    nodes_[y.id].back = [this, xid, kid, bid, yid, H, W, Ci, k, Co, stride,
                         ph, pw, h, w]() {
      const T* dy = grad_buf(yid).data();
      // Adjoint of backward-data is the forward conv; kernel gradient has
      // the same form as conv2d's with the roles of x and dy exchanged.
      if (nodes_[xid].requires_grad) {
        std::vector<T> tmp(std::size_t(h) * w * Co);
        conv_forward(dy, H, W, Ci, nodes_[kid].val.data(), k,
                     static_cast<const T*>(nullptr), stride, ph, pw,
                     tmp.data(), h, w, Co);
        std::vector<T>& gx = grad_buf(xid);
        for (std::size_t i = 0; i < tmp.size(); ++i) gx[i] += tmp[i];
      }
      if (nodes_[kid].requires_grad)
        conv_backward_kernel(dy, H, W, Ci, nodes_[xid].val.data(), h, w, Co,
                             k, stride, ph, pw, grad_buf(kid).data());
      if (nodes_[bid].requires_grad)
        conv_backward_bias(dy, std::size_t(H) * W, Ci, grad_buf(bid).data());
    };
  }
  return y;
}

template <typename T>
Var<T> Graph<T>::activation(Var<T> x, Act kind) {
  check_owned(x, "activation");
  const std::span<const T> xv = value(x.id);
  std::vector<T> out(xv.size());
  switch (kind) {
    case Act::Sigmoid:
      for (std::size_t i = 0; i < xv.size(); ++i) out[i] = sigmoid_fn(xv[i]);
      break;
    case Act::Tanh:
      for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::tanh(xv[i]);
      break;
    case Act::Relu:
      for (std::size_t i = 0; i < xv.size(); ++i)
        out[i] = xv[i] > T(0) ? xv[i] : T(0);
      break;
    case Act::Mish:
      for (std::size_t i = 0; i < xv.size(); ++i) out[i] = mish_fn(xv[i]);
      break;
    case Act::Softplus:
      for (std::size_t i = 0; i < xv.size(); ++i) out[i] = softplus_fn(xv[i]);
      break;
    case Act::Linear:
      std::copy(xv.begin(), xv.end(), out.begin());
      break;
  }
  bool rg = req(x);
  Var<T> y = make(shape(x.id), std::move(out), rg, false);
  if (rg) {
    int xid = x.id, yid = y.id;
    nodes_[y.id].back = [this, xid, yid, kind]() {
      const std::vector<T>& g = grad_buf(yid);
      const std::vector<T>& xv = nodes_[xid].val;
      const std::vector<T>& yv = nodes_[yid].val;
      std::vector<T>& gx = grad_buf(xid);
      switch (kind) {
        case Act::Sigmoid:
          for (std::size_t i = 0; i < g.size(); ++i)
            gx[i] += g[i] * yv[i] * (T(1) - yv[i]);
          break;
        case Act::Tanh:
          for (std::size_t i = 0; i < g.size(); ++i)
            gx[i] += g[i] * (T(1) - yv[i] * yv[i]);
          break;
        case Act::Relu:
          for (std::size_t i = 0; i < g.size(); ++i)
            if (xv[i] > T(0)) gx[i] += g[i];
          break;
        case Act::Mish:
          for (std::size_t i = 0; i < g.size(); ++i)
            gx[i] += g[i] * mish_grad_fn(xv[i]);
          break;
        case Act::Softplus:
          for (std::size_t i = 0; i < g.size(); ++i)
            gx[i] += g[i] * sigmoid_fn(xv[i]);
          break;
        case Act::Linear:
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
          break;
      }
    };
  }
  return y;
}

template <typename T>
Var<T> Graph<T>::head_activation(Var<T> x) {
  check_owned(x, "head_activation");
  const Shape& xs = shape(x.id);
  if (xs.size() != 3 || xs[2] < 1)
    throw ShapeError("head_activation: expected H×W×C, got " + shape_str(xs));
  const int C = xs[2];
  const std::span<const T> xv = value(x.id);
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = (i % C == 0) ? sigmoid_fn(xv[i]) : std::tanh(xv[i]);
  }
  bool rg = req(x);
  Var<T> y = make(xs, std::move(out), rg, false);
  if (rg) {
    int xid = x.id, yid = y.id;
    nodes_[y.id].back = [this, xid, yid, C]() {
      const std::vector<T>& g = grad_buf(yid);
      const std::vector<T>& yv = nodes_[yid].val;
      std::vector<T>& gx = grad_buf(xid);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (i % C == 0)
          gx[i] += g[i] * yv[i] * (T(1) - yv[i]);
        else
          gx[i] += g[i] * (T(1) - yv[i] * yv[i]);
      }
    };
  }
  return y;
}

template <typename T>
Var<T> Graph<T>::reduce(Var<T> x, Red kind, std::vector<int> axes,
                        bool keepdims) {
  check_owned(x, "reduce");
  const Shape& xs = shape(x.id);
  if (axes.empty()) throw ShapeError("reduce: no axes given");
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  for (int a : axes)
    if (a < 0 || a >= int(xs.size()))
      throw ShapeError("reduce: axis " + std::to_string(a) +
                       " out of range for " + shape_str(xs));

  std::vector<bool> reduced(xs.size(), false);
  for (int a : axes) reduced[a] = true;

  Shape os;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!reduced[i])
      os.push_back(xs[i]);
    else if (keepdims)
      os.push_back(1);
  }
  if (os.empty()) os.push_back(1);

  // Dims padded to rank 4 with the output stride zeroed on reduced axes,
  // so a plain nested loop walks input and output together.
  struct RedIter {
    int dims[4] = {1, 1, 1, 1};
    std::size_t ostr[4] = {0, 0, 0, 0};
  };
  RedIter it;
  {
    const int off = 4 - int(xs.size());
    std::size_t so = 1;
    for (int i = int(xs.size()) - 1; i >= 0; --i) {
      it.dims[off + i] = xs[i];
      if (!reduced[i]) {
        it.ostr[off + i] = so;
        so *= std::size_t(xs[i]);
      }
    }
  }
  auto red_loop = [it](auto&& f) {
    std::size_t lin = 0;
    for (int i0 = 0; i0 < it.dims[0]; ++i0)
      for (int i1 = 0; i1 < it.dims[1]; ++i1)
        for (int i2 = 0; i2 < it.dims[2]; ++i2) {
          std::size_t o =
              i0 * it.ostr[0] + i1 * it.ostr[1] + i2 * it.ostr[2];
          for (int i3 = 0; i3 < it.dims[3]; ++i3)
            f(lin++, o + i3 * it.ostr[3]);
        }
  };

  const std::span<const T> xv = value(x.id);
  const std::size_t on = numel(os);
  std::size_t count = 1;
  for (int a : axes) count *= std::size_t(xs[a]);

  std::vector<T> out;
  std::vector<std::size_t> argmax;
  if (kind == Red::Max) {
    out.assign(on, -std::numeric_limits<T>::infinity());
    argmax.assign(on, 0);
    red_loop([&](std::size_t lin, std::size_t oi) {
      if (xv[lin] > out[oi]) {
        out[oi] = xv[lin];
        argmax[oi] = lin;
      }
    });
  } else {
    out.assign(on, T(0));
    red_loop([&](std::size_t lin, std::size_t oi) { out[oi] += xv[lin]; });
    if (kind == Red::Mean)
      for (T& v : out) v /= T(count);
  }

  bool rg = req(x);
  Var<T> y = make(os, std::move(out), rg, false);
  if (rg) {
    int xid = x.id, yid = y.id;
    auto am = std::make_shared<std::vector<std::size_t>>(std::move(argmax));
    nodes_[y.id].back = [this, xid, yid, kind, count, am, red_loop]() {
      const std::vector<T>& g = grad_buf(yid);
      std::vector<T>& gx = grad_buf(xid);
      if (kind == Red::Max) {
        for (std::size_t oi = 0; oi < g.size(); ++oi)
          gx[(*am)[oi]] += g[oi];
        return;
      }
      const T scale_v = (kind == Red::Mean) ? T(1) / T(count) : T(1);
      red_loop([&](std::size_t lin, std::size_t oi) {
        gx[lin] += g[oi] * scale_v;
      });
    };
  }
  return y;
}

template <typename T>
Var<T> Graph<T>::elementwise(Var<T> a, Var<T> b, Ew kind) {
  check_owned(a, "elementwise");
  check_owned(b, "elementwise");
  const char* opname = kind == Ew::Add   ? "add"
                       : kind == Ew::Sub ? "sub"
                       : kind == Ew::Mul ? "mul"
                                         : "div";
  Bcast bc = make_bcast(shape(a.id), shape(b.id), opname);
  const std::span<const T> av = value(a.id), bv = value(b.id);
  std::vector<T> out(numel(bc.out));
  switch (kind) {
    case Ew::Add:
      bcast_loop<T>(bc, [&](std::size_t ia, std::size_t ib, std::size_t io) {
        out[io] = av[ia] + bv[ib];
      });
      break;
    case Ew::Sub:
      bcast_loop<T>(bc, [&](std::size_t ia, std::size_t ib, std::size_t io) {
        out[io] = av[ia] - bv[ib];
      });
      break;
    case Ew::Mul:
      bcast_loop<T>(bc, [&](std::size_t ia, std::size_t ib, std::size_t io) {
        out[io] = av[ia] * bv[ib];
      });
      break;
    case Ew::Div:
      bcast_loop<T>(bc, [&](std::size_t ia, std::size_t ib, std::size_t io) {
        out[io] = av[ia] / bv[ib];
      });
      break;
  }
  bool rg = req(a) || req(b);
  Var<T> y = make(bc.out, std::move(out), rg, false);
  if (rg) {
    int aid = a.id, bid = b.id, yid = y.id;
    nodes_[y.id].back = [this, aid, bid, yid, bc, kind]() {
      const std::vector<T>& g = grad_buf(yid);
      const std::vector<T>& av = nodes_[aid].val;
      const std::vector<T>& bv = nodes_[bid].val;
      const bool ra = nodes_[aid].requires_grad;
      const bool rb = nodes_[bid].requires_grad;
      std::vector<T>* ga = ra ? &grad_buf(aid) : nullptr;
      std::vector<T>* gb = rb ? &grad_buf(bid) : nullptr;
      switch (kind) {
        case Ew::Add:
          bcast_loop<T>(bc,
                        [&](std::size_t ia, std::size_t ib, std::size_t io) {
                          if (ga) (*ga)[ia] += g[io];
                          if (gb) (*gb)[ib] += g[io];
                        });
          break;
        case Ew::Sub:
          bcast_loop<T>(bc,
                        [&](std::size_t ia, std::size_t ib, std::size_t io) {
                          if (ga) (*ga)[ia] += g[io];
                          if (gb) (*gb)[ib] -= g[io];
                        });
          break;
        case Ew::Mul:
          bcast_loop<T>(bc,
                        [&](std::size_t ia, std::size_t ib, std::size_t io) {
                          if (ga) (*ga)[ia] += g[io] * bv[ib];
                          if (gb) (*gb)[ib] += g[io] * av[ia];
                        });
          break;
        case Ew::Div:
          bcast_loop<T>(bc,
                        [&](std::size_t ia, std::size_t ib, std::size_t io) {
                          if (ga) (*ga)[ia] += g[io] / bv[ib];
                          if (gb)
                            (*gb)[ib] -=
                                g[io] * av[ia] / (bv[ib] * bv[ib]);
                        });
          break;
      }
    };
  }
  return y;
}

template <typename T>
Var<T> Graph<T>::scale(Var<T> x, T factor) {
  check_owned(x, "scale");
  const std::span<const T> xv = value(x.id);
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * factor;
  bool rg = req(x);
  Var<T> y = make(shape(x.id), std::move(out), rg, false);
  if (rg) {
    int xid = x.id, yid = y.id;
    nodes_[y.id].back = [this, xid, yid, factor]() {
      const std::vector<T>& g = grad_buf(yid);
      std::vector<T>& gx = grad_buf(xid);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
    };
  }
  return y;
}

template <typename T>
Var<T> Graph<T>::dense(Var<T> x, Var<T> w, Var<T> b) {
  check_owned(x, "dense");
  check_owned(w, "dense");
  check_owned(b, "dense");
  const Shape& xs = shape(x.id);
  const Shape& ws = shape(w.id);
  const Shape& bs = shape(b.id);
  if (xs.size() != 1 || ws.size() != 2 || bs.size() != 1)
    throw ShapeError("dense: expected x[n], w[n×m], b[m], got " +
                     shape_str(xs) + ", " + shape_str(ws) + ", " +
                     shape_str(bs));
  const int n = xs[0], m = ws[1];
  if (ws[0] != n)
    throw ShapeError("dense: weight rows " + std::to_string(ws[0]) +
                     " do not match input length " + std::to_string(n));
  if (bs[0] != m)
    throw ShapeError("dense: bias length " + std::to_string(bs[0]) +
                     " does not match output length " + std::to_string(m));
  const std::span<const T> xv = value(x.id), wv = value(w.id),
                           bv = value(b.id);
  std::vector<T> out(bv.begin(), bv.end());
  for (int i = 0; i < n; ++i) {
    const T xi = xv[i];
    for (int j = 0; j < m; ++j) out[j] += xi * wv[std::size_t(i) * m + j];
  }
  bool rg = req(x) || req(w) || req(b);
  Var<T> y = make({m}, std::move(out), rg, false);
  if (rg) {
    int xid = x.id, wid = w.id, bid = b.id, yid = y.id;
    nodes_[y.id].back = [this, xid, wid, bid, yid, n, m]() {
      const std::vector<T>& g = grad_buf(yid);
      const std::vector<T>& xv = nodes_[xid].val;
      const std::vector<T>& wv = nodes_[wid].val;
      if (nodes_[xid].requires_grad) {
        std::vector<T>& gx = grad_buf(xid);
        for (int i = 0; i < n; ++i) {
          T s = 0;
          for (int j = 0; j < m; ++j) s += g[j] * wv[std::size_t(i) * m + j];
          gx[i] += s;
        }
      }
      if (nodes_[wid].requires_grad) {
        std::vector<T>& gw = grad_buf(wid);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < m; ++j)
            gw[std::size_t(i) * m + j] += xv[i] * g[j];
      }
      if (nodes_[bid].requires_grad) {
        std::vector<T>& gb = grad_buf(bid);
        for (int j = 0; j < m; ++j) gb[j] += g[j];
      }
    };
  }
  return y;
}

template <typename T>
Var<T> Graph<T>::reshape(Var<T> x, Shape target) {
  check_owned(x, "reshape");
  if (numel(target) != numel(shape(x.id)))
    throw ShapeError("reshape: cannot view " + shape_str(shape(x.id)) +
                     " as " + shape_str(target));
  const std::span<const T> xv = value(x.id);
  bool rg = req(x);
  Var<T> y =
      make(std::move(target), std::vector<T>(xv.begin(), xv.end()), rg,
           false);
  if (rg) {
    int xid = x.id, yid = y.id;
    nodes_[y.id].back = [this, xid, yid]() {
      const std::vector<T>& g = grad_buf(yid);
      std::vector<T>& gx = grad_buf(xid);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    };
  }
  return y;
}

template <typename T>
Var<T> Graph<T>::concat_channels(Var<T> a, Var<T> b) {
  check_owned(a, "concat_channels");
  check_owned(b, "concat_channels");
  const Shape& as = shape(a.id);
  const Shape& bs = shape(b.id);
  if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[1] != bs[1])
    throw ShapeError("concat_channels: spatial dims differ, " +
                     shape_str(as) + " vs " + shape_str(bs));
  const int hw = as[0] * as[1], ca = as[2], cb = bs[2];
  const std::span<const T> av = value(a.id), bv = value(b.id);
  std::vector<T> out(std::size_t(hw) * (ca + cb));
  for (int i = 0; i < hw; ++i) {
    T* o = out.data() + std::size_t(i) * (ca + cb);
    const T* pa = av.data() + std::size_t(i) * ca;
    const T* pb = bv.data() + std::size_t(i) * cb;
    std::copy(pa, pa + ca, o);
    std::copy(pb, pb + cb, o + ca);
  }
  bool rg = req(a) || req(b);
  Var<T> y = make({as[0], as[1], ca + cb}, std::move(out), rg, false);
  if (rg) {
    int aid = a.id, bid = b.id, yid = y.id;
    nodes_[y.id].back = [this, aid, bid, yid, hw, ca, cb]() {
      const std::vector<T>& g = grad_buf(yid);
      const bool ra = nodes_[aid].requires_grad;
      const bool rb = nodes_[bid].requires_grad;
      std::vector<T>* ga = ra ? &grad_buf(aid) : nullptr;
      std::vector<T>* gb = rb ? &grad_buf(bid) : nullptr;
      for (int i = 0; i < hw; ++i) {
        const T* go = g.data() + std::size_t(i) * (ca + cb);
        if (ga)
          for (int c = 0; c < ca; ++c) (*ga)[std::size_t(i) * ca + c] += go[c];
        if (gb)
          for (int c = 0; c < cb; ++c)
            (*gb)[std::size_t(i) * cb + c] += go[ca + c];
      }
    };
  }
  return y;
}

template <typename T>
Var<T> Graph<T>::slice_cell(Var<T> x, int iy, int ix) {
  check_owned(x, "slice_cell");
  const Shape& xs = shape(x.id);
  if (xs.size() != 3)
    throw ShapeError("slice_cell: expected H×W×C, got " + shape_str(xs));
  if (iy < 0 || iy >= xs[0] || ix < 0 || ix >= xs[1])
    throw ShapeError("slice_cell: cell (" + std::to_string(iy) + "," +
                     std::to_string(ix) + ") outside " + shape_str(xs));
  const int C = xs[2];
  const std::size_t off = (std::size_t(iy) * xs[1] + ix) * C;
  const std::span<const T> xv = value(x.id);
  std::vector<T> out(xv.begin() + off, xv.begin() + off + C);
  bool rg = req(x);
  Var<T> y = make({C}, std::move(out), rg, false);
  if (rg) {
    int xid = x.id, yid = y.id;
    nodes_[y.id].back = [this, xid, yid, off, C]() {
      const std::vector<T>& g = grad_buf(yid);
      std::vector<T>& gx = grad_buf(xid);
      for (int c = 0; c < C; ++c) gx[off + c] += g[c];
    };
  }
  return y;
}

template <typename T>
Var<T> Graph<T>::sqrt_op(Var<T> x) {
  check_owned(x, "sqrt");
  const std::span<const T> xv = value(x.id);
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::sqrt(xv[i]);
  bool rg = req(x);
  Var<T> y = make(shape(x.id), std::move(out), rg, false);
  if (rg) {
    int xid = x.id, yid = y.id;
    nodes_[y.id].back = [this, xid, yid]() {
      const std::vector<T>& g = grad_buf(yid);
      const std::vector<T>& yv = nodes_[yid].val;
      std::vector<T>& gx = grad_buf(xid);
      for (std::size_t i = 0; i < g.size(); ++i)
        gx[i] += g[i] * T(0.5) / yv[i];
    };
  }
  return y;
}

template <typename T>
Var<T> Graph<T>::add_n(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ShapeError("add_n: empty list");
  check_owned(xs[0], "add_n");
  const Shape& s = shape(xs[0].id);
  bool rg = false;
  for (const Var<T>& v : xs) {
    check_owned(v, "add_n");
    if (shape(v.id) != s)
      throw ShapeError("add_n: shape " + shape_str(shape(v.id)) +
                       " differs from " + shape_str(s));
    rg = rg || req(v);
  }
  std::vector<T> out(numel(s), T(0));
  for (const Var<T>& v : xs) {
    const std::span<const T> xv = value(v.id);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += xv[i];
  }
  Var<T> y = make(s, std::move(out), rg, false);
  if (rg) {
    std::vector<int> ids;
    ids.reserve(xs.size());
    for (const Var<T>& v : xs) ids.push_back(v.id);
    int yid = y.id;
    nodes_[y.id].back = [this, ids, yid]() {
      const std::vector<T>& g = grad_buf(yid);
      for (int id : ids) {
        if (!nodes_[id].requires_grad) continue;
        std::vector<T>& gx = grad_buf(id);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
    };
  }
  return y;
}

template <typename T>
void Graph<T>::backward(Var<T> loss) {
  check_owned(loss, "backward");
  if (numel(shape(loss.id)) != 1)
    throw ShapeError("backward: loss must be scalar, got " +
                     shape_str(shape(loss.id)));
  // Interior gradients are per-call scratch; leaf gradients accumulate.
  for (int id = 0; id <= loss.id; ++id) {
    Node& n = nodes_[id];
    if (!n.is_leaf && n.grad.size() == n.val.size())
      std::fill(n.grad.begin(), n.grad.end(), T(0));
  }
  grad_buf(loss.id)[0] += T(1);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.back) continue;
    if (n.grad.size() != n.val.size()) continue;  // not reached from loss
    n.back();
  }
}

template <typename T>
void Graph<T>::zero_grads() {
  for (Node& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), T(0));
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
void adam_step(const std::vector<std::vector<T>*>& params,
               const std::vector<std::span<const T>>& grads,
               const std::vector<std::string>& names, AdamState<T>& state,
               T lr) {
  if (params.size() != grads.size() || params.size() != names.size())
    throw Error("adam_step: params, grads and names must align");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->size(), T(0));
      state.v[i].assign(params[i]->size(), T(0));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i]->size())
      throw ShapeError("adam_step: gradient size " +
                       std::to_string(grads[i].size()) +
                       " does not match parameter '" + names[i] + "' size " +
                       std::to_string(params[i]->size()));
    for (T g : grads[i])
      if (std::isnan(double(g)))
        throw Error("adam_step: NaN gradient for parameter '" + names[i] +
                    "'");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<T>& p = *params[i];
    std::vector<T>& m = state.m[i];
    std::vector<T>& v = state.v[i];
    const std::span<const T>& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = T(state.beta1) * m[j] + T(1.0 - state.beta1) * g[j];
      v[j] = T(state.beta2) * v[j] + T(1.0 - state.beta2) * g[j] * g[j];
      const double mh = double(m[j]) / bc1;
      const double vh = double(v[j]) / bc2;
      p[j] -= T(double(lr) * mh / (std::sqrt(vh) + state.eps));
    }
  }
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

template <typename T>
T grad_check(
    const std::function<T(const std::vector<T>&, std::vector<T>*)>& f,
    const std::vector<T>& x, T step) {
  std::vector<T> analytic(x.size(), T(0));
  f(x, &analytic);
  T worst = T(0);
  std::vector<T> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const T fp = f(probe, nullptr);
    probe[i] = x[i] - step;
    const T fm = f(probe, nullptr);
    probe[i] = x[i];
    const T numeric = (fp - fm) / (T(2) * step);
    const T denom =
        std::max(std::max(std::abs(analytic[i]), std::abs(numeric)), T(1));
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------

template struct Var<float>;
template struct Var<double>;
template class Graph<float>;
template class Graph<double>;
template void adam_step<float>(const std::vector<std::vector<float>*>&,
                               const std::vector<std::span<const float>>&,
                               const std::vector<std::string>&,
                               AdamState<float>&, float);
template void adam_step<double>(const std::vector<std::vector<double>*>&,
                                const std::vector<std::span<const double>>&,
                                const std::vector<std::string>&,
                                AdamState<double>&, double);
template float grad_check<float>(
    const std::function<float(const std::vector<float>&,
                              std::vector<float>*)>&,
    const std::vector<float>&, float);
template double grad_check<double>(
    const std::function<double(const std::vector<double>&,
                               std::vector<double>*)>&,
    const std::vector<double>&, double);

}  // namespace cropway::ag
