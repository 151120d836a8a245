#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cropway/common.hpp"

namespace cropway::ag {

/// Dense tensor shape, row-major, innermost axis last (H, W, C for images).
using Shape = std::vector<int>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

enum class Act { Sigmoid, Tanh, Relu, Mish, Softplus, Linear };
enum class Red { Mean, Max, Sum };
enum class Ew { Add, Sub, Mul, Div };

template <typename T>
class Graph;

/// Handle to a tensor node inside a Graph. Cheap to copy; does not own data.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Shape& shape() const;
  std::span<const T> value() const;
  std::span<const T> grad() const;
};

/// Define-by-run computation tape. Nodes are appended in construction order,
/// which is therefore a topological order; backward() walks it once in
/// reverse. Leaf gradients accumulate across backward calls, interior
/// gradients are scratch. Single-threaded per instance.
template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // -- node creation ---------------------------------------------------------
  Var<T> leaf(Shape shape, std::vector<T> data, bool requires_grad);
  Var<T> constant(Shape shape, std::vector<T> data);
  Var<T> scalar(T v);

  // -- operations ------------------------------------------------------------

  /// 2-D convolution over an H×W×Cin input with a k×k×Cin×Cout kernel and
  /// same-padding (symmetric, extra pixel on bottom/right). Output is
  /// ceil(H/stride)×ceil(W/stride)×Cout. stride must be 1 or 2, k odd.
  Var<T> conv2d(Var<T> x, Var<T> kernel, Var<T> bias, int stride);

  /// Adjoint of the corresponding strided conv2d: input h×w×Cout with a
  /// k×k×Cin×Cout kernel yields (h·stride)×(w·stride)×Cin. With the same
  /// kernel tensor, forward of this op equals conv2d's backward-data pass.
  Var<T> conv2d_transpose(Var<T> x, Var<T> kernel, Var<T> bias, int stride);

  Var<T> activation(Var<T> x, Act kind);

  /// Per-channel head nonlinearity: sigmoid on channel 0, tanh on the rest.
  Var<T> head_activation(Var<T> x);

  /// Reduce over the given axes. Max routes its gradient to the first
  /// maximal element (lowest linear index) of each reduced group.
  Var<T> reduce(Var<T> x, Red kind, std::vector<int> axes, bool keepdims);

  /// Elementwise with broadcasting restricted to equal ranks where every
  /// axis either matches or is 1 on one side.
  Var<T> elementwise(Var<T> a, Var<T> b, Ew kind);
  Var<T> add(Var<T> a, Var<T> b) { return elementwise(a, b, Ew::Add); }
  Var<T> sub(Var<T> a, Var<T> b) { return elementwise(a, b, Ew::Sub); }
  Var<T> mul(Var<T> a, Var<T> b) { return elementwise(a, b, Ew::Mul); }
  Var<T> div(Var<T> a, Var<T> b) { return elementwise(a, b, Ew::Div); }

  /// Multiply by a compile-time constant factor.
  Var<T> scale(Var<T> x, T factor);

  /// y = x·W + b for a rank-1 x of length n, W of shape n×m, b of length m.
  Var<T> dense(Var<T> x, Var<T> w, Var<T> b);

  Var<T> reshape(Var<T> x, Shape target);

  /// Concatenate two H×W×C tensors along the channel axis.
  Var<T> concat_channels(Var<T> a, Var<T> b);

  /// Extract the channel vector of cell (iy, ix) from an H×W×C tensor.
  Var<T> slice_cell(Var<T> x, int iy, int ix);

  Var<T> sqrt_op(Var<T> x);

  /// Sum of same-shaped tensors in list order. One node regardless of count.
  Var<T> add_n(const std::vector<Var<T>>& xs);

  // -- differentiation -------------------------------------------------------

  /// Reverse-mode sweep from a scalar loss. Gradients of leaves accumulate
  /// across calls; interior gradients are reset per call.
  void backward(Var<T> loss);

  void zero_grads();

  // -- access ----------------------------------------------------------------
  const Shape& shape(int id) const { return nodes_[id].shape; }
  std::span<const T> value(int id) const { return nodes_[id].val; }
  std::span<T> value_mut(int id) { return nodes_[id].val; }
  std::span<const T> grad(int id) const;
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Shape shape;
    std::vector<T> val;
    std::vector<T> grad;  // materialized lazily, same length as val
    bool requires_grad = false;
    bool is_leaf = false;
    std::function<void()> back;  // empty for leaves / no-grad nodes
  };

  Var<T> make(Shape shape, std::vector<T> val, bool requires_grad,
              bool is_leaf);
  std::vector<T>& grad_buf(int id);
  bool req(Var<T> v) const { return nodes_[v.id].requires_grad; }
  void check_owned(Var<T> v, const char* op) const;

  std::vector<Node> nodes_;
};

// ----------------------------------------------------------------------------
// Adam
// ----------------------------------------------------------------------------

/// Per-parameter-list Adam accumulators. Moment shapes mirror the parameter
/// shapes; t increases by exactly 1 per step.
template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

/// One bias-corrected Adam update, in place. `params`, `grads` and `names`
/// are aligned; a NaN gradient raises an Error naming the parameter.
template <typename T>
void adam_step(const std::vector<std::vector<T>*>& params,
               const std::vector<std::span<const T>>& grads,
               const std::vector<std::string>& names, AdamState<T>& state,
               T lr);

// ----------------------------------------------------------------------------
// Finite-difference oracle
// ----------------------------------------------------------------------------

/// f(x, grad_out) evaluates a scalar function of a flat input vector and, iff
/// grad_out is non-null, also writes the analytic gradient. Returns the worst
/// element's relative error between the analytic gradient and central finite
/// differences with the given step: |a − n| / max(|a|, |n|, 1).
template <typename T>
T grad_check(
    const std::function<T(const std::vector<T>&, std::vector<T>*)>& f,
    const std::vector<T>& x, T step);

}  // namespace cropway::ag
