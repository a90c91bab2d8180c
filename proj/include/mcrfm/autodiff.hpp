#pragma once

// Reverse-mode differentiation over dense matrices for the fixed family of
// operations the adapter uses. A Tape records one forward pass; backward()
// walks it in reverse and accumulates into the ParamTensors bound as leaves.
//
// Elementwise binary ops broadcast a dimension of size 1 (a 1 x c row, an
// n x 1 column, or a 1 x 1 scalar).

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mcrfm/matrix.hpp"

namespace mcrfm::ad {

struct ParamTensor {
  std::string name;
  Matrix value;
  Matrix grad;

  ParamTensor() = default;
  ParamTensor(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows, value.cols) {}
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
  /// Value of a 1 x 1 variable.
  double scalar() const;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  Var constant(Matrix m);
  Var param(ParamTensor& p);

  const Matrix& value(std::uint32_t id) const { return nodes_[id].value; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer for node id, allocated on first use.
  Matrix& grad(std::uint32_t id);

  /// Records a node. `backward` may be empty when no input requires grad.
  Var push(Matrix value, bool requires_grad, Backward backward);
  std::uint32_t next_id() const { return static_cast<std::uint32_t>(nodes_.size()); }

  /// Seeds d(loss)/d(loss) = 1 and accumulates into bound ParamTensor grads.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    ParamTensor* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

// Elementwise (broadcasting).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double k);
Var add_scalar(Var a, double k);

// Unary maps.
Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
/// x * sigmoid(x).
Var silu(Var a);
Var square(Var a);
/// sqrt(max(x, 0)); zero gradient at x <= 0.
Var sqrt_safe(Var a);
Var log(Var a);

// Linear algebra.
/// X W^T + b with X: n x k, W: m x k, optional b: 1 x m.
Var linear(Var x, Var w, const Var* bias = nullptr);
Var linear(Var x, Var w, Var bias);
/// A B with A: n x k, B: k x m.
Var matmul(Var a, Var b);

// Reductions and reshaping.
/// n x c -> n x 1.
Var row_sum(Var a);
/// n x c -> 1 x c.
Var mean_rows(Var a);
/// n x c -> 1 x 1.
Var sum_all(Var a);
Var mean_all(Var a);
/// n x c -> 1 x 1; gradient routed to the first maximal entry.
Var max_all(Var a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
/// out.row(i) = a.row(index[i]).
Var gather_rows(Var a, std::vector<std::size_t> index);
Var reshape(Var a, std::size_t rows, std::size_t cols);
Var stop_gradient(Var a);

// Normalization and probabilities (per row).
/// (x - mean) / sqrt(var + eps), no affine terms.
Var layer_norm(Var a, double eps = 1e-5);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);

// Ball maps (per row, curvature c).
Var exp0(Var u, double c);
Var log0(Var x, double c);
/// Radial interior projection; the Jacobian of the rescale is used when active.
Var project_ball(Var x, double c, double eps);
/// Unprojected Mobius addition x (+) y, composed from the ops above.
Var mobius_add_raw(Var x, Var y, double c);
/// (4/c) artanh(sqrt(c)|w|)^2, i.e. the squared distance from the origin: n x 1.
Var ball_sq_norm_dist(Var w, double c);

}  // namespace mcrfm::ad
