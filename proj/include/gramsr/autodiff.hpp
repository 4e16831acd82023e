#pragma once

// Minimal reverse-mode automatic differentiation over dense double tensors.
//
// A Var is a shared handle to a graph node. Nodes built from inputs that
// require gradients record a backward closure; backward() walks the graph in
// reverse topological order. Frozen tensors are plain constants and never
// receive gradient storage.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gramsr::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Shape shape, std::vector<double> values);
  static Var zeros(Shape shape);
  static Var leaf(Shape shape, std::vector<double> values, bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }
  std::span<const double> value() const { return node_->value; }
  std::span<double> mutable_value() { return node_->value; }
  // Empty when the node never took part in a backward pass.
  std::span<const double> grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  double item() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Runs reverse accumulation from a scalar root seeded with d(root) = 1.
void backward(const Var& root);

// Returns a constant copy with no history.
Var detach(const Var& x);

Var reshape(const Var& x, Shape shape);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double k);
// x: [rows, cols], bias: [cols] broadcast over rows.
Var add_bias(const Var& x, const Var& bias);

// [m,k] x [k,n] -> [m,n]
Var matmul(const Var& a, const Var& b);
// [m,k] x [n,k]^T -> [m,n]
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& x);

Var relu(const Var& x);
Var silu(const Var& x);
Var gelu(const Var& x);  // tanh approximation

Var softmax_rows(const Var& x);
// Normalizes each row to zero mean, unit variance (no affine parameters).
Var layer_norm_rows(const Var& x, double eps = 1e-5);
// Divides each row by its Euclidean norm.
Var normalize_rows(const Var& x);
// x / ||x||_F over the whole tensor.
Var normalize_frobenius(const Var& x);

// out[i] = indices[i] < 0 ? 0 : x[indices[i]]
Var gather(const Var& x, std::vector<std::int64_t> indices, Shape out_shape);

// Concatenates two [rows, c1] and [rows, c2] tensors (any leading shape with
// matching element count per row) along the last axis.
Var concat_last(const Var& a, const Var& b);

// [H, W, C] -> [H/2, W/2, C] mean over 2x2 cells.
Var avg_pool2(const Var& x);
// [H, W, C] -> [2H, 2W, C] nearest neighbour.
Var upsample_nearest2(const Var& x);
// 3x3 "same" convolution on an [H, W, Cin] tensor with weight
// [Cout, 9*Cin] (row layout ky, kx, cin) and bias [Cout].
Var conv3x3(const Var& x, const Var& weight, const Var& bias);

Var sum(const Var& x);
Var mean(const Var& x);
// mean((a - b)^2)
Var mse(const Var& a, const Var& b);
// Sum of a list of scalars.
Var add_n(const std::vector<Var>& terms);

}  // namespace gramsr::ad
