#include "gramsr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <tuple>
#include <unordered_set>

#include "gramsr/error.hpp"

namespace gramsr::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

namespace {

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[k,m]^T * B[k,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t k, std::size_t m,
             std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn(a, bt.data(), c, m, k, n);
}

bool any_requires_grad(std::initializer_list<const Var*> vars) {
  for (const Var* v : vars)
    if (v->requires_grad()) return true;
  return false;
}

// Creates an output node. The backward closure is only kept when some input
// requires gradients.
Var make_node(Shape shape, std::vector<double> value, std::initializer_list<const Var*> inputs,
              std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (any_requires_grad(inputs)) {
    node->requires_grad = true;
    for (const Var* v : inputs) node->inputs.push_back(v->ptr());
    node->backward = std::move(backward_fn);
  }
  return Var(std::move(node));
}

double* grad_of(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  return in.requires_grad ? in.grad.data() : nullptr;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

void require_rank2(const Var& x, const char* op) {
  if (x.shape().size() != 2)
    throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(x.shape()));
}

void require_hwc(const Var& x, const char* op) {
  if (x.shape().size() != 3)
    throw ShapeError(std::string(op) + ": expected [H,W,C] tensor, got " + shape_str(x.shape()));
}

}  // namespace

Var Var::constant(Shape shape, std::vector<double> values) {
  if (numel(shape) != values.size())
    throw ShapeError("constant: " + shape_str(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Var(std::move(node));
}

Var Var::zeros(Shape shape) {
  const auto n = numel(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Var Var::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  Var v = constant(std::move(shape), std::move(values));
  v.node_->requires_grad = requires_grad;
  return v;
}

double Var::item() const {
  if (node_->value.size() != 1) throw ShapeError("item: tensor is not a scalar");
  return node_->value[0];
}

void backward(const Var& root) {
  if (root.size() != 1) throw ShapeError("backward: root must be a scalar");
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) n->grad.assign(n->value.size(), 0.0);
  root.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

Var detach(const Var& x) { return Var::constant(x.shape(), std::vector<double>(x.value().begin(), x.value().end())); }

Var reshape(const Var& x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  return make_node(std::move(shape), std::vector<double>(x.value().begin(), x.value().end()), {&x},
                   [](Node& self) {
                     if (double* g = grad_of(self, 0))
                       for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
                   });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_node(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (double* g = grad_of(self, k))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_node(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_node(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
  });
}

Var scale(const Var& x, double k) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * k;
  return make_node(x.shape(), std::move(out), {&x}, [k](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * k;
  });
}

Var add_bias(const Var& x, const Var& bias) {
  const std::size_t cols = bias.size();
  if (cols == 0 || x.size() % cols != 0 || x.shape().back() != cols)
    throw ShapeError("add_bias: " + shape_str(x.shape()) + " with bias " + shape_str(bias.shape()));
  const std::size_t rows = x.size() / cols;
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x.value()[r * cols + c] + bias.value()[c];
  return make_node(x.shape(), std::move(out), {&x, &bias}, [rows, cols](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c];
  });
}

Var matmul(const Var& a, const Var& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.value().data(), b.value().data(), out.data(), m, k, n);
  return make_node({m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    const double* av = self.inputs[0]->value.data();
    const double* bv = self.inputs[1]->value.data();
    if (double* g = grad_of(self, 0)) gemm_nt(self.grad.data(), bv, g, m, n, k);
    if (double* g = grad_of(self, 1)) gemm_tn(av, self.grad.data(), g, m, k, n);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k)
    throw ShapeError("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  std::vector<double> out(m * n, 0.0);
  gemm_nt(a.value().data(), b.value().data(), out.data(), m, k, n);
  return make_node({m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    const double* av = self.inputs[0]->value.data();
    const double* bv = self.inputs[1]->value.data();
    if (double* g = grad_of(self, 0)) gemm_nn(self.grad.data(), bv, g, m, n, k);
    if (double* g = grad_of(self, 1)) gemm_tn(self.grad.data(), av, g, m, n, k);
  });
}

Var transpose(const Var& x) {
  require_rank2(x, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x.value()[i * c + j];
  return make_node({c, r}, std::move(out), {&x}, [r, c](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

Var relu(const Var& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] > 0.0 ? x.value()[i] : 0.0;
  return make_node(x.shape(), std::move(out), {&x}, [](Node& self) {
    const auto& xv = self.inputs[0]->value;
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (xv[i] > 0.0) g[i] += self.grad[i];
  });
}

Var silu(const Var& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.value()[i];
    out[i] = v / (1.0 + std::exp(-v));
  }
  return make_node(x.shape(), std::move(out), {&x}, [](Node& self) {
    const auto& xv = self.inputs[0]->value;
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-xv[i]));
        g[i] += self.grad[i] * s * (1.0 + xv[i] * (1.0 - s));
      }
  });
}

Var gelu(const Var& x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.value()[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(c * (v + k * v * v * v)));
  }
  return make_node(x.shape(), std::move(out), {&x}, [](Node& self) {
    const auto& xv = self.inputs[0]->value;
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double v = xv[i];
        const double t = std::tanh(c * (v + k * v * v * v));
        const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * k * v * v);
        g[i] += self.grad[i] * d;
      }
  });
}

Var softmax_rows(const Var& x) {
  require_rank2(x, "softmax_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.value().data() + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) o[c] /= s;
  }
  return make_node(x.shape(), std::move(out), {&x}, [rows, cols](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * cols;
      const double* dy = self.grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += dy[c] * y[c];
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += y[c] * (dy[c] - dot);
    }
  });
}

Var layer_norm_rows(const Var& x, double eps) {
  require_rank2(x, "layer_norm_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(x.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.value().data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += in[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = (in[c] - mu) * inv_std[r];
  }
  return make_node(x.shape(), std::move(out), {&x},
                   [rows, cols, inv_std = std::move(inv_std)](Node& self) {
                     double* g = grad_of(self, 0);
                     if (!g) return;
                     const double n = static_cast<double>(cols);
                     for (std::size_t r = 0; r < rows; ++r) {
                       const double* y = self.value.data() + r * cols;
                       const double* dy = self.grad.data() + r * cols;
                       double mdy = 0.0, mdyy = 0.0;
                       for (std::size_t c = 0; c < cols; ++c) {
                         mdy += dy[c];
                         mdyy += dy[c] * y[c];
                       }
                       mdy /= n;
                       mdyy /= n;
                       for (std::size_t c = 0; c < cols; ++c)
                         g[r * cols + c] += inv_std[r] * (dy[c] - mdy - y[c] * mdyy);
                     }
                   });
}

Var normalize_rows(const Var& x) {
  require_rank2(x, "normalize_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(x.size());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += x.value()[r * cols + c] * x.value()[r * cols + c];
    norms[r] = std::sqrt(s);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x.value()[r * cols + c] / norms[r];
  }
  return make_node(x.shape(), std::move(out), {&x},
                   [rows, cols, norms = std::move(norms)](Node& self) {
                     double* g = grad_of(self, 0);
                     if (!g) return;
                     for (std::size_t r = 0; r < rows; ++r) {
                       const double* y = self.value.data() + r * cols;
                       const double* dy = self.grad.data() + r * cols;
                       double dot = 0.0;
                       for (std::size_t c = 0; c < cols; ++c) dot += dy[c] * y[c];
                       for (std::size_t c = 0; c < cols; ++c)
                         g[r * cols + c] += (dy[c] - y[c] * dot) / norms[r];
                     }
                   });
}

Var normalize_frobenius(const Var& x) {
  double s = 0.0;
  for (double v : x.value()) s += v * v;
  const double norm = std::sqrt(s);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] / norm;
  return make_node(x.shape(), std::move(out), {&x}, [norm](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    double dot = 0.0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) dot += self.grad[i] * self.value[i];
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      g[i] += (self.grad[i] - self.value[i] * dot) / norm;
  });
}

Var gather(const Var& x, std::vector<std::int64_t> indices, Shape out_shape) {
  if (numel(out_shape) != indices.size())
    throw ShapeError("gather: index count does not match " + shape_str(out_shape));
  std::vector<double> out(indices.size());
  const auto n = static_cast<std::int64_t>(x.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto idx = indices[i];
    if (idx >= n) throw ShapeError("gather: index out of range");
    out[i] = idx < 0 ? 0.0 : x.value()[static_cast<std::size_t>(idx)];
  }
  auto shared = std::make_shared<const std::vector<std::int64_t>>(std::move(indices));
  return make_node(std::move(out_shape), std::move(out), {&x}, [shared](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    const auto& idx = *shared;
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (idx[i] >= 0) g[idx[i]] += self.grad[i];
  });
}

Var concat_last(const Var& a, const Var& b) {
  const std::size_t ca = a.shape().back(), cb = b.shape().back();
  if (a.size() / ca != b.size() / cb ||
      !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin(), b.shape().end() - 1))
    throw ShapeError("concat_last: " + shape_str(a.shape()) + " with " + shape_str(b.shape()));
  const std::size_t rows = a.size() / ca, cc = ca + cb;
  std::vector<double> out(rows * cc);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.value().data() + r * ca, ca, out.data() + r * cc);
    std::copy_n(b.value().data() + r * cb, cb, out.data() + r * cc + ca);
  }
  Shape shape = a.shape();
  shape.back() = cc;
  return make_node(std::move(shape), std::move(out), {&a, &b}, [rows, ca, cb, cc](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ca; ++c) g[r * ca + c] += self.grad[r * cc + c];
    if (double* g = grad_of(self, 1))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cb; ++c) g[r * cb + c] += self.grad[r * cc + ca + c];
  });
}

Var avg_pool2(const Var& x) {
  require_hwc(x, "avg_pool2");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (h % 2 || w % 2) throw SizeError("avg_pool2: odd spatial size " + shape_str(x.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<double> out(oh * ow * c, 0.0);
  const double* in = x.value().data();
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t xx = 0; xx < ow; ++xx)
      for (std::size_t k = 0; k < c; ++k) {
        const double s = in[((2 * y) * w + 2 * xx) * c + k] + in[((2 * y) * w + 2 * xx + 1) * c + k] +
                         in[((2 * y + 1) * w + 2 * xx) * c + k] +
                         in[((2 * y + 1) * w + 2 * xx + 1) * c + k];
        out[(y * ow + xx) * c + k] = 0.25 * s;
      }
  return make_node({oh, ow, c}, std::move(out), {&x}, [w, c, oh, ow](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx)
        for (std::size_t k = 0; k < c; ++k) {
          const double d = 0.25 * self.grad[(y * ow + xx) * c + k];
          g[((2 * y) * w + 2 * xx) * c + k] += d;
          g[((2 * y) * w + 2 * xx + 1) * c + k] += d;
          g[((2 * y + 1) * w + 2 * xx) * c + k] += d;
          g[((2 * y + 1) * w + 2 * xx + 1) * c + k] += d;
        }
  });
}

Var upsample_nearest2(const Var& x) {
  require_hwc(x, "upsample_nearest2");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::size_t oh = 2 * h, ow = 2 * w;
  std::vector<double> out(oh * ow * c);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t xx = 0; xx < ow; ++xx)
      std::copy_n(x.value().data() + ((y / 2) * w + xx / 2) * c, c, out.data() + (y * ow + xx) * c);
  return make_node({oh, ow, c}, std::move(out), {&x}, [w, c, oh, ow](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx)
        for (std::size_t k = 0; k < c; ++k)
          g[((y / 2) * w + xx / 2) * c + k] += self.grad[(y * ow + xx) * c + k];
  });
}

namespace {

// Row-major im2col table for 3x3 same convolution; -1 marks zero padding.
const std::vector<std::int64_t>& im2col_table(std::size_t h, std::size_t w, std::size_t c) {
  static std::mutex mu;
  static std::map<std::tuple<std::size_t, std::size_t, std::size_t>,
                  std::shared_ptr<std::vector<std::int64_t>>>
      cache;
  std::lock_guard lock(mu);
  auto& slot = cache[{h, w, c}];
  if (!slot) {
    auto table = std::make_shared<std::vector<std::int64_t>>(h * w * 9 * c);
    std::size_t i = 0;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            for (std::size_t k = 0; k < c; ++k) {
              const auto sy = static_cast<std::int64_t>(y) + dy;
              const auto sx = static_cast<std::int64_t>(x) + dx;
              const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<std::int64_t>(h) &&
                                  sx < static_cast<std::int64_t>(w);
              (*table)[i++] = inside ? (sy * static_cast<std::int64_t>(w) + sx) *
                                               static_cast<std::int64_t>(c) +
                                           static_cast<std::int64_t>(k)
                                     : -1;
            }
    slot = std::move(table);
  }
  return *slot;
}

}  // namespace

Var conv3x3(const Var& x, const Var& weight, const Var& bias) {
  require_hwc(x, "conv3x3");
  require_rank2(weight, "conv3x3");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (weight.dim(1) != 9 * c)
    throw ShapeError("conv3x3: weight " + shape_str(weight.shape()) + " for input " +
                     shape_str(x.shape()));
  const std::size_t cout = weight.dim(0);
  Var cols = gather(x, im2col_table(h, w, c), {h * w, 9 * c});
  Var y = add_bias(matmul_nt(cols, weight), bias);
  return reshape(y, {h, w, cout});
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value()) s += v;
  return make_node({1}, {s}, {&x}, [](Node& self) {
    if (double* g = grad_of(self, 0)) {
      const std::size_t n = self.inputs[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Var mse(const Var& a, const Var& b) {
  require_same_shape(a, b, "mse");
  const std::size_t n = a.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.value()[i] - b.value()[i];
    s += d * d;
  }
  return make_node({1}, {s / static_cast<double>(n)}, {&a, &b}, [n](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    const double k = 2.0 * self.grad[0] / static_cast<double>(n);
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < n; ++i) g[i] += k * (av[i] - bv[i]);
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < n; ++i) g[i] -= k * (av[i] - bv[i]);
  });
}

Var add_n(const std::vector<Var>& terms) {
  if (terms.empty()) return Var::constant({1}, {0.0});
  Var acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

}  // namespace gramsr::ad
