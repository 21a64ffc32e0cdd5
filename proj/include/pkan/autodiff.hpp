#pragma once

// Reverse-mode automatic differentiation over dense row-major float64 tensors.
//
// A Var is a handle to a graph node. Every op returns a new Var whose backward
// rule accumulates into its parents; backward() walks the graph in reverse
// topological order. Graphs are rebuilt for every evaluation and are confined
// to the thread that built them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pkan/error.hpp"
#include "pkan/special.hpp"

namespace pkan {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

class Tensor {
 public:
  /// Scalar zero.
  Tensor() : values_(1, 0.0) {}

  /// Checked construction: sizes must agree and every value must be finite.
  Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
    validate_size();
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i])) throw DomainError("Tensor", 0, i, values_[i]);
    }
  }

  /// Skips the finiteness scan; used on hot internal paths.
  static Tensor unchecked(Shape shape, std::vector<double> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.values_ = std::move(values);
    t.validate_size();
    return t;
  }

  static Tensor zeros(Shape shape) { return full(std::move(shape), 0.0); }

  static Tensor full(Shape shape, double value) {
    const std::size_t n = numel(shape);
    return unchecked(std::move(shape), std::vector<double>(n, value));
  }

  static Tensor scalar(double value) { return Tensor(Shape{}, {value}); }

  static Tensor vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(Shape{n}, std::move(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const double* data() const noexcept { return values_.data(); }
  double* data() noexcept { return values_.data(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  double item() const {
    if (values_.size() != 1) throw ShapeError("item", shape_string(shape_), "[]");
    return values_[0];
  }

  Tensor reshaped(Shape shape) const {
    if (numel(shape) != values_.size()) throw ShapeError("reshape", shape_string(shape_), shape_string(shape));
    return unchecked(std::move(shape), values_);
  }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  void validate_size() const {
    if (numel(shape_) != values_.size()) {
      throw ShapeError("Tensor", shape_string(shape_), "[" + std::to_string(values_.size()) + " values]");
    }
  }

  Shape shape_;
  std::vector<double> values_;
};

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first use, zero-initialized
  bool requires_grad = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& gradient() {
    if (grad.shape() != value.shape() || grad.size() != value.size()) grad = Tensor::zeros(value.shape());
    return grad;
  }
};

class Var {
 public:
  Var() = default;

  /// Trainable leaf.
  explicit Var(Tensor value) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->gradient();
  }

  /// Leaf that does not receive gradients.
  static Var constant(Tensor value) {
    Var v;
    v.node_ = std::make_shared<Node>();
    v.node_->value = std::move(value);
    v.node_->requires_grad = false;
    return v;
  }
  static Var constant(double value) { return constant(Tensor::scalar(value)); }

  /// Interior node. Requires grad iff any parent does.
  static Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
    Var v;
    v.node_ = std::make_shared<Node>();
    v.node_->value = std::move(value);
    bool needs_grad = false;
    v.node_->parents.reserve(parents.size());
    for (auto& p : parents) {
      needs_grad = needs_grad || p.node_->requires_grad;
      v.node_->parents.push_back(std::move(p.node_));
    }
    v.node_->requires_grad = needs_grad;
    if (needs_grad) v.node_->backward = std::move(backward);
    return v;
  }

  bool valid() const noexcept { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  double item() const { return node_->value.item(); }
  bool requires_grad() const { return node_->requires_grad; }

  const Tensor& grad() const { return node_->gradient(); }
  Tensor& grad() { return node_->gradient(); }

  Node* node() const noexcept { return node_.get(); }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

// Strides of an input viewed through a broadcast to `out`; zero on broadcast axes.
inline std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  const std::size_t offset = out.size() - in.size();
  for (std::size_t d = in.size(); d-- > 0;) {
    strides[d + offset] = (in[d] == 1 && out[d + offset] != 1) ? 0 : stride;
    stride *= in[d];
  }
  return strides;
}

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
  bool same = false;
};

inline Shape broadcast_shapes(const Shape& a, const Shape& b, const std::string& op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) throw ShapeError(op, shape_string(a), shape_string(b));
    out[i] = std::max(da, db);
  }
  return out;
}

inline BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const std::string& op) {
  BroadcastPlan p;
  p.out = broadcast_shapes(a, b, op);
  p.same = (a == b);
  p.stride_a = broadcast_strides(a, p.out);
  p.stride_b = broadcast_strides(b, p.out);
  return p;
}

// Calls f(out_index, a_index, b_index) for every output element in row-major order.
template <class F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  const std::size_t n = numel(p.out);
  if (p.same) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const std::size_t rank = p.out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t o = 0; o < n; ++o) {
    f(o, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += p.stride_a[d];
      ib += p.stride_b[d];
      if (idx[d] < p.out[d]) break;
      ia -= p.stride_a[d] * p.out[d];
      ib -= p.stride_b[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

template <class F, class DA, class DB>
Var binary(const Var& a, const Var& b, const std::string& name, F f, DA da, DB db) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape(), name));
  std::vector<double> out(numel(plan->out));
  const double* av = a.value().data();
  const double* bv = b.value().data();
  for_each_broadcast(*plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = f(av[i], bv[j]); });
  return Var::make(Tensor::unchecked(plan->out, std::move(out)), {a, b}, [plan, da, db](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* g = self.grad.data();
    const double* x = pa.value.data();
    const double* y = pb.value.data();
    if (pa.requires_grad) {
      double* ga = pa.gradient().data();
      for_each_broadcast(*plan, [&](std::size_t o, std::size_t i, std::size_t j) { ga[i] += g[o] * da(x[i], y[j]); });
    }
    if (pb.requires_grad) {
      double* gb = pb.gradient().data();
      for_each_broadcast(*plan, [&](std::size_t o, std::size_t i, std::size_t j) { gb[j] += g[o] * db(x[i], y[j]); });
    }
  });
}

// df(x, y) returns dy/dx given input x and output y.
template <class F, class DF>
Var unary(const Var& x, F f, DF df) {
  const Tensor& in = x.value();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return Var::make(Tensor::unchecked(in.shape(), std::move(out)), {x}, [df](Node& self) {
    Node& p = *self.parents[0];
    double* gp = p.gradient().data();
    const double* g = self.grad.data();
    const double* xv = p.value.data();
    const double* yv = self.value.data();
    for (std::size_t i = 0; i < self.value.size(); ++i) gp[i] += g[i] * df(xv[i], yv[i]);
  });
}

template <class Pred>
void check_domain(const Var& x, const std::string& op, Pred ok) {
  const Tensor& v = x.value();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!ok(v[i])) throw DomainError(op, 0, i, v[i]);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops with numpy-style broadcasting.

inline Var add(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Var sub(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Var mul(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Var div(const Var& a, const Var& b) {
  const Tensor& d = b.value();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] == 0.0) throw DomainError("div", 1, i, d[i]);
  }
  return detail::binary(
      a, b, "div", [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator+(const Var& a, double b) { return add(a, Var::constant(b)); }
inline Var operator+(double a, const Var& b) { return add(Var::constant(a), b); }
inline Var operator-(const Var& a, double b) { return sub(a, Var::constant(b)); }
inline Var operator-(double a, const Var& b) { return sub(Var::constant(a), b); }
inline Var operator*(const Var& a, double b) { return mul(a, Var::constant(b)); }
inline Var operator*(double a, const Var& b) { return mul(Var::constant(a), b); }
inline Var operator/(const Var& a, double b) { return div(a, Var::constant(b)); }
inline Var operator-(const Var& a) {
  return detail::unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

// ---------------------------------------------------------------------------
// Elementwise unary ops.

inline Var exp(const Var& x) {
  return detail::unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Var log(const Var& x) {
  detail::check_domain(x, "log", [](double v) { return v > 0.0; });
  return detail::unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Var log1p(const Var& x) {
  detail::check_domain(x, "log1p", [](double v) { return v > -1.0; });
  return detail::unary(x, [](double v) { return std::log1p(v); }, [](double v, double) { return 1.0 / (1.0 + v); });
}

inline Var sqrt(const Var& x) {
  detail::check_domain(x, "sqrt", [](double v) { return v >= 0.0; });
  return detail::unary(x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

inline Var square(const Var& x) {
  return detail::unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

inline Var sin(const Var& x) {
  return detail::unary(x, [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); });
}

inline Var atan(const Var& x) {
  return detail::unary(x, [](double v) { return std::atan(v); }, [](double v, double) { return 1.0 / (1.0 + v * v); });
}

inline Var sigmoid(const Var& x) {
  return detail::unary(x, special::sigmoid, [](double, double y) { return y * (1.0 - y); });
}

/// x * sigmoid(x).
inline Var silu(const Var& x) {
  return detail::unary(
      x, [](double v) { return v * special::sigmoid(v); },
      [](double v, double) {
        const double s = special::sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

/// max(x, 0) + log1p(exp(-|x|)).
inline Var softplus(const Var& x) {
  return detail::unary(x, special::softplus, [](double v, double) { return special::sigmoid(v); });
}

inline Var lgamma(const Var& x) {
  detail::check_domain(x, "lgamma", [](double v) { return v > 0.0; });
  return detail::unary(x, special::lgamma, [](double v, double) { return special::digamma(v); });
}

/// Gradient is 1 on the closed interval [lo, hi] and 0 outside.
inline Var clamp(const Var& x, double lo, double hi) {
  if (!(lo <= hi)) throw InvalidArgument("clamp: lo must not exceed hi");
  return detail::unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Shape ops and reductions.

inline Var broadcast_to(const Var& x, const Shape& shape) {
  auto plan = std::make_shared<detail::BroadcastPlan>(detail::plan_broadcast(x.shape(), shape, "broadcast"));
  if (plan->out != shape) throw ShapeError("broadcast", shape_string(x.shape()), shape_string(shape));
  std::vector<double> out(numel(shape));
  const double* xv = x.value().data();
  detail::for_each_broadcast(*plan, [&](std::size_t o, std::size_t i, std::size_t) { out[o] = xv[i]; });
  return Var::make(Tensor::unchecked(shape, std::move(out)), {x}, [plan](Node& self) {
    double* gp = self.parents[0]->gradient().data();
    const double* g = self.grad.data();
    detail::for_each_broadcast(*plan, [&](std::size_t o, std::size_t i, std::size_t) { gp[i] += g[o]; });
  });
}

inline Var reshape(const Var& x, const Shape& shape) {
  return Var::make(x.value().reshaped(shape), {x}, [](Node& self) {
    double* gp = self.parents[0]->gradient().data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < self.value.size(); ++i) gp[i] += g[i];
  });
}

/// Sum of all elements, shape [].
inline Var sum(const Var& x) {
  const auto v = x.value().values();
  double total = 0.0;
  for (double e : v) total += e;
  return Var::make(Tensor::unchecked({}, {total}), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    double* gp = p.gradient().data();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < p.value.size(); ++i) gp[i] += g;
  });
}

inline Var mean(const Var& x) { return sum(x) * (1.0 / static_cast<double>(x.size())); }

/// Row-sums of a rank-2 tensor: [m, n] -> [m].
inline Var sum_rows(const Var& x) {
  if (x.shape().size() != 2) throw ShapeError("sum_rows", shape_string(x.shape()), "[m, n]");
  const std::size_t m = x.shape()[0];
  const std::size_t n = x.shape()[1];
  std::vector<double> out(m, 0.0);
  const double* xv = x.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i] += xv[i * n + j];
  }
  return Var::make(Tensor::unchecked({m}, std::move(out)), {x}, [m, n](Node& self) {
    double* gp = self.parents[0]->gradient().data();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) gp[i * n + j] += self.grad[i];
    }
  });
}

/// [m, k] x [k, n] -> [m, n].
inline Var matmul(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) throw ShapeError("matmul", shape_string(sa), shape_string(sb));
  const std::size_t m = sa[0];
  const std::size_t k = sa[1];
  const std::size_t n = sb[1];
  std::vector<double> out(m * n, 0.0);
  const double* av = a.value().data();
  const double* bv = b.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return Var::make(Tensor::unchecked({m, n}, std::move(out)), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* g = self.grad.data();
    if (pa.requires_grad) {
      // dA = G * B^T
      double* ga = pa.gradient().data();
      const double* bv = pb.value.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = bv + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (pb.requires_grad) {
      // dB = A^T * G
      double* gb = pb.gradient().data();
      const double* av = pa.value.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          double* gbrow = gb + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Backpropagation.

/// Accumulates d(root)/d(node) into every reachable node that requires grad.
/// Interior gradients are reset at the start of each call; leaf gradients accumulate.
inline void backward(const Var& root) {
  const Shape& s = root.shape();
  if (!(s.empty() || (s.size() == 1 && s[0] == 1))) {
    throw InvalidArgument("backward: root must be a scalar, got shape " + shape_string(s));
  }
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  if (!root.requires_grad()) return;
  for (Node* n : order) {
    if (!n->parents.empty()) n->gradient().fill(0.0);
  }
  root.node()->gradient()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

inline void zero_gradients(std::span<Var> vars) {
  for (auto& v : vars) v.grad().fill(0.0);
}

}  // namespace pkan
