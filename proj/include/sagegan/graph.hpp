#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sagegan/tensor.hpp"

namespace sagegan {

// Reverse-mode autodiff over Tensor<T>. Every operation builds a node
// holding its value, its parents and a closure that scatters the node's
// gradient back into the parents. Graphs are built per forward pass and
// freed when the root Var goes out of scope; parameter leaves persist
// across steps and keep their accumulated gradients until zeroed.

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backprop;

  void ensure_grad() {
    // numel check: a default tensor and a rank-0 scalar share shape {}
    if (!grad.same_shape(value) || grad.numel() != value.numel())
      grad = Tensor<T>::zeros(value.shape());
  }
};

template <typename T>
class Var {
public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  /// Leaf with no gradient tracking.
  static Var constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }

  static Var scalar(T v) { return constant(Tensor<T>::scalar(v)); }

  /// Trainable leaf.
  static Var param(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

  Tensor<T>& value() { return node_->value; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  T item() const { return node_->value.item(); }

  void zero_grad() {
    if (node_) {
      node_->ensure_grad();
      node_->grad.fill(T(0));
    }
  }

  /// Same value, cut off from the graph.
  Var detach() const { return constant(node_->value); }

private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
inline Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents,
                      std::function<void(Node<T>&)> backprop) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  for (auto& p : parents) {
    n->requires_grad = n->requires_grad || p.requires_grad();
    n->parents.push_back(p.node());
  }
  if (n->requires_grad) n->backprop = std::move(backprop);
  return Var<T>(n);
}

template <typename T>
inline void accumulate(Node<T>& parent, int64_t i, T g) {
  parent.grad[i] += g;
}

}  // namespace detail

/// Backpropagate from a scalar root. Parameter gradients accumulate.
template <typename T>
inline void backward(const Var<T>& root) {
  if (root.value().numel() != 1)
    throw ShapeError("backward() root must be scalar, got " + shape_str(root.shape()));

  // iterative post-order DFS: parents precede their consumers
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node<T>* p = n->parents[idx++].get();
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad();
  root.node()->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->requires_grad && n->backprop) n->backprop(*n);
  }
}

// ---- elementwise binary ops (same shape, or either side scalar) ----

namespace detail {

enum class Bcast { Same, AScalar, BScalar };

template <typename T>
inline Bcast bcast_kind(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.same_shape(b)) return Bcast::Same;
  if (a.numel() == 1) return Bcast::AScalar;
  if (b.numel() == 1) return Bcast::BScalar;
  throw ShapeError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()) + " are not broadcastable");
}

template <typename T, typename FwdFn, typename BwdFn>
inline Var<T> binary_op(const Var<T>& a, const Var<T>& b, const char* what, FwdFn fwd, BwdFn bwd) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  Bcast k = bcast_kind(av, bv, what);
  const Tensor<T>& big = (k == Bcast::AScalar) ? bv : av;
  Tensor<T> out(big.shape());
  for (int64_t i = 0; i < out.numel(); ++i) {
    T x = (k == Bcast::AScalar) ? av[0] : av[i];
    T y = (k == Bcast::BScalar) ? bv[0] : bv[i];
    out[i] = fwd(x, y);
  }
  auto an = a.node().get();
  auto bn = b.node().get();
  return make_op<T>(
      std::move(out), {a, b}, [an, bn, k, bwd](Node<T>& n) {
        for (int64_t i = 0; i < n.value.numel(); ++i) {
          T x = (k == Bcast::AScalar) ? an->value[0] : an->value[i];
          T y = (k == Bcast::BScalar) ? bn->value[0] : bn->value[i];
          auto [dx, dy] = bwd(x, y);
          T g = n.grad[i];
          if (an->requires_grad) {
            an->ensure_grad();
            an->grad[(k == Bcast::AScalar) ? 0 : i] += g * dx;
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            bn->grad[(k == Bcast::BScalar) ? 0 : i] += g * dy;
          }
        }
      });
}

template <typename T, typename FwdFn, typename BwdFn>
inline Var<T> unary_op(const Var<T>& a, FwdFn fwd, BwdFn bwd) {
  const Tensor<T>& av = a.value();
  Tensor<T> out(av.shape());
  for (int64_t i = 0; i < av.numel(); ++i) out[i] = fwd(av[i]);
  auto an = a.node().get();
  return make_op<T>(std::move(out), {a}, [an, bwd](Node<T>& n) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int64_t i = 0; i < n.value.numel(); ++i)
      an->grad[i] += n.grad[i] * bwd(an->value[i], n.value[i]);
  });
}

}  // namespace detail

template <typename T>
inline Var<T> add(const Var<T>& a, const Var<T>& b) {
  return detail::binary_op<T>(
      a, b, "add", [](T x, T y) { return x + y; },
      [](T, T) { return std::pair<T, T>(T(1), T(1)); });
}

template <typename T>
inline Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return detail::binary_op<T>(
      a, b, "sub", [](T x, T y) { return x - y; },
      [](T, T) { return std::pair<T, T>(T(1), T(-1)); });
}

template <typename T>
inline Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return detail::binary_op<T>(
      a, b, "mul", [](T x, T y) { return x * y; },
      [](T x, T y) { return std::pair<T, T>(y, x); });
}

template <typename T>
inline Var<T> div(const Var<T>& a, const Var<T>& b) {
  return detail::binary_op<T>(
      a, b, "div", [](T x, T y) { return x / y; },
      [](T x, T y) { return std::pair<T, T>(T(1) / y, -x / (y * y)); });
}

template <typename T>
inline Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T>
inline Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T>
inline Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <typename T>
inline Var<T> operator/(const Var<T>& a, const Var<T>& b) { return div(a, b); }

template <typename T>
inline Var<T> scale(const Var<T>& a, T c) {
  return detail::unary_op<T>(
      a, [c](T x) { return c * x; }, [c](T, T) { return c; });
}

template <typename T>
inline Var<T> add_const(const Var<T>& a, T c) {
  return detail::unary_op<T>(
      a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

template <typename T>
inline Var<T> neg(const Var<T>& a) {
  return scale(a, T(-1));
}

template <typename T>
inline Var<T> relu(const Var<T>& a) {
  return detail::unary_op<T>(
      a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
inline Var<T> leaky_relu(const Var<T>& a, T slope = T(0.2)) {
  return detail::unary_op<T>(
      a, [slope](T x) { return x > T(0) ? x : slope * x; },
      [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <typename T>
inline Var<T> sigmoid(const Var<T>& a) {
  return detail::unary_op<T>(
      a,
      [](T x) {
        // split on sign to avoid overflow in exp
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
inline Var<T> log(const Var<T>& a) {
  return detail::unary_op<T>(
      a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
inline Var<T> abs(const Var<T>& a) {
  return detail::unary_op<T>(
      a, [](T x) { return std::fabs(x); },
      [](T x, T) { return x >= T(0) ? T(1) : T(-1); });
}

/// Elementwise power with a fixed exponent; inputs assumed non-negative.
template <typename T>
inline Var<T> pow(const Var<T>& a, T exponent) {
  return detail::unary_op<T>(
      a, [exponent](T x) { return std::pow(x, exponent); },
      [exponent](T x, T) {
        if (x == T(0)) return T(0);  // subgradient at the boundary
        return exponent * std::pow(x, exponent - T(1));
      });
}

/// Clamp to [lo, hi]; gradient passes only strictly inside the interval.
template <typename T>
inline Var<T> clamp(const Var<T>& a, T lo, T hi) {
  return detail::unary_op<T>(
      a, [lo, hi](T x) { return std::min(hi, std::max(lo, x)); },
      [lo, hi](T x, T) { return (x > lo && x < hi) ? T(1) : T(0); });
}

template <typename T>
inline Var<T> sum(const Var<T>& a) {
  T s = T(0);
  const Tensor<T>& av = a.value();
  for (int64_t i = 0; i < av.numel(); ++i) s += av[i];
  auto an = a.node().get();
  return detail::make_op<T>(Tensor<T>::scalar(s), {a}, [an](Node<T>& n) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    T g = n.grad[0];
    for (int64_t i = 0; i < an->grad.numel(); ++i) an->grad[i] += g;
  });
}

template <typename T>
inline Var<T> mean(const Var<T>& a) {
  const int64_t n_el = a.value().numel();
  return scale(sum(a), T(1) / static_cast<T>(n_el));
}

}  // namespace sagegan
