#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sagegan/graph.hpp"

namespace sagegan {

/// Ordered collection of named trainable parameters. Registration order is
/// fixed and deterministic, which checkpointing and the optimizer both rely
/// on.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Var<T> var;
  };

  Var<T> add(const std::string& name, Tensor<T> init) {
    return add(name, Var<T>::param(std::move(init)));
  }

  Var<T> add(const std::string& name, Var<T> v) {
    if (index_.count(name)) throw ParamError("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, v});
    return v;
  }

  /// Absorb all entries of another store under `prefix + name`.
  void adopt(const std::string& prefix, const ParamStore<T>& other) {
    for (const auto& e : other.entries_) add(prefix + e.name, e.var);
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Var<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ParamError("unknown parameter: " + name);
    return entries_[it->second].var;
  }

  const Var<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ParamError("unknown parameter: " + name);
    return entries_[it->second].var;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }

  int64_t numel() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.var.value().numel();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.var.zero_grad();
  }

  /// Sum of all parameter values; cheap fingerprint for isolation tests.
  double checksum() const {
    double s = 0;
    for (const auto& e : entries_) {
      const Tensor<T>& t = e.var.value();
      for (int64_t i = 0; i < t.numel(); ++i) s += static_cast<double>(t[i]);
    }
    return s;
  }

  bool all_finite() const {
    for (const auto& e : entries_)
      if (!e.var.value().all_finite()) return false;
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

/// Adam with bias correction. Moment buffers are keyed by position in the
/// store, so the same store must be passed to every step() call.
template <typename T>
class Adam {
 public:
  explicit Adam(ParamStore<T>& params, T lr = T(2e-4), T beta1 = T(0.5), T beta2 = T(0.999),
                T eps = T(1e-8))
      : params_(&params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    slots_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      const Shape& s = params.entries()[i].var.shape();
      slots_[i].m = Tensor<T>::zeros(s);
      slots_[i].v = Tensor<T>::zeros(s);
    }
  }

  void set_lr(T lr) { lr_ = lr; }
  T lr() const { return lr_; }
  int64_t step_count() const { return t_; }

  /// Apply one update from the gradients currently held by the parameters.
  /// Parameters whose gradient is unset (never touched by backward) are
  /// skipped entirely, moments included.
  void step() {
    ++t_;
    const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
    for (size_t i = 0; i < params_->size(); ++i) {
      auto& var = const_cast<Var<T>&>(params_->entries()[i].var);
      Node<T>& node = *var.node();
      if (node.grad.empty()) continue;
      Slot& s = slots_[i];
      Tensor<T>& val = node.value;
      for (int64_t j = 0; j < val.numel(); ++j) {
        T g = node.grad[j];
        s.m[j] = beta1_ * s.m[j] + (T(1) - beta1_) * g;
        s.v[j] = beta2_ * s.v[j] + (T(1) - beta2_) * g * g;
        T mhat = s.m[j] / bc1;
        T vhat = s.v[j] / bc2;
        val[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  /// Moment buffers exposed for checkpointing, parallel to the store order.
  struct Slot {
    Tensor<T> m, v;
  };
  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }
  void set_step_count(int64_t t) { t_ = t; }

 private:
  ParamStore<T>* params_;
  T lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace sagegan
