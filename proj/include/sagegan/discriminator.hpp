#pragma once

#include <string>

#include "sagegan/nn_ops.hpp"
#include "sagegan/optim.hpp"
#include "sagegan/rng.hpp"

namespace sagegan {

// Patch classifier used for both the image and the mask domain: three
// stride-2 4x4 convolutions with leaky activations, then a stride-1 4x4
// head producing one logit per patch. Trained against MSE targets.

struct DiscConfig {
  int base_channels = 32;

  void validate() const {
    if (base_channels < 1) throw ParamError("discriminator: base_channels must be >= 1");
  }
};

template <typename T>
class DiscModel {
 public:
  explicit DiscModel(DiscConfig cfg, uint64_t seed = 0) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = Rng::from(seed, "discmodel");
    auto conv_init = [&](const std::string& name, int co, int ci) {
      const T b = static_cast<T>(1.0 / std::sqrt(static_cast<double>(ci) * 16));
      params_.add(name + ".w", rng.uniform_tensor<T>({co, ci, 4, 4}, -b, b));
      params_.add(name + ".b", Tensor<T>::zeros({co}));
    };
    conv_init("d0", cfg_.base_channels, 1);
    conv_init("d1", 2 * cfg_.base_channels, cfg_.base_channels);
    conv_init("d2", 4 * cfg_.base_channels, 2 * cfg_.base_channels);
    conv_init("d3", 1, 4 * cfg_.base_channels);
  }

  const DiscConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  /// {1,H,W} in, {1,H/8-1,W/8-1} patch logits out; needs H, W divisible by
  /// 8 and at least 16.
  Var<T> forward(const Var<T>& x) {
    const Tensor<T>& xv = x.value();
    if (xv.ndim() != 3 || xv.dim(0) != 1)
      throw ShapeError("discriminator: expected {1,H,W}, got " + shape_str(xv.shape()));
    const int h = xv.dim(1), w = xv.dim(2);
    if (h < 16 || w < 16 || h % 8 || w % 8)
      throw ShapeError("discriminator: spatial dims must be >= 16 and divisible by 8, got " +
                       shape_str(xv.shape()));
    Var<T> cur = x;
    for (int i = 0; i < 3; ++i) {
      const std::string n = "d" + std::to_string(i);
      cur = leaky_relu(conv2d(cur, params_.get(n + ".w"), params_.get(n + ".b"), 2, 1), T(0.2));
    }
    return conv2d(cur, params_.get("d3.w"), params_.get("d3.b"), 1, 1);
  }

 private:
  DiscConfig cfg_;
  ParamStore<T> params_;
};

}  // namespace sagegan
