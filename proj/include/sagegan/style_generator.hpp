#pragma once

#include <string>
#include <vector>

#include "sagegan/nn_ops.hpp"
#include "sagegan/optim.hpp"
#include "sagegan/rng.hpp"

namespace sagegan {

// Mask-to-image generator: an encoder-decoder whose decoder features are
// re-styled per channel. A small fully-connected mapping network turns the
// latent z into a style vector w; learned affine heads read per-layer
// (scale, shift) pairs off w and modulate the decoder through adaptive
// instance normalization, with learned-amplitude spatial noise added at
// the two finest decoder resolutions.

struct GenConfig {
  int depth = 3;           // encoder levels, deepest acts as bottleneck
  int base_channels = 32;  // doubled per level
  int d_z = 64;            // latent dimension
  int d_w = 64;            // style dimension
  int input_h = 256;
  int input_w = 256;

  void validate() const {
    if (depth < 2) throw ParamError("generator: depth must be >= 2");
    if (base_channels < 1) throw ParamError("generator: base_channels must be >= 1");
    if (d_z < 1 || d_w < 1) throw ParamError("generator: latent/style dims must be >= 1");
    const int div = 1 << depth;
    if (input_h < div || input_w < div || input_h % div || input_w % div)
      throw ParamError("generator: input size must be divisible by 2^depth (" +
                       std::to_string(div) + ")");
  }

  int channels_at(int level) const { return base_channels << level; }
  int decoder_levels() const { return depth - 1; }
  int noise_levels() const { return std::min(2, decoder_levels()); }
};

template <typename T>
struct StyleVector {
  Var<T> w;                    // {d_w}
  std::vector<Var<T>> scales;  // one {c_l} vector per decoder level, 0 = finest
  std::vector<Var<T>> shifts;
};

/// F + scale (.) eps with eps standard-normal, one value per spatial
/// position shared across channels. Zero scale is the exact identity.
template <typename T>
inline Var<T> inject_noise(const Var<T>& x, Rng& rng, const Var<T>& scale) {
  const Tensor<T>& xv = x.value();
  if (xv.ndim() != 3) throw ShapeError("inject_noise: expected {C,H,W}, got " + shape_str(xv.shape()));
  const Tensor<T> eps = rng.normal_tensor<T>({1, xv.dim(1), xv.dim(2)});
  return add_scaled_noise(x, eps, scale);
}

template <typename T>
class GenModel {
 public:
  explicit GenModel(GenConfig cfg, uint64_t seed = 0) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = Rng::from(seed, "genmodel");

    auto fan_in = [&](int n) { return static_cast<T>(1.0 / std::sqrt(static_cast<double>(n))); };
    auto conv_init = [&](const std::string& name, int co, int ci, int k) {
      const T b = fan_in(ci * k * k);
      params_.add(name + ".w", rng.uniform_tensor<T>({co, ci, k, k}, -b, b));
      params_.add(name + ".b", Tensor<T>::zeros({co}));
    };
    auto fc_init = [&](const std::string& name, int out, int in) {
      const T b = fan_in(in);
      params_.add(name + ".w", rng.uniform_tensor<T>({out, in}, -b, b));
      params_.add(name + ".b", Tensor<T>::zeros({out}));
    };

    fc_init("map.fc0", cfg_.d_w, cfg_.d_z);
    fc_init("map.fc1", cfg_.d_w, cfg_.d_w);
    fc_init("map.fc2", cfg_.d_w, cfg_.d_w);

    int in_ch = 1;
    for (int l = 0; l < cfg_.depth; ++l) {
      const int c = cfg_.channels_at(l);
      conv_init("enc" + std::to_string(l) + ".c1", c, in_ch, 3);
      conv_init("enc" + std::to_string(l) + ".c2", c, c, 3);
      in_ch = c;
    }
    for (int l = cfg_.depth - 2; l >= 0; --l) {
      const std::string ls = std::to_string(l);
      const int c = cfg_.channels_at(l);
      const int cg = cfg_.channels_at(l + 1);
      conv_init("up" + ls, c, cg, 3);
      conv_init("dec" + ls + ".c1", c, 2 * c, 3);
      // style affine heads: scale bias starts at 1, shift bias at 0, so an
      // untrained style is plain instance normalization
      const T b = fan_in(cfg_.d_w);
      params_.add("style" + ls + ".scale.w", rng.uniform_tensor<T>({c, cfg_.d_w}, -b, b));
      params_.add("style" + ls + ".scale.b", Tensor<T>::full({c}, T(1)));
      params_.add("style" + ls + ".shift.w", rng.uniform_tensor<T>({c, cfg_.d_w}, -b, b));
      params_.add("style" + ls + ".shift.b", Tensor<T>::zeros({c}));
      if (l < cfg_.noise_levels()) params_.add("noise" + ls, Tensor<T>::zeros({c}));
      conv_init("dec" + ls + ".c2", c, c, 3);
    }
    conv_init("head", 1, cfg_.base_channels, 1);
  }

  const GenConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  /// z -> w through the 3-layer mapping network, plus the per-layer
  /// (scale, shift) affine readouts.
  StyleVector<T> map_latent(const Tensor<T>& z) { return map_latent(Var<T>::constant(z)); }

  StyleVector<T> map_latent(const Var<T>& z) {
    if (z.value().ndim() != 1 || z.value().dim(0) != cfg_.d_z)
      throw ShapeError("map_latent: expected {" + std::to_string(cfg_.d_z) + "}, got " +
                       shape_str(z.value().shape()));
    StyleVector<T> sv;
    Var<T> h = z;
    for (int i = 0; i < 3; ++i) {
      const std::string n = "map.fc" + std::to_string(i);
      h = leaky_relu(linear(h, params_.get(n + ".w"), params_.get(n + ".b")), T(0.2));
    }
    sv.w = h;
    sv.scales.resize(static_cast<size_t>(cfg_.decoder_levels()));
    sv.shifts.resize(static_cast<size_t>(cfg_.decoder_levels()));
    for (int l = 0; l < cfg_.decoder_levels(); ++l) {
      const std::string ls = std::to_string(l);
      sv.scales[static_cast<size_t>(l)] =
          linear(h, params_.get("style" + ls + ".scale.w"), params_.get("style" + ls + ".scale.b"));
      sv.shifts[static_cast<size_t>(l)] =
          linear(h, params_.get("style" + ls + ".shift.w"), params_.get("style" + ls + ".shift.b"));
    }
    return sv;
  }

  /// Graph-connected synthesis. `mask` may be a soft probability map (the
  /// cycle pass feeds segmenter outputs through here); values are not
  /// required to be binary.
  Var<T> forward(const Var<T>& mask, const Tensor<T>& z, Rng& noise_rng) {
    const Tensor<T>& mv = mask.value();
    if (mv.ndim() != 3 || mv.dim(0) != 1 || mv.dim(1) != cfg_.input_h || mv.dim(2) != cfg_.input_w)
      throw ShapeError("generator forward: expected {1," + std::to_string(cfg_.input_h) + "," +
                       std::to_string(cfg_.input_w) + "}, got " + shape_str(mv.shape()));
    StyleVector<T> style = map_latent(Var<T>::constant(z));

    const int d = cfg_.depth;
    std::vector<Var<T>> enc(static_cast<size_t>(d));
    Var<T> cur = mask;
    for (int l = 0; l < d; ++l) {
      if (l > 0) cur = max_pool2x2(cur);
      cur = block(cur, "enc" + std::to_string(l));
      enc[static_cast<size_t>(l)] = cur;
    }

    Var<T> dec = enc[static_cast<size_t>(d - 1)];
    for (int l = d - 2; l >= 0; --l) {
      const std::string ls = std::to_string(l);
      const Var<T>& skip = enc[static_cast<size_t>(l)];
      const int h = skip.value().dim(1), w = skip.value().dim(2);
      auto up = conv2d(bilinear_resize(dec, h, w), params_.get("up" + ls + ".w"),
                       params_.get("up" + ls + ".b"), 1, 1);
      auto x = conv2d(concat_channels(skip, up), params_.get("dec" + ls + ".c1.w"),
                      params_.get("dec" + ls + ".c1.b"), 1, 1);
      x = adain(x, style.scales[static_cast<size_t>(l)], style.shifts[static_cast<size_t>(l)]);
      if (l < cfg_.noise_levels()) x = inject_noise(x, noise_rng, params_.get("noise" + ls));
      x = leaky_relu(x, T(0.2));
      dec = relu(conv2d(x, params_.get("dec" + ls + ".c2.w"), params_.get("dec" + ls + ".c2.b"), 1,
                        1));
    }
    return sigmoid(conv2d(dec, params_.get("head.w"), params_.get("head.b")));
  }

  /// Detached convenience wrapper over binary masks, as used at the CLI:
  /// {H,W} mask in, {H,W} image in [0,1] out.
  Tensor<T> generate_image(const Tensor<T>& mask, const Tensor<T>& z, Rng& noise_rng) {
    if (mask.ndim() != 2)
      throw ShapeError("generate_image: expected {H,W} mask, got " + shape_str(mask.shape()));
    for (int64_t i = 0; i < mask.numel(); ++i)
      if (mask[i] != T(0) && mask[i] != T(1))
        throw DataError("generate_image: mask is not binary at element " + std::to_string(i));
    auto out = forward(Var<T>::constant(mask.reshaped({1, mask.dim(0), mask.dim(1)})), z,
                       noise_rng);
    return out.value().reshaped({cfg_.input_h, cfg_.input_w});
  }

 private:
  Var<T> block(const Var<T>& x, const std::string& name) {
    auto h = relu(conv2d(x, params_.get(name + ".c1.w"), params_.get(name + ".c1.b"), 1, 1));
    return relu(conv2d(h, params_.get(name + ".c2.w"), params_.get(name + ".c2.b"), 1, 1));
  }

  GenConfig cfg_;
  ParamStore<T> params_;
};

}  // namespace sagegan
