#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "sagegan/attention_unet.hpp"
#include "sagegan/data_pipeline.hpp"

namespace sagegan {

struct Rgb {
  double r = 0, g = 0, b = 0;
};

/// Cold-to-hot lookup: blue through cyan, green and yellow to red, with
/// linear interpolation between the five stops. Input is clamped to [0,1].
inline Rgb colormap_blue_red(double t) {
  static constexpr std::array<std::array<double, 3>, 5> stops = {{
      {0, 0, 1},  // blue
      {0, 1, 1},  // cyan
      {0, 1, 0},  // green
      {1, 1, 0},  // yellow
      {1, 0, 0},  // red
  }};
  t = std::clamp(t, 0.0, 1.0);
  const double pos = t * 4.0;
  const int lo = std::min(3, static_cast<int>(pos));
  const double f = pos - lo;
  return {stops[lo][0] + f * (stops[lo + 1][0] - stops[lo][0]),
          stops[lo][1] + f * (stops[lo + 1][1] - stops[lo][1]),
          stops[lo][2] + f * (stops[lo + 1][2] - stops[lo][2])};
}

/// Min-max normalization to [0,1]; a constant map has no contrast to show
/// and becomes a uniform 0.5.
template <typename T>
inline Tensor<T> normalize_heat(const Tensor<T>& m) {
  T lo = m[0], hi = m[0];
  for (int64_t i = 0; i < m.numel(); ++i) {
    lo = std::min(lo, m[i]);
    hi = std::max(hi, m[i]);
  }
  Tensor<T> out(m.shape());
  if (hi == lo) {
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = T(0.5);
    return out;
  }
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = (m[i] - lo) / (hi - lo);
  return out;
}

template <typename T>
struct OverlayImage {
  Tensor<T> base;   // {H,W} grayscale
  Tensor<T> heat;   // {H,W} normalized attention, resampled to base dims
  Tensor<T> blend;  // {3,H,W} composite
  std::string colormap = "blue-red";
  double alpha = 0.5;
  int gate_index = 0;
};

/// Composite one attention map over the image it gated: normalize, resample
/// to the image resolution, color-map, then alpha-blend with the grayscale
/// base. `layer` selects by gate index (0 = finest); -1 keeps the default
/// finest gate.
template <typename T>
inline OverlayImage<T> render_attention_overlay(const Tensor<T>& image,
                                                const std::vector<AttentionMap<T>>& maps,
                                                int layer = -1,
                                                const std::string& colormap = "blue-red",
                                                double alpha = 0.5) {
  if (image.ndim() != 2)
    throw ShapeError("render_attention_overlay: expected {H,W} image, got " +
                     shape_str(image.shape()));
  if (maps.empty()) throw ParamError("render_attention_overlay: no attention maps supplied");
  if (alpha < 0 || alpha > 1) throw ParamError("render_attention_overlay: alpha must be in [0,1]");
  if (colormap != "blue-red")
    throw ParamError("render_attention_overlay: unknown colormap '" + colormap +
                     "'; available: blue-red");
  if (layer == -1) layer = 0;

  const AttentionMap<T>* selected = nullptr;
  std::string available;
  for (const auto& m : maps) {
    if (m.gate_index == layer) selected = &m;
    available += (available.empty() ? "" : ", ") + std::to_string(m.gate_index);
  }
  if (!selected)
    throw ParamError("render_attention_overlay: no gate with index " + std::to_string(layer) +
                     "; available: " + available);

  OverlayImage<T> out;
  out.base = image;
  out.colormap = colormap;
  out.alpha = alpha;
  out.gate_index = layer;
  out.heat = resize_bilinear(normalize_heat(selected->alpha), image.dim(0), image.dim(1));

  const int h = image.dim(0), w = image.dim(1);
  out.blend = Tensor<T>({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Rgb c = colormap_blue_red(static_cast<double>(out.heat.at(y, x)));
      const double g = static_cast<double>(image.at(y, x));
      out.blend.at(0, y, x) = static_cast<T>((1 - alpha) * g + alpha * c.r);
      out.blend.at(1, y, x) = static_cast<T>((1 - alpha) * g + alpha * c.g);
      out.blend.at(2, y, x) = static_cast<T>((1 - alpha) * g + alpha * c.b);
    }
  return out;
}

}  // namespace sagegan
