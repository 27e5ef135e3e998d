#pragma once

#include <Eigen/Core>
#include <cmath>
#include <utility>
#include <vector>

#include "sagegan/graph.hpp"

namespace sagegan {

// Convolution and friends. Feature maps are rank-3 tensors {C,H,W};
// kernels are {O,C,kh,kw}. Convolutions run as im2col + GEMM; the column
// buffer is rebuilt in the backward pass instead of being retained, so
// memory stays proportional to the activations.

namespace detail {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
inline void im2col(const Tensor<T>& x, int kh, int kw, int stride, int pad,
                   std::vector<T>& cols, int ho, int wo) {
  const int c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int64_t patch = static_cast<int64_t>(ho) * wo;
  cols.assign(static_cast<size_t>(c_in) * kh * kw * patch, T(0));
  for (int c = 0; c < c_in; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T* row = cols.data() + ((static_cast<int64_t>(c) * kh + ky) * kw + kx) * patch;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= w) continue;
            row[static_cast<int64_t>(oy) * wo + ox] = x.at(c, iy, ix);
          }
        }
      }
    }
  }
}

template <typename T>
inline void col2im_add(const std::vector<T>& cols, int c_in, int h, int w, int kh, int kw,
                       int stride, int pad, int ho, int wo, Tensor<T>& dx) {
  const int64_t patch = static_cast<int64_t>(ho) * wo;
  for (int c = 0; c < c_in; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = cols.data() + ((static_cast<int64_t>(c) * kh + ky) * kw + kx) * patch;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= w) continue;
            dx.at(c, iy, ix) += row[static_cast<int64_t>(oy) * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2-D convolution. `bias` may be an undefined Var to skip the bias term.
template <typename T>
inline Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride = 1,
                     int pad = 0) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = weight.value();
  if (xv.ndim() != 3 || wv.ndim() != 4)
    throw ShapeError("conv2d: expected input {C,H,W} and weight {O,C,kh,kw}, got " +
                     shape_str(xv.shape()) + " and " + shape_str(wv.shape()));
  const int c_in = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  const int c_out = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  if (wv.dim(1) != c_in)
    throw ShapeError("conv2d: input has " + std::to_string(c_in) + " channels but weight expects " +
                     std::to_string(wv.dim(1)));
  const int ho = detail::conv_out_dim(h, kh, stride, pad);
  const int wo = detail::conv_out_dim(w, kw, stride, pad);
  if (ho <= 0 || wo <= 0)
    throw ShapeError("conv2d: kernel " + shape_str(wv.shape()) + " does not fit input " +
                     shape_str(xv.shape()));
  const int64_t k_sz = static_cast<int64_t>(c_in) * kh * kw;
  const int64_t patch = static_cast<int64_t>(ho) * wo;

  std::vector<T> cols;
  detail::im2col(xv, kh, kw, stride, pad, cols, ho, wo);

  Tensor<T> out({c_out, ho, wo});
  {
    detail::CMapRM<T> wm(wv.data(), c_out, k_sz);
    detail::CMapRM<T> cm(cols.data(), k_sz, patch);
    detail::MapRM<T> om(out.data(), c_out, patch);
    om.noalias() = wm * cm;
  }
  const bool has_bias = bias.defined();
  if (has_bias) {
    const Tensor<T>& bv = bias.value();
    if (bv.numel() != c_out)
      throw ShapeError("conv2d: bias size " + std::to_string(bv.numel()) + " != out channels " +
                       std::to_string(c_out));
    for (int o = 0; o < c_out; ++o) {
      T b = bv[o];
      T* p = out.data() + static_cast<int64_t>(o) * patch;
      for (int64_t i = 0; i < patch; ++i) p[i] += b;
    }
  }

  auto xn = x.node().get();
  auto wn = weight.node().get();
  auto bn = has_bias ? bias.node().get() : nullptr;
  std::vector<Var<T>> parents = has_bias ? std::vector<Var<T>>{x, weight, bias}
                                         : std::vector<Var<T>>{x, weight};
  return detail::make_op<T>(
      std::move(out), std::move(parents),
      [xn, wn, bn, stride, pad, c_in, h, w, c_out, kh, kw, ho, wo, k_sz, patch](Node<T>& n) {
        detail::CMapRM<T> gm(n.grad.data(), c_out, patch);
        if (wn->requires_grad) {
          wn->ensure_grad();
          std::vector<T> cols;
          detail::im2col(xn->value, kh, kw, stride, pad, cols, ho, wo);
          detail::CMapRM<T> cm(cols.data(), k_sz, patch);
          detail::MapRM<T> dwm(wn->grad.data(), c_out, k_sz);
          dwm.noalias() += gm * cm.transpose();
        }
        if (bn && bn->requires_grad) {
          bn->ensure_grad();
          for (int o = 0; o < c_out; ++o) {
            T s = T(0);
            const T* p = n.grad.data() + static_cast<int64_t>(o) * patch;
            for (int64_t i = 0; i < patch; ++i) s += p[i];
            bn->grad[o] += s;
          }
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          std::vector<T> dcols(static_cast<size_t>(k_sz) * patch);
          detail::CMapRM<T> wm(wn->value.data(), c_out, k_sz);
          detail::MapRM<T> dcm(dcols.data(), k_sz, patch);
          dcm.noalias() = wm.transpose() * gm;
          detail::col2im_add(dcols, c_in, h, w, kh, kw, stride, pad, ho, wo, xn->grad);
        }
      });
}

/// 2x2 max pooling with stride 2; ties resolve to the first element scanned.
template <typename T>
inline Var<T> max_pool2x2(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  if (xv.ndim() != 3) throw ShapeError("max_pool2x2: expected {C,H,W}, got " + shape_str(xv.shape()));
  const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  if (h % 2 != 0 || w % 2 != 0)
    throw ShapeError("max_pool2x2: spatial dims must be even, got " + shape_str(xv.shape()));
  const int ho = h / 2, wo = w / 2;
  Tensor<T> out({c, ho, wo});
  std::vector<int64_t> argmax(static_cast<size_t>(c) * ho * wo);
  int64_t oi = 0;
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox, ++oi) {
        T best = xv.at(ch, oy * 2, ox * 2);
        int64_t bi = (static_cast<int64_t>(ch) * h + oy * 2) * w + ox * 2;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            T v = xv.at(ch, oy * 2 + dy, ox * 2 + dx);
            if (v > best) {
              best = v;
              bi = (static_cast<int64_t>(ch) * h + oy * 2 + dy) * w + ox * 2 + dx;
            }
          }
        out[oi] = best;
        argmax[static_cast<size_t>(oi)] = bi;
      }
    }
  }
  auto xn = x.node().get();
  return detail::make_op<T>(std::move(out), {x},
                            [xn, argmax = std::move(argmax)](Node<T>& n) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              for (int64_t i = 0; i < n.grad.numel(); ++i)
                                xn->grad[argmax[static_cast<size_t>(i)]] += n.grad[i];
                            });
}

namespace detail {

struct ResizeTap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1-w1
};

/// Half-pixel-center source coordinates, clamped at the borders.
inline std::vector<ResizeTap> bilinear_taps(int in, int out) {
  std::vector<ResizeTap> taps(static_cast<size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double s = (o + 0.5) * scale - 0.5;
    if (s < 0) s = 0;
    if (s > in - 1) s = in - 1;
    int i0 = static_cast<int>(s);
    int i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<size_t>(o)] = {i0, i1, s - i0};
  }
  return taps;
}

}  // namespace detail

/// Bilinear resize of a {C,H,W} map to {C,ho,wo}.
template <typename T>
inline Var<T> bilinear_resize(const Var<T>& x, int ho, int wo) {
  const Tensor<T>& xv = x.value();
  if (xv.ndim() != 3)
    throw ShapeError("bilinear_resize: expected {C,H,W}, got " + shape_str(xv.shape()));
  if (ho <= 0 || wo <= 0) throw ParamError("bilinear_resize: target size must be positive");
  const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  auto ty = detail::bilinear_taps(h, ho);
  auto tx = detail::bilinear_taps(w, wo);
  Tensor<T> out({c, ho, wo});
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < ho; ++oy) {
      const auto& yt = ty[static_cast<size_t>(oy)];
      for (int ox = 0; ox < wo; ++ox) {
        const auto& xt = tx[static_cast<size_t>(ox)];
        double v = (1 - yt.w1) * ((1 - xt.w1) * xv.at(ch, yt.i0, xt.i0) +
                                  xt.w1 * xv.at(ch, yt.i0, xt.i1)) +
                   yt.w1 * ((1 - xt.w1) * xv.at(ch, yt.i1, xt.i0) +
                            xt.w1 * xv.at(ch, yt.i1, xt.i1));
        out.at(ch, oy, ox) = static_cast<T>(v);
      }
    }
  auto xn = x.node().get();
  return detail::make_op<T>(
      std::move(out), {x},
      [xn, ty = std::move(ty), tx = std::move(tx), c, ho, wo](Node<T>& n) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int ch = 0; ch < c; ++ch)
          for (int oy = 0; oy < ho; ++oy) {
            const auto& yt = ty[static_cast<size_t>(oy)];
            for (int ox = 0; ox < wo; ++ox) {
              const auto& xt = tx[static_cast<size_t>(ox)];
              T g = n.grad.at(ch, oy, ox);
              xn->grad.at(ch, yt.i0, xt.i0) += static_cast<T>((1 - yt.w1) * (1 - xt.w1)) * g;
              xn->grad.at(ch, yt.i0, xt.i1) += static_cast<T>((1 - yt.w1) * xt.w1) * g;
              xn->grad.at(ch, yt.i1, xt.i0) += static_cast<T>(yt.w1 * (1 - xt.w1)) * g;
              xn->grad.at(ch, yt.i1, xt.i1) += static_cast<T>(yt.w1 * xt.w1) * g;
            }
          }
      });
}

/// Fully connected layer on a rank-1 tensor: out = W x + b.
template <typename T>
inline Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = weight.value();
  if (xv.ndim() != 1 || wv.ndim() != 2 || wv.dim(1) != xv.dim(0))
    throw ShapeError("linear: incompatible shapes " + shape_str(wv.shape()) + " and " +
                     shape_str(xv.shape()));
  const int m = wv.dim(0), k = wv.dim(1);
  Tensor<T> out({m});
  for (int i = 0; i < m; ++i) {
    T s = bias.defined() ? bias.value()[i] : T(0);
    const T* row = wv.data() + static_cast<int64_t>(i) * k;
    for (int j = 0; j < k; ++j) s += row[j] * xv[j];
    out[i] = s;
  }
  auto xn = x.node().get();
  auto wn = weight.node().get();
  auto bn = bias.defined() ? bias.node().get() : nullptr;
  std::vector<Var<T>> parents =
      bias.defined() ? std::vector<Var<T>>{x, weight, bias} : std::vector<Var<T>>{x, weight};
  return detail::make_op<T>(std::move(out), std::move(parents), [xn, wn, bn, m, k](Node<T>& n) {
    if (wn->requires_grad) {
      wn->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j)
          wn->grad[static_cast<int64_t>(i) * k + j] += n.grad[i] * xn->value[j];
    }
    if (bn && bn->requires_grad) {
      bn->ensure_grad();
      for (int i = 0; i < m; ++i) bn->grad[i] += n.grad[i];
    }
    if (xn->requires_grad) {
      xn->ensure_grad();
      for (int i = 0; i < m; ++i) {
        const T* row = wn->value.data() + static_cast<int64_t>(i) * k;
        for (int j = 0; j < k; ++j) xn->grad[j] += n.grad[i] * row[j];
      }
    }
  });
}

/// Channel-wise concatenation of two {C,H,W} maps.
template <typename T>
inline Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.ndim() != 3 || bv.ndim() != 3 || av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2))
    throw ShapeError("concat_channels: incompatible shapes " + shape_str(av.shape()) + " and " +
                     shape_str(bv.shape()));
  Tensor<T> out({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
  std::copy(av.data(), av.data() + av.numel(), out.data());
  std::copy(bv.data(), bv.data() + bv.numel(), out.data() + av.numel());
  auto an = a.node().get();
  auto bn = b.node().get();
  const int64_t na = av.numel();
  return detail::make_op<T>(std::move(out), {a, b}, [an, bn, na](Node<T>& n) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (int64_t i = 0; i < na; ++i) an->grad[i] += n.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      const int64_t nb = n.grad.numel() - na;
      for (int64_t i = 0; i < nb; ++i) bn->grad[i] += n.grad[na + i];
    }
  });
}

/// Multiply a {C,H,W} map by a single-channel {1,H,W} map, broadcast over channels.
template <typename T>
inline Var<T> mul_channel_map(const Var<T>& x, const Var<T>& m) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& mv = m.value();
  if (xv.ndim() != 3 || mv.ndim() != 3 || mv.dim(0) != 1 || mv.dim(1) != xv.dim(1) ||
      mv.dim(2) != xv.dim(2))
    throw ShapeError("mul_channel_map: shapes " + shape_str(xv.shape()) + " and " +
                     shape_str(mv.shape()) + " do not broadcast");
  const int c = xv.dim(0);
  const int64_t hw = static_cast<int64_t>(xv.dim(1)) * xv.dim(2);
  Tensor<T> out(xv.shape());
  for (int ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < hw; ++i) out[ch * hw + i] = xv[ch * hw + i] * mv[i];
  auto xn = x.node().get();
  auto mn = m.node().get();
  return detail::make_op<T>(std::move(out), {x, m}, [xn, mn, c, hw](Node<T>& n) {
    if (xn->requires_grad) {
      xn->ensure_grad();
      for (int ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < hw; ++i)
          xn->grad[ch * hw + i] += n.grad[ch * hw + i] * mn->value[i];
    }
    if (mn->requires_grad) {
      mn->ensure_grad();
      for (int ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < hw; ++i)
          mn->grad[i] += n.grad[ch * hw + i] * xn->value[ch * hw + i];
    }
  });
}

/// Adaptive instance normalization: per channel, standardize then apply
/// style scale/shift. sigma uses sqrt(var + eps) so constant channels
/// stay finite.
template <typename T>
inline Var<T> adain(const Var<T>& x, const Var<T>& scale_v, const Var<T>& shift_v,
                    T eps = T(1e-5)) {
  const Tensor<T>& xv = x.value();
  if (xv.ndim() != 3) throw ShapeError("adain: expected {C,H,W}, got " + shape_str(xv.shape()));
  const int c = xv.dim(0);
  const int64_t hw = static_cast<int64_t>(xv.dim(1)) * xv.dim(2);
  if (scale_v.value().numel() != c || shift_v.value().numel() != c)
    throw ShapeError("adain: style has " + std::to_string(scale_v.value().numel()) +
                     "/" + std::to_string(shift_v.value().numel()) + " entries for " +
                     std::to_string(c) + " channels");

  std::vector<T> mu(static_cast<size_t>(c)), sig(static_cast<size_t>(c));
  Tensor<T> out(xv.shape());
  for (int ch = 0; ch < c; ++ch) {
    const T* px = xv.data() + ch * hw;
    T m = T(0);
    for (int64_t i = 0; i < hw; ++i) m += px[i];
    m /= static_cast<T>(hw);
    T var = T(0);
    for (int64_t i = 0; i < hw; ++i) {
      T d = px[i] - m;
      var += d * d;
    }
    var /= static_cast<T>(hw);
    T s = std::sqrt(var + eps);
    mu[static_cast<size_t>(ch)] = m;
    sig[static_cast<size_t>(ch)] = s;
    const T sc = scale_v.value()[ch], sh = shift_v.value()[ch];
    T* po = out.data() + ch * hw;
    for (int64_t i = 0; i < hw; ++i) po[i] = sc * (px[i] - m) / s + sh;
  }

  auto xn = x.node().get();
  auto scn = scale_v.node().get();
  auto shn = shift_v.node().get();
  return detail::make_op<T>(
      std::move(out), {x, scale_v, shift_v},
      [xn, scn, shn, c, hw, mu = std::move(mu), sig = std::move(sig)](Node<T>& n) {
        for (int ch = 0; ch < c; ++ch) {
          const T* px = xn->value.data() + ch * hw;
          const T* pg = n.grad.data() + ch * hw;
          const T m = mu[static_cast<size_t>(ch)];
          const T s = sig[static_cast<size_t>(ch)];
          T g_sum = T(0), gx_sum = T(0);
          for (int64_t i = 0; i < hw; ++i) {
            g_sum += pg[i];
            gx_sum += pg[i] * (px[i] - m) / s;
          }
          if (shn->requires_grad) {
            shn->ensure_grad();
            shn->grad[ch] += g_sum;
          }
          if (scn->requires_grad) {
            scn->ensure_grad();
            scn->grad[ch] += gx_sum;
          }
          if (xn->requires_grad) {
            xn->ensure_grad();
            const T sc = scn->value[ch];
            const T inv_n = T(1) / static_cast<T>(hw);
            T* pdx = xn->grad.data() + ch * hw;
            for (int64_t i = 0; i < hw; ++i) {
              T xhat = (px[i] - m) / s;
              pdx[i] += sc / s * (pg[i] - g_sum * inv_n - xhat * gx_sum * inv_n);
            }
          }
        }
      });
}

/// Add a single-channel noise map scaled by a learned per-channel factor.
/// The noise tensor is a fixed sample, not a graph node.
template <typename T>
inline Var<T> add_scaled_noise(const Var<T>& x, const Tensor<T>& noise, const Var<T>& scale_v) {
  const Tensor<T>& xv = x.value();
  if (xv.ndim() != 3 || noise.ndim() != 3 || noise.dim(0) != 1 || noise.dim(1) != xv.dim(1) ||
      noise.dim(2) != xv.dim(2))
    throw ShapeError("add_scaled_noise: shapes " + shape_str(xv.shape()) + " and " +
                     shape_str(noise.shape()) + " do not broadcast");
  const int c = xv.dim(0);
  const int64_t hw = static_cast<int64_t>(xv.dim(1)) * xv.dim(2);
  if (scale_v.value().numel() != c)
    throw ShapeError("add_scaled_noise: scale has " + std::to_string(scale_v.value().numel()) +
                     " entries for " + std::to_string(c) + " channels");
  Tensor<T> out(xv.shape());
  for (int ch = 0; ch < c; ++ch) {
    const T sc = scale_v.value()[ch];
    for (int64_t i = 0; i < hw; ++i) out[ch * hw + i] = xv[ch * hw + i] + sc * noise[i];
  }
  auto xn = x.node().get();
  auto scn = scale_v.node().get();
  return detail::make_op<T>(std::move(out), {x, scale_v}, [xn, scn, c, hw, noise](Node<T>& n) {
    if (xn->requires_grad) {
      xn->ensure_grad();
      for (int64_t i = 0; i < n.grad.numel(); ++i) xn->grad[i] += n.grad[i];
    }
    if (scn->requires_grad) {
      scn->ensure_grad();
      for (int ch = 0; ch < c; ++ch) {
        T s = T(0);
        for (int64_t i = 0; i < hw; ++i) s += n.grad[ch * hw + i] * noise[i];
        scn->grad[ch] += s;
      }
    }
  });
}

}  // namespace sagegan
