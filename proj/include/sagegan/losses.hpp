#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "sagegan/graph.hpp"
#include "sagegan/nn_ops.hpp"
#include "sagegan/rng.hpp"

namespace sagegan {

// Loss layer. Everything here is differentiable through the graph; the
// plain-number LossBreakdown mirrors the per-term values for logging.

constexpr double kProbEps = 1e-7;  // probability clamp before logarithms

struct TverskyParams {
  double alpha = 0.3;   // false-positive weight
  double beta = 0.7;    // false-negative weight
  double gamma = 1.5;   // focal exponent
  double smooth = 1e-6;

  void validate() const {
    if (alpha < 0 || beta < 0 || alpha + beta <= 0)
      throw ParamError("tversky: need alpha, beta >= 0 and alpha + beta > 0");
    if (gamma <= 0) throw ParamError("tversky: gamma must be > 0");
    if (smooth <= 0) throw ParamError("tversky: smooth must be > 0");
  }
};

struct SegLossWeights {
  double lambda1 = 1.0;  // cross-entropy
  double lambda2 = 1.0;  // focal Tversky

  void validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda1 + lambda2 <= 0)
      throw ParamError("seg loss weights must be >= 0 and not both 0");
  }
};

struct GanLossWeights {
  double lambda_cyc = 10.0;
  double lambda_perc = 1.0;
  double lambda_l1 = 10.0;

  void validate() const {
    if (lambda_cyc < 0 || lambda_perc < 0 || lambda_l1 < 0)
      throw ParamError("gan loss weights must be >= 0");
  }
};

/// Per-term record of one training step. `total` is always the weighted sum
/// of the parts; adversarial terms carry implicit weight 1.
struct LossBreakdown {
  double ce = 0, focal_tversky = 0;
  double adv_g = 0, adv_d_image = 0, adv_d_mask = 0;
  double cyc = 0, perc = 0, l1 = 0;
  double w_ce = 0, w_ftv = 0, w_cyc = 0, w_perc = 0, w_l1 = 0;
  double total = 0;

  double weighted_sum() const {
    return w_ce * ce + w_ftv * focal_tversky + adv_g + adv_d_image + adv_d_mask + w_cyc * cyc +
           w_perc * perc + w_l1 * l1;
  }

  bool additive(double tol = 1e-6) const { return std::fabs(total - weighted_sum()) <= tol; }

  /// Name of the first non-finite term, or empty when all are finite.
  std::string first_non_finite() const {
    const std::pair<const char*, double> parts[] = {
        {"ce", ce},   {"focal_tversky", focal_tversky}, {"adv_g", adv_g},
        {"adv_d_image", adv_d_image}, {"adv_d_mask", adv_d_mask},
        {"cyc", cyc}, {"perc", perc}, {"l1", l1}, {"total", total}};
    for (const auto& [name, v] : parts)
      if (!std::isfinite(v)) return name;
    return {};
  }
};

namespace detail {

template <typename T>
inline Var<T> sq(const Var<T>& x) {
  return x * x;
}

template <typename T>
inline Var<T> one_minus(const Var<T>& x) {
  return add_const(neg(x), T(1));
}

template <typename T>
inline void check_loss_shapes(const Var<T>& a, const Var<T>& b, const char* what) {
  check_same_shape(a.value(), b.value(), what);
}

}  // namespace detail

/// Mean of -log(p_t) over pixels, p_t being the probability assigned to the
/// true class. Probabilities are clamped to [1e-7, 1-1e-7] first. A positive
/// `focal_exp` multiplies each term by (1-p_t)^focal_exp; the default 0
/// keeps the plain form.
template <typename T>
inline Var<T> cross_entropy_loss(const Var<T>& pred_prob, const Var<T>& target,
                                 T focal_exp = T(0)) {
  detail::check_loss_shapes(pred_prob, target, "cross_entropy_loss");
  auto p_t = pred_prob * target + detail::one_minus(pred_prob) * detail::one_minus(target);
  p_t = clamp(p_t, static_cast<T>(kProbEps), T(1) - static_cast<T>(kProbEps));
  auto nll = neg(log(p_t));
  if (focal_exp > T(0)) nll = pow(detail::one_minus(p_t), focal_exp) * nll;
  return mean(nll);
}

/// Soft Tversky index on probability maps: TP, FP, FN are probability-
/// weighted counts.
template <typename T>
inline Var<T> tversky_index(const Var<T>& pred, const Var<T>& target, const TverskyParams& p) {
  p.validate();
  detail::check_loss_shapes(pred, target, "tversky_index");
  auto tp = sum(pred * target);
  auto fp = sum(pred * detail::one_minus(target));
  auto fn = sum(detail::one_minus(pred) * target);
  const T s = static_cast<T>(p.smooth);
  auto num = add_const(tp, s);
  auto den = add_const(tp + scale(fp, static_cast<T>(p.alpha)) + scale(fn, static_cast<T>(p.beta)), s);
  return num / den;
}

template <typename T>
inline Var<T> focal_tversky_loss(const Var<T>& pred, const Var<T>& target,
                                 const TverskyParams& p) {
  auto ti = tversky_index(pred, target, p);
  // relu guards against 1 - TI dipping below 0 by rounding before the
  // fractional power
  return pow(relu(detail::one_minus(ti)), static_cast<T>(p.gamma));
}

template <typename T>
struct SegLoss {
  Var<T> total;
  LossBreakdown breakdown;
};

/// Hybrid segmentation objective: lambda1 * CE + lambda2 * focal Tversky.
template <typename T>
inline SegLoss<T> total_seg_loss(const Var<T>& pred_prob, const Var<T>& target,
                                 const TverskyParams& p, const SegLossWeights& w,
                                 T focal_exp = T(0)) {
  w.validate();
  auto ce = cross_entropy_loss(pred_prob, target, focal_exp);
  auto ftv = focal_tversky_loss(pred_prob, target, p);
  auto total = scale(ce, static_cast<T>(w.lambda1)) + scale(ftv, static_cast<T>(w.lambda2));
  LossBreakdown b;
  b.ce = static_cast<double>(ce.item());
  b.focal_tversky = static_cast<double>(ftv.item());
  b.w_ce = w.lambda1;
  b.w_ftv = w.lambda2;
  b.total = b.weighted_sum();
  return {total, b};
}

template <typename T>
struct AdvLosses {
  Var<T> gen;   // mean((d_fake - 1)^2)
  Var<T> disc;  // mean((d_real - 1)^2) + mean(d_fake^2)
};

/// Least-squares adversarial objectives with targets 1 (real) and 0 (fake).
template <typename T>
inline AdvLosses<T> adversarial_losses(const Var<T>& d_real, const Var<T>& d_fake) {
  auto disc = mean(detail::sq(add_const(d_real, T(-1)))) + mean(detail::sq(d_fake));
  auto gen = mean(detail::sq(add_const(d_fake, T(-1))));
  return {gen, disc};
}

/// mean|F(G(x)) - x| + mean|G(F(y)) - y|.
template <typename T>
inline Var<T> cycle_consistency_loss(const Var<T>& x, const Var<T>& f_of_g_x, const Var<T>& y,
                                     const Var<T>& g_of_f_y) {
  detail::check_loss_shapes(x, f_of_g_x, "cycle_consistency_loss (mask side)");
  detail::check_loss_shapes(y, g_of_f_y, "cycle_consistency_loss (image side)");
  return mean(abs(f_of_g_x - x)) + mean(abs(g_of_f_y - y));
}

template <typename T>
inline Var<T> l1_loss(const Var<T>& a, const Var<T>& b) {
  detail::check_loss_shapes(a, b, "l1_loss");
  return mean(abs(a - b));
}

/// Frozen feature extractor for the perceptual term. Features stay
/// differentiable w.r.t. the input image; the extractor's own weights never
/// receive gradients.
template <typename T>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<Var<T>> features(const Var<T>& image) const = 0;
  virtual std::string name() const = 0;
};

/// Identity stub: the feature is the image itself, so the perceptual loss
/// reduces to pixel L1.
template <typename T>
class IdentityExtractor final : public FeatureExtractor<T> {
 public:
  std::vector<Var<T>> features(const Var<T>& image) const override { return {image}; }
  std::string name() const override { return "identity"; }
};

/// Small fixed convolutional stack tapping two depths. Filters are drawn
/// once from the seed and frozen; this stands in for a pretrained
/// classification backbone without any external weight download.
template <typename T>
class ConvExtractor final : public FeatureExtractor<T> {
 public:
  explicit ConvExtractor(uint64_t seed = 0) {
    auto r1 = Rng::from(seed, "perc-conv1");
    auto r2 = Rng::from(seed, "perc-conv2");
    w1_ = Var<T>::constant(r1.normal_tensor<T>({8, 1, 3, 3}, 0.0, 1.0 / 3.0));
    w2_ = Var<T>::constant(r2.normal_tensor<T>({16, 8, 3, 3}, 0.0, 1.0 / std::sqrt(72.0)));
  }

  std::vector<Var<T>> features(const Var<T>& image) const override {
    auto f1 = max_pool2x2(relu(conv2d(image, w1_, Var<T>{}, 1, 1)));
    auto f2 = max_pool2x2(relu(conv2d(f1, w2_, Var<T>{}, 1, 1)));
    return {f1, f2};
  }

  std::string name() const override { return "conv"; }

 private:
  Var<T> w1_, w2_;
};

/// Extractor factory for the `perceptual` config key: "off" -> null,
/// "identity", "conv[:seed]". Anything else is treated as an unavailable
/// pretrained backbone.
template <typename T>
inline std::unique_ptr<FeatureExtractor<T>> make_feature_extractor(const std::string& kind,
                                                                   uint64_t seed = 0) {
  if (kind.empty() || kind == "off") return nullptr;
  if (kind == "identity") return std::make_unique<IdentityExtractor<T>>();
  if (kind == "conv") return std::make_unique<ConvExtractor<T>>(seed);
  throw ConfigError("perceptual extractor '" + kind +
                    "' is unavailable; set perceptual=off (weight 0) to disable the term");
}

/// Mean absolute feature difference, averaged over tap layers.
template <typename T>
inline Var<T> perceptual_loss(const Var<T>& img_a, const Var<T>& img_b,
                              const FeatureExtractor<T>& extractor) {
  detail::check_loss_shapes(img_a, img_b, "perceptual_loss");
  auto fa = extractor.features(img_a);
  auto fb = extractor.features(img_b);
  Var<T> acc = Var<T>::scalar(T(0));
  for (size_t i = 0; i < fa.size(); ++i) acc = acc + l1_loss(fa[i], fb[i]);
  return scale(acc, T(1) / static_cast<T>(fa.size()));
}

/// Fill in the weights and the total for a Phase-2 step record. The ce /
/// focal_tversky slots carry the segmentation-feedback terms weighted by
/// the segmentation lambdas.
inline LossBreakdown total_gan_objective(LossBreakdown parts, const GanLossWeights& w,
                                         const SegLossWeights& sw = {}) {
  w.validate();
  parts.w_cyc = w.lambda_cyc;
  parts.w_perc = w.lambda_perc;
  parts.w_l1 = w.lambda_l1;
  parts.w_ce = sw.lambda1;
  parts.w_ftv = sw.lambda2;
  parts.total = parts.weighted_sum();
  if (auto bad = parts.first_non_finite(); !bad.empty())
    throw NumericError("non-finite loss term '" + bad + "'");
  return parts;
}

}  // namespace sagegan
