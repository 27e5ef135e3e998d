#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sagegan/checkpoint.hpp"
#include "sagegan/data_pipeline.hpp"
#include "sagegan/losses.hpp"
#include "sagegan/metrics.hpp"
#include "sagegan/nn_ops.hpp"
#include "sagegan/optim.hpp"

namespace sagegan {

// Attention-gated encoder-decoder segmenter. Skip features are reweighted
// spatially by a gate driven from the coarser decoder feature before being
// concatenated back in, and each gate's coefficient map is kept for
// visualization.

struct UNetConfig {
  int depth = 4;            // encoder levels; the deepest acts as bottleneck
  int base_channels = 32;   // doubled at every level
  double f_int_ratio = 0.5; // gate bottleneck width as a fraction of F_l
  int input_h = 256;
  int input_w = 256;

  void validate() const {
    if (depth < 2) throw ParamError("unet: depth must be >= 2");
    if (base_channels < 1) throw ParamError("unet: base_channels must be >= 1");
    if (f_int_ratio <= 0) throw ParamError("unet: f_int_ratio must be > 0");
    const int div = 1 << depth;
    if (input_h < div || input_w < div || input_h % div || input_w % div)
      throw ParamError("unet: input size must be divisible by 2^depth (" + std::to_string(div) +
                       ")");
  }

  int channels_at(int level) const { return base_channels << level; }
  int f_int_of(int f_l) const {
    return std::max(1, static_cast<int>(static_cast<double>(f_l) * f_int_ratio));
  }
};

template <typename T>
struct AttentionMap {
  Tensor<T> alpha;  // {h,w} at the skip's resolution, values in [0,1]
  int gate_index;   // 0 = finest skip
};

template <typename T>
struct GateVars {
  Var<T> wx;     // {F_int, F_l, 1, 1}, no bias
  Var<T> wg;     // {F_int, F_g, 1, 1}, no bias
  Var<T> psi;    // {1, F_int, 1, 1}
  Var<T> psi_b;  // {1}
};

/// f = ReLU(W_x*x + W_g*g), alpha = sigmoid(psi^T f + b_psi), x_hat =
/// alpha (.) x with alpha shared across channels. g may live at a coarser
/// resolution; it is bilinearly upsampled to x's grid first.
template <typename T>
inline std::pair<Var<T>, Var<T>> attention_gate(const Var<T>& x, const Var<T>& g,
                                                const GateVars<T>& p) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& gv = g.value();
  if (xv.ndim() != 3 || gv.ndim() != 3)
    throw ShapeError("attention_gate: expected {C,H,W} features, got " + shape_str(xv.shape()) +
                     " and " + shape_str(gv.shape()));
  Var<T> g_up = g;
  if (gv.dim(1) != xv.dim(1) || gv.dim(2) != xv.dim(2))
    g_up = bilinear_resize(g, xv.dim(1), xv.dim(2));
  if (p.wx.value().dim(1) != xv.dim(0) || p.wg.value().dim(1) != gv.dim(0))
    throw ShapeError("attention_gate: channel mismatch, x " + shape_str(xv.shape()) + " vs W_x " +
                     shape_str(p.wx.value().shape()) + ", g " + shape_str(gv.shape()) +
                     " vs W_g " + shape_str(p.wg.value().shape()));
  Var<T> none;  // bias-free 1x1 projections
  auto f = relu(conv2d(x, p.wx, none) + conv2d(g_up, p.wg, none));
  auto alpha = sigmoid(conv2d(f, p.psi, p.psi_b));  // {1,H,W}
  return {mul_channel_map(x, alpha), alpha};
}

template <typename T>
struct SegForward {
  Var<T> logits;                       // {1,H,W}
  std::vector<AttentionMap<T>> gates;  // depth-1 maps, index 0 finest
};

template <typename T>
class SegModel {
 public:
  explicit SegModel(UNetConfig cfg, uint64_t seed = 0) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = Rng::from(seed, "segmodel");
    const int d = cfg_.depth;

    auto fan_in_weight = [&](const std::string& name, int co, int ci, int k) {
      const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(ci) * k * k));
      params_.add(name, rng.uniform_tensor<T>({co, ci, k, k}, -bound, bound));
    };
    auto conv_init = [&](const std::string& name, int co, int ci, int k, bool bias) {
      fan_in_weight(name + ".w", co, ci, k);
      if (bias) params_.add(name + ".b", Tensor<T>::zeros({co}));
    };

    int in_ch = 1;
    for (int l = 0; l < d; ++l) {
      const int c = cfg_.channels_at(l);
      conv_init("enc" + std::to_string(l) + ".c1", c, in_ch, 3, true);
      conv_init("enc" + std::to_string(l) + ".c2", c, c, 3, true);
      in_ch = c;
    }
    for (int l = d - 2; l >= 0; --l) {
      const int c = cfg_.channels_at(l);
      const int cg = cfg_.channels_at(l + 1);  // coarser decoder feature width
      const int fi = cfg_.f_int_of(c);
      conv_init("up" + std::to_string(l), c, cg, 3, true);
      fan_in_weight("gate" + std::to_string(l) + ".wx", fi, c, 1);
      fan_in_weight("gate" + std::to_string(l) + ".wg", fi, cg, 1);
      fan_in_weight("gate" + std::to_string(l) + ".psi", 1, fi, 1);
      params_.add("gate" + std::to_string(l) + ".psi_b", Tensor<T>::zeros({1}));
      conv_init("dec" + std::to_string(l) + ".c1", c, 2 * c, 3, true);
      conv_init("dec" + std::to_string(l) + ".c2", c, c, 3, true);
    }
    conv_init("head", 1, cfg_.base_channels, 1, true);
  }

  const UNetConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  GateVars<T> gate_vars(int level) {
    const std::string g = "gate" + std::to_string(level);
    return {params_.get(g + ".wx"), params_.get(g + ".wg"), params_.get(g + ".psi"),
            params_.get(g + ".psi_b")};
  }

  /// Full pass over a {1,H,W} (or {H,W}) image at the configured input
  /// size. With identity_gates the skips bypass the gates entirely
  /// (alpha forced to 1), which reduces the network to a plain
  /// skip-connection encoder-decoder on the same weights.
  SegForward<T> forward(const Tensor<T>& image, bool identity_gates = false) {
    Tensor<T> img = image;
    if (img.ndim() == 2) img = img.reshaped({1, img.dim(0), img.dim(1)});
    if (img.ndim() != 3 || img.dim(0) != 1 || img.dim(1) != cfg_.input_h ||
        img.dim(2) != cfg_.input_w)
      throw ShapeError("segmenter forward: expected {1," + std::to_string(cfg_.input_h) + "," +
                       std::to_string(cfg_.input_w) + "}, got " + shape_str(image.shape()));
    return forward(Var<T>::constant(img), identity_gates);
  }

  /// Graph-connected variant; `image` may itself require gradients (used
  /// when the segmenter is driven by generated images).
  SegForward<T> forward(const Var<T>& image, bool identity_gates = false) {
    const int d = cfg_.depth;
    std::vector<Var<T>> enc(static_cast<size_t>(d));
    Var<T> cur = image;
    for (int l = 0; l < d; ++l) {
      if (l > 0) cur = max_pool2x2(cur);
      cur = block(cur, "enc" + std::to_string(l));
      enc[static_cast<size_t>(l)] = cur;
    }

    SegForward<T> out;
    out.gates.resize(static_cast<size_t>(d - 1));
    Var<T> dec = enc[static_cast<size_t>(d - 1)];
    for (int l = d - 2; l >= 0; --l) {
      const Var<T>& skip = enc[static_cast<size_t>(l)];
      const int h = skip.value().dim(1), w = skip.value().dim(2);
      auto up = conv2d(bilinear_resize(dec, h, w), params_.get("up" + std::to_string(l) + ".w"),
                       params_.get("up" + std::to_string(l) + ".b"), 1, 1);
      Var<T> gated;
      Tensor<T> alpha_map;
      if (identity_gates) {
        gated = skip;
        alpha_map = Tensor<T>::full({h, w}, T(1));
      } else {
        auto [x_hat, alpha] = attention_gate(skip, dec, gate_vars(l));
        gated = x_hat;
        alpha_map = alpha.value().reshaped({h, w});
      }
      out.gates[static_cast<size_t>(l)] = {std::move(alpha_map), l};
      dec = block(concat_channels(gated, up), "dec" + std::to_string(l));
    }
    out.logits = conv2d(dec, params_.get("head.w"), params_.get("head.b"));
    return out;
  }

  /// Segmentation probabilities as a graph node, {1,H,W}.
  Var<T> forward_prob(const Var<T>& image) { return sigmoid(forward(image).logits); }

  /// Detached probability map {H,W}.
  Tensor<T> seg_prob(const Tensor<T>& image) {
    auto fwd = forward(image);
    return sigmoid(fwd.logits).value().reshaped({cfg_.input_h, cfg_.input_w});
  }

  /// Binary mask {H,W}: sigmoid(logits) >= threshold.
  Tensor<T> predict_mask(const Tensor<T>& image, double threshold = 0.5) {
    if (threshold < 0 || threshold > 1) throw ParamError("predict_mask: threshold must be in [0,1]");
    Tensor<T> prob = seg_prob(image);
    Tensor<T> mask(prob.shape());
    for (int64_t i = 0; i < prob.numel(); ++i)
      mask[i] = prob[i] >= static_cast<T>(threshold) ? T(1) : T(0);
    return mask;
  }

 private:
  Var<T> block(const Var<T>& x, const std::string& name) {
    auto h = relu(conv2d(x, params_.get(name + ".c1.w"), params_.get(name + ".c1.b"), 1, 1));
    return relu(conv2d(h, params_.get(name + ".c2.w"), params_.get(name + ".c2.b"), 1, 1));
  }

  UNetConfig cfg_;
  ParamStore<T> params_;
};

/// Per-image scores against ground truth for a set of preprocessed pairs.
template <typename T>
inline SegReport evaluate_dataset(SegModel<T>& model, const std::vector<SamplePair<T>>& pairs,
                                  double threshold = 0.5) {
  SegReport report;
  for (const auto& p : pairs) {
    const Tensor<T> pred = model.predict_mask(p.image, threshold);
    const auto c = confusion_counts(pred, p.mask);
    const auto [prec, rec] = precision_recall(c);
    report.per_image.push_back({p.id, dice_from_counts(c), f1_score(c), prec, rec});
  }
  report.finalize();
  return report;
}

struct PretrainConfig {
  int epochs = 200;
  double lr = 2e-4;
  double beta1 = 0.5, beta2 = 0.999;
  TverskyParams tversky;
  SegLossWeights weights;
  double focal_exponent = 0;  // CE focusing, off by default
  double threshold = 0.5;     // validation binarization
  uint64_t seed = 0;
  bool augment = false;
  AugmentConfig augment_cfg;
};

struct EpochRow {
  int epoch = 0;
  LossBreakdown loss;  // parts averaged over the epoch's images
  double val_dice = 0, val_f1 = 0;
};

struct PretrainResult {
  std::vector<EpochRow> history;
  double best_val_dice = 0;
  int best_epoch = -1;  // -1: no validation-based selection happened
};

namespace detail {

template <typename T>
inline std::vector<Tensor<T>> snapshot_params(const ParamStore<T>& store) {
  std::vector<Tensor<T>> vals;
  vals.reserve(store.size());
  for (const auto& e : store.entries()) vals.push_back(e.var.value());
  return vals;
}

template <typename T>
inline void restore_params(ParamStore<T>& store, const std::vector<Tensor<T>>& vals) {
  for (size_t i = 0; i < store.size(); ++i) store.entries()[i].var.node()->value = vals[i];
}

}  // namespace detail

/// Supervised pretraining on the train partition with hybrid CE + focal
/// Tversky loss; the returned model state is the best-validation-Dice
/// epoch (or the final state when there is no validation data).
template <typename T>
inline PretrainResult pretrain_segmenter(SegModel<T>& model, const DatasetSplit<T>& split,
                                         const PretrainConfig& cfg) {
  if (split.train.empty()) throw ParamError("pretrain: empty train set");
  if (cfg.epochs < 0) throw ParamError("pretrain: negative epoch count");
  model.config().validate();

  PretrainResult result;
  Adam<T> opt(model.params(), static_cast<T>(cfg.lr), static_cast<T>(cfg.beta1),
              static_cast<T>(cfg.beta2));
  Rng rng = Rng::from(cfg.seed, "pretrain");
  std::vector<Tensor<T>> best;

  std::vector<size_t> order(split.train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    LossBreakdown acc;
    for (size_t k = 0; k < order.size(); ++k) {
      SamplePair<T> sample = split.train[order[k]];
      if (cfg.augment) sample = augment(sample, cfg.augment_cfg, rng);

      model.params().zero_grad();
      auto prob = model.forward_prob(
          Var<T>::constant(sample.image.reshaped({1, sample.image.dim(0), sample.image.dim(1)})));
      auto target = Var<T>::constant(
          sample.mask.reshaped({1, sample.mask.dim(0), sample.mask.dim(1)}));
      SegLoss<T> loss =
          total_seg_loss(prob, target, cfg.tversky, cfg.weights, static_cast<T>(cfg.focal_exponent));
      if (auto bad = loss.breakdown.first_non_finite(); !bad.empty())
        throw NumericError("pretrain epoch " + std::to_string(epoch) + ": non-finite loss term '" +
                           bad + "'");
      backward(loss.total);
      opt.step();

      acc.ce += loss.breakdown.ce;
      acc.focal_tversky += loss.breakdown.focal_tversky;
      acc.total += loss.breakdown.total;
    }
    const double n = static_cast<double>(order.size());
    EpochRow row;
    row.epoch = epoch;
    row.loss.ce = acc.ce / n;
    row.loss.focal_tversky = acc.focal_tversky / n;
    row.loss.w_ce = cfg.weights.lambda1;
    row.loss.w_ftv = cfg.weights.lambda2;
    row.loss.total = acc.total / n;

    if (!split.val.empty()) {
      const SegReport rep = evaluate_dataset(model, split.val, cfg.threshold);
      row.val_dice = rep.mean_dice;
      row.val_f1 = rep.mean_f1;
      if (result.best_epoch < 0 || rep.mean_dice > result.best_val_dice) {
        result.best_val_dice = rep.mean_dice;
        result.best_epoch = epoch;
        best = detail::snapshot_params(model.params());
      }
    }
    result.history.push_back(row);
  }

  if (!best.empty()) detail::restore_params(model.params(), best);
  return result;
}

}  // namespace sagegan
