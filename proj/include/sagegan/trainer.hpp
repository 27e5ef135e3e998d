#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sagegan/attention_unet.hpp"
#include "sagegan/checkpoint.hpp"
#include "sagegan/discriminator.hpp"
#include "sagegan/style_generator.hpp"

namespace sagegan {

// Phase-2 engine: the pretrained segmenter becomes the image->mask
// direction of a cycle-consistent pair, the style generator the
// mask->image direction, with one patch discriminator per domain and
// online synthetic augmentation feeding the segmenter.

struct TrainConfig {
  int epochs_pretrain = 200;
  int epochs_gan = 500;
  int batch_size = 4;
  double lr_gen = 2e-4;
  double lr_disc = 2e-4;
  double lr_seg = 2e-5;  // 10x below the Phase-1 rate
  double beta1 = 0.5, beta2 = 0.999;
  uint64_t seed = 0;
  SegLossWeights seg_weights;
  GanLossWeights gan_weights;
  TverskyParams tversky;
  bool seg_finetune = true;
  std::string perceptual = "off";  // "off" | "identity" | "conv"
  double threshold = 0.5;          // validation binarization
  int checkpoint_every = 0;        // cycle checkpoint cadence in epochs; 0 = off

  void validate() const {
    if (epochs_pretrain < 0 || epochs_gan < 0) throw ParamError("train: epochs must be >= 0");
    if (batch_size < 1) throw ParamError("train: batch_size must be >= 1");
    if (lr_gen <= 0 || lr_disc <= 0 || lr_seg <= 0) throw ParamError("train: rates must be > 0");
    if (threshold < 0 || threshold > 1) throw ParamError("train: threshold must be in [0,1]");
    if (checkpoint_every < 0) throw ParamError("train: checkpoint_every must be >= 0");
    seg_weights.validate();
    gan_weights.validate();
    tversky.validate();
  }
};

template <typename T>
struct CycleState {
  GenModel<T> gen;
  SegModel<T> seg;
  DiscModel<T> disc_image;
  DiscModel<T> disc_mask;
  Adam<T> opt_gen;
  Adam<T> opt_seg;
  Adam<T> opt_disc_image;
  Adam<T> opt_disc_mask;
  int64_t iteration = 0;

  CycleState(const GenConfig& gc, const UNetConfig& sc, const DiscConfig& dc,
             const TrainConfig& tc)
      : gen(gc, mix_seed(tc.seed, "gen")),
        seg(sc, mix_seed(tc.seed, "seg")),
        disc_image(dc, mix_seed(tc.seed, "disc_image")),
        disc_mask(dc, mix_seed(tc.seed, "disc_mask")),
        opt_gen(gen.params(), static_cast<T>(tc.lr_gen), static_cast<T>(tc.beta1),
                static_cast<T>(tc.beta2)),
        opt_seg(seg.params(), static_cast<T>(tc.lr_seg), static_cast<T>(tc.beta1),
                static_cast<T>(tc.beta2)),
        opt_disc_image(disc_image.params(), static_cast<T>(tc.lr_disc), static_cast<T>(tc.beta1),
                       static_cast<T>(tc.beta2)),
        opt_disc_mask(disc_mask.params(), static_cast<T>(tc.lr_disc), static_cast<T>(tc.beta1),
                      static_cast<T>(tc.beta2)) {
    if (gc.input_h != sc.input_h || gc.input_w != sc.input_w)
      throw ConfigError("cycle state: generator and segmenter input sizes differ");
  }

  // optimizers hold pointers into the stores, so the state must stay put
  CycleState(const CycleState&) = delete;
  CycleState& operator=(const CycleState&) = delete;
};

template <typename T>
struct SyntheticBatch {
  std::vector<SamplePair<T>> pairs;  // (G(mask, z), source mask)
  int64_t iteration = 0;
};

/// One synthetic pair per source pair, fresh z each, masks carried over
/// bit-exactly.
template <typename T>
inline SyntheticBatch<T> make_synthetic_batch(const std::vector<SamplePair<T>>& source,
                                              GenModel<T>& gen, Rng& rng, int64_t iteration = 0) {
  SyntheticBatch<T> out;
  out.iteration = iteration;
  out.pairs.reserve(source.size());
  for (const auto& p : source) {
    const Tensor<T> z = rng.normal_tensor<T>({gen.config().d_z});
    SamplePair<T> s;
    s.id = p.id + ":synth";
    s.image = gen.generate_image(p.mask, z, rng);
    s.mask = p.mask;
    out.pairs.push_back(std::move(s));
  }
  return out;
}

/// D_real union D_synthetic(t): plain concatenation, no dedup.
template <typename T>
inline std::vector<SamplePair<T>> effective_batch(const std::vector<SamplePair<T>>& real,
                                                  const SyntheticBatch<T>& synth) {
  std::vector<SamplePair<T>> out = real;
  out.insert(out.end(), synth.pairs.begin(), synth.pairs.end());
  return out;
}

namespace detail {

template <typename T>
inline Var<T> as_chw(const Tensor<T>& img) {
  return Var<T>::constant(img.reshaped({1, img.dim(0), img.dim(1)}));
}

template <typename T>
inline Var<T> mean_of(std::vector<Var<T>>& terms) {
  Var<T> s = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) s = s + terms[i];
  return scale(s, static_cast<T>(1.0 / static_cast<double>(terms.size())));
}

}  // namespace detail

/// Graph-connected fakes G(mask_i, z_i) for one batch; draws one z and one
/// noise stream per sample from `rng`.
template <typename T>
inline std::vector<Var<T>> synthesize_fakes(CycleState<T>& state,
                                            const std::vector<SamplePair<T>>& batch, Rng& rng) {
  std::vector<Var<T>> fakes;
  fakes.reserve(batch.size());
  for (const auto& p : batch) {
    const Tensor<T> z = rng.normal_tensor<T>({state.gen.config().d_z});
    fakes.push_back(state.gen.forward(detail::as_chw(p.mask), z, rng));
  }
  return fakes;
}

/// MSE-target update of the image discriminator against detached fakes.
/// Returns the discriminator loss.
template <typename T>
inline double update_disc_image(CycleState<T>& state, const std::vector<SamplePair<T>>& batch,
                                const std::vector<Var<T>>& fakes, const TrainConfig&) {
  std::vector<Var<T>> terms;
  for (size_t i = 0; i < batch.size(); ++i) {
    auto d_real = state.disc_image.forward(detail::as_chw(batch[i].image));
    auto d_fake = state.disc_image.forward(fakes[i].detach());
    terms.push_back(adversarial_losses(d_real, d_fake).disc);
  }
  auto loss = detail::mean_of(terms);
  state.disc_image.params().zero_grad();
  backward(loss);
  state.opt_disc_image.step();
  return static_cast<double>(loss.item());
}

/// MSE-target update of the mask discriminator: real masks vs detached
/// segmenter probability maps of real images.
template <typename T>
inline double update_disc_mask(CycleState<T>& state, const std::vector<SamplePair<T>>& batch,
                               const TrainConfig&) {
  std::vector<Var<T>> terms;
  for (const auto& p : batch) {
    auto d_real = state.disc_mask.forward(detail::as_chw(p.mask));
    auto fake_mask = state.seg.forward_prob(detail::as_chw(p.image)).detach();
    auto d_fake = state.disc_mask.forward(fake_mask);
    terms.push_back(adversarial_losses(d_real, d_fake).disc);
  }
  auto loss = detail::mean_of(terms);
  state.disc_mask.params().zero_grad();
  backward(loss);
  state.opt_disc_mask.step();
  return static_cast<double>(loss.item());
}

/// Generator update: adversarial + cycle + perceptual + L1 + segmentation
/// feedback. Fills the generator-side fields of the breakdown (weights
/// and total are applied by the caller).
template <typename T>
inline LossBreakdown update_generator(CycleState<T>& state,
                                      const std::vector<SamplePair<T>>& batch,
                                      const std::vector<Var<T>>& fakes, const TrainConfig& cfg,
                                      Rng& rng, const FeatureExtractor<T>* perc) {
  std::vector<Var<T>> adv_terms, cyc_terms, perc_terms, l1_terms, ce_terms, ftv_terms;
  for (size_t i = 0; i < batch.size(); ++i) {
    const auto& p = batch[i];
    auto real_img = detail::as_chw(p.image);
    auto real_mask = detail::as_chw(p.mask);

    // fool the image discriminator: mean((D(fake) - 1)^2)
    auto d_fake = state.disc_image.forward(fakes[i]);
    adv_terms.push_back(mean(detail::sq(add_const(d_fake, T(-1)))));

    // mask -> image -> mask and image -> mask -> image round trips; the
    // reverse direction is the segmenter's probability map so gradients
    // can flow
    auto seg_of_fake = state.seg.forward_prob(fakes[i]);
    const Tensor<T> z2 = rng.normal_tensor<T>({state.gen.config().d_z});
    auto image_round = state.gen.forward(state.seg.forward_prob(real_img), z2, rng);
    cyc_terms.push_back(cycle_consistency_loss(real_mask, seg_of_fake, real_img, image_round));

    if (perc) perc_terms.push_back(perceptual_loss(fakes[i], real_img, *perc));
    l1_terms.push_back(l1_loss(fakes[i], real_img));

    // segmentation-aware feedback: the predicted mask of the synthetic
    // image must match the source mask
    ce_terms.push_back(cross_entropy_loss(seg_of_fake, real_mask));
    ftv_terms.push_back(focal_tversky_loss(seg_of_fake, real_mask, cfg.tversky));
  }

  auto adv_g = detail::mean_of(adv_terms);
  auto cyc = detail::mean_of(cyc_terms);
  auto l1 = detail::mean_of(l1_terms);
  auto ce = detail::mean_of(ce_terms);
  auto ftv = detail::mean_of(ftv_terms);

  auto total = adv_g + scale(cyc, static_cast<T>(cfg.gan_weights.lambda_cyc)) +
               scale(l1, static_cast<T>(cfg.gan_weights.lambda_l1)) +
               scale(ce, static_cast<T>(cfg.seg_weights.lambda1)) +
               scale(ftv, static_cast<T>(cfg.seg_weights.lambda2));
  LossBreakdown parts;
  if (perc) {
    auto pl = detail::mean_of(perc_terms);
    total = total + scale(pl, static_cast<T>(cfg.gan_weights.lambda_perc));
    parts.perc = static_cast<double>(pl.item());
  }
  parts.adv_g = static_cast<double>(adv_g.item());
  parts.cyc = static_cast<double>(cyc.item());
  parts.l1 = static_cast<double>(l1.item());
  parts.ce = static_cast<double>(ce.item());
  parts.focal_tversky = static_cast<double>(ftv.item());

  state.gen.params().zero_grad();
  backward(total);
  state.opt_gen.step();
  return parts;
}

/// Supervised fine-tune of the embedded segmenter on the effective batch
/// (real pairs plus this step's synthetic pairs). Returns the seg loss.
template <typename T>
inline double update_segmenter(CycleState<T>& state, const std::vector<SamplePair<T>>& effective,
                               const TrainConfig& cfg) {
  std::vector<Var<T>> terms;
  for (const auto& p : effective) {
    auto prob = state.seg.forward_prob(detail::as_chw(p.image));
    terms.push_back(total_seg_loss(prob, detail::as_chw(p.mask), cfg.tversky, cfg.seg_weights)
                        .total);
  }
  auto loss = detail::mean_of(terms);
  state.seg.params().zero_grad();
  backward(loss);
  state.opt_seg.step();
  return static_cast<double>(loss.item());
}

/// One full step in the pinned order: disc_image, disc_mask, generator,
/// segmenter. Returns the recorded loss terms with weights and total.
template <typename T>
inline LossBreakdown train_step(CycleState<T>& state, const std::vector<SamplePair<T>>& batch,
                                const TrainConfig& cfg, Rng& rng,
                                const FeatureExtractor<T>* perc = nullptr) {
  if (batch.empty()) throw ParamError("train_step: empty batch");
  auto fakes = synthesize_fakes(state, batch, rng);

  LossBreakdown parts;
  parts.adv_d_image = update_disc_image(state, batch, fakes, cfg);
  parts.adv_d_mask = update_disc_mask(state, batch, cfg);
  const LossBreakdown gen_parts = update_generator(state, batch, fakes, cfg, rng, perc);
  parts.adv_g = gen_parts.adv_g;
  parts.cyc = gen_parts.cyc;
  parts.perc = gen_parts.perc;
  parts.l1 = gen_parts.l1;
  parts.ce = gen_parts.ce;
  parts.focal_tversky = gen_parts.focal_tversky;

  if (cfg.seg_finetune) {
    SyntheticBatch<T> synth;
    synth.iteration = state.iteration;
    for (size_t i = 0; i < batch.size(); ++i) {
      SamplePair<T> s;
      s.id = batch[i].id + ":synth";
      s.image = fakes[i].value().reshaped(
          {batch[i].image.dim(0), batch[i].image.dim(1)});  // detached copy
      s.mask = batch[i].mask;
      synth.pairs.push_back(std::move(s));
    }
    update_segmenter(state, effective_batch(batch, synth), cfg);
  }

  if (auto bad = parts.first_non_finite(); !bad.empty())
    throw NumericError("iteration " + std::to_string(state.iteration) +
                       ": non-finite loss term '" + bad + "'");
  parts = total_gan_objective(parts, cfg.gan_weights, cfg.seg_weights);
  ++state.iteration;
  return parts;
}

struct GanEpochRow {
  int epoch = 0;
  LossBreakdown loss;  // parts averaged over the epoch's steps
  double val_dice = 0, val_f1 = 0;
};

struct GanTrainResult {
  std::vector<GanEpochRow> history;
  double best_val_dice = 0;
  int best_epoch = -1;
};

/// Save generator, segmenter, both discriminators and all optimizer
/// moments into one container.
template <typename T>
inline void save_cycle_checkpoint(const std::string& path, const CycleState<T>& state,
                                  const nlohmann::json& config) {
  std::vector<std::pair<std::string, Tensor<T>>> arrays;
  auto push_store = [&](const std::string& prefix, const ParamStore<T>& store) {
    for (const auto& e : store.entries()) arrays.emplace_back(prefix + e.name, e.var.value());
  };
  auto push_adam = [&](const std::string& prefix, const Adam<T>& opt, const ParamStore<T>& store) {
    for (const auto& a : adam_state_arrays(opt, store, prefix)) arrays.push_back(a);
  };
  push_store("gen.", state.gen.params());
  push_store("seg.", state.seg.params());
  push_store("disc_image.", state.disc_image.params());
  push_store("disc_mask.", state.disc_mask.params());
  push_adam("adam.gen.", state.opt_gen, state.gen.params());
  push_adam("adam.seg.", state.opt_seg, state.seg.params());
  push_adam("adam.disc_image.", state.opt_disc_image, state.disc_image.params());
  push_adam("adam.disc_mask.", state.opt_disc_mask, state.disc_mask.params());

  nlohmann::json meta;
  meta["config"] = config;
  meta["iteration"] = state.iteration;
  meta["adam_steps"] = {{"gen", state.opt_gen.step_count()},
                        {"seg", state.opt_seg.step_count()},
                        {"disc_image", state.opt_disc_image.step_count()},
                        {"disc_mask", state.opt_disc_mask.step_count()}};
  write_checkpoint(path, "cycle", meta.dump(), arrays);
}

/// Restore a cycle checkpoint into a compatibly-configured state.
template <typename T>
inline nlohmann::json load_cycle_checkpoint(const std::string& path, CycleState<T>& state) {
  ParamStore<T> combined;
  combined.adopt("gen.", state.gen.params());
  combined.adopt("seg.", state.seg.params());
  combined.adopt("disc_image.", state.disc_image.params());
  combined.adopt("disc_mask.", state.disc_mask.params());
  const Checkpoint<T> ck = load_checkpoint(path, "cycle", combined);

  nlohmann::json meta = nlohmann::json::parse(ck.config_json);
  state.iteration = meta.at("iteration").get<int64_t>();
  const auto& steps = meta.at("adam_steps");
  restore_adam_state(state.opt_gen, state.gen.params(), "adam.gen.", ck,
                     steps.at("gen").get<int64_t>());
  restore_adam_state(state.opt_seg, state.seg.params(), "adam.seg.", ck,
                     steps.at("seg").get<int64_t>());
  restore_adam_state(state.opt_disc_image, state.disc_image.params(), "adam.disc_image.", ck,
                     steps.at("disc_image").get<int64_t>());
  restore_adam_state(state.opt_disc_mask, state.disc_mask.params(), "adam.disc_mask.", ck,
                     steps.at("disc_mask").get<int64_t>());
  return meta.at("config");
}

/// Phase-2 training loop: epochs of train_step over shuffled batches with
/// per-epoch validation of the embedded segmenter. When `out_dir` is
/// given, the best-validation-Dice segmenter is checkpointed there as
/// best_seg.ckpt (plus periodic cycle checkpoints per
/// cfg.checkpoint_every).
template <typename T>
inline GanTrainResult train_sagegan(CycleState<T>& state, const DatasetSplit<T>& split,
                                    const TrainConfig& cfg, const std::string& out_dir = "") {
  cfg.validate();
  if (split.train.empty()) throw ParamError("train_sagegan: empty train set");

  GanTrainResult result;
  Rng rng = Rng::from(cfg.seed, "gan");
  const auto extractor = make_feature_extractor<T>(cfg.perceptual, mix_seed(cfg.seed, "perc"));

  std::vector<size_t> order(split.train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  nlohmann::json seg_cfg;
  seg_cfg["depth"] = state.seg.config().depth;
  seg_cfg["base_channels"] = state.seg.config().base_channels;
  seg_cfg["f_int_ratio"] = state.seg.config().f_int_ratio;
  seg_cfg["input_h"] = state.seg.config().input_h;
  seg_cfg["input_w"] = state.seg.config().input_w;

  for (int epoch = 1; epoch <= cfg.epochs_gan; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    LossBreakdown acc;
    int steps = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      std::vector<SamplePair<T>> batch;
      for (size_t i = start;
           i < std::min(order.size(), start + static_cast<size_t>(cfg.batch_size)); ++i)
        batch.push_back(split.train[order[i]]);
      const LossBreakdown step = train_step(state, batch, cfg, rng, extractor.get());
      acc.ce += step.ce;
      acc.focal_tversky += step.focal_tversky;
      acc.adv_g += step.adv_g;
      acc.adv_d_image += step.adv_d_image;
      acc.adv_d_mask += step.adv_d_mask;
      acc.cyc += step.cyc;
      acc.perc += step.perc;
      acc.l1 += step.l1;
      ++steps;
    }

    GanEpochRow row;
    row.epoch = epoch;
    row.loss.ce = acc.ce / steps;
    row.loss.focal_tversky = acc.focal_tversky / steps;
    row.loss.adv_g = acc.adv_g / steps;
    row.loss.adv_d_image = acc.adv_d_image / steps;
    row.loss.adv_d_mask = acc.adv_d_mask / steps;
    row.loss.cyc = acc.cyc / steps;
    row.loss.perc = acc.perc / steps;
    row.loss.l1 = acc.l1 / steps;
    row.loss = total_gan_objective(row.loss, cfg.gan_weights, cfg.seg_weights);

    if (!split.val.empty()) {
      const SegReport rep = evaluate_dataset(state.seg, split.val, cfg.threshold);
      row.val_dice = rep.mean_dice;
      row.val_f1 = rep.mean_f1;
      if (result.best_epoch < 0 || rep.mean_dice > result.best_val_dice) {
        result.best_val_dice = rep.mean_dice;
        result.best_epoch = epoch;
        if (!out_dir.empty())
          save_checkpoint(out_dir + "/best_seg.ckpt", "seg", seg_cfg.dump(), state.seg.params());
      }
    }
    result.history.push_back(row);

    if (!out_dir.empty() && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0)
      save_cycle_checkpoint(out_dir + "/cycle_epoch" + std::to_string(epoch) + ".ckpt", state,
                            nlohmann::json::object());
  }
  return result;
}

}  // namespace sagegan
