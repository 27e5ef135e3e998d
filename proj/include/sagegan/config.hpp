#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sagegan/trainer.hpp"
#include "sagegan/viz.hpp"

namespace sagegan {

namespace detail {

/// Reject config keys that nothing consumes; a typo must not silently fall
/// back to a default.
inline void check_known_keys(const nlohmann::json& j, const std::vector<std::string>& known,
                             const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const UNetConfig& c) {
  j = {{"depth", c.depth},
       {"base_channels", c.base_channels},
       {"f_int_ratio", c.f_int_ratio},
       {"input_h", c.input_h},
       {"input_w", c.input_w}};
}

inline void from_json(const nlohmann::json& j, UNetConfig& c) {
  detail::check_known_keys(j, {"depth", "base_channels", "f_int_ratio", "input_h", "input_w"},
                           "unet config");
  c.depth = j.value("depth", c.depth);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.f_int_ratio = j.value("f_int_ratio", c.f_int_ratio);
  c.input_h = j.value("input_h", c.input_h);
  c.input_w = j.value("input_w", c.input_w);
}

inline void to_json(nlohmann::json& j, const GenConfig& c) {
  j = {{"depth", c.depth}, {"base_channels", c.base_channels}, {"d_z", c.d_z},
       {"d_w", c.d_w},     {"input_h", c.input_h},             {"input_w", c.input_w}};
}

inline void from_json(const nlohmann::json& j, GenConfig& c) {
  detail::check_known_keys(j, {"depth", "base_channels", "d_z", "d_w", "input_h", "input_w"},
                           "generator config");
  c.depth = j.value("depth", c.depth);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.d_z = j.value("d_z", c.d_z);
  c.d_w = j.value("d_w", c.d_w);
  c.input_h = j.value("input_h", c.input_h);
  c.input_w = j.value("input_w", c.input_w);
}

inline void to_json(nlohmann::json& j, const DiscConfig& c) {
  j = {{"base_channels", c.base_channels}};
}

inline void from_json(const nlohmann::json& j, DiscConfig& c) {
  detail::check_known_keys(j, {"base_channels"}, "discriminator config");
  c.base_channels = j.value("base_channels", c.base_channels);
}

inline void to_json(nlohmann::json& j, const TverskyParams& p) {
  j = {{"alpha", p.alpha}, {"beta", p.beta}, {"gamma", p.gamma}, {"smooth", p.smooth}};
}

inline void from_json(const nlohmann::json& j, TverskyParams& p) {
  detail::check_known_keys(j, {"alpha", "beta", "gamma", "smooth"}, "tversky params");
  p.alpha = j.value("alpha", p.alpha);
  p.beta = j.value("beta", p.beta);
  p.gamma = j.value("gamma", p.gamma);
  p.smooth = j.value("smooth", p.smooth);
}

inline void to_json(nlohmann::json& j, const SegLossWeights& w) {
  j = {{"lambda1", w.lambda1}, {"lambda2", w.lambda2}};
}

inline void from_json(const nlohmann::json& j, SegLossWeights& w) {
  detail::check_known_keys(j, {"lambda1", "lambda2"}, "seg loss weights");
  w.lambda1 = j.value("lambda1", w.lambda1);
  w.lambda2 = j.value("lambda2", w.lambda2);
}

inline void to_json(nlohmann::json& j, const GanLossWeights& w) {
  j = {{"lambda_cyc", w.lambda_cyc}, {"lambda_perc", w.lambda_perc}, {"lambda_l1", w.lambda_l1}};
}

inline void from_json(const nlohmann::json& j, GanLossWeights& w) {
  detail::check_known_keys(j, {"lambda_cyc", "lambda_perc", "lambda_l1"}, "gan loss weights");
  w.lambda_cyc = j.value("lambda_cyc", w.lambda_cyc);
  w.lambda_perc = j.value("lambda_perc", w.lambda_perc);
  w.lambda_l1 = j.value("lambda_l1", w.lambda_l1);
}

inline void to_json(nlohmann::json& j, const AugmentConfig& c) {
  j = {{"flip_h", c.flip_h},         {"flip_v", c.flip_v},
       {"clahe", c.clahe},           {"clahe_clip", c.clahe_clip},
       {"clahe_tiles", c.clahe_tiles}, {"random_crop", c.random_crop},
       {"crop_fraction", c.crop_fraction}};
}

inline void from_json(const nlohmann::json& j, AugmentConfig& c) {
  detail::check_known_keys(
      j, {"flip_h", "flip_v", "clahe", "clahe_clip", "clahe_tiles", "random_crop", "crop_fraction"},
      "augment config");
  c.flip_h = j.value("flip_h", c.flip_h);
  c.flip_v = j.value("flip_v", c.flip_v);
  c.clahe = j.value("clahe", c.clahe);
  c.clahe_clip = j.value("clahe_clip", c.clahe_clip);
  c.clahe_tiles = j.value("clahe_tiles", c.clahe_tiles);
  c.random_crop = j.value("random_crop", c.random_crop);
  c.crop_fraction = j.value("crop_fraction", c.crop_fraction);
}

inline void to_json(nlohmann::json& j, const PretrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"lr", c.lr},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"tversky", c.tversky},
       {"weights", c.weights},
       {"focal_exponent", c.focal_exponent},
       {"threshold", c.threshold},
       {"seed", c.seed},
       {"augment", c.augment},
       {"augment_cfg", c.augment_cfg}};
}

inline void from_json(const nlohmann::json& j, PretrainConfig& c) {
  detail::check_known_keys(j,
                           {"epochs", "lr", "beta1", "beta2", "tversky", "weights",
                            "focal_exponent", "threshold", "seed", "augment", "augment_cfg"},
                           "pretrain config");
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  if (j.contains("tversky")) c.tversky = j.at("tversky").get<TverskyParams>();
  if (j.contains("weights")) c.weights = j.at("weights").get<SegLossWeights>();
  c.focal_exponent = j.value("focal_exponent", c.focal_exponent);
  c.threshold = j.value("threshold", c.threshold);
  c.seed = j.value("seed", c.seed);
  c.augment = j.value("augment", c.augment);
  if (j.contains("augment_cfg")) c.augment_cfg = j.at("augment_cfg").get<AugmentConfig>();
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs_pretrain", c.epochs_pretrain},
       {"epochs_gan", c.epochs_gan},
       {"batch_size", c.batch_size},
       {"lr_gen", c.lr_gen},
       {"lr_disc", c.lr_disc},
       {"lr_seg", c.lr_seg},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"seed", c.seed},
       {"seg_weights", c.seg_weights},
       {"gan_weights", c.gan_weights},
       {"tversky", c.tversky},
       {"seg_finetune", c.seg_finetune},
       {"perceptual", c.perceptual},
       {"threshold", c.threshold},
       {"checkpoint_every", c.checkpoint_every}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  detail::check_known_keys(
      j, {"epochs_pretrain", "epochs_gan", "batch_size", "lr_gen", "lr_disc", "lr_seg", "beta1",
          "beta2", "seed", "seg_weights", "gan_weights", "tversky", "seg_finetune", "perceptual",
          "threshold", "checkpoint_every"},
      "train config");
  c.epochs_pretrain = j.value("epochs_pretrain", c.epochs_pretrain);
  c.epochs_gan = j.value("epochs_gan", c.epochs_gan);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr_gen = j.value("lr_gen", c.lr_gen);
  c.lr_disc = j.value("lr_disc", c.lr_disc);
  c.lr_seg = j.value("lr_seg", c.lr_seg);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.seed = j.value("seed", c.seed);
  if (j.contains("seg_weights")) c.seg_weights = j.at("seg_weights").get<SegLossWeights>();
  if (j.contains("gan_weights")) c.gan_weights = j.at("gan_weights").get<GanLossWeights>();
  if (j.contains("tversky")) c.tversky = j.at("tversky").get<TverskyParams>();
  c.seg_finetune = j.value("seg_finetune", c.seg_finetune);
  c.perceptual = j.value("perceptual", c.perceptual);
  c.threshold = j.value("threshold", c.threshold);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
}

inline void to_json(nlohmann::json& j, const LossBreakdown& b) {
  j = {{"ce", b.ce},
       {"focal_tversky", b.focal_tversky},
       {"adv_g", b.adv_g},
       {"adv_d_image", b.adv_d_image},
       {"adv_d_mask", b.adv_d_mask},
       {"cyc", b.cyc},
       {"perc", b.perc},
       {"l1", b.l1},
       {"w_ce", b.w_ce},
       {"w_ftv", b.w_ftv},
       {"w_cyc", b.w_cyc},
       {"w_perc", b.w_perc},
       {"w_l1", b.w_l1},
       {"total", b.total}};
}

/// Whole-run settings: model shapes, both training phases, paths and the
/// command-specific rendering knobs, all echoed verbatim into run outputs.
struct RunConfig {
  std::string data, out, checkpoint, manifest;
  uint64_t seed = 0;
  int image_size = 256;
  double split_ratio = 0.8;
  UNetConfig unet;
  GenConfig gen;
  DiscConfig disc;
  PretrainConfig pretrain;
  TrainConfig train;
  int layer = -1;  // attention overlay gate; -1 = finest
  double alpha = 0.5;
  std::string colormap = "blue-red";

  /// Propagate the shared knobs into the per-phase blocks.
  void resolve() {
    unet.input_h = unet.input_w = image_size;
    gen.input_h = gen.input_w = image_size;
    pretrain.seed = seed;
    train.seed = seed;
  }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"data", c.data},
       {"out", c.out},
       {"checkpoint", c.checkpoint},
       {"manifest", c.manifest},
       {"seed", c.seed},
       {"image_size", c.image_size},
       {"split_ratio", c.split_ratio},
       {"unet", c.unet},
       {"gen", c.gen},
       {"disc", c.disc},
       {"pretrain", c.pretrain},
       {"train", c.train},
       {"layer", c.layer},
       {"alpha", c.alpha},
       {"colormap", c.colormap}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
  detail::check_known_keys(j,
                           {"data", "out", "checkpoint", "manifest", "seed", "image_size",
                            "split_ratio", "unet", "gen", "disc", "pretrain", "train", "layer",
                            "alpha", "colormap"},
                           "run config");
  c.data = j.value("data", c.data);
  c.out = j.value("out", c.out);
  c.checkpoint = j.value("checkpoint", c.checkpoint);
  c.manifest = j.value("manifest", c.manifest);
  c.seed = j.value("seed", c.seed);
  c.image_size = j.value("image_size", c.image_size);
  c.split_ratio = j.value("split_ratio", c.split_ratio);
  if (j.contains("unet")) c.unet = j.at("unet").get<UNetConfig>();
  if (j.contains("gen")) c.gen = j.at("gen").get<GenConfig>();
  if (j.contains("disc")) c.disc = j.at("disc").get<DiscConfig>();
  if (j.contains("pretrain")) c.pretrain = j.at("pretrain").get<PretrainConfig>();
  if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
  c.layer = j.value("layer", c.layer);
  c.alpha = j.value("alpha", c.alpha);
  c.colormap = j.value("colormap", c.colormap);
}

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file: " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("config file " + path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write file: " + path);
  f << j.dump(2) << '\n';
  if (!f.good()) throw IoError("write failed: " + path);
}

}  // namespace sagegan
