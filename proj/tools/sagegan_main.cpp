// Command-line front end: drives both training phases, inference,
// evaluation, synthetic generation and attention-overlay rendering.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <sagegan/sagegan.hpp>

namespace fs = std::filesystem;
using namespace sagegan;

using T = float;

namespace {

void ensure_out_dir(const std::string& out) {
  if (out.empty()) throw ParamError("--out is required");
  fs::create_directories(out);
}

void echo_config(const RunConfig& rc) {
  write_json_file((fs::path(rc.out) / "run_config.json").string(), nlohmann::json(rc));
}

/// PNG stems in a directory, sorted. Accepts either a flat directory of
/// images or a dataset root with the named subdirectory.
std::vector<fs::path> list_pngs(const std::string& dir, const std::string& preferred_subdir) {
  fs::path root(dir);
  if (root.empty() || !fs::exists(root)) throw IoError("input directory does not exist: " + dir);
  if (fs::is_directory(root / preferred_subdir)) root /= preferred_subdir;
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError("no .png files found in " + root.string());
  return out;
}

/// Load a segmenter checkpoint, rebuilding the model from the embedded
/// architecture description.
SegModel<T> load_segmenter(const std::string& path) {
  if (path.empty()) throw ParamError("--checkpoint is required");
  const Checkpoint<T> ck = read_checkpoint<T>(path);
  if (ck.kind != "seg")
    throw ConfigError("checkpoint kind '" + ck.kind + "' is not a segmenter checkpoint: " + path);
  const UNetConfig cfg = nlohmann::json::parse(ck.config_json).get<UNetConfig>();
  SegModel<T> model(cfg);
  load_checkpoint(path, "seg", model.params());
  return model;
}

std::vector<SamplePair<T>> load_and_resize(const std::string& root, int size) {
  auto pairs = load_dataset<T>(root);
  for (auto& p : pairs) p = preprocess(p, size, size);
  return pairs;
}

DatasetSplit<T> split_for_run(const RunConfig& rc, const std::vector<SamplePair<T>>& pairs) {
  if (!rc.manifest.empty()) return apply_manifest(pairs, read_split_manifest(rc.manifest));
  return split_dataset(pairs, rc.split_ratio, rc.seed);
}

void write_seg_history(const std::string& path, const std::vector<EpochRow>& rows) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write history log: " + path);
  for (const auto& r : rows) {
    nlohmann::json j{{"epoch", r.epoch},
                     {"loss", r.loss},
                     {"val_dice", r.val_dice},
                     {"val_f1", r.val_f1}};
    f << j.dump() << '\n';
  }
}

void write_gan_history(const std::string& path, const std::vector<GanEpochRow>& rows) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write history log: " + path);
  for (const auto& r : rows) {
    nlohmann::json j{{"epoch", r.epoch},
                     {"loss", r.loss},
                     {"val_dice", r.val_dice},
                     {"val_f1", r.val_f1}};
    f << j.dump() << '\n';
  }
}

std::string seg_config_json(const UNetConfig& cfg) { return nlohmann::json(cfg).dump(); }

int cmd_train_seg(RunConfig rc) {
  ensure_out_dir(rc.out);
  auto pairs = load_and_resize(rc.data, rc.image_size);
  const auto split = split_for_run(rc, pairs);
  write_split_manifest((fs::path(rc.out) / "split_manifest.txt").string(), manifest_of(split));

  SegModel<T> model(rc.unet, rc.seed);
  const PretrainResult result = pretrain_segmenter(model, split, rc.pretrain);

  write_seg_history((fs::path(rc.out) / "history.jsonl").string(), result.history);
  save_checkpoint((fs::path(rc.out) / "seg.ckpt").string(), "seg", seg_config_json(rc.unet),
                  model.params());
  echo_config(rc);
  std::cout << "train-seg: " << result.history.size() << " epochs, " << split.train.size()
            << " train / " << split.val.size() << " val images";
  if (result.best_epoch >= 0)
    std::cout << ", best val dice " << result.best_val_dice << " at epoch " << result.best_epoch;
  std::cout << "\n";
  return 0;
}

int cmd_train_gan(RunConfig rc) {
  if (rc.checkpoint.empty()) throw ParamError("--checkpoint (phase-1 segmenter) is required");
  ensure_out_dir(rc.out);

  // the segmenter checkpoint fixes the working resolution
  const Checkpoint<T> seg_ck = read_checkpoint<T>(rc.checkpoint);
  if (seg_ck.kind != "seg")
    throw ConfigError("checkpoint kind '" + seg_ck.kind +
                      "' is not a segmenter checkpoint: " + rc.checkpoint);
  const UNetConfig seg_cfg = nlohmann::json::parse(seg_ck.config_json).get<UNetConfig>();
  rc.unet = seg_cfg;
  rc.image_size = seg_cfg.input_h;
  rc.gen.input_h = seg_cfg.input_h;
  rc.gen.input_w = seg_cfg.input_w;

  CycleState<T> state(rc.gen, seg_cfg, rc.disc, rc.train);
  load_checkpoint(rc.checkpoint, "seg", state.seg.params());

  auto pairs = load_and_resize(rc.data, rc.image_size);
  const auto split = split_for_run(rc, pairs);
  write_split_manifest((fs::path(rc.out) / "split_manifest.txt").string(), manifest_of(split));

  const GanTrainResult result = train_sagegan(state, split, rc.train, rc.out);

  write_gan_history((fs::path(rc.out) / "history.jsonl").string(), result.history);
  save_cycle_checkpoint((fs::path(rc.out) / "cycle_final.ckpt").string(), state,
                        nlohmann::json(rc));
  if (!fs::exists(fs::path(rc.out) / "best_seg.ckpt"))  // no validation set
    save_checkpoint((fs::path(rc.out) / "best_seg.ckpt").string(), "seg",
                    seg_config_json(seg_cfg), state.seg.params());
  echo_config(rc);
  std::cout << "train-gan: " << result.history.size() << " epochs, " << state.iteration
            << " iterations";
  if (result.best_epoch >= 0)
    std::cout << ", best val dice " << result.best_val_dice << " at epoch " << result.best_epoch;
  std::cout << "\n";
  return 0;
}

int cmd_segment(const RunConfig& rc) {
  ensure_out_dir(rc.out);
  SegModel<T> model = load_segmenter(rc.checkpoint);
  const int size = model.config().input_h;

  int failures = 0, written = 0;
  for (const auto& path : list_pngs(rc.data, "images")) {
    try {
      const Tensor<T> img = read_png_gray<T>(path.string());
      Tensor<T> net_in = resize_bilinear(img, size, size);
      for (int64_t i = 0; i < net_in.numel(); ++i) net_in[i] = std::clamp(net_in[i], T(0), T(1));
      const Tensor<T> mask = model.predict_mask(net_in, rc.pretrain.threshold);
      const Tensor<T> full = resize_nearest(mask, img.dim(0), img.dim(1));
      write_png_gray((fs::path(rc.out) / path.filename()).string(), full);
      ++written;
    } catch (const Error& e) {
      std::cerr << "warning: skipping " << path.string() << ": " << e.what() << "\n";
      ++failures;
    }
  }
  echo_config(rc);
  std::cout << "segment: " << written << " masks written, " << failures << " inputs skipped\n";
  return failures == 0 ? 0 : 1;
}

int cmd_evaluate(const RunConfig& rc) {
  ensure_out_dir(rc.out);
  if (rc.manifest.empty()) throw ParamError("--manifest is required");
  SegModel<T> model = load_segmenter(rc.checkpoint);
  const int size = model.config().input_h;

  const auto pairs = load_and_resize(rc.data, size);
  const auto split = apply_manifest(pairs, read_split_manifest(rc.manifest));
  if (split.val.empty()) throw DataError("manifest has no validation entries: " + rc.manifest);

  SegReport report = evaluate_dataset(model, split.val, rc.pretrain.threshold);
  report.config = nlohmann::json(rc);
  write_json_file((fs::path(rc.out) / "report.json").string(), report_to_json(report));
  echo_config(rc);
  std::cout << "evaluate: " << report.per_image.size() << " images, mean dice "
            << report.mean_dice << ", mean f1 " << report.mean_f1 << "\n";
  return 0;
}

int cmd_generate(const RunConfig& rc) {
  ensure_out_dir(rc.out);
  if (rc.checkpoint.empty()) throw ParamError("--checkpoint (cycle state) is required");
  const Checkpoint<T> ck = read_checkpoint<T>(rc.checkpoint);
  if (ck.kind != "cycle")
    throw ConfigError("checkpoint kind '" + ck.kind + "' is not a cycle checkpoint: " +
                      rc.checkpoint);
  const nlohmann::json meta = nlohmann::json::parse(ck.config_json);
  if (!meta.contains("config") || !meta.at("config").contains("gen"))
    throw ConfigError("cycle checkpoint lacks a generator description: " + rc.checkpoint);
  const GenConfig gcfg = meta.at("config").at("gen").get<GenConfig>();

  GenModel<T> gen(gcfg);
  ParamStore<T> view;
  view.adopt("gen.", gen.params());
  load_checkpoint(rc.checkpoint, "cycle", view);

  int failures = 0, written = 0;
  for (const auto& path : list_pngs(rc.data, "masks")) {
    try {
      const std::string stem = path.stem().string();
      const Tensor<T> raw = read_png_gray<T>(path.string());
      const Tensor<T> mask =
          binarize_mask(resize_nearest(binarize_mask(raw), gcfg.input_h, gcfg.input_w));
      const Tensor<T> z =
          Rng::from(rc.seed, "z:" + stem).normal_tensor<T>({gcfg.d_z});
      auto noise = Rng::from(rc.seed, "noise:" + stem);
      const Tensor<T> synth = gen.generate_image(mask, z, noise);
      Tensor<T> full = resize_bilinear(synth, raw.dim(0), raw.dim(1));
      for (int64_t i = 0; i < full.numel(); ++i) full[i] = std::clamp(full[i], T(0), T(1));
      write_png_gray((fs::path(rc.out) / path.filename()).string(), full);
      ++written;
    } catch (const Error& e) {
      std::cerr << "warning: skipping " << path.string() << ": " << e.what() << "\n";
      ++failures;
    }
  }
  echo_config(rc);
  std::cout << "generate: " << written << " images written, " << failures << " masks skipped\n";
  return failures == 0 ? 0 : 1;
}

int cmd_visualize_attention(const RunConfig& rc) {
  ensure_out_dir(rc.out);
  SegModel<T> model = load_segmenter(rc.checkpoint);
  const int size = model.config().input_h;

  int failures = 0, written = 0;
  for (const auto& path : list_pngs(rc.data, "images")) {
    try {
      const std::string stem = path.stem().string();
      const Tensor<T> img = read_png_gray<T>(path.string());
      Tensor<T> net_in = resize_bilinear(img, size, size);
      for (int64_t i = 0; i < net_in.numel(); ++i) net_in[i] = std::clamp(net_in[i], T(0), T(1));
      const auto fwd = model.forward(net_in);
      const auto overlay =
          render_attention_overlay(img, fwd.gates, rc.layer, rc.colormap, rc.alpha);
      write_png_gray((fs::path(rc.out) / (stem + "_heat.png")).string(), overlay.heat);
      write_png_rgb((fs::path(rc.out) / (stem + "_overlay.png")).string(), overlay.blend);
      ++written;
    } catch (const Error& e) {
      std::cerr << "warning: skipping " << path.string() << ": " << e.what() << "\n";
      ++failures;
    }
  }
  echo_config(rc);
  std::cout << "visualize-attention: " << written << " overlays written, " << failures
            << " inputs skipped\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sagegan: two-phase adversarial nanoparticle segmentation"};
  app.require_subcommand(1);

  // flags shared by every command; presence decides whether they override
  // the config file
  std::string f_config, f_data, f_out, f_checkpoint, f_manifest, f_colormap;
  uint64_t f_seed = 0;
  int f_image_size = 0, f_epochs = 0, f_layer = 0, f_batch = 0, f_ckpt_every = 0;
  double f_ratio = 0, f_threshold = 0, f_alpha = 0, f_lr = 0;
  bool f_augment = false, f_no_finetune = false;

  auto add_shared = [&](CLI::App* cmd) {
    cmd->add_option("--config", f_config, "JSON config file (flags override it)");
    cmd->add_option("--data", f_data, "dataset root or input directory");
    cmd->add_option("--out", f_out, "output directory");
    cmd->add_option("--checkpoint", f_checkpoint, "checkpoint path");
    cmd->add_option("--manifest", f_manifest, "split manifest path");
    cmd->add_option("--seed", f_seed, "master seed, fanned out to all generators");
    cmd->add_option("--image-size", f_image_size, "working resolution");
    cmd->add_option("--threshold", f_threshold, "mask binarization threshold");
  };

  CLI::App* train_seg = app.add_subcommand("train-seg", "pretrain the attention segmenter");
  add_shared(train_seg);
  train_seg->add_option("--epochs", f_epochs, "pretraining epochs");
  train_seg->add_option("--lr", f_lr, "learning rate");
  train_seg->add_option("--split-ratio", f_ratio, "train fraction of the dataset");
  train_seg->add_flag("--augment", f_augment, "enable flips, crops and CLAHE");

  CLI::App* train_gan = app.add_subcommand("train-gan", "adversarial phase with a pretrained segmenter");
  add_shared(train_gan);
  train_gan->add_option("--epochs", f_epochs, "adversarial epochs");
  train_gan->add_option("--batch-size", f_batch, "pairs per step");
  train_gan->add_option("--split-ratio", f_ratio, "train fraction of the dataset");
  train_gan->add_option("--checkpoint-every", f_ckpt_every, "cycle checkpoint cadence (epochs)");
  train_gan->add_flag("--no-seg-finetune", f_no_finetune, "freeze the segmenter in phase 2");

  CLI::App* segment = app.add_subcommand("segment", "predict masks for a directory of images");
  add_shared(segment);

  CLI::App* evaluate = app.add_subcommand("evaluate", "score a checkpoint on the manifest's validation split");
  add_shared(evaluate);

  CLI::App* generate = app.add_subcommand("generate", "synthesize images from binary masks");
  add_shared(generate);

  CLI::App* viz = app.add_subcommand("visualize-attention", "render attention heatmap overlays");
  add_shared(viz);
  viz->add_option("--layer", f_layer, "gate index (0 = finest)");
  viz->add_option("--alpha", f_alpha, "overlay blend factor");
  viz->add_option("--colormap", f_colormap, "overlay colormap");

  CLI11_PARSE(app, argc, argv);
  CLI::App* cmd = app.get_subcommands().front();

  try {
    auto given = [&](const char* flag) {
      const CLI::Option* o = cmd->get_option_no_throw(flag);
      return o != nullptr && o->count() > 0;
    };
    RunConfig rc;
    if (given("--config")) rc = load_json_file(f_config).get<RunConfig>();
    auto over = [&](const char* flag, auto& dst, const auto& src) {
      if (given(flag)) dst = src;
    };
    over("--data", rc.data, f_data);
    over("--out", rc.out, f_out);
    over("--checkpoint", rc.checkpoint, f_checkpoint);
    over("--manifest", rc.manifest, f_manifest);
    over("--seed", rc.seed, f_seed);
    over("--image-size", rc.image_size, f_image_size);
    over("--split-ratio", rc.split_ratio, f_ratio);
    if (given("--threshold")) {
      rc.pretrain.threshold = f_threshold;
      rc.train.threshold = f_threshold;
    }
    over("--epochs", rc.pretrain.epochs, f_epochs);
    over("--epochs", rc.train.epochs_gan, f_epochs);
    over("--lr", rc.pretrain.lr, f_lr);
    over("--batch-size", rc.train.batch_size, f_batch);
    over("--checkpoint-every", rc.train.checkpoint_every, f_ckpt_every);
    over("--augment", rc.pretrain.augment, f_augment);
    if (given("--no-seg-finetune")) rc.train.seg_finetune = false;
    over("--layer", rc.layer, f_layer);
    over("--alpha", rc.alpha, f_alpha);
    over("--colormap", rc.colormap, f_colormap);
    rc.resolve();

    if (cmd == train_seg) return cmd_train_seg(rc);
    if (cmd == train_gan) return cmd_train_gan(rc);
    if (cmd == segment) return cmd_segment(rc);
    if (cmd == evaluate) return cmd_evaluate(rc);
    if (cmd == generate) return cmd_generate(rc);
    if (cmd == viz) return cmd_visualize_attention(rc);
    throw ParamError("unknown command");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
