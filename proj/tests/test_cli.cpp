// End-to-end tests driving the installed command-line binary as a black
// box: artifact sets, exit codes, determinism and config plumbing.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "sagegan/png_io.hpp"
#include "sagegan/rng.hpp"
#include "sagegan/tensor.hpp"

namespace fs = std::filesystem;
using namespace sagegan;

namespace {

int run_cli(const std::string& args, const std::string& log = "/dev/null") {
  const std::string cmd = std::string(SAGEGAN_CLI) + " " + args + " >" + log + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const fs::path& path) {
  std::ifstream f(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(f, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

/// Concatenated bytes of every regular file under a directory, in sorted
/// path order; a cheap fingerprint for "nothing was touched".
std::string dir_bytes(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += f.filename().string() + slurp(f);
  return all;
}

/// Synthetic blob dataset: bright discs on a dim noisy background.
void make_dataset(const fs::path& root, int n, int size) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::from(42, "toy:" + std::to_string(i));
    Tensor<float> mask = Tensor<float>::zeros({size, size});
    const double cy = rng.uniform(0.25, 0.75) * size;
    const double cx = rng.uniform(0.25, 0.75) * size;
    const double r = rng.uniform(0.15, 0.3) * size;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) mask.at(y, x) = 1.0f;
    Tensor<float> img = Tensor<float>::zeros({size, size});
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        img.at(y, x) =
            0.15f + 0.7f * mask.at(y, x) + 0.1f * static_cast<float>(rng.uniform(0.0, 1.0));
    const std::string name = "sample_" + std::to_string(i) + ".png";
    write_png_gray((root / "images" / name).string(), img);
    write_png_gray((root / "masks" / name).string(), mask);
  }
}

class CliPipeline : public ::testing::Test {
 protected:
  static fs::path base, data32, data48, cfg, out_seg, out_gan;
  static int ec_train_seg, ec_train_gan;
  static std::string dataset_snapshot;

  static void SetUpTestSuite() {
    base = fs::temp_directory_path() / "sagegan_cli_tests";
    fs::remove_all(base);
    fs::create_directories(base);
    data32 = base / "data32";
    data48 = base / "data48";
    make_dataset(data32, 8, 32);
    make_dataset(data48, 2, 48);
    dataset_snapshot = dir_bytes(data32) + dir_bytes(data48);

    cfg = base / "slim.json";
    std::ofstream(cfg) << R"({
      "unet": {"depth": 3, "base_channels": 8},
      "gen": {"depth": 2, "base_channels": 8, "d_z": 16, "d_w": 16},
      "disc": {"base_channels": 8},
      "train": {"batch_size": 3}
    })";

    out_seg = base / "out_seg";
    ec_train_seg = run_cli("train-seg --config " + cfg.string() + " --data " + data32.string() +
                           " --out " + out_seg.string() +
                           " --image-size 32 --epochs 30 --lr 0.002 --seed 3 --split-ratio 0.75");

    out_gan = base / "out_gan";
    ec_train_gan = run_cli("train-gan --config " + cfg.string() + " --data " + data32.string() +
                           " --out " + out_gan.string() + " --checkpoint " +
                           (out_seg / "seg.ckpt").string() +
                           " --epochs 2 --seed 11 --split-ratio 0.75 --checkpoint-every 1");
  }
};

fs::path CliPipeline::base, CliPipeline::data32, CliPipeline::data48, CliPipeline::cfg,
    CliPipeline::out_seg, CliPipeline::out_gan;
int CliPipeline::ec_train_seg = -1, CliPipeline::ec_train_gan = -1;
std::string CliPipeline::dataset_snapshot;

TEST_F(CliPipeline, TrainSegProducesCheckpointHistoryAndManifest) {
  ASSERT_EQ(ec_train_seg, 0);
  EXPECT_TRUE(fs::exists(out_seg / "seg.ckpt"));
  EXPECT_TRUE(fs::exists(out_seg / "run_config.json"));

  const auto rows = lines_of(out_seg / "history.jsonl");
  ASSERT_EQ(rows.size(), 30u);
  const auto first = nlohmann::json::parse(rows.front());
  EXPECT_EQ(first.at("epoch").get<int>(), 1);
  EXPECT_GT(first.at("loss").at("total").get<double>(), 0.0);
  EXPECT_TRUE(first.contains("val_dice") && first.contains("val_f1"));

  const std::string manifest = slurp(out_seg / "split_manifest.txt");
  EXPECT_NE(manifest.find("seed 3"), std::string::npos);
  EXPECT_NE(manifest.find("train sample_"), std::string::npos);
  EXPECT_NE(manifest.find("val sample_"), std::string::npos);
}

TEST_F(CliPipeline, EvaluateReproducesTrainingQualityFromDisk) {
  ASSERT_EQ(ec_train_seg, 0);
  const fs::path out = base / "out_eval";
  ASSERT_EQ(run_cli("evaluate --data " + data32.string() + " --out " + out.string() +
                    " --checkpoint " + (out_seg / "seg.ckpt").string() + " --manifest " +
                    (out_seg / "split_manifest.txt").string()),
            0);

  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  const double dice = report.at("aggregate").at("dice").get<double>();
  EXPECT_GE(dice, 0.95);
  EXPECT_EQ(report.at("per_image").size(), 2u);
  EXPECT_TRUE(report.at("config").contains("unet"));

  // the saved model is the best-validation epoch, so re-scoring the same
  // split must land exactly on the best dice seen during training
  double best = 0;
  for (const auto& line : lines_of(out_seg / "history.jsonl"))
    best = std::max(best, nlohmann::json::parse(line).at("val_dice").get<double>());
  EXPECT_DOUBLE_EQ(dice, best);
}

TEST_F(CliPipeline, EpochsZeroStillWritesUsableCheckpoint) {
  const fs::path out = base / "out_e0";
  ASSERT_EQ(run_cli("train-seg --config " + cfg.string() + " --data " + data32.string() +
                    " --out " + out.string() + " --image-size 32 --epochs 0 --seed 3"),
            0);
  EXPECT_TRUE(fs::exists(out / "seg.ckpt"));
  EXPECT_TRUE(lines_of(out / "history.jsonl").empty());

  ASSERT_EQ(run_cli("segment --data " + data48.string() + " --out " + (base / "out_e0_m").string() +
                    " --checkpoint " + (out / "seg.ckpt").string()),
            0);
}

TEST_F(CliPipeline, SegmentEmitsBinaryMasksAtInputResolutionDeterministically) {
  ASSERT_EQ(ec_train_seg, 0);
  const fs::path m1 = base / "masks1", m2 = base / "masks2";
  for (const auto& out : {m1, m2})
    ASSERT_EQ(run_cli("segment --data " + data48.string() + " --out " + out.string() +
                      " --checkpoint " + (out_seg / "seg.ckpt").string()),
              0);

  for (int i = 0; i < 2; ++i) {
    const std::string name = "sample_" + std::to_string(i) + ".png";
    ASSERT_TRUE(fs::exists(m1 / name));
    const Tensor<float> mask = read_png_gray<float>((m1 / name).string());
    EXPECT_EQ(mask.dim(0), 48);  // back at the input's own resolution
    EXPECT_EQ(mask.dim(1), 48);
    for (int64_t k = 0; k < mask.numel(); ++k)
      ASSERT_TRUE(mask[k] == 0.0f || mask[k] == 1.0f) << "non-binary pixel in " << name;
    EXPECT_EQ(slurp(m1 / name), slurp(m2 / name)) << "segment is not deterministic: " << name;
  }
}

TEST_F(CliPipeline, SegmentSkipsUnreadableFilesAndExitsNonzero) {
  ASSERT_EQ(ec_train_seg, 0);
  const fs::path mixed = base / "mixed";
  fs::create_directories(mixed);
  for (const auto& e : fs::directory_iterator(data48 / "images")) fs::copy_file(e, mixed / e.path().filename());
  std::ofstream(mixed / "broken.png") << "junk";

  const fs::path out = base / "out_mixed";
  const fs::path log = base / "mixed.log";
  EXPECT_NE(run_cli("segment --data " + mixed.string() + " --out " + out.string() +
                    " --checkpoint " + (out_seg / "seg.ckpt").string(), log.string()),
            0);
  EXPECT_TRUE(fs::exists(out / "sample_0.png"));
  EXPECT_TRUE(fs::exists(out / "sample_1.png"));
  EXPECT_FALSE(fs::exists(out / "broken.png"));
  EXPECT_NE(slurp(log).find("skipping"), std::string::npos);
}

TEST_F(CliPipeline, TrainGanEmitsCycleCheckpointsAndEpochLog) {
  ASSERT_EQ(ec_train_gan, 0);
  for (const char* f : {"cycle_final.ckpt", "best_seg.ckpt", "cycle_epoch1.ckpt",
                        "cycle_epoch2.ckpt", "history.jsonl", "run_config.json",
                        "split_manifest.txt"})
    EXPECT_TRUE(fs::exists(out_gan / f)) << f;

  const auto rows = lines_of(out_gan / "history.jsonl");
  ASSERT_EQ(rows.size(), 2u);
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto j = nlohmann::json::parse(rows[i]);
    EXPECT_EQ(j.at("epoch").get<int>(), static_cast<int>(i) + 1);
    const auto& loss = j.at("loss");
    for (const char* term : {"adv_g", "adv_d_image", "adv_d_mask", "cyc", "l1", "total"})
      EXPECT_TRUE(std::isfinite(loss.at(term).get<double>())) << term;
  }

  // working resolution is slaved to the phase-1 checkpoint
  const auto rc = nlohmann::json::parse(slurp(out_gan / "run_config.json"));
  EXPECT_EQ(rc.at("image_size").get<int>(), 32);
  EXPECT_EQ(rc.at("gen").at("input_h").get<int>(), 32);
  EXPECT_EQ(rc.at("unet").at("depth").get<int>(), 3);
}

TEST_F(CliPipeline, GenerateIsSeedReproducible) {
  ASSERT_EQ(ec_train_gan, 0);
  const fs::path g1 = base / "gen1", g2 = base / "gen2", g3 = base / "gen3";
  const std::string common = "generate --data " + data32.string() + " --checkpoint " +
                             (out_gan / "cycle_final.ckpt").string();
  ASSERT_EQ(run_cli(common + " --out " + g1.string() + " --seed 7"), 0);
  ASSERT_EQ(run_cli(common + " --out " + g2.string() + " --seed 7"), 0);
  ASSERT_EQ(run_cli(common + " --out " + g3.string() + " --seed 8"), 0);

  bool any_differs = false;
  for (int i = 0; i < 8; ++i) {
    const std::string name = "sample_" + std::to_string(i) + ".png";
    ASSERT_TRUE(fs::exists(g1 / name));
    EXPECT_EQ(slurp(g1 / name), slurp(g2 / name)) << "same seed must reproduce " << name;
    if (slurp(g1 / name) != slurp(g3 / name)) any_differs = true;
  }
  EXPECT_TRUE(any_differs) << "different seeds produced identical outputs";

  const Tensor<float> img = read_png_gray<float>((g1 / "sample_0.png").string());
  EXPECT_EQ(img.dim(0), 32);  // synthetic image at the mask's own resolution
  EXPECT_EQ(img.dim(1), 32);
}

TEST_F(CliPipeline, FlagsOverrideConfigFileInEchoedConfig) {
  ASSERT_EQ(ec_train_seg, 0);
  const auto rc = nlohmann::json::parse(slurp(out_seg / "run_config.json"));
  EXPECT_EQ(rc.at("seed").get<int>(), 3);                       // flag
  EXPECT_EQ(rc.at("pretrain").at("epochs").get<int>(), 30);     // flag
  EXPECT_DOUBLE_EQ(rc.at("pretrain").at("lr").get<double>(), 0.002);
  EXPECT_DOUBLE_EQ(rc.at("split_ratio").get<double>(), 0.75);
  EXPECT_EQ(rc.at("unet").at("depth").get<int>(), 3);           // config file
  EXPECT_EQ(rc.at("unet").at("base_channels").get<int>(), 8);
  EXPECT_EQ(rc.at("unet").at("input_h").get<int>(), 32);        // resolved from --image-size
  EXPECT_EQ(rc.at("pretrain").at("seed").get<int>(), 3);        // fanned out from --seed

  const fs::path bad = base / "typo.json";
  std::ofstream(bad) << R"({"uent": {"depth": 3}})";
  EXPECT_NE(run_cli("train-seg --config " + bad.string() + " --data " + data32.string() +
                    " --out " + (base / "out_typo").string() + " --epochs 0"),
            0);
}

TEST_F(CliPipeline, VisualizeAttentionWritesHeatAndOverlay) {
  ASSERT_EQ(ec_train_seg, 0);
  const fs::path out = base / "out_viz";
  ASSERT_EQ(run_cli("visualize-attention --data " + data48.string() + " --out " + out.string() +
                    " --checkpoint " + (out_seg / "seg.ckpt").string() + " --layer 0 --alpha 0.6"),
            0);
  for (int i = 0; i < 2; ++i) {
    const std::string stem = "sample_" + std::to_string(i);
    const Tensor<float> heat = read_png_gray<float>((out / (stem + "_heat.png")).string());
    EXPECT_EQ(heat.dim(0), 48);  // heatmap resampled to the input image
    EXPECT_EQ(heat.dim(1), 48);
    ASSERT_TRUE(fs::exists(out / (stem + "_overlay.png")));
    EXPECT_GT(fs::file_size(out / (stem + "_overlay.png")), 0u);
  }

  EXPECT_NE(run_cli("visualize-attention --data " + data48.string() + " --out " +
                    (base / "out_viz_bad").string() + " --checkpoint " +
                    (out_seg / "seg.ckpt").string() + " --layer 9"),
            0);
}

TEST_F(CliPipeline, GracefulFailuresOnBadArguments) {
  ASSERT_EQ(ec_train_seg, 0);
  const std::string out = " --out " + (base / "out_bad").string();
  const fs::path log = base / "bad.log";

  EXPECT_EQ(run_cli("segment --data " + (base / "nope").string() + out + " --checkpoint " +
                    (out_seg / "seg.ckpt").string(), log.string()),
            1);
  EXPECT_NE(slurp(log).find("error:"), std::string::npos);

  const fs::path corrupt = base / "corrupt.ckpt";
  std::ofstream(corrupt) << "garbage";
  EXPECT_EQ(run_cli("segment --data " + data48.string() + out + " --checkpoint " + corrupt.string()), 1);

  // a segmenter checkpoint is not a generator source
  EXPECT_EQ(run_cli("generate --data " + data32.string() + out + " --checkpoint " +
                    (out_seg / "seg.ckpt").string() + " --seed 1"),
            1);

  const fs::path bad_manifest = base / "bad_manifest.txt";
  std::ofstream(bad_manifest) << "seed 0\nratio 0.5\ntrain nope_a\nval nope_b\n";
  EXPECT_EQ(run_cli("evaluate --data " + data32.string() + out + " --checkpoint " +
                    (out_seg / "seg.ckpt").string() + " --manifest " + bad_manifest.string()),
            1);
  EXPECT_EQ(run_cli("evaluate --data " + data32.string() + out + " --checkpoint " +
                    (out_seg / "seg.ckpt").string()),
            1);  // no manifest given
}

TEST_F(CliPipeline, InputDatasetIsNeverMutated) {
  EXPECT_EQ(dir_bytes(data32) + dir_bytes(data48), dataset_snapshot);
}

}  // namespace
