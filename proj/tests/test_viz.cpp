#include <gtest/gtest.h>

#include <string>
#include <vector>

#include <sagegan/viz.hpp>

using namespace sagegan;

namespace {

std::vector<AttentionMap<double>> one_map(Tensor<double> alpha, int index = 0) {
  std::vector<AttentionMap<double>> maps(1);
  maps[0].alpha = std::move(alpha);
  maps[0].gate_index = index;
  return maps;
}

}  // namespace

TEST(Colormap, AnchorsAndMidpoints) {
  const struct {
    double t, r, g, b;
  } table[] = {
      {0.0, 0, 0, 1},    {0.25, 0, 1, 1},    {0.5, 0, 1, 0},
      {0.75, 1, 1, 0},   {1.0, 1, 0, 0},     {0.125, 0, 0.5, 1},
      {0.375, 0, 1, 0.5}, {0.625, 0.5, 1, 0}, {0.875, 1, 0.5, 0},
  };
  for (const auto& row : table) {
    const Rgb c = colormap_blue_red(row.t);
    EXPECT_NEAR(c.r, row.r, 1e-12) << "t=" << row.t;
    EXPECT_NEAR(c.g, row.g, 1e-12) << "t=" << row.t;
    EXPECT_NEAR(c.b, row.b, 1e-12) << "t=" << row.t;
  }
  // out-of-range inputs clamp to the end stops
  EXPECT_NEAR(colormap_blue_red(-3.0).b, 1.0, 1e-12);
  EXPECT_NEAR(colormap_blue_red(7.0).r, 1.0, 1e-12);
}

TEST(NormalizeHeat, MapsMinToZeroMaxToOne) {
  Tensor<double> m({3});
  m[0] = 2;
  m[1] = 4;
  m[2] = 6;
  const auto n = normalize_heat(m);
  EXPECT_DOUBLE_EQ(n[0], 0.0);
  EXPECT_DOUBLE_EQ(n[1], 0.5);
  EXPECT_DOUBLE_EQ(n[2], 1.0);
}

TEST(NormalizeHeat, ConstantMapBecomesHalf) {
  const auto n = normalize_heat(Tensor<double>::full({2, 2}, 0.73));
  for (int64_t i = 0; i < n.numel(); ++i) EXPECT_DOUBLE_EQ(n[i], 0.5);
}

TEST(Overlay, AlphaZeroReproducesBaseImage) {
  auto rng = Rng::from(1, "img");
  const auto img = rng.uniform_tensor<double>({4, 4}, 0.0, 1.0);
  const auto ov =
      render_attention_overlay(img, one_map(rng.uniform_tensor<double>({4, 4}, 0.0, 1.0)),
                               -1, "blue-red", 0.0);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(ov.blend.at(c, y, x), img.at(y, x));
}

TEST(Overlay, ConstantAttentionGivesUniformMidScaleTint) {
  auto rng = Rng::from(2, "img");
  const auto img = rng.uniform_tensor<double>({4, 4}, 0.0, 1.0);
  const auto ov = render_attention_overlay(img, one_map(Tensor<double>::full({4, 4}, 0.9)));
  // normalized constant = 0.5 -> pure green at every pixel
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const double g = img.at(y, x);
      EXPECT_NEAR(ov.blend.at(0, y, x), 0.5 * g, 1e-12);
      EXPECT_NEAR(ov.blend.at(1, y, x), 0.5 * g + 0.5, 1e-12);
      EXPECT_NEAR(ov.blend.at(2, y, x), 0.5 * g, 1e-12);
    }
}

// 2x2 attention values pushed through normalization and the colormap by
// hand; alpha = 1 exposes the raw mapped colors.
TEST(Overlay, KnownValuesMatchHandAppliedColormap) {
  Tensor<double> alpha({2, 2});
  alpha.at(0, 0) = 0.2;
  alpha.at(0, 1) = 0.4;
  alpha.at(1, 0) = 0.6;
  alpha.at(1, 1) = 0.8;  // normalizes to 0, 1/3, 2/3, 1
  const auto img = Tensor<double>::full({2, 2}, 0.25);
  const auto ov = render_attention_overlay(img, one_map(alpha), 0, "blue-red", 1.0);

  const double expected[2][2][3] = {
      {{0, 0, 1}, {0, 1, 2.0 / 3.0}},
      {{2.0 / 3.0, 1, 0}, {1, 0, 0}},
  };
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x)
      for (int c = 0; c < 3; ++c)
        EXPECT_NEAR(ov.blend.at(c, y, x), expected[y][x][c], 1e-12)
            << "pixel (" << y << "," << x << ") channel " << c;
}

TEST(Overlay, ResamplesCoarseMapsToImageResolution) {
  Tensor<double> alpha({2, 2});
  alpha.at(0, 0) = 0.0;
  alpha.at(0, 1) = 1.0;
  alpha.at(1, 0) = 0.0;
  alpha.at(1, 1) = 1.0;
  const auto img = Tensor<double>::full({8, 8}, 0.5);
  const auto ov = render_attention_overlay(img, one_map(alpha));
  ASSERT_EQ(ov.heat.dim(0), 8);
  ASSERT_EQ(ov.heat.dim(1), 8);
  for (int64_t i = 0; i < ov.heat.numel(); ++i) {
    EXPECT_GE(ov.heat[i], 0.0);
    EXPECT_LE(ov.heat[i], 1.0);
  }
  // left side cold, right side hot after upsampling
  EXPECT_LT(ov.heat.at(4, 0), 0.25);
  EXPECT_GT(ov.heat.at(4, 7), 0.75);
}

TEST(Overlay, SelectsRequestedGateAndDefaultsToFinest) {
  std::vector<AttentionMap<double>> maps(2);
  maps[0].alpha = Tensor<double>::full({2, 2}, 0.1);
  maps[0].gate_index = 1;  // coarser gate listed first
  maps[1].alpha = Tensor<double>::full({4, 4}, 0.9);
  maps[1].gate_index = 0;
  const auto img = Tensor<double>::full({4, 4}, 0.5);

  EXPECT_EQ(render_attention_overlay(img, maps).gate_index, 0);
  EXPECT_EQ(render_attention_overlay(img, maps, 1).gate_index, 1);

  try {
    render_attention_overlay(img, maps, 5);
    FAIL() << "expected ParamError";
  } catch (const ParamError& e) {
    EXPECT_NE(std::string(e.what()).find("available: 1, 0"), std::string::npos) << e.what();
  }
}

TEST(Overlay, RejectsBadArguments) {
  const auto img = Tensor<double>::full({4, 4}, 0.5);
  const auto maps = one_map(Tensor<double>::full({4, 4}, 0.5));
  EXPECT_THROW(render_attention_overlay(img, std::vector<AttentionMap<double>>{}), ParamError);
  EXPECT_THROW(render_attention_overlay(img, maps, 0, "blue-red", 1.5), ParamError);
  EXPECT_THROW(render_attention_overlay(img, maps, 0, "viridis"), ParamError);
  EXPECT_THROW(render_attention_overlay(Tensor<double>::full({1, 4, 4}, 0.5), maps), ShapeError);
}

// Overlays straight from a live forward pass: one per gate, each blending
// back to the input resolution.
TEST(Overlay, WorksOnLiveSegmenterGates) {
  UNetConfig cfg;
  cfg.depth = 3;
  cfg.base_channels = 2;
  cfg.input_h = cfg.input_w = 16;
  SegModel<double> model(cfg, 4);
  auto rng = Rng::from(4, "img");
  const auto img = rng.uniform_tensor<double>({16, 16}, 0.0, 1.0);
  const auto fwd = model.forward(img);
  ASSERT_EQ(fwd.gates.size(), 2u);
  for (int layer = 0; layer < 2; ++layer) {
    const auto ov = render_attention_overlay(img, fwd.gates, layer);
    EXPECT_EQ(ov.blend.dim(1), 16);
    EXPECT_EQ(ov.blend.dim(2), 16);
    for (int64_t i = 0; i < ov.blend.numel(); ++i) {
      EXPECT_GE(ov.blend[i], 0.0);
      EXPECT_LE(ov.blend[i], 1.0);
    }
  }
}
