#include <gtest/gtest.h>

#include "support.hpp"

using namespace seqflow;
using namespace testsupport;

namespace {

ConvWeights random_conv(int in, int out, Rng& rng, double scale = 0.1) {
  ConvWeights k = ConvWeights::zeros(in, out);
  for (double& v : k.weight) v = static_cast<float>(rng.uniform(-scale, scale));
  for (double& v : k.bias) v = static_cast<float>(rng.uniform(-scale, scale));
  return k;
}

FeatureMap random_features(int h, int w, int c, Rng& rng) { return FeatureMap(random_grid(h, w, c, rng, -1, 1)); }

}  // namespace

TEST(Correlation, ConstantFeaturesAndBorderZeros) {
  const FeatureMap a(Grid(5, 5, 1, 1.0)), b(Grid(5, 5, 1, 2.0));
  const FeatureMap c = correlation_volume(a, b, 1);
  ASSERT_EQ(c.channels(), 9);
  for (int ch = 0; ch < 9; ++ch) EXPECT_EQ(c(2, 2, ch), 2.0);
  // (0, 0) looking at dx = -1 or dy = -1 leaves the image.
  EXPECT_EQ(c(0, 0, 0), 0.0);
  EXPECT_EQ(c(0, 0, 4), 2.0);
  EXPECT_EQ(c(0, 0, 8), 2.0);
  EXPECT_EQ(correlation_volume(a, a, 3).channels(), 49);
}

TEST(Correlation, ArgmaxFindsShift) {
  Rng rng(1);
  const int H = 12, W = 16, C = 32;
  const FeatureMap f1 = random_features(H, W, C, rng);
  Grid g2 = random_grid(H, W, C, rng, -1, 1);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x + 2 < W; ++x)
      for (int c = 0; c < C; ++c) g2(y, x + 2, c) = f1(y, x, c);
  const FeatureMap corr = correlation_volume(f1, FeatureMap(g2), 3);
  const int expected = (0 + 3) * 7 + (2 + 3);
  for (int y = 3; y < H - 3; ++y)
    for (int x = 3; x < W - 3; ++x) {
      int best = 0;
      for (int ch = 1; ch < 49; ++ch)
        if (corr(y, x, ch) > corr(y, x, best)) best = ch;
      EXPECT_EQ(best, expected) << y << "," << x;
    }
}

TEST(Correlation, Errors) {
  const FeatureMap a(Grid(4, 4, 2)), b(Grid(4, 5, 2));
  EXPECT_THROW(correlation_volume(a, b, 1), DimensionError);
  EXPECT_THROW(correlation_volume(a, a, -1), ParameterError);
}

TEST(Conv3x3, CentreTapIsIdentityAndPaddingIsZero) {
  Rng rng(2);
  const Grid x = random_grid(5, 6, 2, rng);
  ConvWeights id = ConvWeights::zeros(2, 2);
  id.w(0, 0, 1, 1) = id.w(1, 1, 1, 1) = 1.0;
  EXPECT_EQ(conv3x3(x, id), x);

  ConvWeights ones = ConvWeights::zeros(1, 1);
  for (double& v : ones.weight) v = 1.0;
  ones.bias[0] = 0.5;
  const Grid out = conv3x3(Grid(4, 4, 1, 1.0), ones);
  EXPECT_EQ(out(0, 0), 4.5);
  EXPECT_EQ(out(0, 1), 6.5);
  EXPECT_EQ(out(1, 1), 9.5);
  EXPECT_THROW(conv3x3(Grid(4, 4, 2), ones), DimensionError);
}

TEST(ConvGru, SaturatedGateSelectsCandidateOrInput) {
  Rng rng(3);
  const FeatureMap h = random_features(6, 7, 4, rng), x = random_features(6, 7, 4, rng);
  auto w = ConvGruWeights::zeros(4, 4);
  for (double& b : w.z.bias) b = 50.0;
  const FeatureMap take_q = conv_gru_cell(h, x, w);
  for (double v : take_q.data()) EXPECT_EQ(v, 0.0);  // tanh(0)
  for (double& b : w.z.bias) b = -50.0;
  const FeatureMap keep = conv_gru_cell(h, x, w);
  for (std::size_t i = 0; i < keep.data().size(); ++i) EXPECT_NEAR(keep.data()[i], x.data()[i], 1e-12);
  const FeatureMap half = conv_gru_cell(h, x, ConvGruWeights::zeros(4, 4));
  for (std::size_t i = 0; i < half.data().size(); ++i) EXPECT_NEAR(half.data()[i], 0.5 * x.data()[i], 1e-15);
}

TEST(ConvGru, OutputIsConvexCombination) {
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const FeatureMap h = random_features(5, 5, 3, rng), x = random_features(5, 5, 3, rng);
    ConvGruWeights w{random_conv(6, 3, rng, 1), random_conv(6, 3, rng, 1), random_conv(6, 3, rng, 1)};
    const ConvGruOutput o = conv_gru_forward(h, x, w);
    for (std::size_t i = 0; i < x.data().size(); ++i) {
      const double a = x.data()[i], q = o.q.storage()[i], z = o.z.storage()[i];
      EXPECT_GT(z, 0.0);
      EXPECT_LT(z, 1.0);
      EXPECT_GE(o.fused.data()[i], std::min(a, q) - 1e-15);
      EXPECT_LE(o.fused.data()[i], std::max(a, q) + 1e-15);
    }
  }
}

TEST(ConvGru, RejectsMismatchedWeights) {
  const FeatureMap h(Grid(3, 3, 2)), x(Grid(3, 3, 2));
  EXPECT_THROW(conv_gru_cell(h, x, ConvGruWeights::zeros(3, 2)), DimensionError);
  EXPECT_THROW(conv_gru_cell(h, FeatureMap(Grid(3, 4, 2)), ConvGruWeights::zeros(2, 2)), DimensionError);
}

TEST(Sgw, ZeroWeightsGiveZeroFlowAndHalfFeature) {
  Rng rng(5);
  const FeatureMap h = random_features(6, 8, kHiddenChannels, rng), f = random_features(6, 8, kHiddenChannels, rng);
  const SgwOutput o = sgw_block(h, f, SgwWeights::zeros(2));
  for (double v : o.flow.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(o.warped_hidden, h);
  for (std::size_t i = 0; i < f.data().size(); ++i) EXPECT_NEAR(o.fused.data()[i], 0.5 * f.data()[i], 1e-15);
}

TEST(Sgw, EstimatorBiasDrivesWarp) {
  Rng rng(6);
  const int H = 6, W = 8;
  const FeatureMap h = random_features(H, W, kHiddenChannels, rng), f = random_features(H, W, kHiddenChannels, rng);
  SgwWeights w = SgwWeights::zeros(1);
  w.estimator2.bias = {2.0, 0.0};
  const SgwOutput o = sgw_block(h, f, w);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      EXPECT_EQ(o.flow(y, x, 0), 2.0);
      for (int c = 0; c < kHiddenChannels; ++c) EXPECT_EQ(o.warped_hidden(y, x, c), h(y, std::min(x + 2, W - 1), c));
    }
}

TEST(Sgw, RequiresHiddenWidth) {
  const FeatureMap h(Grid(4, 4, 8)), f(Grid(4, 4, 8));
  EXPECT_THROW(sgw_block(h, f, SgwWeights::zeros(1, 8)), DimensionError);
  EXPECT_THROW(sgw_block(FeatureMap(Grid(4, 4, 32)), FeatureMap(Grid(4, 5, 32)), SgwWeights::zeros(1)),
               DimensionError);
}

TEST(Pyramid, ShapesAndPooling) {
  const std::vector<std::pair<int, int>> want{{96, 208}, {48, 104}, {24, 52}, {12, 26}, {6, 13}};
  EXPECT_EQ(pyramid_shapes(384, 832), want);
  EXPECT_THROW(pyramid_shapes(100, 128), ParameterError);
  EXPECT_THROW(pyramid_shapes(0, 64), ParameterError);

  Rng rng(7);
  const Grid img = random_grid(128, 192, kHiddenChannels, rng);
  const auto levels = feature_pyramid(img);
  const auto shapes = pyramid_shapes(128, 192);
  ASSERT_EQ(levels.size(), 5u);
  for (std::size_t l = 0; l < 5; ++l) {
    EXPECT_EQ(levels[l].height(), shapes[l].first);
    EXPECT_EQ(levels[l].width(), shapes[l].second);
  }
  Grid g(2, 2, 1, std::vector<double>{1, 2, 3, 6});
  EXPECT_EQ(avg_pool2x(g)(0, 0), 3.0);
  const Grid up = upsample2x(Grid(3, 3, 1, 0.25));
  for (double v : up.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(TemporalStep, ZeroWeightsHalveEveryLevel) {
  Rng rng(8);
  const auto feats = feature_pyramid(random_grid(64, 128, kHiddenChannels, rng, -1, 1));
  std::vector<FeatureMap> prev;
  for (const auto& f : feats) prev.push_back(random_features(f.height(), f.width(), kHiddenChannels, rng));
  const std::vector<SgwWeights> w(5, SgwWeights::zeros(1));
  const auto next = temporal_step(feats, prev, w);
  ASSERT_EQ(next.size(), 5u);
  for (std::size_t l = 0; l < 5; ++l)
    for (std::size_t i = 0; i < feats[l].data().size(); ++i)
      EXPECT_NEAR(next[l].data()[i], 0.5 * feats[l].data()[i], 1e-15);
  EXPECT_THROW(temporal_step(feats, prev, std::vector<SgwWeights>(4, SgwWeights::zeros(1))), DimensionError);
}

TEST(TemporalStep, FinerLevelSeesUpsampledCoarserState) {
  Rng rng(9);
  const auto feats = feature_pyramid(random_grid(64, 64, kHiddenChannels, rng, -1, 1));
  std::vector<FeatureMap> prev;
  for (const auto& f : feats) prev.push_back(random_features(f.height(), f.width(), kHiddenChannels, rng));
  std::vector<SgwWeights> w(5, SgwWeights::zeros(1));
  // z = 1 and q copies the hidden state's first channel (q input is [r*x, h]).
  for (auto& sw : w) {
    for (double& b : sw.gru.z.bias) b = 50.0;
    for (int c = 0; c < kHiddenChannels; ++c) sw.gru.q.w(c, kHiddenChannels + c, 1, 1) = 1.0;
  }
  const auto next = temporal_step(feats, prev, w);
  const Grid up = upsample2x(prev[1].grid());
  for (std::size_t i = 0; i < up.size(); ++i) EXPECT_NEAR(next[0].data()[i], std::tanh(up.storage()[i]), 1e-12);
  for (std::size_t i = 0; i < prev[4].data().size(); ++i)
    EXPECT_NEAR(next[4].data()[i], std::tanh(prev[4].data()[i]), 1e-12);
}

TEST(WeightSet, SgwRoundTrip) {
  Rng rng(10);
  SgwWeights w;
  w.max_disp = 2;
  w.estimator1 = random_conv(25, SgwWeights::kEstimatorWidth, rng);
  w.estimator2 = random_conv(SgwWeights::kEstimatorWidth, 2, rng);
  w.gru = {random_conv(64, 32, rng), random_conv(64, 32, rng), random_conv(64, 32, rng)};
  WeightSet ws;
  put_sgw(ws, "level0", w);
  const auto bytes = ws.serialize();
  const WeightSet back = WeightSet::deserialize(bytes);
  EXPECT_EQ(back.serialize(), bytes);
  const SgwWeights r = get_sgw(back, "level0");
  EXPECT_EQ(r.max_disp, 2);
  EXPECT_EQ(r.estimator1.weight, w.estimator1.weight);
  EXPECT_EQ(r.estimator2.bias, w.estimator2.bias);
  EXPECT_EQ(r.gru.q.weight, w.gru.q.weight);
  EXPECT_EQ(r.gru.r.bias, w.gru.r.bias);
}

TEST(WeightSet, HeaderLayout) {
  WeightSet ws;
  ws.put("a", {2}, {1.0f, -2.0f});
  const auto b = ws.serialize();
  const std::vector<std::uint8_t> head{'S', 'Q', 'W', 'S', 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 'a', 1, 0, 0, 0, 2, 0, 0, 0};
  ASSERT_EQ(b.size(), head.size() + 8);
  EXPECT_TRUE(std::equal(head.begin(), head.end(), b.begin()));
}

TEST(WeightSet, Errors) {
  WeightSet ws;
  EXPECT_THROW(ws.put("x", {2, 2}, {1, 2, 3}), DimensionError);
  ws.put("x", {3}, {1, 2, 3});
  auto b = ws.serialize();
  EXPECT_THROW(ws.get("y"), FormatError);
  auto bad = b;
  bad[0] = 'X';
  EXPECT_THROW(WeightSet::deserialize(bad), FormatError);
  auto ver = b;
  ver[4] = 2;
  EXPECT_THROW(WeightSet::deserialize(ver), FormatError);
  auto cut = b;
  cut.pop_back();
  EXPECT_THROW(WeightSet::deserialize(cut), LengthError);
  auto extra = b;
  extra.push_back(0);
  EXPECT_THROW(WeightSet::deserialize(extra), LengthError);
  EXPECT_THROW(WeightSet::deserialize(std::vector<std::uint8_t>{'S', 'Q'}), LengthError);
  put_conv(ws, "k", ConvWeights::zeros(2, 3));
  EXPECT_THROW(get_conv(ws, "k", 3, 2), DimensionError);
  EXPECT_THROW(get_sgw(ws, "missing"), FormatError);
}
