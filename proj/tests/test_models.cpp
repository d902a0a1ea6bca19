#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cah/models.hpp"
#include "cah/ops.hpp"
#include "support/gradcheck.hpp"

using namespace cah;
using cah::testing::random_tensor;

namespace {

Tensor patch(std::mt19937_64& rng, std::size_t h, std::size_t w) { return random_tensor(rng, {1, 1, h, w}, 0, 1, false); }

void zero_param(Model& m, const std::string& name) {
  auto t = m.params.get(name);
  for (auto& v : t.mutable_data()) v = 0;
}

void randomize_param(Model& m, const std::string& name, std::mt19937_64& rng, double scale) {
  auto t = m.params.get(name);
  std::normal_distribution<double> d(0, scale);
  for (auto& v : t.mutable_data()) v = d(rng);
}

std::string last_conv(const std::string& net, std::size_t hidden) { return net + ".conv" + std::to_string(hidden); }

}  // namespace

TEST(ModelConfig, PaperEstimatorLayout) {
  const auto c = ModelConfig::paper();
  c.validate();
  EXPECT_EQ(c.feature_widths, (std::vector<std::size_t>{4, 8}));
  EXPECT_EQ(c.feature_channels, 1u);
  EXPECT_EQ(c.mask_widths, (std::vector<std::size_t>{4, 8, 16, 32}));
  EXPECT_EQ(c.stage_widths, (std::vector<std::size_t>{64, 128, 256, 512}));
  // stem plus 2 x (3 + 4 + 6 + 3) block convs; the fully-connected layer is the 34th weighted layer
  EXPECT_EQ(c.estimator_main_convs(), 33u);
  EXPECT_EQ(c.estimator_min_size(), 32u);
  const auto m = init_model<double>(c, 1);
  std::size_t convs = 0;
  for (const auto& [name, t] : m.params.entries())
    if (name.rfind("h.", 0) == 0 && t.rank() == 4 && name.find(".proj.") == std::string::npos) ++convs;
  EXPECT_EQ(convs, 33u);
  EXPECT_TRUE(m.params.contains("h.fc.weight"));
  EXPECT_EQ(m.params.get("h.fc.weight").shape(), (Shape{8, 512}));
}

TEST(ModelConfig, TinyFitsBudgetAndKeepsTopology) {
  const auto c = ModelConfig::tiny();
  c.validate();
  const auto m = init_model<double>(c, 1);
  EXPECT_LT(m.params.parameter_count(), kTinyParameterBudget);
  EXPECT_EQ(c.feature_widths.size() + 1, 3u);
  EXPECT_EQ(c.mask_widths.size() + 1, 5u);
  EXPECT_EQ(m.params.get("h.fc.weight").dim(0), 8u);
}

TEST(ModelConfig, VariantNamesRoundTrip) {
  EXPECT_EQ(parse_model_variant(to_string(ModelVariant::paper)), ModelVariant::paper);
  EXPECT_EQ(parse_model_variant("tiny"), ModelVariant::tiny);
  EXPECT_THROW(parse_model_variant("resnet"), std::invalid_argument);
}

TEST(Model, InitIsSeeded) {
  const auto a = init_model<double>(ModelConfig::tiny(), 5), b = init_model<double>(ModelConfig::tiny(), 5);
  const auto c = init_model<double>(ModelConfig::tiny(), 6);
  ASSERT_EQ(a.params.entries().size(), b.params.entries().size());
  bool differs = false;
  for (std::size_t i = 0; i < a.params.entries().size(); ++i) {
    EXPECT_EQ(a.params.entries()[i].second.values(), b.params.entries()[i].second.values());
    differs |= a.params.entries()[i].second.values() != c.params.entries()[i].second.values();
  }
  EXPECT_TRUE(differs);
  for (double v : a.params.get("h.fc.weight").data()) EXPECT_EQ(v, 0.0);
}

TEST(Features, SpatialSizePreserved) {
  std::mt19937_64 rng(1);
  const auto m = init_model<double>(ModelConfig::tiny(), 2);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{8, 8}, {13, 9}, {32, 47}}) {
    Tape tape;
    const auto x = patch(rng, h, w);
    EXPECT_EQ(extract_features(tape, m, x).shape(), (Shape{1, 1, h, w}));
    EXPECT_EQ(predict_mask(tape, m, x).shape(), (Shape{1, 1, h, w}));
  }
  auto cfg = ModelConfig::tiny();
  cfg.feature_channels = 3;
  const auto m3 = init_model<double>(cfg, 2);
  Tape tape;
  EXPECT_EQ(extract_features(tape, m3, patch(rng, 10, 12)).shape(), (Shape{1, 3, 10, 12}));
}

TEST(Features, WrongChannelCountIsRejected) {
  const auto m = init_model<double>(ModelConfig::tiny(), 2);
  Tape tape;
  EXPECT_THROW(extract_features(tape, m, Tensor(Shape{1, 2, 8, 8})), DimensionError);
  EXPECT_THROW(predict_mask(tape, m, Tensor(Shape{1, 8, 8})), DimensionError);
}

TEST(Features, SharedWeightsGiveIdenticalMaps) {
  std::mt19937_64 rng(3);
  auto m = init_model<double>(ModelConfig::tiny(), 4);
  const auto x = patch(rng, 16, 16);
  const auto y = x.clone();
  Tape tape;
  EXPECT_EQ(extract_features(tape, m, x).values(), extract_features(tape, m, y).values());
  // a perturbation of f moves both branches together
  randomize_param(m, "f.conv0.weight", rng, 0.3);
  const auto fx = extract_features(tape, m, x), fy = extract_features(tape, m, y);
  EXPECT_EQ(fx.values(), fy.values());
}

TEST(Features, ZeroedFinalLayers) {
  std::mt19937_64 rng(5);
  auto m = init_model<double>(ModelConfig::tiny(), 6);
  const auto& cfg = m.config;
  zero_param(m, last_conv("f", cfg.feature_widths.size()) + ".weight");
  zero_param(m, last_conv("m", cfg.mask_widths.size()) + ".weight");
  const auto x = patch(rng, 12, 12);
  Tape tape;
  for (double v : extract_features(tape, m, x).data()) EXPECT_EQ(v, 0.0);
  for (double v : predict_mask(tape, m, x).data()) EXPECT_EQ(v, 0.5);
}

TEST(Mask, StrictlyInsideUnitInterval) {
  std::mt19937_64 rng(7);
  for (int s = 0; s < 10; ++s) {
    const auto m = init_model<double>(ModelConfig::tiny(), 100 + s);
    Tape tape;
    for (double v : predict_mask(tape, m, patch(rng, 16, 16)).data()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Estimator, EightOutputsAndSizeIndependentHead) {
  std::mt19937_64 rng(8);
  auto m = init_model<double>(ModelConfig::tiny(), 9);
  Tape tape;
  for (std::size_t s : {32u, 64u, 75u}) {
    const auto g = random_tensor(rng, {1, 1, s, s}, -1, 1, false);
    const auto off = estimate_offsets(tape, m, g, g);
    EXPECT_EQ(off.shape(), (Shape{1, 8}));
    for (double v : off.data()) EXPECT_EQ(v, 0.0);  // zero fc
  }
}

TEST(Estimator, TooSmallInputNamesMinimum) {
  const auto m = init_model<double>(ModelConfig::tiny(), 9);
  Tape tape;
  const Tensor g(Shape{1, 1, 16, 40});
  try {
    estimate_offsets(tape, m, g, g);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("32"), std::string::npos) << e.what();
  }
  EXPECT_THROW(estimate_offsets(tape, m, g, Tensor(Shape{1, 1, 40, 40})), DimensionError);
}

TEST(Pipeline, ZeroHeadGivesIdentity) {
  std::mt19937_64 rng(10);
  const auto m = init_model<double>(ModelConfig::tiny(), 11);
  Tape tape;
  const auto out = forward_pipeline(tape, m, patch(rng, 32, 32), patch(rng, 32, 32), ForwardOptions{});
  const auto h = to_homography(out.h_ab);
  EXPECT_LT((h.matrix() - Eigen::Matrix3d::Identity()).norm(), 1e-15);
}

TEST(Pipeline, AttentionOffIgnoresMaskNetwork) {
  std::mt19937_64 rng(12);
  auto m = init_model<double>(ModelConfig::tiny(), 13);
  randomize_param(m, "h.fc.weight", rng, 0.1);
  const auto a = patch(rng, 32, 32), b = patch(rng, 32, 32);
  ForwardOptions off;
  off.mask_attention = false;
  Tape t1;
  const auto before = forward_pipeline(t1, m, a, b, off);
  for (auto& [name, t] : m.params.entries())
    if (name.rfind("m.", 0) == 0) randomize_param(m, name, rng, 1.0);
  Tape t2;
  const auto after = forward_pipeline(t2, m, a, b, off);
  EXPECT_EQ(before.h_ab.values(), after.h_ab.values());
  EXPECT_EQ(before.h_ba.values(), after.h_ba.values());
  ForwardOptions on;
  Tape t3;
  EXPECT_NE(forward_pipeline(t3, m, a, b, on).h_ab.values(), after.h_ab.values());
}

TEST(Pipeline, IdenticalInputsGiveIdenticalDirections) {
  std::mt19937_64 rng(14);
  auto m = init_model<double>(ModelConfig::tiny(), 15);
  randomize_param(m, "h.fc.weight", rng, 0.1);
  randomize_param(m, "h.fc.bias", rng, 0.5);
  const auto a = patch(rng, 32, 32);
  Tape tape;
  const auto out = forward_pipeline(tape, m, a, a.clone(), ForwardOptions{});
  EXPECT_EQ(out.h_ab.values(), out.h_ba.values());
}

TEST(Pipeline, OutputsFiniteOverSeeds) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    auto m = init_model<double>(ModelConfig::tiny(), seed);
    randomize_param(m, "h.fc.weight", rng, 0.05);
    Tape tape;
    const auto out = forward_pipeline(tape, m, patch(rng, 32, 32), patch(rng, 32, 32), ForwardOptions{});
    for (const auto* t : {&out.h_ab, &out.h_ba, &out.fa, &out.fb, &out.ma, &out.mb})
      for (double v : t->data()) ASSERT_TRUE(std::isfinite(v)) << "seed " << seed;
  }
}

TEST(Pipeline, FloatModelTracksDouble) {
  std::mt19937_64 rng(16);
  auto m = init_model<double>(ModelConfig::tiny(), 17);
  randomize_param(m, "h.fc.weight", rng, 0.05);
  const auto mf = cast_model<float>(m);
  const auto a = patch(rng, 32, 32), b = patch(rng, 32, 32);
  const auto hd = predict_homography(m, a, b), hf = predict_homography(mf, tensor_cast<float>(a), tensor_cast<float>(b));
  EXPECT_LT((hd.matrix() - hf.matrix()).norm(), 1e-4);
}
