#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "cah/checkpoint.hpp"
#include "cah/pipeline.hpp"

using namespace cah;

namespace {

ModelConfig small_model() {
  ModelConfig c;
  c.feature_widths = {2, 2};
  c.mask_widths = {2, 2, 2, 2};
  c.stem_width = 4;
  c.stage_widths = {4, 4, 4, 4};
  c.input_height = 32;
  c.input_width = 32;
  return c;
}

GenConfig small_gen() {
  GenConfig g;
  g.width = 32;
  g.height = 32;
  g.perturbation_px = 2;
  return g;
}

TrainConfig short_run(std::size_t iterations = 4) {
  TrainConfig t;
  t.iterations = iterations;
  t.batch_size = 2;
  t.decay_interval = 2;
  t.threads = 1;
  return t;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cah_pipeline_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t p = 0;
  while (true) {
    auto q = line.find(',', p);
    out.push_back(line.substr(p, q - p));
    if (q == std::string::npos) break;
    p = q + 1;
  }
  return out;
}

EvalPair translated_pair(double dx, double dy, Category cat = Category::RE) {
  EvalPair p;
  p.a = Image(16, 16, 0.5);
  p.b = Image(16, 16, 0.5);
  p.category = cat;
  for (double y : {2.0, 8.0, 13.0})
    for (double x : {3.0, 11.0}) p.points.push_back({{x, y}, {x + dx, y + dy}});
  p.gt = Homography::translation(dx, dy);
  return p;
}

}  // namespace

TEST(Ablation, NamesRoundTrip) {
  EXPECT_EQ(kAblationArms.size(), 7u);
  std::set<std::string> names;
  for (auto a : kAblationArms) {
    names.insert(to_string(a));
    EXPECT_EQ(parse_ablation(to_string(a)), a);
  }
  EXPECT_EQ(names.size(), 7u);
  EXPECT_THROW(parse_ablation("no_masks"), ConfigError);
}

TEST(TrainConfig, PaperDefaults) {
  const auto c = TrainConfig::paper();
  c.validate();
  EXPECT_EQ(c.iterations, 120000u);
  EXPECT_EQ(c.batch_size, 64u);
  EXPECT_DOUBLE_EQ(c.learning_rate, 1e-4);
  EXPECT_DOUBLE_EQ(c.adam_beta1, 0.9);
  EXPECT_DOUBLE_EQ(c.adam_beta2, 0.999);
  EXPECT_DOUBLE_EQ(c.adam_epsilon, 1e-8);
  EXPECT_DOUBLE_EQ(c.lr_decay_factor, 0.8);
  EXPECT_EQ(c.decay_interval, 12000u);
  EXPECT_EQ(c.stage1_iterations(), 60000u);
  EXPECT_DOUBLE_EQ(c.lambda, 2.0);
  EXPECT_DOUBLE_EQ(c.mu, 0.01);
}

TEST(TrainConfig, TinyKeepsHalfSplit) {
  const auto c = TrainConfig::tiny();
  c.validate();
  EXPECT_EQ(c.stage1_iterations() * 2, c.iterations);
  EXPECT_LE(c.batch_size, 8u);
}

TEST(TrainConfig, ScheduleStepsEveryInterval) {
  auto c = TrainConfig::tiny();
  c.learning_rate = 1.0;
  c.decay_interval = 10;
  EXPECT_DOUBLE_EQ(c.lr_at(0), 1.0);
  EXPECT_DOUBLE_EQ(c.lr_at(9), 1.0);
  EXPECT_DOUBLE_EQ(c.lr_at(10), 0.8);
  EXPECT_DOUBLE_EQ(c.lr_at(25), 0.64);
}

TEST(TrainConfig, FromScratchIsSingleStage) {
  auto c = TrainConfig::tiny();
  c.ablation = Ablation::from_scratch;
  EXPECT_EQ(c.stage1_iterations(), 0u);
  EXPECT_TRUE(arm_settings(c, true).forward.mask_attention);
}

TEST(TrainConfig, RejectsInvalidValues) {
  auto bad = [](auto edit) {
    auto c = TrainConfig::tiny();
    edit(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  bad([](TrainConfig& c) { c.iterations = 0; });
  bad([](TrainConfig& c) { c.batch_size = 0; });
  bad([](TrainConfig& c) { c.stage1_fraction = 1.5; });
  bad([](TrainConfig& c) { c.learning_rate = -1; });
  bad([](TrainConfig& c) { c.adam_beta2 = 1.0; });
  bad([](TrainConfig& c) { c.lr_decay_factor = 0; });
  bad([](TrainConfig& c) { c.decay_interval = 0; });
  bad([](TrainConfig& c) { c.loss_epsilon = 0; });
  bad([](TrainConfig& c) { c.mask_floor = 1; });
  bad([](TrainConfig& c) { c.threads = -2; });
}

TEST(ArmSettings, SwitchesPerArm) {
  auto settings = [](Ablation a, bool two) {
    auto c = TrainConfig::tiny();
    c.ablation = a;
    return arm_settings(c, two);
  };
  // stage 1 never uses attention except for the single-stage arm
  for (auto a : kAblationArms)
    if (a != Ablation::from_scratch) {
      EXPECT_FALSE(settings(a, false).forward.mask_attention) << to_string(a);
    }

  EXPECT_TRUE(settings(Ablation::full, true).forward.mask_attention);
  EXPECT_FALSE(settings(Ablation::full, true).objective.uniform_loss_masks);
  EXPECT_TRUE(settings(Ablation::full, true).objective.triplet_term);

  EXPECT_FALSE(settings(Ablation::no_mask, true).forward.mask_attention);
  EXPECT_TRUE(settings(Ablation::no_mask, true).objective.uniform_loss_masks);

  EXPECT_TRUE(settings(Ablation::mask_attention_only, true).forward.mask_attention);
  EXPECT_TRUE(settings(Ablation::mask_attention_only, true).objective.uniform_loss_masks);

  EXPECT_FALSE(settings(Ablation::mask_ransac_only, true).forward.mask_attention);
  EXPECT_FALSE(settings(Ablation::mask_ransac_only, true).objective.uniform_loss_masks);

  EXPECT_FALSE(settings(Ablation::no_triplet_term, true).objective.triplet_term);
  EXPECT_TRUE(settings(Ablation::no_feature_extractor, true).forward.identity_features);
  EXPECT_FALSE(settings(Ablation::full, true).forward.identity_features);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  std::vector<double> p{1.0, -2.0}, g{0.0, 0.0};
  Adam<double> adam;
  adam.step({std::span<double>(p)}, {std::span<const double>(g)}, 0.1);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, FirstStepIsLearningRate) {
  std::vector<double> p{0.0}, g{1.0};
  Adam<double> adam;
  adam.step({std::span<double>(p)}, {std::span<const double>(g)}, 1e-3);
  EXPECT_NEAR(p[0], -1e-3 / (1 + 1e-8), 1e-15);
}

TEST(Adam, MomentsDecayUnderZeroGradient) {
  std::vector<double> p{0.0}, g{1.0};
  Adam<double> adam;
  adam.step({std::span<double>(p)}, {std::span<const double>(g)}, 1e-3);
  const double m1 = adam.first_moment()[0][0], v1 = adam.second_moment()[0][0];
  g[0] = 0;
  adam.step({std::span<double>(p)}, {std::span<const double>(g)}, 1e-3);
  EXPECT_DOUBLE_EQ(adam.first_moment()[0][0], 0.9 * m1);
  EXPECT_DOUBLE_EQ(adam.second_moment()[0][0], 0.999 * v1);
}

TEST(Adam, ConvergesOnQuadraticBowl) {
  std::vector<double> p{3.0, -4.0}, g(2);
  const std::vector<double> target{0.5, 1.5};
  Adam<double> adam;
  auto loss = [&] { return (p[0] - target[0]) * (p[0] - target[0]) + 4 * (p[1] - target[1]) * (p[1] - target[1]); };
  std::vector<double> history;
  for (int i = 0; i < 100; ++i) {
    g[0] = 2 * (p[0] - target[0]);
    g[1] = 8 * (p[1] - target[1]);
    adam.step({std::span<double>(p)}, {std::span<const double>(g)}, 0.1);
    history.push_back(loss());
  }
  EXPECT_LT(history.back(), 1e-2 * history.front());
  for (std::size_t i = 1; i < 20; ++i) EXPECT_LT(history[i], history[i - 1]) << "step " << i;
}

TEST(Adam, ShapeMismatchThrows) {
  std::vector<double> p{1.0, 2.0}, g{1.0};
  Adam<double> adam;
  EXPECT_THROW(adam.step({std::span<double>(p)}, {std::span<const double>(g)}, 0.1), DimensionError);
  EXPECT_THROW(adam.step({std::span<double>(p)}, {}, 0.1), DimensionError);
}

TEST(Train, ZeroLearningRateKeepsParametersBitIdentical) {
  auto cfg = short_run(3);
  cfg.learning_rate = 0;
  const auto mc = small_model();
  auto result = train(cfg, mc, synthetic_source(small_gen(), {Category::RE}));
  const auto init = cast_model<float>(init_model<double>(mc, cfg.seed));
  const auto& a = result.model.params.entries();
  const auto& b = init.params.entries();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].second.numel(); ++j)
      ASSERT_EQ(a[i].second.data()[j], static_cast<double>(b[i].second.data()[j])) << a[i].first;
}

TEST(Train, LogHasOneRowPerStepAndStageFlipsOnTime) {
  auto cfg = short_run(6);
  cfg.stage1_fraction = 0.5;
  auto result = train(cfg, small_model(), synthetic_source(small_gen(), {Category::RE, Category::SF}));
  ASSERT_EQ(result.log.size(), 7u);
  EXPECT_EQ(result.log[0], train_log_header());
  EXPECT_EQ(result.log[0], "step,ln_ab,ln_ba,feature_distance,inverse_penalty,total,lr,stage,features");
  for (std::size_t i = 1; i < result.log.size(); ++i) {
    const auto cols = split(result.log[i]);
    ASSERT_EQ(cols.size(), 9u);
    EXPECT_EQ(std::stoul(cols[0]), i - 1);
    EXPECT_EQ(cols[7], i - 1 < 3 ? "1" : "2") << result.log[i];
    EXPECT_EQ(cols[8], "learned");
    // total = ln_ab + ln_ba - lambda * fd + mu * penalty, batch-averaged
    const double total = std::stod(cols[1]) + std::stod(cols[2]) - 2.0 * std::stod(cols[3]) + 0.01 * std::stod(cols[4]);
    EXPECT_NEAR(std::stod(cols[5]), total, 1e-6 * (1 + std::abs(total)));
  }
  EXPECT_NEAR(std::stod(split(result.log[3])[6]), 1e-3 * 0.8, 1e-12);
}

TEST(Train, NoFeatureExtractorLogsRawIntensities) {
  auto cfg = short_run(2);
  cfg.ablation = Ablation::no_feature_extractor;
  auto result = train(cfg, small_model(), synthetic_source(small_gen(), {Category::RE}));
  EXPECT_EQ(split(result.log[1])[8], "identity");
  EXPECT_TRUE(result.inference.identity_features);

  auto mc = small_model();
  mc.feature_channels = 2;
  EXPECT_THROW(train(cfg, mc, synthetic_source(small_gen(), {Category::RE})), ConfigError);
}

TEST(Train, ThreadCountDoesNotChangeTheResult) {
  auto cfg = short_run(3);
  cfg.batch_size = 3;
  const auto data = synthetic_source(small_gen(), {Category::RE, Category::LF});
  cfg.threads = 1;
  auto one = train(cfg, small_model(), data);
  cfg.threads = 3;
  auto three = train(cfg, small_model(), data);
  EXPECT_EQ(one.log, three.log);
  const auto& a = one.model.params.entries();
  const auto& b = three.model.params.entries();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].second.numel(); ++j) ASSERT_EQ(a[i].second.data()[j], b[i].second.data()[j]);
}

TEST(Train, NonFiniteLossAbortsWithStep) {
  auto cfg = short_run(2);
  // raw intensities reach the loss directly; inside f a ReLU would swallow the NaN
  cfg.ablation = Ablation::no_feature_extractor;
  PairSource poisoned = [](std::uint64_t) {
    Image a(32, 32, 0.5), b(32, 32, 0.5);
    a.at(3, 3) = std::nan("");
    return std::make_pair(a, b);
  };
  try {
    train(cfg, small_model(), poisoned);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos) << e.what();
  }
}

TEST(Train, WritesLogAndCheckpoints) {
  const auto dir = scratch("outputs");
  auto cfg = short_run(4);
  cfg.checkpoint_interval = 2;
  auto result = train(cfg, small_model(), synthetic_source(small_gen(), {Category::RE}), dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "train_log.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "checkpoint_2.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "model.ckpt"));
  std::ifstream log(dir / "train_log.csv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(log, line)) EXPECT_EQ(line, result.log[lines++]);
  EXPECT_EQ(lines, result.log.size());
  const auto loaded = load_model(dir / "model.ckpt");
  EXPECT_EQ(loaded.metadata.at("train.step"), "4");
  std::filesystem::remove_all(dir);
}

TEST(Evaluate, IdentityOnTranslationGivesDisplacement) {
  std::vector<EvalPair> pairs{translated_pair(5, 0), translated_pair(0, -5)};
  const auto rep = evaluate("identity", identity_estimator(), pairs, 3.0);
  EXPECT_NEAR(rep.avg_error, 5.0, 1e-12);
  EXPECT_NEAR(rep.avg_inlier_percent, 0.0, 1e-12);
  EXPECT_EQ(rep.failures, 0u);
  for (const auto& r : rep.records)
    for (bool in : r.inliers) EXPECT_FALSE(in);
}

TEST(Evaluate, GroundTruthIsExact) {
  std::vector<EvalPair> pairs{translated_pair(2.5, 1), translated_pair(-1, 3, Category::LL)};
  const auto rep = evaluate("gt", gt_estimator(), pairs, 3.0);
  EXPECT_NEAR(rep.avg_error, 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(rep.avg_inlier_percent, 100.0);
  EXPECT_EQ(rep.categories.size(), 2u);
}

TEST(Evaluate, InlierFlagMatchesThreshold) {
  std::vector<EvalPair> pairs{translated_pair(3, 0), translated_pair(3.0001, 0)};
  const auto rep = evaluate("identity", identity_estimator(), pairs, 3.0);
  for (bool in : rep.records[0].inliers) EXPECT_TRUE(in);
  for (bool in : rep.records[1].inliers) EXPECT_FALSE(in);
}

TEST(Evaluate, CategoryMeansThenAverage) {
  std::vector<EvalPair> pairs{translated_pair(1, 0, Category::RE), translated_pair(3, 0, Category::RE),
                              translated_pair(4, 0, Category::LT)};
  const auto rep = evaluate("identity", identity_estimator(), pairs, 3.0);
  EXPECT_DOUBLE_EQ(rep.categories.at(Category::RE).mean_error, 2.0);
  EXPECT_DOUBLE_EQ(rep.categories.at(Category::LT).mean_error, 4.0);
  EXPECT_DOUBLE_EQ(rep.avg_error, 3.0);
  EXPECT_NEAR(rep.overall_mean_error, 8.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(rep.categories.at(Category::RE).inlier_percent, 100.0);
}

TEST(Evaluate, FailuresAreCountedAndExcluded) {
  std::vector<EvalPair> pairs{translated_pair(1, 0), translated_pair(2, 0), translated_pair(3, 0),
                              translated_pair(4, 0)};
  pairs[2].points.clear();
  // first point starts at x = 3, so its target x is 3 + dx
  Estimator flaky = [](const EvalPair& p) -> std::optional<Homography> {
    if (p.points.empty()) return Homography::identity();
    if (p.points[0].b.x > 6.5) throw GeometryError("boom");
    if (p.points[0].b.x > 4.5) return std::nullopt;
    return Homography::identity();
  };
  const auto rep = evaluate("flaky", flaky, pairs, 3.0);
  EXPECT_EQ(rep.failures, 3u);
  EXPECT_FALSE(rep.records[0].failed);
  EXPECT_TRUE(rep.records[1].failed);
  EXPECT_TRUE(rep.records[2].failed);
  EXPECT_TRUE(rep.records[3].failed);
  EXPECT_DOUBLE_EQ(rep.avg_error, 1.0);
  const auto csv = report_csv({rep});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,RE,LT,LL,SF,LF,Avg,inlier_pct,failure_rate");
  EXPECT_NE(csv.find("0.750000"), std::string::npos) << csv;
  EXPECT_NE(records_csv(rep).find("1,RE,flaky,1,,0,0"), std::string::npos) << records_csv(rep);
  EXPECT_THROW(evaluate("x", flaky, pairs, 0.0), ConfigError);
}

TEST(Evaluate, IdentityMatchesDirectDisplacementMean) {
  GenConfig g;
  g.perturbation_px = 5;
  const auto pairs = synthetic_eval_set(g, {kCategories.begin(), kCategories.end()}, 4, 100);
  ASSERT_EQ(pairs.size(), 20u);
  const auto rep = evaluate("identity", identity_estimator(), pairs, 3.0);
  std::map<Category, std::pair<double, int>> direct;
  for (const auto& p : pairs) {
    double s = 0;
    for (const auto& c : p.points) s += std::hypot(c.b.x - c.a.x, c.b.y - c.a.y);
    direct[p.category].first += s / static_cast<double>(p.points.size());
    direct[p.category].second += 1;
  }
  double avg = 0;
  for (auto& [cat, v] : direct) {
    EXPECT_NEAR(rep.categories.at(cat).mean_error, v.first / v.second, 1e-12);
    avg += v.first / v.second / static_cast<double>(direct.size());
  }
  EXPECT_NEAR(rep.avg_error, avg, 1e-12);
}

TEST(Evaluate, PairHashTracksContent) {
  std::vector<EvalPair> pairs{translated_pair(1, 0), translated_pair(2, 0)};
  const auto h = hash_pairs(pairs);
  EXPECT_EQ(h, hash_pairs(pairs));
  pairs[1].b.at(4, 4) += 1e-9;
  EXPECT_NE(h, hash_pairs(pairs));
}

TEST(Estimate, LargerImagesUseCenterCropAndConjugate) {
  auto model = init_model<double>(small_model(), 3);
  Image a(48, 40, 0.3), b(48, 40, 0.3);
  const auto h = estimate_on_images(model, {}, a, b);
  EXPECT_LT((h.matrix() - Eigen::Matrix3d::Identity()).norm(), 1e-15);
  EXPECT_THROW(estimate_on_images(model, {}, a, Image(40, 40)), DimensionError);
  EXPECT_THROW(estimate_on_images(model, {}, Image(16, 16), Image(16, 16)), DimensionError);
}

TEST(Ransac, FourExactPointsOneIteration) {
  const Homography h = offsets_to_homography(CornerOffsets::from_values(
      std::array<double, 8>{1.5, -2, 0.5, 1, -1, 2.5, 2, -0.5}, Frame{64, 64}));
  std::vector<Point2> src{{3, 4}, {60, 2}, {5, 58}, {55, 61}};
  const auto dst = cah::apply(h, src);
  RansacConfig cfg;
  cfg.iterations = 1;
  const auto r = ransac_dlt(src, dst, cfg);
  ASSERT_TRUE(r.success);
  EXPECT_EQ(r.inlier_count, 4u);
  EXPECT_LT(mean_corner_error(r.h, h, Frame{64, 64}), 1e-8);
}

TEST(Ransac, CollinearPointsFail) {
  std::vector<Point2> src, dst;
  for (int i = 0; i < 10; ++i) {
    src.push_back({1.0 * i, 2.0 * i});
    dst.push_back({1.0 * i + 1, 2.0 * i});
  }
  RansacConfig cfg;
  cfg.iterations = 50;
  const auto r = ransac_dlt(src, dst, cfg);
  EXPECT_FALSE(r.success);
  EXPECT_FALSE(r.failure.empty());
  EXPECT_FALSE(ransac_dlt(std::span(src).first(3), std::span(dst).first(3), cfg).success);
}

TEST(Ransac, NoOutliersMeansAllInliers) {
  std::mt19937_64 rng(5);
  const Frame frame{64, 64};
  const auto h = offsets_to_homography(CornerOffsets::from_values(
      std::array<double, 8>{2, 1, -3, 0.5, 1, -2, 0, 3}, frame));
  const auto set = synthetic_correspondences(h, frame, 60, 0.0, 0.1, rng);
  RansacConfig cfg;
  const auto r = ransac_dlt(set.src, set.dst, cfg);
  ASSERT_TRUE(r.success);
  EXPECT_EQ(r.inlier_count, 60u);
}

TEST(Ransac, SeededAndRobust) {
  std::mt19937_64 rng(9);
  const Frame frame{128, 128};
  const auto h = offsets_to_homography(CornerOffsets::from_values(
      std::array<double, 8>{4, -3, 2, 5, -6, 1, 3, 3}, frame));
  const auto set = synthetic_correspondences(h, frame, 100, 0.5, 0.0, rng);
  RansacConfig cfg;
  const auto a = ransac_dlt(set.src, set.dst, cfg);
  const auto b = ransac_dlt(set.src, set.dst, cfg);
  ASSERT_TRUE(a.success);
  EXPECT_EQ(a.inliers, b.inliers);
  EXPECT_EQ(a.h.matrix(), b.h.matrix());
  EXPECT_LT(mean_corner_error(a.h, h, frame), 1e-6);
  for (std::size_t i = 0; i < set.inlier.size(); ++i)
    if (set.inlier[i]) {
      EXPECT_TRUE(a.inliers[i]);
    }
}

TEST(Ransac, ConfigValidation) {
  RansacConfig cfg;
  cfg.iterations = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.threshold = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.confidence = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(AblationSuite, SevenArmsOnSharedPairs) {
  auto cfg = short_run(2);
  cfg.batch_size = 1;
  const auto g = small_gen();
  const auto eval = synthetic_eval_set(g, {Category::RE, Category::SF}, 2, 500);
  const auto results = run_ablation_suite(cfg, small_model(), synthetic_source(g, {Category::RE}), eval);
  ASSERT_EQ(results.size(), 7u);
  std::set<std::string> arms;
  for (const auto& r : results) {
    arms.insert(to_string(r.arm));
    EXPECT_EQ(r.report.pairs_hash, results.front().report.pairs_hash);
    EXPECT_EQ(r.log.size(), 3u);
  }
  EXPECT_EQ(arms.size(), 7u);
  const auto csv = ablation_csv(results);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 8);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "arm,RE,LT,LL,SF,LF,Avg,inlier_pct,failure_rate,pairs_hash");
}
