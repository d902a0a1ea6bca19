#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "cah/geometry.hpp"
#include "support/gradcheck.hpp"

using namespace cah;

namespace {

constexpr Frame kFrame{128, 128};

CornerOffsets random_offsets(std::mt19937_64& rng, double range, Frame frame = kFrame) {
  std::uniform_real_distribution<double> d(-range, range);
  std::array<double, 8> v{};
  for (auto& x : v) x = d(rng);
  return CornerOffsets::from_values(v, frame);
}

Homography random_homography(std::mt19937_64& rng) { return offsets_to_homography(random_offsets(rng, 16.0)); }

double frobenius_relative(const Homography& a, const Homography& b) {
  return (a.matrix() - b.matrix()).norm() / b.matrix().norm();
}

}  // namespace

TEST(Geometry, ZeroOffsetsGiveIdentity) {
  const auto h = offsets_to_homography(CornerOffsets{{}, kFrame});
  EXPECT_LT((h.matrix() - Eigen::Matrix3d::Identity()).norm(), 1e-12);
}

TEST(Geometry, UniformOffsetsGiveTranslation) {
  CornerOffsets c{{Point2{5, -3}, Point2{5, -3}, Point2{5, -3}, Point2{5, -3}}, kFrame};
  const auto h = offsets_to_homography(c);
  EXPECT_NEAR(h(0, 2), 5.0, 1e-12);
  EXPECT_NEAR(h(1, 2), -3.0, 1e-12);
  EXPECT_EQ(h(2, 2), 1.0);
  EXPECT_LT((h.matrix() - Homography::translation(5, -3).matrix()).norm(), 1e-12);
}

TEST(Geometry, CornerReprojectionOverManyDraws) {
  std::mt19937_64 rng(2024);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto off = random_offsets(rng, 8.0);
    const auto h = offsets_to_homography(off);
    const auto corners = kFrame.corners();
    const auto target = off.displaced_corners();
    for (std::size_t i = 0; i < 4; ++i) {
      const auto p = h.apply(corners[i]);
      worst = std::max(worst, std::hypot(p.x - target[i].x, p.y - target[i].y));
    }
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Geometry, DegenerateCornersNameTheCulprits) {
  CornerOffsets c{{}, kFrame};
  c.offsets[2] = {63.5, -127.0};  // bottom-left lands between the top corners
  try {
    offsets_to_homography(c);
    FAIL() << "expected GeometryError";
  } catch (const GeometryError& e) {
    EXPECT_NE(std::string(e.what()).find("top-left, top-right, bottom-left"), std::string::npos) << e.what();
  }
}

TEST(Geometry, ApplyIdentityTranslationAndRoundTrip) {
  const std::vector<Point2> pts{{0, 0}, {3.5, -2}, {100, 7}};
  EXPECT_EQ(cah::apply(Homography::identity(), pts), pts);
  EXPECT_EQ(Homography::translation(5, -3).apply({0, 0}), (Point2{5, -3}));
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    const auto h = random_homography(rng);
    const auto back = cah::apply(inverse(h), cah::apply(h, pts));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      EXPECT_NEAR(back[i].x, pts[i].x, 1e-9);
      EXPECT_NEAR(back[i].y, pts[i].y, 1e-9);
    }
  }
}

TEST(Geometry, ApplyRejectsPointsAtInfinity) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(2, 0) = -1.0;
  const Homography h(m);
  EXPECT_THROW(h.apply({1.0, 0.0}), GeometryError);
}

TEST(Geometry, InverseAndCompose) {
  EXPECT_LT((inverse(Homography::identity()).matrix() - Eigen::Matrix3d::Identity()).norm(), 1e-15);
  const auto t = compose(Homography::translation(1, 2), Homography::translation(-4, 0.5));
  EXPECT_LT((t.matrix() - Homography::translation(-3, 2.5).matrix()).norm(), 1e-15);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    const auto h = random_homography(rng);
    EXPECT_LT((compose(h, inverse(h)).matrix() - Eigen::Matrix3d::Identity()).norm(), 1e-9);
  }
  Eigen::Matrix3d singular = Eigen::Matrix3d::Zero();
  singular(2, 2) = 1;
  EXPECT_THROW(Homography{singular}, GeometryError);
  Eigen::Matrix3d no_scale = Eigen::Matrix3d::Identity();
  no_scale(2, 2) = 0;
  EXPECT_THROW(Homography{no_scale}, GeometryError);
}

TEST(Geometry, CanonicalFormIsIdempotent) {
  std::mt19937_64 rng(10);
  const auto h = random_homography(rng);
  const Homography again(h.matrix());
  EXPECT_EQ(again.matrix(), h.matrix());
  const Homography scaled(h.matrix() * 3.7);
  EXPECT_LT((scaled.matrix() - h.matrix()).norm(), 1e-14);
}

TEST(Dlt, RecoversTranslationOfUnitSquare) {
  const std::vector<Point2> src{{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  std::vector<Point2> dst;
  for (auto p : src) dst.push_back({p.x + 2.5, p.y - 1.0});
  const auto h = dlt_from_correspondences(src, dst);
  EXPECT_LT((h.matrix() - Homography::translation(2.5, -1.0).matrix()).norm(), 1e-12);
}

TEST(Dlt, ExactRecoveryFromFourNoiselessPairs) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0, 127);
  for (int t = 0; t < 100; ++t) {
    const auto h = random_homography(rng);
    std::vector<Point2> src;
    for (int i = 0; i < 4; ++i) src.push_back({u(rng), u(rng)});
    const auto est = dlt_from_correspondences(src, cah::apply(h, src));
    EXPECT_LT(frobenius_relative(est, h), 1e-8);
  }
}

TEST(Dlt, NoisyOverdeterminedMonteCarlo) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0, 127);
  std::normal_distribution<double> noise(0.0, 0.5);
  double total = 0;
  for (int t = 0; t < 100; ++t) {
    const auto h = random_homography(rng);
    std::vector<Point2> src, dst;
    for (int i = 0; i < 20; ++i) {
      Point2 p{u(rng), u(rng)};
      Point2 q = h.apply(p);
      src.push_back(p);
      dst.push_back({q.x + noise(rng), q.y + noise(rng)});
    }
    total += mean_corner_error(dlt_from_correspondences(src, dst), h, kFrame);
  }
  EXPECT_LT(total / 100.0, 1.5);
}

TEST(Dlt, InvariantToSimilarityRescaling) {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(0, 127);
  std::normal_distribution<double> noise(0.0, 0.5);
  const auto h = random_homography(rng);
  std::vector<Point2> src, dst;
  for (int i = 0; i < 12; ++i) {
    Point2 p{u(rng), u(rng)};
    Point2 q = h.apply(p);
    src.push_back(p);
    dst.push_back({q.x + noise(rng), q.y + noise(rng)});
  }
  const double s = 0.013, tx = -40, ty = 12;
  auto rescale = [&](std::vector<Point2> pts) {
    for (auto& p : pts) p = {s * p.x + tx, s * p.y + ty};
    return pts;
  };
  Eigen::Matrix3d sm;
  sm << s, 0, tx, 0, s, ty, 0, 0, 1;
  const auto direct = dlt_from_correspondences(src, dst);
  const auto scaled = dlt_from_correspondences(rescale(src), rescale(dst));
  const Homography back(sm.inverse() * scaled.matrix() * sm);
  EXPECT_LT(frobenius_relative(back, direct), 1e-8);
}

TEST(Dlt, RejectsTooFewOrDegeneratePoints) {
  const std::vector<Point2> three{{0, 0}, {1, 0}, {0, 1}};
  EXPECT_THROW(dlt_from_correspondences(three, three), GeometryError);
  std::vector<Point2> line;
  for (int i = 0; i < 8; ++i) line.push_back({static_cast<double>(i), 2.0 * i});
  EXPECT_THROW(dlt_from_correspondences(line, line), GeometryError);
}

TEST(OffsetsBackward, ZeroUpstreamGivesZero) {
  std::mt19937_64 rng(5);
  const auto g = offsets_to_homography_backward(random_offsets(rng, 8), std::array<double, 9>{});
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(OffsetsBackward, TranslationColumnDependsOnOriginCorner) {
  CornerOffsets c{{Point2{2, 1}, Point2{2, 1}, Point2{2, 1}, Point2{2, 1}}, kFrame};
  std::array<double, 9> up{};
  up[2] = 1.0;
  up[5] = 0.5;
  const auto g = offsets_to_homography_backward(c, up);
  // the last column is the image of the origin, i.e. the displaced top-left corner
  EXPECT_NEAR(g[0], 1.0, 1e-9);
  EXPECT_NEAR(g[1], 0.5, 1e-9);
  for (int k = 2; k < 8; ++k) EXPECT_NEAR(g[k], 0.0, 1e-9);
  // finite-difference oracle on the same configuration
  auto objective = [&](const CornerOffsets& o) {
    const auto h = offsets_to_homography(o).values();
    return h[2] * up[2] + h[5] * up[5];
  };
  const double step = 1e-5;
  for (std::size_t k = 0; k < 8; ++k) {
    auto p = c.values(), m = c.values();
    p[k] += step;
    m[k] -= step;
    const double fd = (objective(CornerOffsets::from_values(p, kFrame)) -
                       objective(CornerOffsets::from_values(m, kFrame))) / (2 * step);
    EXPECT_NEAR(g[k], fd, 1e-6);
  }
}

TEST(OffsetsBackward, MatchesFiniteDifferencesOnRandomConfigurations) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto off = random_offsets(rng, 8);
    std::array<double, 9> up{};
    for (auto& v : up) v = n(rng);
    up[8] = 0;
    const auto g = offsets_to_homography_backward(off, up);
    auto objective = [&](std::array<double, 8> v) {
      const auto h = offsets_to_homography(CornerOffsets::from_values(v, kFrame)).values();
      double s = 0;
      for (int i = 0; i < 9; ++i) s += h[i] * up[i];
      return s;
    };
    double diff = 0, norm = 0;
    for (std::size_t k = 0; k < 8; ++k) {
      auto p = off.values(), m = off.values();
      p[k] += 1e-5;
      m[k] -= 1e-5;
      const double fd = (objective(p) - objective(m)) / 2e-5;
      diff += (fd - g[k]) * (fd - g[k]);
      norm += fd * fd;
    }
    EXPECT_LT(std::sqrt(diff / norm), 1e-4);
  }
}

TEST(Geometry, TapeOffsetsMatchFreeFunction) {
  std::mt19937_64 rng(8);
  auto off = cah::testing::random_tensor(rng, {1, 8}, -6, 6);
  Tape tape;
  const auto h = offsets_to_homography(tape, off, kFrame);
  std::array<double, 8> v{};
  std::copy(off.data().begin(), off.data().end(), v.begin());
  const auto ref = offsets_to_homography(CornerOffsets::from_values(v, kFrame)).values();
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(h[i], ref[i]);
}

TEST(Geometry, TextFormatRoundTripsExactly) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 50; ++i) {
    const auto h = random_homography(rng);
    EXPECT_EQ(parse_homography(format_homography(h)).matrix(), h.matrix());
  }
  EXPECT_THROW(parse_homography("1 0 0 0 1 0 0 0"), GeometryError);
  EXPECT_THROW(parse_homography("1 0 0 0 1 0 0 0 1 extra"), GeometryError);
}

TEST(Geometry, HomographyToOffsetsInvertsParameterization) {
  std::mt19937_64 rng(13);
  const auto off = random_offsets(rng, 8);
  const auto back = homography_to_offsets(offsets_to_homography(off), kFrame).values();
  const auto v = off.values();
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(back[i], v[i], 1e-9);
}
