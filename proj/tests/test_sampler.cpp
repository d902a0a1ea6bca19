#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/LU>

#include "cah/kernels.hpp"
#include "cah/ops.hpp"
#include "cah/sampler.hpp"
#include "support/gradcheck.hpp"

using namespace cah;
using cah::testing::gradcheck;
using cah::testing::random_tensor;

namespace {

Tensor ramp(std::size_t h, std::size_t w) {
  Tensor t(Shape{1, 1, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) t.mutable_data()[y * w + x] = static_cast<double>(x) + 100.0 * y;
  return t;
}

Tensor smooth_image(std::mt19937_64& rng, std::size_t c, std::size_t h, std::size_t w) {
  std::uniform_real_distribution<double> u(0, 6.28);
  Tensor t(Shape{1, c, h, w});
  for (std::size_t k = 0; k < c; ++k) {
    const double p1 = u(rng), p2 = u(rng), p3 = u(rng);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        t.mutable_data()[(k * h + y) * w + x] =
            std::sin(0.21 * x + p1) * std::cos(0.17 * y + p2) + 0.5 * std::sin(0.05 * (x + y) + p3);
  }
  return t;
}

}  // namespace

TEST(Warp, IdentityIsBitExact) {
  std::mt19937_64 rng(1);
  auto x = random_tensor(rng, {1, 3, 7, 9}, -1, 1, false);
  const auto r = warp(x, Homography::identity());
  EXPECT_EQ(r.warped.values(), x.values());
  for (double v : r.validity.data()) EXPECT_EQ(v, 1.0);
}

TEST(Warp, IntegerTranslationShiftsRows) {
  const auto x = ramp(4, 6);
  const auto r = warp(x, Homography::translation(1, 0));
  for (std::size_t y = 0; y < 4; ++y) {
    // output (x, y) samples input (x - 1, y): the first column has no source
    EXPECT_EQ(r.validity[y * 6 + 0], 0.0);
    for (std::size_t c = 1; c < 6; ++c) {
      EXPECT_EQ(r.validity[y * 6 + c], 1.0);
      EXPECT_EQ(r.warped[y * 6 + c], x[y * 6 + c - 1]);
    }
  }
}

TEST(Warp, CentreOfTwoByTwoIsBilinearMean) {
  Tensor x(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  const auto r = warp(x, Homography::translation(-0.5, -0.5));
  EXPECT_DOUBLE_EQ(r.warped[0], 2.5);
  EXPECT_EQ(r.validity[0], 1.0);
}

TEST(Warp, RejectsTinyInputsAndSingularMatrices) {
  Tensor x(Shape{1, 1, 1, 5});
  EXPECT_THROW(warp(x, Homography::identity()), DimensionError);
  Tape tape;
  Tensor h(Shape{3, 3});
  EXPECT_THROW(warp(tape, Tensor(Shape{1, 1, 4, 4}), h), GeometryError);
}

TEST(Warp, ValuesStayWithinInputRangeWhereValid) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-6, 6);
  for (int t = 0; t < 30; ++t) {
    auto x = random_tensor(rng, {1, 1, 16, 16}, -2, 3, false);
    std::array<double, 8> v{};
    for (auto& e : v) e = d(rng);
    const auto h = offsets_to_homography(CornerOffsets::from_values(v, Frame{16, 16}));
    const auto r = warp(x, h);
    const auto [lo, hi] = std::minmax_element(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < r.warped.numel(); ++i) {
      if (r.validity[i] != 1.0) continue;
      EXPECT_GE(r.warped[i], *lo - 1e-12);
      EXPECT_LE(r.warped[i], *hi + 1e-12);
    }
  }
}

TEST(Warp, TranslationsComposeOnInterior) {
  std::mt19937_64 rng(4);
  auto x = random_tensor(rng, {1, 2, 12, 12}, -1, 1, false);
  const auto ta = Homography::translation(2, -1), tb = Homography::translation(-3, 2);
  const auto twice = warp(warp(x, ta).warped, tb).warped;
  const auto once = warp(x, compose(tb, ta)).warped;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t y = 3; y < 9; ++y)
      for (std::size_t xx = 3; xx < 9; ++xx) {
        const std::size_t i = (c * 12 + y) * 12 + xx;
        EXPECT_NEAR(twice[i], once[i], 1e-6);
      }
}

TEST(Warp, GradientWithRespectToOffsets) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-4, 4);
  const Frame frame{24, 20};
  for (int trial = 0; trial < 20; ++trial) {
    const auto img = smooth_image(rng, 1, 20, 24);
    Tensor off(Shape{1, 8});
    for (auto& v : off.mutable_data()) v = d(rng);
    off.set_requires_grad(true);
    auto r = gradcheck(
        [&](Tape& t, std::vector<Tensor>& in) {
          auto h = offsets_to_homography(t, in[0], frame);
          return ops::mean(t, warp(t, img, h).warped);
        },
        {off});
    EXPECT_LT(r.relative_error, 1e-3) << "trial " << trial;
  }
}

TEST(Warp, GradientWithRespectToInput) {
  std::mt19937_64 rng(6);
  auto img = random_tensor(rng, {1, 2, 6, 7});
  const auto h = to_tensor<double>(offsets_to_homography(
      CornerOffsets::from_values(std::array<double, 8>{0.3, -0.7, 0.4, 0.2, -0.5, 0.6, 0.1, 0.25}, Frame{7, 6})));
  auto r = gradcheck(
      [&](Tape& t, std::vector<Tensor>& in) {
        auto w = warp(t, in[0], h).warped;
        return ops::sum(t, ops::mul(t, w, w));
      },
      {img});
  EXPECT_LT(r.relative_error, 1e-7);
}

TEST(Kernels, ParallelWarpMatchesReference) {
  std::mt19937_64 rng(7);
  const kernels::WarpGeometry g{3, 13, 11};
  auto in = random_tensor(rng, {g.planes * g.height * g.width}, -1, 1, false);
  auto go = random_tensor(rng, {g.planes * g.height * g.width}, -1, 1, false);
  const auto h = offsets_to_homography(
      CornerOffsets::from_values(std::array<double, 8>{1.3, -0.7, 2.4, 0.2, -1.5, 0.6, 0.1, 1.25}, Frame{11, 13}));
  const Eigen::Matrix3d inv = h.matrix().inverse();
  double m[9];
  for (int i = 0; i < 9; ++i) m[i] = inv(i / 3, i % 3);
  const std::size_t n = in.numel(), plane = g.height * g.width;
  std::vector<double> o1(n), o2(n), v1(plane), v2(plane);
  kernels::warp_bilinear<double>(g, in.data(), m, o1, v1);
  kernels::warp_bilinear_reference<double>(g, in.data(), m, o2, v2);
  EXPECT_EQ(v1, v2);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(o1[i], o2[i], 1e-14);
  std::vector<double> gi1(n), gi2(n);
  double gm1[9] = {0}, gm2[9] = {0};
  kernels::warp_bilinear_backward<double>(g, in.data(), m, go.data(), gi1, gm1);
  kernels::warp_bilinear_backward_reference<double>(g, in.data(), m, go.data(), gi2, gm2);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(gi1[i], gi2[i], 1e-14);
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(gm1[i], gm2[i], 1e-9 * (1 + std::abs(gm2[i])));
  double gm3[9] = {0};
  kernels::warp_bilinear_backward<double>(g, in.data(), m, go.data(), {}, gm3);
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(gm3[i], gm1[i], 1e-9 * (1 + std::abs(gm1[i])));
}
