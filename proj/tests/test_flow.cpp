#include <gtest/gtest.h>

#include "kfprop/flow.hpp"
#include "reference_impls.hpp"

using namespace kfprop;
using kfref::rand_t;

TEST(Flow, BilinearIntegerCoordinatesExact) {
  Rng rng(1);
  Tensor<double> feat = rand_t(rng, {6, 7, 3});
  Tensor<double> pos(Shape{6 * 7, 2});
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 7; ++x) {
      pos.data[(y * 7 + x) * 2] = static_cast<double>(x);
      pos.data[(y * 7 + x) * 2 + 1] = static_cast<double>(y);
    }
  Tensor<double> got = bilinear_sample_plain(feat, pos);
  for (std::size_t i = 0; i < feat.numel(); ++i) EXPECT_EQ(got.data[i], feat.data[i]);
}

TEST(Flow, BilinearMidpointAverages) {
  Tensor<double> feat(Shape{2, 2, 1}, {1.0, 3.0, 5.0, 7.0});
  Tensor<double> pos(Shape{1, 2}, {0.5, 0.5});
  Tensor<double> got = bilinear_sample_plain(feat, pos);
  EXPECT_NEAR(got.data[0], 4.0, 1e-14);
}

TEST(Flow, BilinearClampsToEdge) {
  Tensor<double> feat(Shape{2, 3, 1}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
  Tensor<double> pos(Shape{3, 2}, {-5.0, 0.0, 10.0, 0.0, 1.0, 99.0});
  Tensor<double> got = bilinear_sample_plain(feat, pos);
  EXPECT_EQ(got.data[0], 1.0);
  EXPECT_EQ(got.data[1], 3.0);
  EXPECT_EQ(got.data[2], 5.0);
}

TEST(Flow, AffineHelpers) {
  Affine a = affine_identity();
  auto [x, y] = affine_apply(a, 3.0, 4.0);
  EXPECT_EQ(x, 3.0);
  EXPECT_EQ(y, 4.0);

  Affine t{};
  t.m[0][0] = 0.8;
  t.m[0][1] = -0.1;
  t.m[0][2] = 2.0;
  t.m[1][0] = 0.2;
  t.m[1][1] = 1.1;
  t.m[1][2] = -3.0;
  Affine inv = affine_invert(t);
  Affine comp = affine_compose(inv, t);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) {
      double want = (c == r) ? 1.0 : 0.0;
      EXPECT_NEAR(comp.m[r][c], want, 1e-12);
    }
}

TEST(Flow, AffineFlowFbConsistencyInterior) {
  Affine t{};
  t.m[0][0] = 0.95;
  t.m[0][1] = -0.12;
  t.m[0][2] = 1.5;
  t.m[1][0] = 0.12;
  t.m[1][1] = 0.95;
  t.m[1][2] = -0.8;
  auto [fwd, bwd] = affine_flow<double>(t, 32, 32);
  Tensor<double> fb = fb_consistency(fwd, bwd);
  // clamping corrupts samples that land outside, so check the interior only
  for (std::size_t y = 6; y < 26; ++y)
    for (std::size_t x = 6; x < 26; ++x) EXPECT_LT(fb.data[y * 32 + x], 1e-3);
}

TEST(Flow, WarpByIdentityFlowIsExact) {
  Rng rng(2);
  Tensor<double> img = rand_t(rng, {5, 5, 3});
  FlowField<double> zero(5, 5);
  Tensor<double> warped = warp_by_flow(img, zero);
  for (std::size_t i = 0; i < img.numel(); ++i) EXPECT_EQ(warped.data[i], img.data[i]);
}

TEST(Flow, WarpByIntegerShift) {
  Tensor<double> img(Shape{1, 4, 1}, {10.0, 20.0, 30.0, 40.0});
  FlowField<double> shift(1, 4);
  for (std::size_t x = 0; x < 4; ++x) shift.offsets.data[x * 2] = 1.0;
  Tensor<double> warped = warp_by_flow(img, shift);
  EXPECT_EQ(warped.data[0], 20.0);
  EXPECT_EQ(warped.data[1], 30.0);
  EXPECT_EQ(warped.data[2], 40.0);
  EXPECT_EQ(warped.data[3], 40.0);  // clamped at the border
}

TEST(Flow, InfillRecoversConstantFlow) {
  FlowField<double> flow(16, 16);
  for (std::size_t i = 0; i < 16 * 16; ++i) {
    flow.offsets.data[i * 2] = 1.25;
    flow.offsets.data[i * 2 + 1] = -0.5;
  }
  Tensor<double> mask(Shape{16, 16, 1});
  for (std::size_t y = 5; y < 10; ++y)
    for (std::size_t x = 5; x < 10; ++x) mask.data[y * 16 + x] = 1.0;
  FlowField<double> corrupted = flow;
  for (std::size_t i = 0; i < 16 * 16; ++i)
    if (mask.data[i] > 0.5) {
      corrupted.offsets.data[i * 2] = 99.0;
      corrupted.offsets.data[i * 2 + 1] = -99.0;
    }
  auto res = fill_masked_flow(corrupted, mask);
  EXPECT_FALSE(res.degenerate);
  EXPECT_LT(max_abs_diff(res.flow.offsets, flow.offsets), 1e-3);
}

TEST(Flow, InfillRecoversAffineFlow) {
  Affine t{};
  t.m[0][0] = 1.02;
  t.m[0][1] = 0.05;
  t.m[0][2] = -1.0;
  t.m[1][0] = -0.05;
  t.m[1][1] = 1.02;
  t.m[1][2] = 0.5;
  auto [fwd, bwd] = affine_flow<double>(t, 16, 16);
  Tensor<double> mask(Shape{16, 16, 1});
  for (std::size_t y = 6; y < 11; ++y)
    for (std::size_t x = 4; x < 9; ++x) mask.data[y * 16 + x] = 1.0;
  auto res = fill_masked_flow(fwd, mask, 1e-7, 100000);
  EXPECT_FALSE(res.degenerate);
  // harmonic extension reproduces affine fields up to the discretization
  double worst = 0.0;
  for (std::size_t i = 0; i < 16 * 16; ++i)
    if (mask.data[i] > 0.5) {
      worst = std::max(worst, std::abs(res.flow.offsets.data[i * 2] - fwd.offsets.data[i * 2]));
      worst = std::max(worst,
                       std::abs(res.flow.offsets.data[i * 2 + 1] - fwd.offsets.data[i * 2 + 1]));
    }
  EXPECT_LT(worst, 1e-3);
}

TEST(Flow, InfillKeepsKnownEntriesAndFlagsDegenerate) {
  FlowField<double> flow(4, 4);
  for (std::size_t i = 0; i < 16; ++i) flow.offsets.data[i * 2] = static_cast<double>(i);
  Tensor<double> mask(Shape{4, 4, 1});
  mask.data[5] = 1.0;
  auto res = fill_masked_flow(flow, mask);
  for (std::size_t i = 0; i < 16; ++i)
    if (i != 5) EXPECT_EQ(res.flow.offsets.data[i * 2], flow.offsets.data[i * 2]);

  Tensor<double> all(Shape{4, 4, 1}, 1.0);
  auto deg = fill_masked_flow(flow, all);
  EXPECT_TRUE(deg.degenerate);
  for (double v : deg.flow.offsets.data) EXPECT_EQ(v, 0.0);
}

TEST(Flow, ResizeConstantFlowScalesExactly) {
  FlowField<double> flow(8, 8);
  for (std::size_t i = 0; i < 64; ++i) {
    flow.offsets.data[i * 2] = 4.0;
    flow.offsets.data[i * 2 + 1] = -2.0;
  }
  FlowField<double> half = resize_flow(flow, 4, 4);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_DOUBLE_EQ(half.offsets.data[i * 2], 2.0);
    EXPECT_DOUBLE_EQ(half.offsets.data[i * 2 + 1], -1.0);
  }
  FlowField<double> twice = resize_flow(flow, 16, 16);
  for (std::size_t i = 0; i < 256; ++i) {
    EXPECT_DOUBLE_EQ(twice.offsets.data[i * 2], 8.0);
    EXPECT_DOUBLE_EQ(twice.offsets.data[i * 2 + 1], -4.0);
  }
}

TEST(Flow, FbConsistencyZeroForInverseFlows) {
  FlowField<double> fwd(8, 8), bwd(8, 8);
  for (std::size_t i = 0; i < 64; ++i) {
    fwd.offsets.data[i * 2] = 1.5;
    bwd.offsets.data[i * 2] = -1.5;
  }
  Tensor<double> fb = fb_consistency(fwd, bwd);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 5; ++x)  // samples past the right edge clamp
      EXPECT_NEAR(fb.data[y * 8 + x], 0.0, 1e-12);
}

TEST(Flow, MakeGridLaysOutXY) {
  Tensor<double> grid = make_grid<double>(2, 3);
  EXPECT_EQ(grid.shape, (Shape{2, 3, 2}));
  EXPECT_EQ(grid.at(1, 2, 0), 2.0);  // x
  EXPECT_EQ(grid.at(1, 2, 1), 1.0);  // y
}
