#include <gtest/gtest.h>

#include "kfprop/rng.hpp"
#include "kfprop/tensor.hpp"

using namespace kfprop;

TEST(Tensor, ShapeAndIndexing) {
  Tensor<double> t(Shape{2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  t.at(1, 2, 3) = 7.0;
  EXPECT_EQ(t.data[1 * 12 + 2 * 4 + 3], 7.0);
  EXPECT_EQ(t.at(0, 0, 0), 0.0);
}

TEST(Tensor, RowMajorLastAxisContiguous) {
  Tensor<float> t(Shape{2, 2, 3});
  for (std::size_t i = 0; i < t.numel(); ++i) t.data[i] = static_cast<float>(i);
  EXPECT_EQ(t.at(0, 1, 0), 3.0f);
  EXPECT_EQ(t.at(1, 0, 2), 8.0f);
}

TEST(Tensor, ReshapeKeepsData) {
  Tensor<double> t(Shape{3, 4});
  for (std::size_t i = 0; i < t.numel(); ++i) t.data[i] = static_cast<double>(i);
  Tensor<double> r = t.reshaped(Shape{2, 6});
  EXPECT_EQ(r.shape, (Shape{2, 6}));
  EXPECT_EQ(r.data, t.data);
  EXPECT_THROW(t.reshaped(Shape{5}), std::invalid_argument);
}

TEST(Tensor, FillAndFinite) {
  Tensor<double> t(Shape{4});
  t.fill(2.5);
  EXPECT_TRUE(t.all_finite());
  t.data[2] = std::nan("");
  EXPECT_FALSE(t.all_finite());
}

TEST(Tensor, CastRoundtrip) {
  Tensor<double> t(Shape{5});
  for (std::size_t i = 0; i < 5; ++i) t.data[i] = 0.25 * static_cast<double>(i);
  Tensor<float> f = cast_tensor<float>(t);
  Tensor<double> back = cast_tensor<double>(f);
  EXPECT_EQ(back.data, t.data);  // quarters are exact in both widths
}

TEST(Rng, DeterministicStreams) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng c(43);
  EXPECT_NE(Rng(42).next_u64(), c.next_u64());
}

TEST(Rng, SplitIndependence) {
  Rng root(7);
  Rng s1 = root.split(1);
  Rng s2 = root.split(2);
  EXPECT_NE(s1.next_u64(), s2.next_u64());
  // splitting does not advance the parent
  EXPECT_EQ(root.split(1).next_u64(), Rng(7).split(1).next_u64());
}

TEST(Rng, UniformRange) {
  Rng r(3);
  for (int i = 0; i < 1000; ++i) {
    double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
  for (int i = 0; i < 1000; ++i) {
    double u = r.uniform(-2.0, 5.0);
    EXPECT_GE(u, -2.0);
    EXPECT_LT(u, 5.0);
  }
}

TEST(Rng, TruncNormalBounded) {
  Rng r(11);
  double sum = 0.0;
  for (int i = 0; i < 5000; ++i) {
    double z = r.trunc_normal(0.02);
    EXPECT_LE(std::abs(z), 2.0 * 0.02 + 1e-12);
    sum += z;
  }
  EXPECT_NEAR(sum / 5000.0, 0.0, 0.01);
}
