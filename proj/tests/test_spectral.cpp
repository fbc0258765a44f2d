#include <gtest/gtest.h>

#include <chrono>

#include "kfprop/gradcheck.hpp"
#include "kfprop/spectral.hpp"
#include "reference_impls.hpp"

using namespace kfprop;
using kfref::rand_t;

TEST(Spectral, MatchesNaiveDft16) {
  Rng rng(1);
  Tensor<double> x = rand_t(rng, {16, 16, 2});
  ComplexMap<double> fast = fft2(x);
  ComplexMap<double> slow = naive_dft2(x);
  EXPECT_LT(max_abs_diff(fast.real, slow.real), 1e-8);
  EXPECT_LT(max_abs_diff(fast.imag, slow.imag), 1e-8);
}

TEST(Spectral, RoundTrip) {
  Rng rng(2);
  Tensor<double> x = rand_t(rng, {32, 16, 3});
  Tensor<double> back = ifft2(fft2(x), 32, 16);
  EXPECT_LT(max_abs_diff(back, x), 1e-10);
}

TEST(Spectral, RoundTripNonPow2Pads) {
  Rng rng(3);
  Tensor<double> x = rand_t(rng, {12, 20, 1});
  ComplexMap<double> f = fft2(x);
  EXPECT_EQ(f.real.shape, (Shape{16, 32, 1}));
  Tensor<double> back = ifft2(f, 12, 20);
  EXPECT_LT(max_abs_diff(back, x), 1e-10);
}

TEST(Spectral, Parseval) {
  Rng rng(4);
  Tensor<double> x = rand_t(rng, {16, 16, 1});
  ComplexMap<double> f = fft2(x);
  double spatial = 0.0, freq = 0.0;
  for (double v : x.data) spatial += v * v;
  for (std::size_t i = 0; i < f.real.numel(); ++i)
    freq += f.real.data[i] * f.real.data[i] + f.imag.data[i] * f.imag.data[i];
  freq /= static_cast<double>(16 * 16);
  EXPECT_NEAR(spatial, freq, 1e-9);
}

TEST(Spectral, Linearity) {
  Rng rng(5);
  Tensor<double> a = rand_t(rng, {8, 8, 1}), b = rand_t(rng, {8, 8, 1});
  Tensor<double> s(Shape{8, 8, 1});
  for (std::size_t i = 0; i < s.numel(); ++i) s.data[i] = 2.0 * a.data[i] - 3.0 * b.data[i];
  ComplexMap<double> fa = fft2(a), fb = fft2(b), fs = fft2(s);
  for (std::size_t i = 0; i < fs.real.numel(); ++i) {
    EXPECT_NEAR(fs.real.data[i], 2.0 * fa.real.data[i] - 3.0 * fb.real.data[i], 1e-10);
    EXPECT_NEAR(fs.imag.data[i], 2.0 * fa.imag.data[i] - 3.0 * fb.imag.data[i], 1e-10);
  }
}

TEST(Spectral, ConjugateSymmetryForRealInput) {
  Rng rng(6);
  Tensor<double> x = rand_t(rng, {8, 8, 1});
  ComplexMap<double> f = fft2(x);
  for (std::size_t v = 0; v < 8; ++v)
    for (std::size_t u = 0; u < 8; ++u) {
      std::size_t vm = (8 - v) % 8, um = (8 - u) % 8;
      EXPECT_NEAR(f.real.data[v * 8 + u], f.real.data[vm * 8 + um], 1e-10);
      EXPECT_NEAR(f.imag.data[v * 8 + u], -f.imag.data[vm * 8 + um], 1e-10);
    }
}

TEST(Spectral, DcTermIsSum) {
  Tensor<double> x(Shape{4, 4, 1}, 0.25);
  ComplexMap<double> f = fft2(x);
  EXPECT_NEAR(f.real.data[0], 4.0, 1e-12);
  for (std::size_t i = 1; i < 16; ++i) {
    EXPECT_NEAR(f.real.data[i], 0.0, 1e-12);
    EXPECT_NEAR(f.imag.data[i], 0.0, 1e-12);
  }
}

TEST(Spectral, ImagResidualGuard) {
  Rng rng(7);
  Tensor<double> x = rand_t(rng, {8, 8, 1});
  ComplexMap<double> f = fft2(x);
  // a spectrum that is not conjugate-symmetric leaves imaginary residue
  f.imag.data[1 * 8 + 0] += 1.0;
  EXPECT_THROW(ifft2(f, 8, 8, 1e-9), std::runtime_error);
  EXPECT_NO_THROW(ifft2(fft2(x), 8, 8, 1e-9));
}

TEST(Spectral, GraphRoundTripAndGradcheck) {
  Rng rng(8);
  Tensor<double> x = rand_t(rng, {8, 8, 2});
  Graph<double> g;
  GVar<double> xin = g.input(x);
  GVar<double> back = ifft2_channels(g, fft2_channels(g, xin), 8, 8);
  EXPECT_LT(max_abs_diff(g.val(back), x), 1e-10);

  EXPECT_TRUE(gradcheck_all_passed(run_gradcheck("ffc_resblock", 1e-4, 0, nullptr)));
}

TEST(Spectral, FasterThanNaiveAt64) {
  Rng rng(9);
  Tensor<double> x = rand_t(rng, {64, 64, 1});
  auto time_median = [&](auto&& fn) {
    fn();
    std::vector<double> ts;
    for (int i = 0; i < 21; ++i) {
      auto t0 = std::chrono::steady_clock::now();
      fn();
      ts.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(ts.begin(), ts.end());
    return ts[ts.size() / 2];
  };
  double fast = time_median([&] { fft2(x); });
  double slow = time_median([&] { naive_dft2(x); });
  EXPECT_GE(slow / fast, 10.0) << "fft " << fast << "s vs naive " << slow << "s";
}
