#pragma once

#include <complex>
#include <vector>

#include "kfprop/ops.hpp"

namespace kfprop {

template <typename T>
struct ComplexMap {
  Tensor<T> real;
  Tensor<T> imag;
};

namespace fftdetail {

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey with bit-reversal permutation, in place.
inline void fft1d(std::complex<double>* a, std::size_t n, bool inverse) {
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double pi = 3.14159265358979323846;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        std::complex<double> u = a[i + j];
        std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// Unnormalized 2-D transform over an H x W grid (row-major), in place.
inline void fft2d(std::vector<std::complex<double>>& grid, std::size_t H, std::size_t W,
                  bool inverse) {
  for (std::size_t y = 0; y < H; ++y) fft1d(&grid[y * W], W, inverse);
  std::vector<std::complex<double>> col(H);
  for (std::size_t x = 0; x < W; ++x) {
    for (std::size_t y = 0; y < H; ++y) col[y] = grid[y * W + x];
    fft1d(col.data(), H, inverse);
    for (std::size_t y = 0; y < H; ++y) grid[y * W + x] = col[y];
  }
}

}  // namespace fftdetail

// Unnormalized forward DFT per channel. Non-power-of-two extents are
// zero-padded up to the next power of two, so the returned map can be
// larger than the input; ifft2 crops back.
template <typename T>
ComplexMap<T> fft2(const Tensor<T>& x) {
  op_require(x.rank() == 3, "fft2 expects H x W x c, got " + shape_str(x.shape));
  std::size_t H = x.shape[0], W = x.shape[1], c = x.shape[2];
  std::size_t Hp = fftdetail::next_pow2(H), Wp = fftdetail::next_pow2(W);
  ComplexMap<T> out{Tensor<T>(Shape{Hp, Wp, c}), Tensor<T>(Shape{Hp, Wp, c})};
  std::vector<std::complex<double>> grid(Hp * Wp);
  for (std::size_t ch = 0; ch < c; ++ch) {
    std::fill(grid.begin(), grid.end(), std::complex<double>(0.0, 0.0));
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx)
        grid[y * Wp + xx] = std::complex<double>(static_cast<double>(x.data[(y * W + xx) * c + ch]), 0.0);
    fftdetail::fft2d(grid, Hp, Wp, false);
    for (std::size_t i = 0; i < Hp * Wp; ++i) {
      out.real.data[i * c + ch] = static_cast<T>(grid[i].real());
      out.imag.data[i * c + ch] = static_cast<T>(grid[i].imag());
    }
  }
  return out;
}

// Inverse with 1/(H*W) normalization; returns the real part, optionally
// cropped to outH x outW (for spectra of padded inputs). When imag_tol > 0
// the imaginary residual is checked, which only makes sense for spectra of
// real images.
template <typename T>
Tensor<T> ifft2(const ComplexMap<T>& f, std::size_t outH = 0, std::size_t outW = 0,
                double imag_tol = 0.0) {
  op_require(f.real.same_shape(f.imag) && f.real.rank() == 3, "ifft2 malformed spectrum");
  std::size_t H = f.real.shape[0], W = f.real.shape[1], c = f.real.shape[2];
  op_require(fftdetail::is_pow2(H) && fftdetail::is_pow2(W), "ifft2 extents must be powers of two");
  if (outH == 0) outH = H;
  if (outW == 0) outW = W;
  op_require(outH <= H && outW <= W, "ifft2 crop larger than spectrum");
  Tensor<T> out(Shape{outH, outW, c});
  std::vector<std::complex<double>> grid(H * W);
  double norm = 1.0 / (static_cast<double>(H) * static_cast<double>(W));
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < H * W; ++i)
      grid[i] = std::complex<double>(static_cast<double>(f.real.data[i * c + ch]),
                                     static_cast<double>(f.imag.data[i * c + ch]));
    fftdetail::fft2d(grid, H, W, true);
    if (imag_tol > 0.0) {
      for (std::size_t i = 0; i < H * W; ++i)
        if (std::abs(grid[i].imag() * norm) > imag_tol)
          throw std::runtime_error("ifft2: imaginary residual exceeds tolerance");
    }
    for (std::size_t y = 0; y < outH; ++y)
      for (std::size_t xx = 0; xx < outW; ++xx)
        out.data[(y * outW + xx) * c + ch] = static_cast<T>(grid[y * W + xx].real() * norm);
  }
  return out;
}

// O(N^2) reference transform, kept as the permanent oracle for fft2.
template <typename T>
ComplexMap<T> naive_dft2(const Tensor<T>& x) {
  op_require(x.rank() == 3, "naive_dft2 expects H x W x c");
  std::size_t H = x.shape[0], W = x.shape[1], c = x.shape[2];
  ComplexMap<T> out{Tensor<T>(Shape{H, W, c}), Tensor<T>(Shape{H, W, c})};
  const double pi = 3.14159265358979323846;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t v = 0; v < H; ++v)
      for (std::size_t u = 0; u < W; ++u) {
        double re = 0, im = 0;
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t xx = 0; xx < W; ++xx) {
            double ang = -2.0 * pi *
                         (static_cast<double>(v * y) / static_cast<double>(H) +
                          static_cast<double>(u * xx) / static_cast<double>(W));
            double val = static_cast<double>(x.data[(y * W + xx) * c + ch]);
            re += val * std::cos(ang);
            im += val * std::sin(ang);
          }
        out.real.data[(v * W + u) * c + ch] = static_cast<T>(re);
        out.imag.data[(v * W + u) * c + ch] = static_cast<T>(im);
      }
  return out;
}

// ---------------------------------------------------------------------------
// recorded-graph spectral ops (for the FFC block)
// ---------------------------------------------------------------------------

// Forward DFT returning real and imaginary parts stacked along the channel
// axis: H x W x c -> Hp x Wp x 2c (first c channels real, last c imaginary).
template <typename T>
GVar<T> fft2_channels(Graph<T>& g, GVar<T> x) {
  const auto& xv = g.val(x);
  op_require(xv.rank() == 3, "fft2_channels expects H x W x c");
  std::size_t H = xv.shape[0], W = xv.shape[1], c = xv.shape[2];
  std::size_t Hp = fftdetail::next_pow2(H), Wp = fftdetail::next_pow2(W);
  ComplexMap<T> f = fft2(xv);
  Tensor<T> out(Shape{Hp, Wp, 2 * c});
  for (std::size_t i = 0; i < Hp * Wp; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      out.data[i * 2 * c + ch] = f.real.data[i * c + ch];
      out.data[i * 2 * c + c + ch] = f.imag.data[i * c + ch];
    }
  return g.make(std::move(out), {x}, [x, H, W, c, Hp, Wp](Graph<T>& gg, GVar<T> self) {
    auto* dx = gg.grad_dst(x);
    if (!dx) return;
    const auto& gr = gg.node_grad(self);
    // d/dx of an unnormalized forward DFT is the unnormalized inverse DFT
    // of the (complex) output gradient, real part, cropped to the input.
    std::vector<std::complex<double>> grid(Hp * Wp);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < Hp * Wp; ++i)
        grid[i] = std::complex<double>(static_cast<double>(gr.data[i * 2 * c + ch]),
                                       static_cast<double>(gr.data[i * 2 * c + c + ch]));
      fftdetail::fft2d(grid, Hp, Wp, true);
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx)
          dx->data[(y * W + xx) * c + ch] += static_cast<T>(grid[y * Wp + xx].real());
    }
  });
}

// Inverse of fft2_channels: Hp x Wp x 2c -> outH x outW x c, normalized by
// 1/(Hp*Wp), real part only.
template <typename T>
GVar<T> ifft2_channels(Graph<T>& g, GVar<T> f, std::size_t outH, std::size_t outW) {
  const auto& fv = g.val(f);
  op_require(fv.rank() == 3 && fv.shape[2] % 2 == 0, "ifft2_channels expects H x W x 2c");
  std::size_t Hp = fv.shape[0], Wp = fv.shape[1], c = fv.shape[2] / 2;
  op_require(fftdetail::is_pow2(Hp) && fftdetail::is_pow2(Wp),
             "ifft2_channels extents must be powers of two");
  op_require(outH <= Hp && outW <= Wp, "ifft2_channels crop larger than spectrum");
  double norm = 1.0 / (static_cast<double>(Hp) * static_cast<double>(Wp));

  Tensor<T> out(Shape{outH, outW, c});
  std::vector<std::complex<double>> grid(Hp * Wp);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < Hp * Wp; ++i)
      grid[i] = std::complex<double>(static_cast<double>(fv.data[i * 2 * c + ch]),
                                     static_cast<double>(fv.data[i * 2 * c + c + ch]));
    fftdetail::fft2d(grid, Hp, Wp, true);
    for (std::size_t y = 0; y < outH; ++y)
      for (std::size_t xx = 0; xx < outW; ++xx)
        out.data[(y * outW + xx) * c + ch] = static_cast<T>(grid[y * Wp + xx].real() * norm);
  }

  return g.make(std::move(out), {f}, [f, Hp, Wp, c, outH, outW, norm](Graph<T>& gg, GVar<T> self) {
    auto* df = gg.grad_dst(f);
    if (!df) return;
    const auto& gr = gg.node_grad(self);
    // d/d(Fr,Fi) of Re(ifft2) is the forward DFT of the zero-padded output
    // gradient, scaled by the same 1/(Hp*Wp).
    std::vector<std::complex<double>> grid(Hp * Wp);
    for (std::size_t ch = 0; ch < c; ++ch) {
      std::fill(grid.begin(), grid.end(), std::complex<double>(0.0, 0.0));
      for (std::size_t y = 0; y < outH; ++y)
        for (std::size_t xx = 0; xx < outW; ++xx)
          grid[y * Wp + xx] =
              std::complex<double>(static_cast<double>(gr.data[(y * outW + xx) * c + ch]), 0.0);
      fftdetail::fft2d(grid, Hp, Wp, false);
      for (std::size_t i = 0; i < Hp * Wp; ++i) {
        df->data[i * 2 * c + ch] += static_cast<T>(grid[i].real() * norm);
        df->data[i * 2 * c + c + ch] += static_cast<T>(grid[i].imag() * norm);
      }
    }
  });
}

}  // namespace kfprop
