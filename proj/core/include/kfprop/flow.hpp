#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>

#include "kfprop/tensor.hpp"

namespace kfprop {

// Per-pixel offsets, channels (dx, dy) with x along the width axis.
// A position p in this field's own frame corresponds to p + offsets(p) in
// the frame the flow points into.
template <typename T>
struct FlowField {
  Tensor<T> offsets;  // H x W x 2

  FlowField() = default;
  explicit FlowField(Tensor<T> o) : offsets(std::move(o)) {
    op_flow_check(offsets.rank() == 3 && offsets.shape[2] == 2);
  }
  FlowField(std::size_t H, std::size_t W) : offsets(Shape{H, W, 2}) {}

  std::size_t height() const { return offsets.shape[0]; }
  std::size_t width() const { return offsets.shape[1]; }

  static void op_flow_check(bool ok) {
    if (!ok) throw std::invalid_argument("flow field must be H x W x 2");
  }
};

// Row-major 2x3 matrix: x' = m[0][0] x + m[0][1] y + m[0][2], similarly y'.
struct Affine {
  double m[2][3];
};

inline Affine affine_identity() { return Affine{{{1, 0, 0}, {0, 1, 0}}}; }

inline std::pair<double, double> affine_apply(const Affine& A, double x, double y) {
  return {A.m[0][0] * x + A.m[0][1] * y + A.m[0][2], A.m[1][0] * x + A.m[1][1] * y + A.m[1][2]};
}

inline Affine affine_invert(const Affine& A) {
  double det = A.m[0][0] * A.m[1][1] - A.m[0][1] * A.m[1][0];
  if (det == 0.0 || !(det > 1e-12 || det < -1e-12))
    throw std::invalid_argument("affine transform has a singular linear part");
  double ia = A.m[1][1] / det, ib = -A.m[0][1] / det;
  double ic = -A.m[1][0] / det, id = A.m[0][0] / det;
  Affine inv{{{ia, ib, 0}, {ic, id, 0}}};
  inv.m[0][2] = -(ia * A.m[0][2] + ib * A.m[1][2]);
  inv.m[1][2] = -(ic * A.m[0][2] + id * A.m[1][2]);
  return inv;
}

// Composition a(b(p)): b applied first.
inline Affine affine_compose(const Affine& a, const Affine& b) {
  Affine r{};
  for (int i = 0; i < 2; ++i) {
    r.m[i][0] = a.m[i][0] * b.m[0][0] + a.m[i][1] * b.m[1][0];
    r.m[i][1] = a.m[i][0] * b.m[0][1] + a.m[i][1] * b.m[1][1];
    r.m[i][2] = a.m[i][0] * b.m[0][2] + a.m[i][1] * b.m[1][2] + a.m[i][2];
  }
  return r;
}

// Identity sampling grid: pos(y, x) = (x, y).
template <typename T>
Tensor<T> make_grid(std::size_t H, std::size_t W) {
  Tensor<T> g(Shape{H, W, 2});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      g.data[(y * W + x) * 2] = static_cast<T>(x);
      g.data[(y * W + x) * 2 + 1] = static_cast<T>(y);
    }
  return g;
}

// Plain (non-recorded) bilinear sampling with clamp-to-edge borders; same
// convention as the graph op: pos channels are (x, y) pixel coordinates.
template <typename T>
Tensor<T> bilinear_sample_plain(const Tensor<T>& feat, const Tensor<T>& pos) {
  if (feat.rank() != 3 || pos.rank() < 1 || pos.shape.back() != 2)
    throw std::invalid_argument("bilinear_sample_plain: feat H x W x c, pos [...,2]");
  std::size_t H = feat.shape[0], W = feat.shape[1], c = feat.shape[2];
  std::size_t n = pos.numel() / 2;
  Shape os(pos.shape.begin(), pos.shape.end() - 1);
  os.push_back(c);
  Tensor<T> out(os);
  for (std::size_t i = 0; i < n; ++i) {
    T px = pos.data[i * 2], py = pos.data[i * 2 + 1];
    T cx = std::min(std::max(px, T(0)), static_cast<T>(W - 1));
    T cy = std::min(std::max(py, T(0)), static_cast<T>(H - 1));
    std::size_t x0 = static_cast<std::size_t>(cx);
    if (W >= 2 && x0 > W - 2) x0 = W - 2;
    std::size_t y0 = static_cast<std::size_t>(cy);
    if (H >= 2 && y0 > H - 2) y0 = H - 2;
    std::size_t x1 = std::min(x0 + 1, W - 1);
    std::size_t y1 = std::min(y0 + 1, H - 1);
    T wx = cx - static_cast<T>(x0);
    T wy = cy - static_cast<T>(y0);
    const T* f00 = &feat.data[(y0 * W + x0) * c];
    const T* f10 = &feat.data[(y0 * W + x1) * c];
    const T* f01 = &feat.data[(y1 * W + x0) * c];
    const T* f11 = &feat.data[(y1 * W + x1) * c];
    T* orow = &out.data[i * c];
    for (std::size_t ch = 0; ch < c; ++ch)
      orow[ch] = (T(1) - wy) * ((T(1) - wx) * f00[ch] + wx * f10[ch]) +
                 wy * ((T(1) - wx) * f01[ch] + wx * f11[ch]);
  }
  return out;
}

// Samples img at grid + flow.
template <typename T>
Tensor<T> warp_by_flow(const Tensor<T>& img, const FlowField<T>& flow) {
  std::size_t H = flow.height(), W = flow.width();
  Tensor<T> pos = make_grid<T>(H, W);
  for (std::size_t i = 0; i < pos.numel(); ++i) pos.data[i] += flow.offsets.data[i];
  return bilinear_sample_plain(img, pos);
}

// Per pixel: || fwd(p) + bwd(p + fwd(p)) ||_2 in pixels. Zero means the
// two flows invert each other at p.
template <typename T>
Tensor<T> fb_consistency(const FlowField<T>& fwd, const FlowField<T>& bwd) {
  if (fwd.height() != bwd.height() || fwd.width() != bwd.width())
    throw std::invalid_argument("fb_consistency: flow resolutions differ");
  std::size_t H = fwd.height(), W = fwd.width();
  Tensor<T> pos(Shape{H, W, 2});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      std::size_t i = (y * W + x) * 2;
      pos.data[i] = static_cast<T>(x) + fwd.offsets.data[i];
      pos.data[i + 1] = static_cast<T>(y) + fwd.offsets.data[i + 1];
    }
  Tensor<T> back = bilinear_sample_plain(bwd.offsets, pos);
  Tensor<T> out(Shape{H, W, 1});
  for (std::size_t i = 0; i < H * W; ++i) {
    T rx = fwd.offsets.data[i * 2] + back.data[i * 2];
    T ry = fwd.offsets.data[i * 2 + 1] + back.data[i * 2 + 1];
    out.data[i] = static_cast<T>(std::sqrt(static_cast<double>(rx) * rx + static_cast<double>(ry) * ry));
  }
  return out;
}

template <typename T>
struct FillResult {
  FlowField<T> flow;
  bool degenerate = false;
  std::size_t iterations = 0;
};

// Fills flow entries under mask==1 by 4-neighbor Jacobi relaxation
// (harmonic extension of the known values). Known entries never move.
// Unknowns start from the mean of the known entries, which makes the
// constant-flow case exact immediately.
template <typename T>
FillResult<T> fill_masked_flow(const FlowField<T>& flow, const Tensor<T>& mask,
                               double tol = 1e-4, std::size_t max_iters = 10000) {
  std::size_t H = flow.height(), W = flow.width();
  if (mask.rank() != 3 || mask.shape[0] != H || mask.shape[1] != W || mask.shape[2] != 1)
    throw std::invalid_argument("fill_masked_flow: mask must be H x W x 1 matching the flow");

  FillResult<T> res;
  res.flow = flow;

  std::size_t known = 0;
  double mean_dx = 0, mean_dy = 0;
  for (std::size_t i = 0; i < H * W; ++i)
    if (!(mask.data[i] > T(0.5))) {
      ++known;
      mean_dx += static_cast<double>(flow.offsets.data[i * 2]);
      mean_dy += static_cast<double>(flow.offsets.data[i * 2 + 1]);
    }
  if (known == 0) {
    res.flow.offsets.fill(T(0));
    res.degenerate = true;
    return res;
  }
  mean_dx /= static_cast<double>(known);
  mean_dy /= static_cast<double>(known);

  Tensor<T>& cur = res.flow.offsets;
  for (std::size_t i = 0; i < H * W; ++i)
    if (mask.data[i] > T(0.5)) {
      cur.data[i * 2] = static_cast<T>(mean_dx);
      cur.data[i * 2 + 1] = static_cast<T>(mean_dy);
    }

  Tensor<T> next = cur;
  for (std::size_t it = 0; it < max_iters; ++it) {
    double max_change = 0;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        std::size_t i = y * W + x;
        if (!(mask.data[i] > T(0.5))) continue;
        for (std::size_t ch = 0; ch < 2; ++ch) {
          double sum = 0;
          int cnt = 0;
          if (y > 0) { sum += cur.data[((y - 1) * W + x) * 2 + ch]; ++cnt; }
          if (y + 1 < H) { sum += cur.data[((y + 1) * W + x) * 2 + ch]; ++cnt; }
          if (x > 0) { sum += cur.data[(y * W + x - 1) * 2 + ch]; ++cnt; }
          if (x + 1 < W) { sum += cur.data[(y * W + x + 1) * 2 + ch]; ++cnt; }
          double v = sum / cnt;
          double change = std::abs(v - static_cast<double>(cur.data[i * 2 + ch]));
          if (change > max_change) max_change = change;
          next.data[i * 2 + ch] = static_cast<T>(v);
        }
      }
    std::swap(cur.data, next.data);
    res.iterations = it + 1;
    if (max_change < tol) break;
  }
  return res;
}

// Bilinear resize (half-pixel centers) of both channels, then offsets are
// rescaled into the new pixel units: dx by newW/W, dy by newH/H.
template <typename T>
FlowField<T> resize_flow(const FlowField<T>& flow, std::size_t newH, std::size_t newW) {
  std::size_t H = flow.height(), W = flow.width();
  if (newH == 0 || newW == 0) throw std::invalid_argument("resize_flow: empty target");
  Tensor<T> pos(Shape{newH, newW, 2});
  double sy = static_cast<double>(H) / static_cast<double>(newH);
  double sx = static_cast<double>(W) / static_cast<double>(newW);
  for (std::size_t y = 0; y < newH; ++y)
    for (std::size_t x = 0; x < newW; ++x) {
      pos.data[(y * newW + x) * 2] = static_cast<T>((static_cast<double>(x) + 0.5) * sx - 0.5);
      pos.data[(y * newW + x) * 2 + 1] = static_cast<T>((static_cast<double>(y) + 0.5) * sy - 0.5);
    }
  Tensor<T> resized = bilinear_sample_plain(flow.offsets, pos);
  T fx = static_cast<T>(static_cast<double>(newW) / static_cast<double>(W));
  T fy = static_cast<T>(static_cast<double>(newH) / static_cast<double>(H));
  for (std::size_t i = 0; i < newH * newW; ++i) {
    resized.data[i * 2] *= fx;
    resized.data[i * 2 + 1] *= fy;
  }
  return FlowField<T>(std::move(resized));
}

// Exact flow pair of an affine map: fwd(p) = A p - p, bwd(p) = A^{-1} p - p.
template <typename T>
std::pair<FlowField<T>, FlowField<T>> affine_flow(const Affine& A, std::size_t H, std::size_t W) {
  Affine inv = affine_invert(A);
  FlowField<T> fwd(H, W), bwd(H, W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      std::size_t i = (y * W + x) * 2;
      auto [fx, fy] = affine_apply(A, static_cast<double>(x), static_cast<double>(y));
      fwd.offsets.data[i] = static_cast<T>(fx - static_cast<double>(x));
      fwd.offsets.data[i + 1] = static_cast<T>(fy - static_cast<double>(y));
      auto [bx, by] = affine_apply(inv, static_cast<double>(x), static_cast<double>(y));
      bwd.offsets.data[i] = static_cast<T>(bx - static_cast<double>(x));
      bwd.offsets.data[i + 1] = static_cast<T>(by - static_cast<double>(y));
    }
  return {std::move(fwd), std::move(bwd)};
}

}  // namespace kfprop
