#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "kfprop/graph.hpp"

namespace kfprop {

template <typename T>
using GVar = typename Graph<T>::Var;

inline void op_require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
GVar<T> add(Graph<T>& g, GVar<T> a, GVar<T> b) {
  const auto& av = g.val(a);
  const auto& bv = g.val(b);
  op_require(av.same_shape(bv) || bv.numel() == 1,
             "add shape mismatch: " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
  Tensor<T> out(av.shape);
  if (bv.numel() == 1) {
    T s = bv.data[0];
    for (std::size_t i = 0; i < av.numel(); ++i) out.data[i] = av.data[i] + s;
  } else {
    for (std::size_t i = 0; i < av.numel(); ++i) out.data[i] = av.data[i] + bv.data[i];
  }
  return g.make(std::move(out), {a, b}, [a, b](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    if (auto* da = gg.grad_dst(a))
      for (std::size_t i = 0; i < gr.numel(); ++i) da->data[i] += gr.data[i];
    if (auto* db = gg.grad_dst(b)) {
      if (db->numel() == 1) {
        double s = 0;
        for (std::size_t i = 0; i < gr.numel(); ++i) s += static_cast<double>(gr.data[i]);
        db->data[0] += static_cast<T>(s);
      } else {
        for (std::size_t i = 0; i < gr.numel(); ++i) db->data[i] += gr.data[i];
      }
    }
  });
}

template <typename T>
GVar<T> sub(Graph<T>& g, GVar<T> a, GVar<T> b) {
  const auto& av = g.val(a);
  const auto& bv = g.val(b);
  op_require(av.same_shape(bv),
             "sub shape mismatch: " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
  Tensor<T> out(av.shape);
  for (std::size_t i = 0; i < av.numel(); ++i) out.data[i] = av.data[i] - bv.data[i];
  return g.make(std::move(out), {a, b}, [a, b](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    if (auto* da = gg.grad_dst(a))
      for (std::size_t i = 0; i < gr.numel(); ++i) da->data[i] += gr.data[i];
    if (auto* db = gg.grad_dst(b))
      for (std::size_t i = 0; i < gr.numel(); ++i) db->data[i] -= gr.data[i];
  });
}

template <typename T>
GVar<T> mul(Graph<T>& g, GVar<T> a, GVar<T> b) {
  const auto& av = g.val(a);
  const auto& bv = g.val(b);
  op_require(av.same_shape(bv) || bv.numel() == 1,
             "mul shape mismatch: " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
  Tensor<T> out(av.shape);
  if (bv.numel() == 1) {
    T s = bv.data[0];
    for (std::size_t i = 0; i < av.numel(); ++i) out.data[i] = av.data[i] * s;
  } else {
    for (std::size_t i = 0; i < av.numel(); ++i) out.data[i] = av.data[i] * bv.data[i];
  }
  return g.make(std::move(out), {a, b}, [a, b](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    const auto& av2 = gg.val(a);
    const auto& bv2 = gg.val(b);
    if (auto* da = gg.grad_dst(a)) {
      if (bv2.numel() == 1) {
        T s = bv2.data[0];
        for (std::size_t i = 0; i < gr.numel(); ++i) da->data[i] += gr.data[i] * s;
      } else {
        for (std::size_t i = 0; i < gr.numel(); ++i) da->data[i] += gr.data[i] * bv2.data[i];
      }
    }
    if (auto* db = gg.grad_dst(b)) {
      if (db->numel() == 1) {
        double s = 0;
        for (std::size_t i = 0; i < gr.numel(); ++i)
          s += static_cast<double>(gr.data[i]) * static_cast<double>(av2.data[i]);
        db->data[0] += static_cast<T>(s);
      } else {
        for (std::size_t i = 0; i < gr.numel(); ++i) db->data[i] += gr.data[i] * av2.data[i];
      }
    }
  });
}

template <typename T>
GVar<T> scale(Graph<T>& g, GVar<T> a, double s) {
  const auto& av = g.val(a);
  Tensor<T> out(av.shape);
  T st = static_cast<T>(s);
  for (std::size_t i = 0; i < av.numel(); ++i) out.data[i] = av.data[i] * st;
  return g.make(std::move(out), {a}, [a, st](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    if (auto* da = gg.grad_dst(a))
      for (std::size_t i = 0; i < gr.numel(); ++i) da->data[i] += gr.data[i] * st;
  });
}

template <typename T>
GVar<T> sigmoid(Graph<T>& g, GVar<T> a) {
  const auto& av = g.val(a);
  Tensor<T> out(av.shape);
  for (std::size_t i = 0; i < av.numel(); ++i) {
    double x = static_cast<double>(av.data[i]);
    double y = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    out.data[i] = static_cast<T>(y);
  }
  return g.make(std::move(out), {a}, [a](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    const auto& y = gg.val(self);
    if (auto* da = gg.grad_dst(a))
      for (std::size_t i = 0; i < gr.numel(); ++i)
        da->data[i] += gr.data[i] * y.data[i] * (T(1) - y.data[i]);
  });
}

namespace detail {
inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
inline double gelu_bwd(double x) {
  double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}
}  // namespace detail

template <typename T>
GVar<T> gelu(Graph<T>& g, GVar<T> a) {
  const auto& av = g.val(a);
  Tensor<T> out(av.shape);
  for (std::size_t i = 0; i < av.numel(); ++i)
    out.data[i] = static_cast<T>(detail::gelu_fwd(static_cast<double>(av.data[i])));
  return g.make(std::move(out), {a}, [a](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    const auto& av2 = gg.val(a);
    if (auto* da = gg.grad_dst(a))
      for (std::size_t i = 0; i < gr.numel(); ++i)
        da->data[i] += gr.data[i] *
                       static_cast<T>(detail::gelu_bwd(static_cast<double>(av2.data[i])));
  });
}

// |x| with subgradient 0 at the origin.
template <typename T>
GVar<T> absval(Graph<T>& g, GVar<T> a) {
  const auto& av = g.val(a);
  Tensor<T> out(av.shape);
  for (std::size_t i = 0; i < av.numel(); ++i) out.data[i] = std::abs(av.data[i]);
  return g.make(std::move(out), {a}, [a](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    const auto& av2 = gg.val(a);
    if (auto* da = gg.grad_dst(a))
      for (std::size_t i = 0; i < gr.numel(); ++i) {
        T s = av2.data[i] > T(0) ? T(1) : (av2.data[i] < T(0) ? T(-1) : T(0));
        da->data[i] += gr.data[i] * s;
      }
  });
}

// x + b with b broadcast over all leading axes (bias over the last axis).
template <typename T>
GVar<T> add_last(Graph<T>& g, GVar<T> x, GVar<T> b) {
  const auto& xv = g.val(x);
  const auto& bv = g.val(b);
  op_require(bv.rank() == 1 && xv.rank() >= 1 && xv.shape.back() == bv.shape[0],
             "add_last: bias " + shape_str(bv.shape) + " does not fit " + shape_str(xv.shape));
  std::size_t d = bv.shape[0];
  std::size_t rows = xv.numel() / d;
  Tensor<T> out(xv.shape);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out.data[r * d + j] = xv.data[r * d + j] + bv.data[j];
  return g.make(std::move(out), {x, b}, [x, b, rows, d](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    if (auto* dx = gg.grad_dst(x))
      for (std::size_t i = 0; i < gr.numel(); ++i) dx->data[i] += gr.data[i];
    if (auto* db = gg.grad_dst(b)) {
      std::vector<double> acc(d, 0.0);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) acc[j] += static_cast<double>(gr.data[r * d + j]);
      for (std::size_t j = 0; j < d; ++j) db->data[j] += static_cast<T>(acc[j]);
    }
  });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
GVar<T> sum_all(Graph<T>& g, GVar<T> a) {
  const auto& av = g.val(a);
  double s = 0;
  for (std::size_t i = 0; i < av.numel(); ++i) s += static_cast<double>(av.data[i]);
  Tensor<T> out(Shape{1});
  out.data[0] = static_cast<T>(s);
  return g.make(std::move(out), {a}, [a](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    if (auto* da = gg.grad_dst(a))
      for (std::size_t i = 0; i < da->numel(); ++i) da->data[i] += gr.data[0];
  });
}

template <typename T>
GVar<T> mean_all(Graph<T>& g, GVar<T> a) {
  std::size_t n = g.val(a).numel();
  return scale(g, sum_all(g, a), 1.0 / static_cast<double>(n));
}

// Sums over the leading axis: [N, rest...] -> [rest...].
template <typename T>
GVar<T> sum_axis0(Graph<T>& g, GVar<T> a) {
  const auto& av = g.val(a);
  op_require(av.rank() >= 2, "sum_axis0 needs rank >= 2, got " + shape_str(av.shape));
  std::size_t n = av.shape[0];
  Shape rest(av.shape.begin() + 1, av.shape.end());
  std::size_t inner = shape_numel(rest);
  Tensor<T> out(rest);
  for (std::size_t i = 0; i < inner; ++i) {
    double s = 0;
    for (std::size_t t = 0; t < n; ++t) s += static_cast<double>(av.data[t * inner + i]);
    out.data[i] = static_cast<T>(s);
  }
  return g.make(std::move(out), {a}, [a, n, inner](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    if (auto* da = gg.grad_dst(a))
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t i = 0; i < inner; ++i) da->data[t * inner + i] += gr.data[i];
  });
}

// ---------------------------------------------------------------------------
// shape plumbing
// ---------------------------------------------------------------------------

template <typename T>
GVar<T> reshape(Graph<T>& g, GVar<T> a, Shape s) {
  const auto& av = g.val(a);
  op_require(shape_numel(s) == av.numel(),
             "reshape " + shape_str(av.shape) + " -> " + shape_str(s));
  Tensor<T> out(std::move(s), av.data);
  return g.make(std::move(out), {a}, [a](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    if (auto* da = gg.grad_dst(a))
      for (std::size_t i = 0; i < gr.numel(); ++i) da->data[i] += gr.data[i];
  });
}

template <typename T>
GVar<T> transpose2d(Graph<T>& g, GVar<T> a) {
  const auto& av = g.val(a);
  op_require(av.rank() == 2, "transpose2d needs rank 2, got " + shape_str(av.shape));
  std::size_t m = av.shape[0], n = av.shape[1];
  Tensor<T> out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data[j * m + i] = av.data[i * n + j];
  return g.make(std::move(out), {a}, [a, m, n](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    if (auto* da = gg.grad_dst(a))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) da->data[i * n + j] += gr.data[j * m + i];
  });
}

template <typename T>
GVar<T> concat_last(Graph<T>& g, const std::vector<GVar<T>>& parts) {
  op_require(!parts.empty(), "concat_last: empty list");
  const auto& first = g.val(parts[0]);
  Shape lead(first.shape.begin(), first.shape.end() - 1);
  std::size_t rows = shape_numel(lead);
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (auto p : parts) {
    const auto& pv = g.val(p);
    Shape pl(pv.shape.begin(), pv.shape.end() - 1);
    op_require(pl == lead, "concat_last: leading shape mismatch " + shape_str(pv.shape) +
                               " vs " + shape_str(first.shape));
    widths.push_back(pv.shape.back());
    total += pv.shape.back();
  }
  Shape os = lead;
  os.push_back(total);
  Tensor<T> out(os);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = g.val(parts[k]);
    std::size_t w = widths[k];
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < w; ++j) out.data[r * total + off + j] = pv.data[r * w + j];
    off += w;
  }
  auto parts_copy = parts;
  return g.make(std::move(out), parts, [parts_copy, widths, rows, total](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts_copy.size(); ++k) {
      std::size_t w = widths[k];
      if (auto* dp = gg.grad_dst(parts_copy[k]))
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < w; ++j) dp->data[r * w + j] += gr.data[r * total + off + j];
      off += w;
    }
  });
}

template <typename T>
GVar<T> slice_last(Graph<T>& g, GVar<T> a, std::size_t c0, std::size_t c1) {
  const auto& av = g.val(a);
  std::size_t cw = av.shape.back();
  op_require(c0 < c1 && c1 <= cw, "slice_last range invalid for " + shape_str(av.shape));
  std::size_t rows = av.numel() / cw;
  std::size_t w = c1 - c0;
  Shape os = av.shape;
  os.back() = w;
  Tensor<T> out(os);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < w; ++j) out.data[r * w + j] = av.data[r * cw + c0 + j];
  return g.make(std::move(out), {a}, [a, rows, w, cw, c0](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    if (auto* da = gg.grad_dst(a))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < w; ++j) da->data[r * cw + c0 + j] += gr.data[r * w + j];
  });
}

// Stacks equally shaped tensors along a new leading axis.
template <typename T>
GVar<T> stack_first(Graph<T>& g, const std::vector<GVar<T>>& parts) {
  op_require(!parts.empty(), "stack_first: empty list");
  const auto& first = g.val(parts[0]);
  std::size_t inner = first.numel();
  Shape os;
  os.push_back(parts.size());
  for (std::size_t d : first.shape) os.push_back(d);
  Tensor<T> out(os);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = g.val(parts[k]);
    op_require(pv.same_shape(first), "stack_first: shape mismatch");
    std::copy(pv.data.begin(), pv.data.end(), out.data.begin() + k * inner);
  }
  auto parts_copy = parts;
  return g.make(std::move(out), parts, [parts_copy, inner](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    for (std::size_t k = 0; k < parts_copy.size(); ++k)
      if (auto* dp = gg.grad_dst(parts_copy[k]))
        for (std::size_t i = 0; i < inner; ++i) dp->data[i] += gr.data[k * inner + i];
  });
}

// Splits an H x W x c map into an m x m grid of patches: output
// [m*m, (H/m)*(W/m), c], patch index row-major over the grid, position index
// row-major inside the patch. Pure permutation, so the backward is the
// inverse scatter.
template <typename T>
GVar<T> patchify(Graph<T>& g, GVar<T> x, std::size_t m) {
  const auto& xv = g.val(x);
  op_require(xv.rank() == 3, "patchify expects H x W x c, got " + shape_str(xv.shape));
  std::size_t H = xv.shape[0], W = xv.shape[1], c = xv.shape[2];
  op_require(H % m == 0 && W % m == 0,
             "patchify: grid " + std::to_string(m) + " does not divide " + shape_str(xv.shape));
  std::size_t ph = H / m, pw = W / m, np = ph * pw;
  Tensor<T> out(Shape{m * m, np, c});
  for (std::size_t gy = 0; gy < m; ++gy)
    for (std::size_t gx = 0; gx < m; ++gx)
      for (std::size_t py = 0; py < ph; ++py)
        for (std::size_t px = 0; px < pw; ++px) {
          std::size_t j = gy * m + gx;
          std::size_t q = py * pw + px;
          const T* src = &xv.data[((gy * ph + py) * W + (gx * pw + px)) * c];
          T* dst = &out.data[(j * np + q) * c];
          for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = src[ch];
        }
  return g.make(std::move(out), {x}, [x, m, H, W, c, ph, pw, np](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    if (auto* dx = gg.grad_dst(x))
      for (std::size_t gy = 0; gy < m; ++gy)
        for (std::size_t gx = 0; gx < m; ++gx)
          for (std::size_t py = 0; py < ph; ++py)
            for (std::size_t px = 0; px < pw; ++px) {
              std::size_t j = gy * m + gx;
              std::size_t q = py * pw + px;
              const T* src = &gr.data[(j * np + q) * c];
              T* dst = &dx->data[((gy * ph + py) * W + (gx * pw + px)) * c];
              for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
            }
  });
}

// Inverse of patchify.
template <typename T>
GVar<T> unpatchify(Graph<T>& g, GVar<T> p, std::size_t H, std::size_t W, std::size_t m) {
  const auto& pv = g.val(p);
  op_require(pv.rank() == 3 && pv.shape[0] == m * m, "unpatchify shape " + shape_str(pv.shape));
  std::size_t ph = H / m, pw = W / m, np = ph * pw, c = pv.shape[2];
  op_require(pv.shape[1] == np && H % m == 0 && W % m == 0, "unpatchify extents mismatch");
  Tensor<T> out(Shape{H, W, c});
  for (std::size_t gy = 0; gy < m; ++gy)
    for (std::size_t gx = 0; gx < m; ++gx)
      for (std::size_t py = 0; py < ph; ++py)
        for (std::size_t px = 0; px < pw; ++px) {
          std::size_t j = gy * m + gx;
          std::size_t q = py * pw + px;
          const T* src = &pv.data[(j * np + q) * c];
          T* dst = &out.data[((gy * ph + py) * W + (gx * pw + px)) * c];
          for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = src[ch];
        }
  return g.make(std::move(out), {p}, [p, m, H, W, c, ph, pw, np](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    if (auto* dp = gg.grad_dst(p))
      for (std::size_t gy = 0; gy < m; ++gy)
        for (std::size_t gx = 0; gx < m; ++gx)
          for (std::size_t py = 0; py < ph; ++py)
            for (std::size_t px = 0; px < pw; ++px) {
              std::size_t j = gy * m + gx;
              std::size_t q = py * pw + px;
              const T* src = &gr.data[((gy * ph + py) * W + (gx * pw + px)) * c];
              T* dst = &dp->data[(j * np + q) * c];
              for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
            }
  });
}

// Exact per-pixel select: out = pred where mask > 0.5, base elsewhere.
// Keeps unmasked pixels bit-identical to base, which a blended
// mask*pred + (1-mask)*base would not guarantee in float arithmetic.
template <typename T>
GVar<T> composite_by_mask(Graph<T>& g, GVar<T> pred, GVar<T> base, const Tensor<T>& mask) {
  const auto& pv = g.val(pred);
  const auto& bv = g.val(base);
  op_require(pv.same_shape(bv), "composite shape mismatch");
  op_require(pv.rank() == 3 && mask.rank() == 3 && mask.shape[2] == 1 &&
                 mask.shape[0] == pv.shape[0] && mask.shape[1] == pv.shape[1],
             "composite mask shape " + shape_str(mask.shape) + " vs " + shape_str(pv.shape));
  std::size_t pix = mask.numel();
  std::size_t c = pv.shape[2];
  Tensor<T> out(pv.shape);
  for (std::size_t i = 0; i < pix; ++i) {
    bool hole = mask.data[i] > T(0.5);
    const T* src = hole ? &pv.data[i * c] : &bv.data[i * c];
    for (std::size_t ch = 0; ch < c; ++ch) out.data[i * c + ch] = src[ch];
  }
  Tensor<T> mask_copy = mask;
  return g.make(std::move(out), {pred, base},
                [pred, base, mask_copy, pix, c](Graph<T>& gg, GVar<T> self) {
                  const auto& gr = gg.node_grad(self);
                  auto* dp = gg.grad_dst(pred);
                  auto* db = gg.grad_dst(base);
                  for (std::size_t i = 0; i < pix; ++i) {
                    bool hole = mask_copy.data[i] > T(0.5);
                    Tensor<T>* dst = hole ? dp : db;
                    if (!dst) continue;
                    for (std::size_t ch = 0; ch < c; ++ch)
                      dst->data[i * c + ch] += gr.data[i * c + ch];
                  }
                });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

// a[..., k] x b[k, n] -> [..., n]; leading axes of a act as batch rows.
template <typename T>
GVar<T> matmul(Graph<T>& g, GVar<T> a, GVar<T> b) {
  const auto& av = g.val(a);
  const auto& bv = g.val(b);
  op_require(av.rank() >= 2 && bv.rank() == 2,
             "matmul ranks: " + shape_str(av.shape) + " x " + shape_str(bv.shape));
  std::size_t k = av.shape.back();
  op_require(bv.shape[0] == k,
             "matmul inner extents disagree: " + shape_str(av.shape) + " x " + shape_str(bv.shape));
  std::size_t n = bv.shape[1];
  std::size_t rows = av.numel() / k;
  Shape os(av.shape.begin(), av.shape.end() - 1);
  os.push_back(n);
  Tensor<T> out(os);
  for (std::size_t i = 0; i < rows; ++i) {
    const T* ar = &av.data[i * k];
    T* orow = &out.data[i * n];
    for (std::size_t kk = 0; kk < k; ++kk) {
      T s = ar[kk];
      const T* br = &bv.data[kk * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += s * br[j];
    }
  }
  return g.make(std::move(out), {a, b}, [a, b, rows, k, n](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    const auto& av2 = gg.val(a);
    const auto& bv2 = gg.val(b);
    if (auto* da = gg.grad_dst(a)) {
      for (std::size_t i = 0; i < rows; ++i) {
        const T* grow = &gr.data[i * n];
        T* dar = &da->data[i * k];
        for (std::size_t kk = 0; kk < k; ++kk) {
          const T* br = &bv2.data[kk * n];
          T s = 0;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * br[j];
          dar[kk] += s;
        }
      }
    }
    if (auto* db = gg.grad_dst(b)) {
      for (std::size_t i = 0; i < rows; ++i) {
        const T* ar = &av2.data[i * k];
        const T* grow = &gr.data[i * n];
        for (std::size_t kk = 0; kk < k; ++kk) {
          T s = ar[kk];
          T* dbr = &db->data[kk * n];
          for (std::size_t j = 0; j < n; ++j) dbr[j] += s * grow[j];
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// softmax / layer norm
// ---------------------------------------------------------------------------

template <typename T>
GVar<T> softmax(Graph<T>& g, GVar<T> a, std::size_t axis) {
  const auto& av = g.val(a);
  op_require(axis < av.rank(), "softmax axis out of range for " + shape_str(av.shape));
  std::size_t len = av.shape[axis];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < av.rank(); ++i) inner *= av.shape[i];
  std::size_t outer = av.numel() / (len * inner);
  Tensor<T> out(av.shape);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      std::size_t base = o * len * inner + in;
      T mx = av.data[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, av.data[base + j * inner]);
      double denom = 0;
      for (std::size_t j = 0; j < len; ++j) {
        double e = std::exp(static_cast<double>(av.data[base + j * inner] - mx));
        out.data[base + j * inner] = static_cast<T>(e);
        denom += e;
      }
      double inv = 1.0 / denom;
      for (std::size_t j = 0; j < len; ++j)
        out.data[base + j * inner] = static_cast<T>(static_cast<double>(out.data[base + j * inner]) * inv);
    }
  return g.make(std::move(out), {a}, [a, len, inner, outer](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    const auto& y = gg.val(self);
    if (auto* da = gg.grad_dst(a))
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          std::size_t base = o * len * inner + in;
          double dot = 0;
          for (std::size_t j = 0; j < len; ++j)
            dot += static_cast<double>(gr.data[base + j * inner]) *
                   static_cast<double>(y.data[base + j * inner]);
          for (std::size_t j = 0; j < len; ++j) {
            std::size_t ix = base + j * inner;
            da->data[ix] += static_cast<T>(static_cast<double>(y.data[ix]) *
                                           (static_cast<double>(gr.data[ix]) - dot));
          }
        }
  });
}

// Normalizes over the last axis: y = gain * (x - mean) / sqrt(var + eps) + bias.
template <typename T>
GVar<T> layer_norm(Graph<T>& g, GVar<T> x, GVar<T> gain, GVar<T> bias, double eps = 1e-5) {
  const auto& xv = g.val(x);
  const auto& gv = g.val(gain);
  const auto& bv = g.val(bias);
  std::size_t d = xv.shape.back();
  op_require(gv.rank() == 1 && gv.shape[0] == d && bv.rank() == 1 && bv.shape[0] == d,
             "layer_norm gain/bias must have length " + std::to_string(d));
  std::size_t rows = xv.numel() / d;
  Tensor<T> out(xv.shape);
  Tensor<T> xhat(xv.shape);
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = &xv.data[r * d];
    double mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += static_cast<double>(xr[j]);
    mean /= static_cast<double>(d);
    double var = 0;
    for (std::size_t j = 0; j < d; ++j) {
      double c = static_cast<double>(xr[j]) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = static_cast<T>(is);
    for (std::size_t j = 0; j < d; ++j) {
      T xh = static_cast<T>((static_cast<double>(xr[j]) - mean) * is);
      xhat.data[r * d + j] = xh;
      out.data[r * d + j] = gv.data[j] * xh + bv.data[j];
    }
  }
  return g.make(std::move(out), {x, gain, bias},
                [x, gain, bias, xhat, inv_std, rows, d](Graph<T>& gg, GVar<T> self) {
                  const auto& gr = gg.node_grad(self);
                  const auto& gv2 = gg.val(gain);
                  auto* dx = gg.grad_dst(x);
                  auto* dg = gg.grad_dst(gain);
                  auto* db = gg.grad_dst(bias);
                  for (std::size_t r = 0; r < rows; ++r) {
                    const T* grow = &gr.data[r * d];
                    const T* xh = &xhat.data[r * d];
                    if (dx) {
                      double m1 = 0, m2 = 0;
                      for (std::size_t j = 0; j < d; ++j) {
                        double gh = static_cast<double>(grow[j]) * static_cast<double>(gv2.data[j]);
                        m1 += gh;
                        m2 += gh * static_cast<double>(xh[j]);
                      }
                      m1 /= static_cast<double>(d);
                      m2 /= static_cast<double>(d);
                      double is = static_cast<double>(inv_std[r]);
                      for (std::size_t j = 0; j < d; ++j) {
                        double gh = static_cast<double>(grow[j]) * static_cast<double>(gv2.data[j]);
                        dx->data[r * d + j] +=
                            static_cast<T>(is * (gh - m1 - static_cast<double>(xh[j]) * m2));
                      }
                    }
                    if (dg)
                      for (std::size_t j = 0; j < d; ++j) dg->data[j] += grow[j] * xh[j];
                    if (db)
                      for (std::size_t j = 0; j < d; ++j) db->data[j] += grow[j];
                  }
                });
}

}  // namespace kfprop
