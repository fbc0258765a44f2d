#pragma once

#include "kfprop/ops.hpp"

namespace kfprop {

// Bilinear sampling with clamp-to-edge borders.
// feat: H x W x c; pos: [... , 2] continuous pixel coordinates ordered
// (x, y) with x along the width axis. Output: [... , c].
// Differentiable in both feat and pos; position gradients are zero where
// the coordinate is clamped at the border.
template <typename T>
GVar<T> bilinear_sample(Graph<T>& g, GVar<T> feat, GVar<T> pos) {
  const auto& fv = g.val(feat);
  const auto& pv = g.val(pos);
  op_require(fv.rank() == 3, "bilinear_sample feat must be H x W x c, got " + shape_str(fv.shape));
  op_require(pv.rank() >= 1 && pv.shape.back() == 2,
             "bilinear_sample positions must end in extent 2, got " + shape_str(pv.shape));
  std::size_t H = fv.shape[0], W = fv.shape[1], c = fv.shape[2];
  std::size_t n = pv.numel() / 2;
  Shape os(pv.shape.begin(), pv.shape.end() - 1);
  os.push_back(c);

  auto corners = [H, W](T px, T py, std::size_t& x0, std::size_t& x1, std::size_t& y0,
                        std::size_t& y1, T& wx, T& wy, bool& in_x, bool& in_y) {
    T cx = std::min(std::max(px, T(0)), static_cast<T>(W - 1));
    T cy = std::min(std::max(py, T(0)), static_cast<T>(H - 1));
    in_x = px > T(0) && px < static_cast<T>(W - 1);
    in_y = py > T(0) && py < static_cast<T>(H - 1);
    x0 = static_cast<std::size_t>(cx);
    if (W >= 2 && x0 > W - 2) x0 = W - 2;
    y0 = static_cast<std::size_t>(cy);
    if (H >= 2 && y0 > H - 2) y0 = H - 2;
    x1 = std::min(x0 + 1, W - 1);
    y1 = std::min(y0 + 1, H - 1);
    wx = cx - static_cast<T>(x0);
    wy = cy - static_cast<T>(y0);
  };

  Tensor<T> out(os);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t x0, x1, y0, y1;
    T wx, wy;
    bool in_x, in_y;
    corners(pv.data[i * 2], pv.data[i * 2 + 1], x0, x1, y0, y1, wx, wy, in_x, in_y);
    const T* f00 = &fv.data[(y0 * W + x0) * c];
    const T* f10 = &fv.data[(y0 * W + x1) * c];
    const T* f01 = &fv.data[(y1 * W + x0) * c];
    const T* f11 = &fv.data[(y1 * W + x1) * c];
    T* orow = &out.data[i * c];
    for (std::size_t ch = 0; ch < c; ++ch)
      orow[ch] = (T(1) - wy) * ((T(1) - wx) * f00[ch] + wx * f10[ch]) +
                 wy * ((T(1) - wx) * f01[ch] + wx * f11[ch]);
  }

  return g.make(std::move(out), {feat, pos},
                [feat, pos, corners, n, W, c](Graph<T>& gg, GVar<T> self) {
                  const auto& gr = gg.node_grad(self);
                  const auto& fv2 = gg.val(feat);
                  const auto& pv2 = gg.val(pos);
                  auto* df = gg.grad_dst(feat);
                  auto* dp = gg.grad_dst(pos);
                  for (std::size_t i = 0; i < n; ++i) {
                    std::size_t x0, x1, y0, y1;
                    T wx, wy;
                    bool in_x, in_y;
                    corners(pv2.data[i * 2], pv2.data[i * 2 + 1], x0, x1, y0, y1, wx, wy, in_x,
                            in_y);
                    const T* grow = &gr.data[i * c];
                    if (df) {
                      T* d00 = &df->data[(y0 * W + x0) * c];
                      T* d10 = &df->data[(y0 * W + x1) * c];
                      T* d01 = &df->data[(y1 * W + x0) * c];
                      T* d11 = &df->data[(y1 * W + x1) * c];
                      for (std::size_t ch = 0; ch < c; ++ch) {
                        T gv = grow[ch];
                        d00[ch] += gv * (T(1) - wx) * (T(1) - wy);
                        d10[ch] += gv * wx * (T(1) - wy);
                        d01[ch] += gv * (T(1) - wx) * wy;
                        d11[ch] += gv * wx * wy;
                      }
                    }
                    if (dp) {
                      const T* f00 = &fv2.data[(y0 * W + x0) * c];
                      const T* f10 = &fv2.data[(y0 * W + x1) * c];
                      const T* f01 = &fv2.data[(y1 * W + x0) * c];
                      const T* f11 = &fv2.data[(y1 * W + x1) * c];
                      double gx = 0, gy = 0;
                      for (std::size_t ch = 0; ch < c; ++ch) {
                        double gv = static_cast<double>(grow[ch]);
                        gx += gv * ((1.0 - wy) * (f10[ch] - f00[ch]) + wy * (f11[ch] - f01[ch]));
                        gy += gv * ((1.0 - wx) * (f01[ch] - f00[ch]) + wx * (f11[ch] - f10[ch]));
                      }
                      if (in_x) dp->data[i * 2] += static_cast<T>(gx);
                      if (in_y) dp->data[i * 2 + 1] += static_cast<T>(gy);
                    }
                  }
                });
}

// out[j,h,:] = sum_p A[j,p,h] * X[j,p,:]; the weighted pooling behind the
// multi-head token read.
template <typename T>
GVar<T> head_weighted_sum(Graph<T>& g, GVar<T> A, GVar<T> X) {
  const auto& av = g.val(A);
  const auto& xv = g.val(X);
  op_require(av.rank() == 3 && xv.rank() == 3 && av.shape[0] == xv.shape[0] &&
                 av.shape[1] == xv.shape[1],
             "head_weighted_sum shapes: " + shape_str(av.shape) + " vs " + shape_str(xv.shape));
  std::size_t M = av.shape[0], P = av.shape[1], Hh = av.shape[2], C = xv.shape[2];
  Tensor<T> out(Shape{M, Hh, C});
  for (std::size_t j = 0; j < M; ++j)
    for (std::size_t p = 0; p < P; ++p) {
      const T* arow = &av.data[(j * P + p) * Hh];
      const T* xrow = &xv.data[(j * P + p) * C];
      for (std::size_t h = 0; h < Hh; ++h) {
        T a = arow[h];
        T* orow = &out.data[(j * Hh + h) * C];
        for (std::size_t ch = 0; ch < C; ++ch) orow[ch] += a * xrow[ch];
      }
    }
  return g.make(std::move(out), {A, X}, [A, X, M, P, Hh, C](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    const auto& av2 = gg.val(A);
    const auto& xv2 = gg.val(X);
    auto* da = gg.grad_dst(A);
    auto* dx = gg.grad_dst(X);
    for (std::size_t j = 0; j < M; ++j)
      for (std::size_t p = 0; p < P; ++p) {
        const T* xrow = &xv2.data[(j * P + p) * C];
        const T* arow = &av2.data[(j * P + p) * Hh];
        for (std::size_t h = 0; h < Hh; ++h) {
          const T* grow = &gr.data[(j * Hh + h) * C];
          if (da) {
            T s = 0;
            for (std::size_t ch = 0; ch < C; ++ch) s += grow[ch] * xrow[ch];
            da->data[(j * P + p) * Hh + h] += s;
          }
          if (dx) {
            T a = arow[h];
            T* dxrow = &dx->data[(j * P + p) * C];
            for (std::size_t ch = 0; ch < C; ++ch) dxrow[ch] += a * grow[ch];
          }
        }
      }
  });
}

// out[j, h*dh + t] = sum_c X[j,h,c] * W[c, h*dh + t] with dh = D/H: each
// head owns its own column block of W.
template <typename T>
GVar<T> heads_project(Graph<T>& g, GVar<T> X, GVar<T> W) {
  const auto& xv = g.val(X);
  const auto& wv = g.val(W);
  op_require(xv.rank() == 3 && wv.rank() == 2 && wv.shape[0] == xv.shape[2],
             "heads_project shapes: " + shape_str(xv.shape) + " vs " + shape_str(wv.shape));
  std::size_t M = xv.shape[0], Hh = xv.shape[1], C = xv.shape[2], D = wv.shape[1];
  op_require(D % Hh == 0, "heads_project: output dim not divisible by head count");
  std::size_t dh = D / Hh;
  Tensor<T> out(Shape{M, D});
  for (std::size_t j = 0; j < M; ++j)
    for (std::size_t h = 0; h < Hh; ++h) {
      const T* xrow = &xv.data[(j * Hh + h) * C];
      T* orow = &out.data[j * D + h * dh];
      for (std::size_t ch = 0; ch < C; ++ch) {
        T s = xrow[ch];
        const T* wrow = &wv.data[ch * D + h * dh];
        for (std::size_t t = 0; t < dh; ++t) orow[t] += s * wrow[t];
      }
    }
  return g.make(std::move(out), {X, W}, [X, W, M, Hh, C, D, dh](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    const auto& xv2 = gg.val(X);
    const auto& wv2 = gg.val(W);
    auto* dx = gg.grad_dst(X);
    auto* dw = gg.grad_dst(W);
    for (std::size_t j = 0; j < M; ++j)
      for (std::size_t h = 0; h < Hh; ++h) {
        const T* grow = &gr.data[j * D + h * dh];
        const T* xrow = &xv2.data[(j * Hh + h) * C];
        for (std::size_t ch = 0; ch < C; ++ch) {
          if (dx) {
            const T* wrow = &wv2.data[ch * D + h * dh];
            T s = 0;
            for (std::size_t t = 0; t < dh; ++t) s += grow[t] * wrow[t];
            dx->data[(j * Hh + h) * C + ch] += s;
          }
          if (dw) {
            T s = xrow[ch];
            T* dwrow = &dw->data[ch * D + h * dh];
            for (std::size_t t = 0; t < dh; ++t) dwrow[t] += s * grow[t];
          }
        }
      }
  });
}

// out[j,p, h*ch + t] = Gate[j,p,h] * V[j, h*ch + t]: per-head scalar gates
// broadcast a per-token vector across patch positions (the write op core).
template <typename T>
GVar<T> head_gate_broadcast(Graph<T>& g, GVar<T> Gate, GVar<T> V) {
  const auto& gv = g.val(Gate);
  const auto& vv = g.val(V);
  op_require(gv.rank() == 3 && vv.rank() == 2 && gv.shape[0] == vv.shape[0],
             "head_gate_broadcast shapes: " + shape_str(gv.shape) + " vs " + shape_str(vv.shape));
  std::size_t M = gv.shape[0], P = gv.shape[1], Hh = gv.shape[2], C = vv.shape[1];
  op_require(C % Hh == 0, "head_gate_broadcast: channels not divisible by head count");
  std::size_t cw = C / Hh;
  Tensor<T> out(Shape{M, P, C});
  for (std::size_t j = 0; j < M; ++j)
    for (std::size_t p = 0; p < P; ++p) {
      const T* grow = &gv.data[(j * P + p) * Hh];
      const T* vrow = &vv.data[j * C];
      T* orow = &out.data[(j * P + p) * C];
      for (std::size_t h = 0; h < Hh; ++h) {
        T s = grow[h];
        for (std::size_t t = 0; t < cw; ++t) orow[h * cw + t] = s * vrow[h * cw + t];
      }
    }
  return g.make(std::move(out), {Gate, V}, [Gate, V, M, P, Hh, C, cw](Graph<T>& gg, GVar<T> self) {
    const auto& gr = gg.node_grad(self);
    const auto& gv2 = gg.val(Gate);
    const auto& vv2 = gg.val(V);
    auto* dg = gg.grad_dst(Gate);
    auto* dv = gg.grad_dst(V);
    for (std::size_t j = 0; j < M; ++j)
      for (std::size_t p = 0; p < P; ++p) {
        const T* grow = &gr.data[(j * P + p) * C];
        const T* vrow = &vv2.data[j * C];
        const T* gaterow = &gv2.data[(j * P + p) * Hh];
        for (std::size_t h = 0; h < Hh; ++h) {
          if (dg) {
            T s = 0;
            for (std::size_t t = 0; t < cw; ++t) s += grow[h * cw + t] * vrow[h * cw + t];
            dg->data[(j * P + p) * Hh + h] += s;
          }
          if (dv) {
            T s = gaterow[h];
            T* dvrow = &dv->data[j * C];
            for (std::size_t t = 0; t < cw; ++t) dvrow[h * cw + t] += s * grow[h * cw + t];
          }
        }
      }
  });
}

}  // namespace kfprop
