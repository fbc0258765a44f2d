#pragma once

#include "kfprop/ops.hpp"

namespace kfprop {

// Cross-correlation (no kernel flip), zero padding.
// x: H x W x cin, k: kh x kw x cin x cout -> floor((H+2p-kh)/s)+1 etc.
template <typename T>
GVar<T> conv2d(Graph<T>& g, GVar<T> x, GVar<T> k, std::size_t stride, std::size_t pad) {
  const auto& xv = g.val(x);
  const auto& kv = g.val(k);
  op_require(xv.rank() == 3 && kv.rank() == 4,
             "conv2d shapes: x " + shape_str(xv.shape) + ", k " + shape_str(kv.shape));
  std::size_t H = xv.shape[0], W = xv.shape[1], cin = xv.shape[2];
  std::size_t kh = kv.shape[0], kw = kv.shape[1];
  op_require(kv.shape[2] == cin, "conv2d channel mismatch: x " + shape_str(xv.shape) + ", k " +
                                     shape_str(kv.shape));
  std::size_t cout = kv.shape[3];
  op_require(H + 2 * pad >= kh && W + 2 * pad >= kw,
             "conv2d kernel larger than padded input: x " + shape_str(xv.shape) + ", k " +
                 shape_str(kv.shape));
  std::size_t Ho = (H + 2 * pad - kh) / stride + 1;
  std::size_t Wo = (W + 2 * pad - kw) / stride + 1;

  Tensor<T> out(Shape{Ho, Wo, cout});
  for (std::size_t oy = 0; oy < Ho; ++oy)
    for (std::size_t ox = 0; ox < Wo; ++ox) {
      T* orow = &out.data[(oy * Wo + ox) * cout];
      for (std::size_t ky = 0; ky < kh; ++ky) {
        std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                            static_cast<std::ptrdiff_t>(pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
        for (std::size_t kx = 0; kx < kw; ++kx) {
          std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                              static_cast<std::ptrdiff_t>(pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
          const T* xr = &xv.data[(static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * cin];
          const T* kr = &kv.data[(ky * kw + kx) * cin * cout];
          for (std::size_t ci = 0; ci < cin; ++ci) {
            T s = xr[ci];
            const T* kc = &kr[ci * cout];
            for (std::size_t co = 0; co < cout; ++co) orow[co] += s * kc[co];
          }
        }
      }
    }

  return g.make(std::move(out), {x, k},
                [x, k, H, W, cin, kh, kw, cout, Ho, Wo, stride, pad](Graph<T>& gg, GVar<T> self) {
                  const auto& gr = gg.node_grad(self);
                  const auto& xv2 = gg.val(x);
                  const auto& kv2 = gg.val(k);
                  auto* dx = gg.grad_dst(x);
                  auto* dk = gg.grad_dst(k);
                  for (std::size_t oy = 0; oy < Ho; ++oy)
                    for (std::size_t ox = 0; ox < Wo; ++ox) {
                      const T* grow = &gr.data[(oy * Wo + ox) * cout];
                      for (std::size_t ky = 0; ky < kh; ++ky) {
                        std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                            static_cast<std::ptrdiff_t>(pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                          std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                              static_cast<std::ptrdiff_t>(pad);
                          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                          std::size_t xoff =
                              (static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * cin;
                          std::size_t koff = (ky * kw + kx) * cin * cout;
                          if (dx) {
                            for (std::size_t ci = 0; ci < cin; ++ci) {
                              const T* kc = &kv2.data[koff + ci * cout];
                              T s = 0;
                              for (std::size_t co = 0; co < cout; ++co) s += grow[co] * kc[co];
                              dx->data[xoff + ci] += s;
                            }
                          }
                          if (dk) {
                            const T* xr = &xv2.data[xoff];
                            for (std::size_t ci = 0; ci < cin; ++ci) {
                              T s = xr[ci];
                              T* dkc = &dk->data[koff + ci * cout];
                              for (std::size_t co = 0; co < cout; ++co) dkc[co] += s * grow[co];
                            }
                          }
                        }
                      }
                    }
                });
}

// Exact adjoint of conv2d with the same kernel/stride/pad:
// <conv2d(a,k), b> == <a, conv_transpose2d(b,k)> for all a, b.
// x: H' x W' x cout, k: kh x kw x cin x cout -> (H'-1)*s - 2p + kh etc.
template <typename T>
GVar<T> conv_transpose2d(Graph<T>& g, GVar<T> x, GVar<T> k, std::size_t stride, std::size_t pad) {
  const auto& xv = g.val(x);
  const auto& kv = g.val(k);
  op_require(xv.rank() == 3 && kv.rank() == 4,
             "conv_transpose2d shapes: x " + shape_str(xv.shape) + ", k " + shape_str(kv.shape));
  std::size_t Hi = xv.shape[0], Wi = xv.shape[1], cout = xv.shape[2];
  std::size_t kh = kv.shape[0], kw = kv.shape[1], cin = kv.shape[2];
  op_require(kv.shape[3] == cout, "conv_transpose2d channel mismatch: x " + shape_str(xv.shape) +
                                      ", k " + shape_str(kv.shape));
  std::ptrdiff_t Ho_s = static_cast<std::ptrdiff_t>((Hi - 1) * stride + kh) -
                        2 * static_cast<std::ptrdiff_t>(pad);
  std::ptrdiff_t Wo_s = static_cast<std::ptrdiff_t>((Wi - 1) * stride + kw) -
                        2 * static_cast<std::ptrdiff_t>(pad);
  op_require(Ho_s > 0 && Wo_s > 0, "conv_transpose2d output would be empty");
  std::size_t Ho = static_cast<std::size_t>(Ho_s), Wo = static_cast<std::size_t>(Wo_s);

  Tensor<T> out(Shape{Ho, Wo, cin});
  for (std::size_t oy = 0; oy < Hi; ++oy)
    for (std::size_t ox = 0; ox < Wi; ++ox) {
      const T* xr = &xv.data[(oy * Wi + ox) * cout];
      for (std::size_t ky = 0; ky < kh; ++ky) {
        std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                            static_cast<std::ptrdiff_t>(pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(Ho)) continue;
        for (std::size_t kx = 0; kx < kw; ++kx) {
          std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                              static_cast<std::ptrdiff_t>(pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(Wo)) continue;
          T* orow = &out.data[(static_cast<std::size_t>(iy) * Wo + static_cast<std::size_t>(ix)) * cin];
          const T* kr = &kv.data[(ky * kw + kx) * cin * cout];
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const T* kc = &kr[ci * cout];
            T s = 0;
            for (std::size_t co = 0; co < cout; ++co) s += xr[co] * kc[co];
            orow[ci] += s;
          }
        }
      }
    }

  return g.make(std::move(out), {x, k},
                [x, k, Hi, Wi, cout, kh, kw, cin, Ho, Wo, stride, pad](Graph<T>& gg, GVar<T> self) {
                  const auto& gr = gg.node_grad(self);
                  const auto& xv2 = gg.val(x);
                  const auto& kv2 = gg.val(k);
                  auto* dx = gg.grad_dst(x);
                  auto* dk = gg.grad_dst(k);
                  for (std::size_t oy = 0; oy < Hi; ++oy)
                    for (std::size_t ox = 0; ox < Wi; ++ox) {
                      std::size_t xoff = (oy * Wi + ox) * cout;
                      for (std::size_t ky = 0; ky < kh; ++ky) {
                        std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                            static_cast<std::ptrdiff_t>(pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(Ho)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                          std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                              static_cast<std::ptrdiff_t>(pad);
                          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(Wo)) continue;
                          std::size_t goff = (static_cast<std::size_t>(iy) * Wo +
                                              static_cast<std::size_t>(ix)) * cin;
                          std::size_t koff = (ky * kw + kx) * cin * cout;
                          if (dx) {
                            T* dxr = &dx->data[xoff];
                            for (std::size_t ci = 0; ci < cin; ++ci) {
                              T s = gr.data[goff + ci];
                              const T* kc = &kv2.data[koff + ci * cout];
                              for (std::size_t co = 0; co < cout; ++co) dxr[co] += s * kc[co];
                            }
                          }
                          if (dk) {
                            const T* xr = &xv2.data[xoff];
                            for (std::size_t ci = 0; ci < cin; ++ci) {
                              T s = gr.data[goff + ci];
                              T* dkc = &dk->data[koff + ci * cout];
                              for (std::size_t co = 0; co < cout; ++co) dkc[co] += s * xr[co];
                            }
                          }
                        }
                      }
                    }
                });
}

}  // namespace kfprop
