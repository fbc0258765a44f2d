#include "kfprop/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "kfprop/archive.hpp"
#include "kfprop/kvconfig.hpp"
#include "kfprop/rng.hpp"

// Everything in this file sticks to +,-,*,/ plus sqrt and floor, which are
// exactly rounded under IEEE-754, and the TU is built with fp-contract off.
// The numeric helpers are local copies rather than the shared templates so
// the generated bytes cannot be changed by another TU's instantiation flags.

namespace kfprop {

namespace {

double clampd(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// clamp-to-edge bilinear lookup, same convention as the shared sampler
void sample_at(const Tensor<double>& img, double px, double py, double* out) {
  std::size_t H = img.shape[0], W = img.shape[1], c = img.shape[2];
  double cx = clampd(px, 0.0, static_cast<double>(W - 1));
  double cy = clampd(py, 0.0, static_cast<double>(H - 1));
  std::size_t x0 = static_cast<std::size_t>(cx);
  std::size_t y0 = static_cast<std::size_t>(cy);
  if (W >= 2 && x0 > W - 2) x0 = W - 2;
  if (H >= 2 && y0 > H - 2) y0 = H - 2;
  std::size_t x1 = std::min(x0 + 1, W - 1);
  std::size_t y1 = std::min(y0 + 1, H - 1);
  double wx = cx - static_cast<double>(x0);
  double wy = cy - static_cast<double>(y0);
  const double* f00 = &img.data[(y0 * W + x0) * c];
  const double* f10 = &img.data[(y0 * W + x1) * c];
  const double* f01 = &img.data[(y1 * W + x0) * c];
  const double* f11 = &img.data[(y1 * W + x1) * c];
  for (std::size_t ch = 0; ch < c; ++ch)
    out[ch] = (1.0 - wy) * ((1.0 - wx) * f00[ch] + wx * f10[ch]) +
              wy * ((1.0 - wx) * f01[ch] + wx * f11[ch]);
}

Tensor<double> warp_image(const Tensor<double>& img, const Tensor<double>& offsets) {
  std::size_t H = offsets.shape[0], W = offsets.shape[1], c = img.shape[2];
  Tensor<double> out(Shape{H, W, c});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      std::size_t i = y * W + x;
      sample_at(img, static_cast<double>(x) + offsets.data[i * 2],
                static_cast<double>(y) + offsets.data[i * 2 + 1], &out.data[i * c]);
    }
  return out;
}

// one separable box-blur pass with clamped borders
void box_blur(Tensor<double>& f, std::size_t radius) {
  std::size_t H = f.shape[0], W = f.shape[1], c = f.shape[2];
  Tensor<double> tmp(f.shape);
  long r = static_cast<long>(radius);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        for (long k = -r; k <= r; ++k) {
          long xx = std::clamp(static_cast<long>(x) + k, 0L, static_cast<long>(W) - 1);
          sum += f.data[(y * W + static_cast<std::size_t>(xx)) * c + ch];
        }
        tmp.data[(y * W + x) * c + ch] = sum / static_cast<double>(2 * r + 1);
      }
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        for (long k = -r; k <= r; ++k) {
          long yy = std::clamp(static_cast<long>(y) + k, 0L, static_cast<long>(H) - 1);
          sum += tmp.data[(static_cast<std::size_t>(yy) * W + x) * c + ch];
        }
        f.data[(y * W + x) * c + ch] = sum / static_cast<double>(2 * r + 1);
      }
}

// 4-neighbor Jacobi relaxation of flow entries under mask==1, matching
// fill_masked_flow in the shared header
Tensor<double> infill_flow(const Tensor<double>& flow, const Tensor<double>& mask) {
  std::size_t H = flow.shape[0], W = flow.shape[1];
  Tensor<double> cur = flow;
  std::size_t known = 0;
  double mean_dx = 0.0, mean_dy = 0.0;
  for (std::size_t i = 0; i < H * W; ++i)
    if (!(mask.data[i] > 0.5)) {
      ++known;
      mean_dx += flow.data[i * 2];
      mean_dy += flow.data[i * 2 + 1];
    }
  if (known == 0) return cur;
  mean_dx /= static_cast<double>(known);
  mean_dy /= static_cast<double>(known);
  for (std::size_t i = 0; i < H * W; ++i)
    if (mask.data[i] > 0.5) {
      cur.data[i * 2] = mean_dx;
      cur.data[i * 2 + 1] = mean_dy;
    }
  Tensor<double> next = cur;
  for (std::size_t it = 0; it < 10000; ++it) {
    double max_change = 0.0;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        std::size_t i = y * W + x;
        if (!(mask.data[i] > 0.5)) continue;
        for (std::size_t ch = 0; ch < 2; ++ch) {
          double sum = 0.0;
          int cnt = 0;
          if (y > 0) { sum += cur.data[((y - 1) * W + x) * 2 + ch]; ++cnt; }
          if (y + 1 < H) { sum += cur.data[((y + 1) * W + x) * 2 + ch]; ++cnt; }
          if (x > 0) { sum += cur.data[(y * W + x - 1) * 2 + ch]; ++cnt; }
          if (x + 1 < W) { sum += cur.data[(y * W + x + 1) * 2 + ch]; ++cnt; }
          double v = sum / cnt;
          double change = v - cur.data[i * 2 + ch];
          if (change < 0.0) change = -change;
          if (change > max_change) max_change = change;
          next.data[i * 2 + ch] = v;
        }
      }
    std::swap(cur.data, next.data);
    if (max_change < 1e-4) break;
  }
  return cur;
}

void add_value_noise(Tensor<double>& img, Rng& rng, std::size_t cell, double weight) {
  std::size_t H = img.shape[0], W = img.shape[1];
  std::size_t lh = H / cell + 2, lw = W / cell + 2;
  Tensor<double> lattice(Shape{lh, lw, 3});
  for (auto& v : lattice.data) v = rng.uniform();
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      double gx = static_cast<double>(x) / static_cast<double>(cell);
      double gy = static_cast<double>(y) / static_cast<double>(cell);
      std::size_t ix = static_cast<std::size_t>(gx), iy = static_cast<std::size_t>(gy);
      double fx = smoothstep(gx - static_cast<double>(ix));
      double fy = smoothstep(gy - static_cast<double>(iy));
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double v00 = lattice.data[(iy * lw + ix) * 3 + ch];
        double v10 = lattice.data[(iy * lw + ix + 1) * 3 + ch];
        double v01 = lattice.data[((iy + 1) * lw + ix) * 3 + ch];
        double v11 = lattice.data[((iy + 1) * lw + ix + 1) * 3 + ch];
        double v = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11);
        img.data[(y * W + x) * 3 + ch] += weight * v;
      }
    }
}

double mask_ratio(const Tensor<double>& m) {
  double s = 0.0;
  for (double v : m.data) s += v;
  return s / static_cast<double>(m.numel());
}

void erode4(Tensor<double>& m) {
  std::size_t H = m.shape[0], W = m.shape[1];
  Tensor<double> out(m.shape);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      bool keep = m.data[y * W + x] > 0.5;
      keep = keep && y > 0 && m.data[(y - 1) * W + x] > 0.5;
      keep = keep && y + 1 < H && m.data[(y + 1) * W + x] > 0.5;
      keep = keep && x > 0 && m.data[y * W + x - 1] > 0.5;
      keep = keep && x + 1 < W && m.data[y * W + x + 1] > 0.5;
      out.data[y * W + x] = keep ? 1.0 : 0.0;
    }
  m = std::move(out);
}

void dilate4(Tensor<double>& m) {
  std::size_t H = m.shape[0], W = m.shape[1];
  Tensor<double> out(m.shape);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      bool on = m.data[y * W + x] > 0.5;
      on = on || (y > 0 && m.data[(y - 1) * W + x] > 0.5);
      on = on || (y + 1 < H && m.data[(y + 1) * W + x] > 0.5);
      on = on || (x > 0 && m.data[y * W + x - 1] > 0.5);
      on = on || (x + 1 < W && m.data[y * W + x + 1] > 0.5);
      out.data[y * W + x] = on ? 1.0 : 0.0;
    }
  m = std::move(out);
}

void fill_center_rect(Tensor<double>& m) {
  std::size_t H = m.shape[0], W = m.shape[1];
  for (std::size_t y = H * 2 / 5; y < H * 3 / 5; ++y)
    for (std::size_t x = W * 2 / 5; x < W * 3 / 5; ++x) m.data[y * W + x] = 1.0;
}

// rotation by +-15 degrees without trig calls: the linear part is built
// from u = tan(theta/2) via cos = (1-u^2)/(1+u^2), sin = 2u/(1+u^2)
constexpr double kTanHalf15Deg = 0.13165249758739586;

Affine random_affine(Rng& rng, std::size_t H, std::size_t W) {
  double u = kTanHalf15Deg * (2.0 * rng.uniform() - 1.0);
  double den = 1.0 + u * u;
  double cosv = (1.0 - u * u) / den;
  double sinv = 2.0 * u / den;
  double s = rng.uniform(0.9, 1.1);
  double tx = rng.uniform(-0.1, 0.1) * static_cast<double>(W);
  double ty = rng.uniform(-0.1, 0.1) * static_cast<double>(H);
  double cx = static_cast<double>(W - 1) / 2.0, cy = static_cast<double>(H - 1) / 2.0;
  double a = s * cosv, b = -s * sinv, c = s * sinv, d = s * cosv;
  Affine A{{{a, b, 0}, {c, d, 0}}};
  A.m[0][2] = cx + tx - a * cx - b * cy;
  A.m[1][2] = cy + ty - c * cx - d * cy;
  return A;
}

Tensor<double> seed_tensor(std::uint64_t seed) {
  Tensor<double> t(Shape{2});
  t.data[0] = static_cast<double>(static_cast<std::uint32_t>(seed >> 32));
  t.data[1] = static_cast<double>(static_cast<std::uint32_t>(seed & 0xffffffffULL));
  return t;
}

std::uint64_t seed_from_tensor(const Tensor<double>& t) {
  if (t.numel() != 2) throw std::runtime_error("malformed seed entry");
  return (static_cast<std::uint64_t>(t.data[0]) << 32) | static_cast<std::uint64_t>(t.data[1]);
}

}  // namespace

Tensor<double> gen_base_image(std::uint64_t seed, std::size_t H, std::size_t W) {
  if (H < 8 || W < 8) throw std::invalid_argument("gen_base_image: image too small");
  Rng rng(seed);
  Tensor<double> img(Shape{H, W, 3}, 0.15);
  add_value_noise(img, rng, 16, 0.45);
  add_value_noise(img, rng, 5, 0.25);

  std::size_t nshapes = 3 + rng.uniform_int(6);
  for (std::size_t sh = 0; sh < nshapes; ++sh) {
    bool ellipse = rng.uniform_int(2) == 1;
    double c0[3], c1[3];
    for (int ch = 0; ch < 3; ++ch) c0[ch] = rng.uniform();
    for (int ch = 0; ch < 3; ++ch) c1[ch] = rng.uniform();
    std::size_t grad = rng.uniform_int(3);  // 0 solid, 1 horizontal, 2 vertical
    double cx = rng.uniform(0.0, static_cast<double>(W));
    double cy = rng.uniform(0.0, static_cast<double>(H));
    double hw = rng.uniform(0.08, 0.28) * static_cast<double>(W);
    double hh = rng.uniform(0.08, 0.28) * static_cast<double>(H);
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
        bool inside = ellipse ? (dx / hw) * (dx / hw) + (dy / hh) * (dy / hh) <= 1.0
                              : dx >= -hw && dx <= hw && dy >= -hh && dy <= hh;
        if (!inside) continue;
        double t = grad == 0 ? 0.0
                   : grad == 1 ? clampd((dx + hw) / (2.0 * hw), 0.0, 1.0)
                               : clampd((dy + hh) / (2.0 * hh), 0.0, 1.0);
        for (std::size_t ch = 0; ch < 3; ++ch)
          img.data[(y * W + x) * 3 + ch] = c0[ch] + (c1[ch] - c0[ch]) * t;
      }
  }

  // guaranteed high-frequency content: stripe or checker patches at one or
  // two pixel period with strongly separated colors
  std::size_t npatch = 1 + rng.uniform_int(2);
  for (std::size_t k = 0; k < npatch; ++k) {
    std::size_t pw = static_cast<std::size_t>(rng.uniform(0.35, 0.6) * static_cast<double>(W));
    std::size_t ph = static_cast<std::size_t>(rng.uniform(0.35, 0.6) * static_cast<double>(H));
    pw = std::max<std::size_t>(pw, 4);
    ph = std::max<std::size_t>(ph, 4);
    std::size_t x0 = rng.uniform_int(W - pw + 1);
    std::size_t y0 = rng.uniform_int(H - ph + 1);
    std::size_t kind = rng.uniform_int(4);  // h stripes, v stripes, diagonal, checker
    std::size_t period = k == 0 ? 1 : 1 + rng.uniform_int(2);
    double ca[3], cb[3];
    for (int ch = 0; ch < 3; ++ch) ca[ch] = rng.uniform(0.0, 0.25);
    for (int ch = 0; ch < 3; ++ch) cb[ch] = rng.uniform(0.75, 1.0);
    for (std::size_t y = y0; y < y0 + ph; ++y)
      for (std::size_t x = x0; x < x0 + pw; ++x) {
        std::size_t v;
        if (kind == 0) v = (y / period) % 2;
        else if (kind == 1) v = (x / period) % 2;
        else if (kind == 2) v = ((x + y) / period) % 2;
        else v = ((x / period) % 2) ^ ((y / period) % 2);
        const double* col = v ? cb : ca;
        for (std::size_t ch = 0; ch < 3; ++ch) img.data[(y * W + x) * 3 + ch] = col[ch];
      }
  }

  for (auto& v : img.data) v = clampd(v, 0.0, 1.0);
  return img;
}

Tensor<double> gen_mask(std::uint64_t seed, std::size_t H, std::size_t W) {
  if (H < 8 || W < 8) throw std::invalid_argument("gen_mask: image too small");
  Rng rng(seed);
  Tensor<double> m(Shape{H, W, 1});

  std::size_t nrect = 1 + rng.uniform_int(3);
  for (std::size_t r = 0; r < nrect; ++r) {
    double cx = rng.uniform(0.0, static_cast<double>(W));
    double cy = rng.uniform(0.0, static_cast<double>(H));
    double hw = rng.uniform(0.08, 0.22) * static_cast<double>(W);
    double hh = rng.uniform(0.08, 0.22) * static_cast<double>(H);
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
        if (dx >= -hw && dx <= hw && dy >= -hh && dy <= hh) m.data[y * W + x] = 1.0;
      }
  }

  std::size_t nline = 1 + rng.uniform_int(3);
  for (std::size_t l = 0; l < nline; ++l) {
    std::size_t npts = 2 + rng.uniform_int(3);
    double thick = 2.0 + static_cast<double>(rng.uniform_int(3));
    double rad = thick * 0.5;
    double px = rng.uniform(0.0, static_cast<double>(W));
    double py = rng.uniform(0.0, static_cast<double>(H));
    for (std::size_t p = 1; p < npts; ++p) {
      double qx = rng.uniform(0.0, static_cast<double>(W));
      double qy = rng.uniform(0.0, static_cast<double>(H));
      double dx = qx - px, dy = qy - py;
      double len = std::sqrt(dx * dx + dy * dy);
      std::size_t steps = static_cast<std::size_t>(len * 2.0) + 1;
      for (std::size_t s = 0; s <= steps; ++s) {
        double t = static_cast<double>(s) / static_cast<double>(steps);
        double sx = px + dx * t, sy = py + dy * t;
        long xlo = static_cast<long>(std::floor(sx - rad)), xhi = static_cast<long>(std::floor(sx + rad)) + 1;
        long ylo = static_cast<long>(std::floor(sy - rad)), yhi = static_cast<long>(std::floor(sy + rad)) + 1;
        for (long yy = std::max(0L, ylo); yy <= std::min(static_cast<long>(H) - 1, yhi); ++yy)
          for (long xx = std::max(0L, xlo); xx <= std::min(static_cast<long>(W) - 1, xhi); ++xx) {
            double ddx = static_cast<double>(xx) - sx, ddy = static_cast<double>(yy) - sy;
            if (ddx * ddx + ddy * ddy <= rad * rad)
              m.data[static_cast<std::size_t>(yy) * W + static_cast<std::size_t>(xx)] = 1.0;
          }
      }
      px = qx;
      py = qy;
    }
  }

  while (mask_ratio(m) > 0.5) {
    erode4(m);
    if (mask_ratio(m) == 0.0) fill_center_rect(m);
  }
  if (mask_ratio(m) == 0.0) fill_center_rect(m);
  while (mask_ratio(m) < 0.05) dilate4(m);
  return m;
}

std::pair<FlowField<double>, FlowField<double>> elastic_warp(std::uint64_t seed, std::size_t H,
                                                             std::size_t W, double amplitude_px,
                                                             double smoothness_px) {
  if (!(amplitude_px >= 0.0) || (amplitude_px > 0.0 && !(amplitude_px < smoothness_px / 2.0)))
    throw std::invalid_argument("elastic_warp: need 0 <= amplitude < smoothness/2");
  Rng root(seed);
  Rng arng = root.split(1);
  Affine A = random_affine(arng, H, W);
  Affine Ainv = affine_invert(A);

  double amp = amplitude_px;
  for (int attempt = 0; attempt < 9; ++attempt, amp *= 0.5) {
    Tensor<double> E(Shape{H, W, 2});
    if (amp > 0.0) {
      Rng nrng = root.split(100 + static_cast<std::uint64_t>(attempt));
      for (auto& v : E.data) v = nrng.uniform(-1.0, 1.0);
      std::size_t radius = std::max<std::size_t>(1, static_cast<std::size_t>(smoothness_px / 2.0));
      box_blur(E, radius);
      box_blur(E, radius);
      double peak = 0.0;
      for (double v : E.data) peak = std::max(peak, v < 0.0 ? -v : v);
      if (peak > 0.0) {
        double sc = amp / peak;
        for (auto& v : E.data) v *= sc;
      }
    }

    FlowField<double> fwd(H, W), bwd(H, W);
    double max_disp = 0.0;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        std::size_t i = (y * W + x) * 2;
        auto [ax, ay] = affine_apply(A, static_cast<double>(x), static_cast<double>(y));
        double dx = ax - static_cast<double>(x) + E.data[i];
        double dy = ay - static_cast<double>(y) + E.data[i + 1];
        fwd.offsets.data[i] = dx;
        fwd.offsets.data[i + 1] = dy;
        max_disp = std::max({max_disp, dx < 0 ? -dx : dx, dy < 0 ? -dy : dy});
      }

    // fixed-point inversion: solve A(q) + E(q) = p for q
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        double px = static_cast<double>(x), py = static_cast<double>(y);
        double qx = px, qy = py;
        for (int it = 0; it < 10; ++it) {
          double e[2];
          sample_at(E, qx, qy, e);
          auto [nx, ny] = affine_apply(Ainv, px - e[0], py - e[1]);
          qx = nx;
          qy = ny;
        }
        std::size_t i = (y * W + x) * 2;
        bwd.offsets.data[i] = qx - px;
        bwd.offsets.data[i + 1] = qy - py;
      }

    std::size_t border = static_cast<std::size_t>(std::floor(max_disp)) + 2;
    double worst = 0.0;
    for (std::size_t y = border; y + border < H; ++y)
      for (std::size_t x = border; x + border < W; ++x) {
        std::size_t i = (y * W + x) * 2;
        double tx = static_cast<double>(x) + fwd.offsets.data[i];
        double ty = static_cast<double>(y) + fwd.offsets.data[i + 1];
        double back[2];
        sample_at(bwd.offsets, tx, ty, back);
        double rx = fwd.offsets.data[i] + back[0];
        double ry = fwd.offsets.data[i + 1] + back[1];
        worst = std::max(worst, std::sqrt(rx * rx + ry * ry));
      }
    if (worst < 0.1) return {std::move(fwd), std::move(bwd)};
  }
  throw std::runtime_error("elastic_warp: inversion failed to converge even at zero amplitude");
}

FrameSample make_sample(std::uint64_t seed, const SampleParams& params) {
  std::size_t H = params.height, W = params.width;
  Rng root(seed);
  FrameSample s;
  s.seed = seed;
  s.gt = gen_base_image(root.derive(1), H, W);
  s.mask = gen_mask(root.derive(2), H, W);

  s.target_in = Tensor<double>(Shape{H, W, 4});
  for (std::size_t i = 0; i < H * W; ++i) {
    double hole = s.mask.data[i];
    for (std::size_t ch = 0; ch < 3; ++ch)
      s.target_in.data[i * 4 + ch] = s.gt.data[i * 3 + ch] * (1.0 - hole);
    s.target_in.data[i * 4 + 3] = hole;
  }

  for (std::size_t k = 0; k < params.keyframes; ++k) {
    auto [fwd, bwd] = elastic_warp(root.derive(10 + 3 * k), H, W, params.amplitude_px,
                                   params.smoothness_px);
    Tensor<double> kgt = warp_image(s.gt, fwd.offsets);
    Tensor<double> kmask = gen_mask(root.derive(11 + 3 * k), H, W);

    // pretend the flow is unknown inside keyframe holes, like an estimator
    // would be: fwd lives on the keyframe grid, bwd is masked where it
    // lands in a hole
    fwd.offsets = infill_flow(fwd.offsets, kmask);
    Tensor<double> bwd_mask(Shape{H, W, 1});
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        std::size_t i = y * W + x;
        double hit[1];
        sample_at(kmask, static_cast<double>(x) + bwd.offsets.data[i * 2],
                  static_cast<double>(y) + bwd.offsets.data[i * 2 + 1], hit);
        bwd_mask.data[i] = hit[0] > 0.5 ? 1.0 : 0.0;
      }
    bwd.offsets = infill_flow(bwd.offsets, bwd_mask);

    Tensor<double> kin(Shape{H, W, 4});
    for (std::size_t i = 0; i < H * W; ++i) {
      double hole = kmask.data[i];
      for (std::size_t ch = 0; ch < 3; ++ch)
        kin.data[i * 4 + ch] = kgt.data[i * 3 + ch] * (1.0 - hole);
      kin.data[i * 4 + 3] = hole;
    }
    s.keys_in.push_back(std::move(kin));
    s.keys_gt.push_back(std::move(kgt));
    s.keys_mask.push_back(std::move(kmask));
    s.flows_fwd.push_back(std::move(fwd));
    s.flows_bwd.push_back(std::move(bwd));
  }
  return s;
}

std::string sample_path(const std::string& dir, std::size_t index) {
  return dir + "/sample_" + std::to_string(index) + ".kpt";
}

void write_sample(const std::string& path, const FrameSample& s) {
  Archive a;
  a.put("gt", s.gt);
  a.put("mask", s.mask);
  a.put("target_in", s.target_in);
  for (std::size_t k = 0; k < s.keys_in.size(); ++k) {
    std::string p = "key." + std::to_string(k) + ".";
    a.put(p + "in", s.keys_in[k]);
    a.put(p + "gt", s.keys_gt[k]);
    a.put(p + "mask", s.keys_mask[k]);
    a.put("flow.fwd." + std::to_string(k), s.flows_fwd[k].offsets);
    a.put("flow.bwd." + std::to_string(k), s.flows_bwd[k].offsets);
  }
  a.put("seed", seed_tensor(s.seed));
  a.save(path);
}

FrameSample load_sample(const std::string& path) {
  Archive a = Archive::load(path);
  FrameSample s;
  s.gt = a.get<double>("gt");
  s.mask = a.get<double>("mask");
  s.target_in = a.get<double>("target_in");
  for (std::size_t k = 0;; ++k) {
    std::string p = "key." + std::to_string(k) + ".";
    if (!a.has(p + "in")) break;
    s.keys_in.push_back(a.get<double>(p + "in"));
    s.keys_gt.push_back(a.get<double>(p + "gt"));
    s.keys_mask.push_back(a.get<double>(p + "mask"));
    s.flows_fwd.emplace_back(a.get<double>("flow.fwd." + std::to_string(k)));
    s.flows_bwd.emplace_back(a.get<double>("flow.bwd." + std::to_string(k)));
  }
  s.seed = seed_from_tensor(a.get<double>("seed"));
  return s;
}

void write_dataset(const std::string& dir, std::size_t count, std::uint64_t seed,
                   const SampleParams& params) {
  std::filesystem::create_directories(dir);
  Rng root(seed);
  for (std::size_t i = 0; i < count; ++i)
    write_sample(sample_path(dir, i), make_sample(root.derive(i + 1), params));
  KvConfig man;
  man.set("kind", "images");
  man.set_u64("version", kDatasetVersion);
  man.set_u64("count", count);
  man.set_u64("height", params.height);
  man.set_u64("width", params.width);
  man.set_u64("keyframes", params.keyframes);
  man.set_u64("seed", seed);
  man.save(dir + "/manifest.txt");
}

DatasetInfo read_manifest(const std::string& dir) {
  std::string path = dir + "/manifest.txt";
  if (!std::filesystem::exists(path))
    throw std::runtime_error("no dataset manifest at '" + path + "'");
  KvConfig man = KvConfig::load(path);
  std::uint64_t version = man.get_u64("version");
  if (version != kDatasetVersion)
    throw std::runtime_error("dataset version " + std::to_string(version) + " unsupported, want " +
                             std::to_string(kDatasetVersion));
  DatasetInfo info;
  info.kind = man.get_or("kind", "images");
  info.count = man.get_u64(info.kind == "video" ? "frames" : "count");
  info.height = man.get_u64("height");
  info.width = man.get_u64("width");
  info.keyframes = man.get_u64_or("keyframes", 0);
  info.seed = man.get_u64("seed");
  return info;
}

FrameSample load_dataset_sample(const std::string& dir, std::size_t index) {
  return load_sample(sample_path(dir, index));
}

std::string video_frame_path(const std::string& dir, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%04zu.kpt", index);
  return dir + "/" + name;
}

void write_video_dataset(const std::string& dir, std::uint64_t seed, const VideoParams& params) {
  std::size_t H = params.height, W = params.width, N = params.frames;
  if (N == 0) throw std::invalid_argument("write_video_dataset: need at least one frame");
  std::filesystem::create_directories(dir);
  Rng root(seed);
  Tensor<double> base = gen_base_image(root.derive(1), H, W);
  double cx = static_cast<double>(W - 1) / 2.0, cy = static_cast<double>(H - 1) / 2.0;

  for (std::size_t f = 0; f < N; ++f) {
    double r = N > 1 ? static_cast<double>(f) / static_cast<double>(N - 1) : 0.0;
    double arc = 4.0 * r * (1.0 - r);  // zero at both ends, peaks mid-video
    double u = 0.05 * params.motion * arc;
    double den = 1.0 + u * u;
    double cosv = (1.0 - u * u) / den, sinv = 2.0 * u / den;
    double sc = 1.0 + 0.04 * params.motion * arc;
    double tx = 0.06 * params.motion * static_cast<double>(W) * r;
    double ty = 0.04 * params.motion * static_cast<double>(H) * r * r;
    double a = sc * cosv, b = -sc * sinv, c = sc * sinv, d = sc * cosv;
    Affine view{{{a, b, cx + tx - a * cx - b * cy}, {c, d, cy + ty - c * cx - d * cy}}};

    Tensor<double> gt(Shape{H, W, 3});
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        auto [bx, by] = affine_apply(view, static_cast<double>(x), static_cast<double>(y));
        sample_at(base, bx, by, &gt.data[(y * W + x) * 3]);
      }
    Tensor<double> mask = gen_mask(root.derive(500 + f), H, W);
    Tensor<double> vt(Shape{2, 3});
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 3; ++j) vt.data[static_cast<std::size_t>(i * 3 + j)] = view.m[i][j];

    Archive ar;
    ar.put("gt", gt);
    ar.put("mask", mask);
    ar.put("affine", vt);
    ar.save(video_frame_path(dir, f));
  }

  KvConfig man;
  man.set("kind", "video");
  man.set_u64("version", kDatasetVersion);
  man.set_u64("frames", N);
  man.set_u64("height", H);
  man.set_u64("width", W);
  man.set_u64("seed", seed);
  man.set_f64("motion", params.motion);
  man.save(dir + "/manifest.txt");
}

VideoFrame load_video_frame(const std::string& dir, std::size_t index) {
  Archive a = Archive::load(video_frame_path(dir, index));
  VideoFrame vf;
  vf.gt = a.get<double>("gt");
  vf.mask = a.get<double>("mask");
  Tensor<double> vt = a.get<double>("affine");
  if (!(vt.shape == Shape{2, 3})) throw std::runtime_error("malformed affine entry");
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) vf.view.m[i][j] = vt.data[static_cast<std::size_t>(i * 3 + j)];
  return vf;
}

}  // namespace kfprop
