#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "kfprop/model.hpp"
#include "kfprop/spectral.hpp"
#include "kfprop/synthdata.hpp"

namespace kfprop {

struct SampleMetrics {
  double hole_l1 = 0.0;
  double full_l1 = 0.0;
  double psnr = 0.0;
  double hf_err = 0.0;
};

struct MetricsReport {
  std::vector<SampleMetrics> samples;
  SampleMetrics aggregate;  // mean over samples
};

inline constexpr double kPsnrCap = 99.0;

// Relative L2 error of the DFT coefficients with normalized radial
// frequency above a quarter (half of Nyquist), averaged over channels.
inline double hf_spectral_error(const Tensor<double>& pred, const Tensor<double>& gt,
                                double radial_cut = 0.25) {
  if (!pred.same_shape(gt) || pred.rank() != 3)
    throw std::invalid_argument("hf_spectral_error: need matching H x W x c images");
  std::size_t H = pred.shape[0], W = pred.shape[1], C = pred.shape[2];
  bool pow2 = fftdetail::is_pow2(H) && fftdetail::is_pow2(W);
  double err_sum = 0.0;
  for (std::size_t ch = 0; ch < C; ++ch) {
    Tensor<double> pc(Shape{H, W, 1}), gc(Shape{H, W, 1});
    for (std::size_t i = 0; i < H * W; ++i) {
      pc.data[i] = pred.data[i * C + ch];
      gc.data[i] = gt.data[i * C + ch];
    }
    ComplexMap<double> fp = pow2 ? fft2(pc) : naive_dft2(pc);
    ComplexMap<double> fg = pow2 ? fft2(gc) : naive_dft2(gc);
    double num = 0.0, den = 0.0;
    for (std::size_t v = 0; v < H; ++v)
      for (std::size_t u = 0; u < W; ++u) {
        double fy = static_cast<double>(std::min(v, H - v)) / static_cast<double>(H);
        double fx = static_cast<double>(std::min(u, W - u)) / static_cast<double>(W);
        if (std::sqrt(fx * fx + fy * fy) <= radial_cut) continue;
        std::size_t i = v * W + u;
        double dr = fp.real.data[i] - fg.real.data[i];
        double di = fp.imag.data[i] - fg.imag.data[i];
        num += dr * dr + di * di;
        den += fg.real.data[i] * fg.real.data[i] + fg.imag.data[i] * fg.imag.data[i];
      }
    if (den > 0.0)
      err_sum += std::sqrt(num / den);
    else if (num > 0.0)
      err_sum += std::sqrt(num);
  }
  return err_sum / static_cast<double>(C);
}

// Energy fraction carried by the same high-frequency band, over total
// spectral energy. Used to sanity-check generated images.
inline double hf_energy_fraction(const Tensor<double>& img, double radial_cut = 0.25) {
  std::size_t H = img.shape[0], W = img.shape[1], C = img.shape[2];
  bool pow2 = fftdetail::is_pow2(H) && fftdetail::is_pow2(W);
  double hf = 0.0, total = 0.0;
  for (std::size_t ch = 0; ch < C; ++ch) {
    Tensor<double> pc(Shape{H, W, 1});
    for (std::size_t i = 0; i < H * W; ++i) pc.data[i] = img.data[i * C + ch];
    ComplexMap<double> f = pow2 ? fft2(pc) : naive_dft2(pc);
    for (std::size_t v = 0; v < H; ++v)
      for (std::size_t u = 0; u < W; ++u) {
        std::size_t i = v * W + u;
        double e = f.real.data[i] * f.real.data[i] + f.imag.data[i] * f.imag.data[i];
        double fy = static_cast<double>(std::min(v, H - v)) / static_cast<double>(H);
        double fx = static_cast<double>(std::min(u, W - u)) / static_cast<double>(W);
        if (std::sqrt(fx * fx + fy * fy) > radial_cut) hf += e;
        total += e;
      }
  }
  return total > 0.0 ? hf / total : 0.0;
}

inline SampleMetrics image_metrics(const Tensor<double>& out, const Tensor<double>& gt,
                                   const Tensor<double>& mask) {
  std::size_t H = gt.shape[0], W = gt.shape[1];
  SampleMetrics m;
  double hole_abs = 0.0, full_abs = 0.0, sq = 0.0;
  std::size_t hole_px = 0;
  for (std::size_t i = 0; i < H * W; ++i) {
    bool hole = mask.data[i] > 0.5;
    if (hole) ++hole_px;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      double d = out.data[i * 3 + ch] - gt.data[i * 3 + ch];
      full_abs += std::abs(d);
      sq += d * d;
      if (hole) hole_abs += std::abs(d);
    }
  }
  m.full_l1 = full_abs / static_cast<double>(H * W * 3);
  m.hole_l1 = hole_px ? hole_abs / static_cast<double>(hole_px * 3) : 0.0;
  double mse = sq / static_cast<double>(H * W * 3);
  m.psnr = mse > 0.0 ? std::min(kPsnrCap, -10.0 * std::log10(mse)) : kPsnrCap;
  m.hf_err = hf_spectral_error(out, gt);
  return m;
}

// Runs the model over a dataset directory. keyframes_used = 0 means all
// stored keyframes; max_samples = 0 means the whole set.
template <typename T>
MetricsReport evaluate_dataset(Model<T>& model, const std::string& dir,
                               std::size_t keyframes_used = 0, std::size_t max_samples = 0) {
  DatasetInfo info = read_manifest(dir);
  if (info.kind != "images")
    throw std::runtime_error("evaluate_dataset expects an image dataset, got kind=" + info.kind);
  std::size_t n = info.count;
  if (max_samples && max_samples < n) n = max_samples;

  MetricsReport rep;
  for (std::size_t i = 0; i < n; ++i) {
    FrameSample s = load_dataset_sample(dir, i);
    std::size_t Tn = s.keys_in.size();
    if (keyframes_used && keyframes_used < Tn) Tn = keyframes_used;

    Tensor<T> target = cast_tensor<T>(s.target_in);
    std::vector<Tensor<T>> keys;
    std::vector<FlowField<T>> ffwd, fbwd;
    for (std::size_t k = 0; k < Tn; ++k) {
      keys.push_back(cast_tensor<T>(s.keys_in[k]));
      ffwd.emplace_back(cast_tensor<T>(s.flows_fwd[k].offsets));
      fbwd.emplace_back(cast_tensor<T>(s.flows_bwd[k].offsets));
    }
    Graph<T> g;
    auto fw = model.forward(g, target, keys, ffwd, fbwd);
    Tensor<double> out = cast_tensor<double>(g.val(fw.output));
    rep.samples.push_back(image_metrics(out, s.gt, s.mask));
  }

  SampleMetrics agg;
  for (const auto& m : rep.samples) {
    agg.hole_l1 += m.hole_l1;
    agg.full_l1 += m.full_l1;
    agg.psnr += m.psnr;
    agg.hf_err += m.hf_err;
  }
  if (!rep.samples.empty()) {
    double inv = 1.0 / static_cast<double>(rep.samples.size());
    agg.hole_l1 *= inv;
    agg.full_l1 *= inv;
    agg.psnr *= inv;
    agg.hf_err *= inv;
  }
  rep.aggregate = agg;
  return rep;
}

inline void print_metrics(std::ostream& os, const MetricsReport& rep, bool per_sample = true) {
  if (per_sample) {
    os << "sample    hole_l1     full_l1     psnr       hf_err\n";
    for (std::size_t i = 0; i < rep.samples.size(); ++i) {
      const auto& m = rep.samples[i];
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%-8zu  %-10.6f  %-10.6f  %-9.3f  %-10.6f", i, m.hole_l1,
                    m.full_l1, m.psnr, m.hf_err);
      os << buf << "\n";
    }
  }
  const auto& a = rep.aggregate;
  os << "samples=" << rep.samples.size() << "\n";
  os << "hole_l1=" << a.hole_l1 << "\n";
  os << "full_l1=" << a.full_l1 << "\n";
  os << "psnr=" << a.psnr << "\n";
  os << "hf_err=" << a.hf_err << "\n";
}

}  // namespace kfprop
