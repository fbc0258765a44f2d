#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "kfprop/metrics.hpp"
#include "kfprop/model.hpp"
#include "kfprop/synthdata.hpp"

namespace kfprop {

struct PropagateOptions {
  std::size_t chunk = 20;
  std::vector<std::size_t> offsets = {10, 20, 40};  // context frames at +- these
  bool prealign = true;
};

struct PropagateResult {
  std::vector<Tensor<double>> frames;  // completed RGB per frame
  std::vector<std::size_t> keyframes;  // frames completed by model inference
  std::size_t inferences = 0;
  double hole_mae = 0.0;  // against stored gt, over originally masked pixels
};

namespace videodetail {

// chunk starts plus the final frame
inline std::vector<std::size_t> boundary_frames(std::size_t frames, std::size_t chunk) {
  std::set<std::size_t> b;
  for (std::size_t f = 0; f < frames; f += chunk) b.insert(f);
  b.insert(frames - 1);
  return {b.begin(), b.end()};
}

// context frame indices around a target: clamped, deduplicated, target excluded
inline std::vector<std::size_t> context_frames(std::size_t target, std::size_t frames,
                                               const std::vector<std::size_t>& offsets,
                                               bool* clamped) {
  std::vector<std::size_t> out;
  auto push = [&](long f) {
    long n = static_cast<long>(frames);
    if (f < 0 || f >= n) {
      if (clamped) *clamped = true;
      f = std::clamp(f, 0L, n - 1);
    }
    std::size_t uf = static_cast<std::size_t>(f);
    if (uf == target) return;
    if (std::find(out.begin(), out.end(), uf) == out.end()) out.push_back(uf);
  };
  for (std::size_t off : offsets) {
    push(static_cast<long>(target) - static_cast<long>(off));
    push(static_cast<long>(target) + static_cast<long>(off));
  }
  return out;
}

// flow living on the grid of frame `from`, pointing into frame `to`
inline Affine frame_to_frame(const Affine& view_from, const Affine& view_to) {
  return affine_compose(affine_invert(view_to), view_from);
}

inline Tensor<double> masked_input(const VideoFrame& fr) {
  std::size_t H = fr.gt.shape[0], W = fr.gt.shape[1];
  Tensor<double> in(Shape{H, W, 4});
  for (std::size_t i = 0; i < H * W; ++i) {
    double hole = fr.mask.data[i];
    for (std::size_t ch = 0; ch < 3; ++ch) in.data[i * 4 + ch] = fr.gt.data[i * 3 + ch] * (1.0 - hole);
    in.data[i * 4 + 3] = hole;
  }
  return in;
}

}  // namespace videodetail

// Completes a synthetic video: chunk-boundary keyframes are inpainted by
// the model using context frames at the given offsets, intermediate frames
// are filled by warping the nearest completed keyframe through the analytic
// flows, with a model-inference fallback where the flow is unreliable.
template <typename T>
PropagateResult propagate_video(Model<T>& model, const std::string& dir,
                                const PropagateOptions& opt, std::ostream* log = nullptr) {
  using namespace videodetail;
  if (opt.chunk == 0) throw std::invalid_argument("chunk must be positive");
  if (opt.offsets.empty()) throw std::invalid_argument("need at least one context offset");
  DatasetInfo info = read_manifest(dir);
  if (info.kind != "video") throw std::runtime_error("propagate expects a video dataset");
  std::size_t N = info.count, H = info.height, W = info.width;

  std::vector<VideoFrame> fr(N);
  for (std::size_t f = 0; f < N; ++f) fr[f] = load_video_frame(dir, f);

  PropagateResult res;
  res.frames.resize(N);
  res.keyframes = boundary_frames(N, opt.chunk);

  bool warned = false;
  auto run_model = [&](std::size_t t) {
    bool clamped = false;
    std::vector<std::size_t> ctx = context_frames(t, N, opt.offsets, &clamped);
    if (clamped && log && !warned) {
      (*log) << "warning: context offsets exceed the video range, clamping\n";
      warned = true;
    }
    Tensor<double> target_in = masked_input(fr[t]);
    std::vector<Tensor<T>> keys;
    std::vector<FlowField<T>> ffwd, fbwd;
    std::vector<FlowField<double>> t2c, c2t;
    for (std::size_t c : ctx) {
      // fwd flows live on the context grid (context -> target), bwd on the
      // target grid (target -> context), matching the training data
      auto [bwd_f, fwd_f] = affine_flow<double>(frame_to_frame(fr[t].view, fr[c].view), H, W);
      keys.push_back(cast_tensor<T>(masked_input(fr[c])));
      ffwd.emplace_back(cast_tensor<T>(fwd_f.offsets));
      fbwd.emplace_back(cast_tensor<T>(bwd_f.offsets));
      t2c.push_back(std::move(bwd_f));
      c2t.push_back(std::move(fwd_f));
    }

    if (opt.prealign) {
      // copy context pixels into the input wherever the flow is reliable
      // and the context actually sees the pixel; the cleared mask keeps
      // them exact through the output compositing
      for (std::size_t ci = 0; ci < ctx.size(); ++ci) {
        Tensor<double> fb = fb_consistency(t2c[ci], c2t[ci]);
        Tensor<double> ctx_in = masked_input(fr[ctx[ci]]);
        for (std::size_t i = 0; i < H * W; ++i) {
          if (!(target_in.data[i * 4 + 3] > 0.5)) continue;  // already visible or prealigned
          if (fb.data[i] >= 0.5) continue;
          double x = static_cast<double>(i % W) + t2c[ci].offsets.data[i * 2];
          double y = static_cast<double>(i / W) + t2c[ci].offsets.data[i * 2 + 1];
          Tensor<double> pos(Shape{1, 2});
          pos.data[0] = x;
          pos.data[1] = y;
          Tensor<double> sampled = bilinear_sample_plain(ctx_in, pos);
          if (sampled.data[3] >= 0.5) continue;  // context is masked there too
          for (std::size_t ch = 0; ch < 3; ++ch) target_in.data[i * 4 + ch] = sampled.data[ch];
          target_in.data[i * 4 + 3] = 0.0;
        }
      }
    }

    Graph<T> g;
    auto fw = model.forward(g, cast_tensor<T>(target_in), keys, ffwd, fbwd);
    ++res.inferences;
    return cast_tensor<double>(g.val(fw.output));
  };

  for (std::size_t b : res.keyframes) res.frames[b] = run_model(b);

  for (std::size_t f = 0; f < N; ++f) {
    if (std::find(res.keyframes.begin(), res.keyframes.end(), f) != res.keyframes.end()) continue;
    std::size_t nearest = res.keyframes[0];
    for (std::size_t b : res.keyframes) {
      std::size_t da = f > b ? f - b : b - f;
      std::size_t db = f > nearest ? f - nearest : nearest - f;
      if (da < db) nearest = b;
    }
    auto to_key = affine_flow<double>(frame_to_frame(fr[f].view, fr[nearest].view), H, W);
    Tensor<double> warped = warp_by_flow(res.frames[nearest], to_key.first);
    Tensor<double> fb = fb_consistency(to_key.first, to_key.second);

    bool unreliable_hole = false;
    for (std::size_t i = 0; i < H * W; ++i)
      if (fr[f].mask.data[i] > 0.5 && fb.data[i] > 1.0) {
        unreliable_hole = true;
        break;
      }
    Tensor<double> modeled;
    if (unreliable_hole) modeled = run_model(f);

    Tensor<double> out(Shape{H, W, 3});
    for (std::size_t i = 0; i < H * W; ++i) {
      bool hole = fr[f].mask.data[i] > 0.5;
      const double* src = !hole ? &fr[f].gt.data[i * 3]
                    : (unreliable_hole && fb.data[i] > 1.0) ? &modeled.data[i * 3]
                                                            : &warped.data[i * 3];
      for (std::size_t ch = 0; ch < 3; ++ch) out.data[i * 3 + ch] = src[ch];
    }
    res.frames[f] = std::move(out);
  }

  double abs_sum = 0.0;
  std::size_t hole_px = 0;
  for (std::size_t f = 0; f < N; ++f)
    for (std::size_t i = 0; i < H * W; ++i)
      if (fr[f].mask.data[i] > 0.5) {
        ++hole_px;
        for (std::size_t ch = 0; ch < 3; ++ch)
          abs_sum += std::abs(res.frames[f].data[i * 3 + ch] - fr[f].gt.data[i * 3 + ch]);
      }
  res.hole_mae = hole_px ? abs_sum / static_cast<double>(hole_px * 3) : 0.0;
  return res;
}

}  // namespace kfprop
