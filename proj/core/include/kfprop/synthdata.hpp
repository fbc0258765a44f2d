#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kfprop/flow.hpp"
#include "kfprop/tensor.hpp"

namespace kfprop {

// Bumped whenever generated bytes change; readers refuse other versions.
inline constexpr std::uint64_t kDatasetVersion = 1;

struct SampleParams {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t keyframes = 2;
  double amplitude_px = 4.0;   // elastic displacement bound
  double smoothness_px = 16.0; // elastic noise blur width
};

// One guided-inpainting training sample. flows_fwd[i] lives on the
// keyframe-i grid and points into the target frame, so warping gt by it
// reproduces the keyframe image; flows_bwd[i] is its inverse on the target
// grid. Both are infilled over the keyframe's masked region.
struct FrameSample {
  Tensor<double> gt;         // H x W x 3
  Tensor<double> mask;       // H x W x 1, binary
  Tensor<double> target_in;  // H x W x 4, gt*(1-mask) + mask channel
  std::vector<Tensor<double>> keys_in;    // H x W x 4 each
  std::vector<Tensor<double>> keys_gt;    // H x W x 3, pre-mask warped image
  std::vector<Tensor<double>> keys_mask;  // H x W x 1
  std::vector<FlowField<double>> flows_fwd;
  std::vector<FlowField<double>> flows_bwd;
  std::uint64_t seed = 0;
};

Tensor<double> gen_base_image(std::uint64_t seed, std::size_t H, std::size_t W);
Tensor<double> gen_mask(std::uint64_t seed, std::size_t H, std::size_t W);

// Smooth invertible displacement: box-blurred noise on top of a random
// affine. Returns (fwd, bwd); bwd comes from fixed-point inversion and the
// pair is retried at half amplitude until interior fb-consistency < 0.1 px.
std::pair<FlowField<double>, FlowField<double>> elastic_warp(std::uint64_t seed, std::size_t H,
                                                             std::size_t W, double amplitude_px,
                                                             double smoothness_px);

FrameSample make_sample(std::uint64_t seed, const SampleParams& params);

struct DatasetInfo {
  std::size_t count = 0;  // samples, or frames for video datasets
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t keyframes = 0;
  std::uint64_t seed = 0;
  std::string kind;  // "images" or "video"
};

std::string sample_path(const std::string& dir, std::size_t index);
void write_sample(const std::string& path, const FrameSample& s);
FrameSample load_sample(const std::string& path);

void write_dataset(const std::string& dir, std::size_t count, std::uint64_t seed,
                   const SampleParams& params);
DatasetInfo read_manifest(const std::string& dir);
FrameSample load_dataset_sample(const std::string& dir, std::size_t index);

// Synthetic video: one base image viewed through a smooth time-varying
// affine, plus an independent mask per frame. view maps frame coordinates
// into base-image coordinates; frame 0 is the identity view.
struct VideoParams {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t frames = 60;
  double motion = 1.0;  // 0 produces a static video
};

struct VideoFrame {
  Tensor<double> gt;    // H x W x 3
  Tensor<double> mask;  // H x W x 1
  Affine view;
};

std::string video_frame_path(const std::string& dir, std::size_t index);
void write_video_dataset(const std::string& dir, std::uint64_t seed, const VideoParams& params);
VideoFrame load_video_frame(const std::string& dir, std::size_t index);

}  // namespace kfprop
