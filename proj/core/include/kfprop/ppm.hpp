#pragma once

#include <string>

#include "kfprop/tensor.hpp"

namespace kfprop {

// Binary 8-bit PPM (P6). Images are HxWx3 with values in [0,1]; writes clamp.
void write_ppm(const std::string& path, const Tensor<double>& img);
void write_ppm(const std::string& path, const Tensor<float>& img);
Tensor<double> read_ppm(const std::string& path);

}  // namespace kfprop
