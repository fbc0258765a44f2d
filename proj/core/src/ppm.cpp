#include "kfprop/ppm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace kfprop {

namespace {

void write_ppm_impl(const std::string& path, const double* data, std::size_t h, std::size_t w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(w * 3);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t i = 0; i < w * 3; ++i) {
      double v = data[y * w * 3 + i];
      v = std::clamp(v, 0.0, 1.0);
      row[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

// Skips PPM whitespace and '#' comments, then reads one unsigned decimal token.
std::size_t read_token(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF || c < '0' || c > '9')
    throw std::runtime_error("'" + path + "': malformed PPM header");
  std::size_t v = 0;
  while (c >= '0' && c <= '9') {
    v = v * 10 + static_cast<std::size_t>(c - '0');
    c = in.get();
  }
  if (c != EOF) in.unget();
  return v;
}

}  // namespace

void write_ppm(const std::string& path, const Tensor<double>& img) {
  if (img.rank() != 3 || img.dim(2) != 3)
    throw std::invalid_argument("write_ppm expects HxWx3, got " + shape_str(img.shape));
  write_ppm_impl(path, img.data.data(), img.dim(0), img.dim(1));
}

void write_ppm(const std::string& path, const Tensor<float>& img) {
  write_ppm(path, cast_tensor<double>(img));
}

Tensor<double> read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '6') throw std::runtime_error("'" + path + "': not a P6 PPM");
  std::size_t w = read_token(in, path);
  std::size_t h = read_token(in, path);
  std::size_t maxval = read_token(in, path);
  if (maxval == 0 || maxval > 255)
    throw std::runtime_error("'" + path + "': unsupported maxval " + std::to_string(maxval));
  in.get();  // single whitespace after maxval
  std::vector<unsigned char> raw(h * w * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw std::runtime_error("'" + path + "': truncated pixel data");
  Tensor<double> img(Shape{h, w, 3});
  for (std::size_t i = 0; i < raw.size(); ++i)
    img.data[i] = static_cast<double>(raw[i]) / static_cast<double>(maxval);
  return img;
}

}  // namespace kfprop
