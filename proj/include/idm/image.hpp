#pragma once

#include <Eigen/Dense>
#include <string>

#include "idm/errors.hpp"

namespace idm {

// H x W x C image with real intensities in [0,1], stored interleaved
// row-major (the memory layout doubles as a column-major (C, H*W) matrix,
// so the planar view below is a zero-copy Map).
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  Eigen::ArrayXf data;

  ImageTensor() = default;
  ImageTensor(int h, int w, int c) : height(h), width(w), channels(c) {
    if (h < 8 || w < 8) throw std::invalid_argument("ImageTensor: height and width must be >= 8");
    if (c != 1 && c != 3) throw std::invalid_argument("ImageTensor: channels must be 1 or 3");
    data = Eigen::ArrayXf::Zero(static_cast<Eigen::Index>(h) * w * c);
  }

  float& at(int y, int x, int c) { return data[(static_cast<Eigen::Index>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c) const { return data[(static_cast<Eigen::Index>(y) * width + x) * channels + c]; }

  Eigen::Index pixel_count() const { return static_cast<Eigen::Index>(height) * width; }
  bool same_shape(const ImageTensor& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  void clip01() { data = data.min(1.0f).max(0.0f); }

  // Planar (C, H*W) views over the same storage.
  Eigen::Map<Eigen::MatrixXf> planar() {
    return {data.data(), channels, pixel_count()};
  }
  Eigen::Map<const Eigen::MatrixXf> planar() const {
    return {data.data(), channels, pixel_count()};
  }
};

// Rec. 601 luminance as an (H*W) column vector; grayscale passes through.
Eigen::VectorXf luminance(const ImageTensor& img);

// PNG I/O. Load maps 8/16-bit samples linearly to [0,1], keeps the channel
// count (gray -> 1, RGB -> 3), drops alpha. Save quantizes round-half-up to
// 8-bit.
ImageTensor load_png(const std::string& path);
void save_png(const ImageTensor& img, const std::string& path);

inline unsigned char quantize8(float v) {
  const float q = std::floor(v * 255.0f + 0.5f);
  return static_cast<unsigned char>(std::min(255.0f, std::max(0.0f, q)));
}

}  // namespace idm
