#pragma once

#include <Eigen/Dense>

#include "idm/image.hpp"
#include "idm/rng.hpp"

namespace idm {

// One draw of the synthetic degradation: blur std, downsample factor,
// additive noise std on the 0-255 scale, JPEG quality.
struct DegradationParams {
  double sigma = 0.2;
  double r = 1.0;
  double delta = 0.0;
  int q = 100;
};

struct DegradationRanges {
  double sigma_lo = 0.2, sigma_hi = 10.0;
  double r_lo = 1.0, r_hi = 8.0;
  double delta_lo = 0.0, delta_hi = 15.0;
  int q_lo = 50, q_hi = 100;

  void validate() const {
    if (sigma_lo > sigma_hi || r_lo > r_hi || delta_lo > delta_hi || q_lo > q_hi)
      throw std::invalid_argument("DegradationRanges: lower bound exceeds upper bound");
    if (sigma_lo <= 0.0 || r_lo < 1.0 || delta_lo < 0.0 || q_lo < 1 || q_hi > 100)
      throw std::invalid_argument("DegradationRanges: values outside admissible domain");
  }
};

// Square odd-sized kernel, side 2*ceil(3*sigma)+1 (min 3), entries
// proportional to exp(-(dx^2+dy^2)/(2 sigma^2)), normalized to sum 1.
Eigen::MatrixXd gaussian_kernel(double sigma);

// Each field uniform on its interval; q rounded to the nearest integer.
DegradationParams sample_degradation_params(const DegradationRanges& ranges, RngStream& rng);

// Blur with reflect padding.
ImageTensor gaussian_blur(const ImageTensor& img, double sigma);

// Half-pixel-center bilinear resample.
ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w);

// Quantize to 8-bit, baseline JPEG encode at the given quality (4:4:4, no
// chroma subsampling), decode back to floats.
ImageTensor jpeg_roundtrip(const ImageTensor& img, int quality);

// Full pipeline: blur -> bilinear downsample (round-half-up dims, floor 8)
// -> additive Gaussian noise delta/255 with clip -> JPEG round trip ->
// bilinear upsample back to the input size, clip. jpeg_bypass skips the
// quantize+codec stage so the noise-stage arithmetic is exactly checkable.
ImageTensor degrade(const ImageTensor& img, const DegradationParams& p, RngStream rng,
                    bool jpeg_bypass = false);

}  // namespace idm
