#include "idm/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace idm {

Eigen::MatrixXd gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  const int side = 2 * radius + 1;
  Eigen::MatrixXd k(side, side);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double dy = y - radius, dx = x - radius;
      k(y, x) = std::exp(-(dx * dx + dy * dy) * inv);
    }
  k /= k.sum();
  return k;
}

DegradationParams sample_degradation_params(const DegradationRanges& ranges, RngStream& rng) {
  ranges.validate();
  DegradationParams p;
  p.sigma = rng.uniform(ranges.sigma_lo, ranges.sigma_hi);
  p.r = rng.uniform(ranges.r_lo, ranges.r_hi);
  p.delta = rng.uniform(ranges.delta_lo, ranges.delta_hi);
  p.q = static_cast<int>(std::lround(rng.uniform(static_cast<double>(ranges.q_lo), static_cast<double>(ranges.q_hi))));
  return p;
}

namespace {

// reflect-101 with repeated folding, valid for any offset
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = std::abs(i) % period;
  return i < n ? i : period - i;
}

}  // namespace

ImageTensor gaussian_blur(const ImageTensor& img, double sigma) {
  const Eigen::MatrixXd k2 = gaussian_kernel(sigma);
  const int side = static_cast<int>(k2.rows());
  if (side > 2 * std::min(img.height, img.width) + 1)
    throw degradation_error("gaussian_blur: kernel larger than image support");
  const int radius = (side - 1) / 2;

  // The normalized 2D kernel is the outer product of the normalized 1D
  // profile, so two separable passes reproduce it exactly.
  Eigen::VectorXd k1(side);
  for (int i = 0; i < side; ++i) {
    const double d = i - radius;
    k1[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  k1 /= k1.sum();

  const int h = img.height, w = img.width, c = img.channels;
  ImageTensor tmp(h, w, c), out(h, w, c);

  // horizontal pass
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += k1[i + radius] * img.at(y, reflect_index(x + i, w), ch);
        tmp.at(y, x, ch) = static_cast<float>(acc);
      }
  // vertical pass
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += k1[i + radius] * tmp.at(reflect_index(y + i, h), x, ch);
        out.at(y, x, ch) = static_cast<float>(acc);
      }
  return out;
}

ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w) {
  ImageTensor out(out_h, out_w, img.channels);  // ctor enforces the >= 8 floor

  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const float wy = static_cast<float>(fy - y0);
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const float wx = static_cast<float>(fx - x0);
      for (int c = 0; c < img.channels; ++c) {
        const float top = img.at(y0, x0, c) * (1.0f - wx) + img.at(y0, x1, c) * wx;
        const float bot = img.at(y1, x0, c) * (1.0f - wx) + img.at(y1, x1, c) * wx;
        out.at(y, x, c) = top * (1.0f - wy) + bot * wy;
      }
    }
  }
  return out;
}

ImageTensor degrade(const ImageTensor& img, const DegradationParams& p, RngStream rng,
                    bool jpeg_bypass) {
  if (img.height < 8 || img.width < 8) throw std::invalid_argument("degrade: invalid image");
  if (!(p.sigma > 0.0) || p.r < 1.0 || p.delta < 0.0 || p.q < 1 || p.q > 100)
    throw std::invalid_argument("degrade: invalid params");

  ImageTensor work = gaussian_blur(img, p.sigma);

  const int dh = std::max(8, static_cast<int>(std::floor(img.height / p.r + 0.5)));
  const int dw = std::max(8, static_cast<int>(std::floor(img.width / p.r + 0.5)));
  if (dh != img.height || dw != img.width) work = resize_bilinear(work, dh, dw);

  if (p.delta > 0.0) {
    const float std01 = static_cast<float>(p.delta / 255.0);
    for (Eigen::Index i = 0; i < work.data.size(); ++i)
      work.data[i] += std01 * static_cast<float>(rng.normal());
    work.clip01();
  }

  if (!jpeg_bypass) work = jpeg_roundtrip(work, p.q);

  if (dh != img.height || dw != img.width) work = resize_bilinear(work, img.height, img.width);
  work.clip01();
  return work;
}

}  // namespace idm
