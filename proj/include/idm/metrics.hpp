#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "idm/image.hpp"

namespace idm {

inline constexpr double kPsnrCap = 99.0;

// 10*log10(1/MSE) on the [0,1] scale over all channels; MSE == 0 caps at 99.
double psnr(const ImageTensor& a, const ImageTensor& b);

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2,
// C2 = 0.03^2, Rec. 601 luminance for RGB, mean over valid window positions.
double ssim(const ImageTensor& a, const ImageTensor& b);

// 3x3 Laplacian response on luminance, (H-2) x (W-2) interior.
Eigen::MatrixXd laplacian_response(const ImageTensor& img);

// Variance of the Laplacian response (population variance).
double sharpness(const ImageTensor& img);

struct MetricRow {
  std::string id;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double sharpness = 0.0;
};

struct Aggregate {
  double mean = 0.0, median = 0.0, std_dev = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::map<std::string, Aggregate> aggregates;  // keyed psnr_db / ssim / sharpness

  void finalize();  // recompute aggregates from rows
  void write_csv(const std::string& path) const;
  void write_json(const std::string& path) const;
};

Aggregate aggregate_of(std::vector<double> values);

}  // namespace idm
