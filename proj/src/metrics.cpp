#include "idm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "nlohmann/json.hpp"

namespace idm {

double psnr(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_shape(b)) throw shape_error("psnr: shape mismatch");
  const double mse =
      (a.data.cast<double>() - b.data.cast<double>()).square().sum() / static_cast<double>(a.data.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

Eigen::MatrixXd to_luma_matrix(const ImageTensor& img) {
  const Eigen::VectorXf y = luminance(img);
  Eigen::MatrixXd m(img.height, img.width);
  for (int row = 0; row < img.height; ++row)
    for (int col = 0; col < img.width; ++col)
      m(row, col) = static_cast<double>(y[static_cast<Eigen::Index>(row) * img.width + col]);
  return m;
}

// valid-region convolution with a separable window
Eigen::MatrixXd window_filter(const Eigen::MatrixXd& m, const Eigen::VectorXd& w1) {
  const int k = static_cast<int>(w1.size());
  const int oh = static_cast<int>(m.rows()) - k + 1;
  const int ow = static_cast<int>(m.cols()) - k + 1;
  Eigen::MatrixXd tmp(m.rows(), ow);
  for (int y = 0; y < m.rows(); ++y)
    for (int x = 0; x < ow; ++x) tmp(y, x) = m.row(y).segment(x, k).dot(w1);
  Eigen::MatrixXd out(oh, ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) out(y, x) = tmp.col(x).segment(y, k).dot(w1);
  return out;
}

}  // namespace

double ssim(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_shape(b)) throw shape_error("ssim: shape mismatch");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  if (a.height < kWin || a.width < kWin) throw shape_error("ssim: image smaller than 11x11 window");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;

  Eigen::VectorXd w(kWin);
  for (int i = 0; i < kWin; ++i) {
    const double d = i - (kWin - 1) / 2;
    w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
  }
  w /= w.sum();

  const Eigen::MatrixXd x = to_luma_matrix(a);
  const Eigen::MatrixXd y = to_luma_matrix(b);

  const Eigen::MatrixXd mu_x = window_filter(x, w);
  const Eigen::MatrixXd mu_y = window_filter(y, w);
  const Eigen::MatrixXd xx = window_filter(x.cwiseProduct(x), w);
  const Eigen::MatrixXd yy = window_filter(y.cwiseProduct(y), w);
  const Eigen::MatrixXd xy = window_filter(x.cwiseProduct(y), w);

  const Eigen::ArrayXXd var_x = xx.array() - mu_x.array().square();
  const Eigen::ArrayXXd var_y = yy.array() - mu_y.array().square();
  const Eigen::ArrayXXd cov = xy.array() - (mu_x.array() * mu_y.array());

  const Eigen::ArrayXXd num =
      (2.0 * mu_x.array() * mu_y.array() + c1) * (2.0 * cov + c2);
  const Eigen::ArrayXXd den =
      (mu_x.array().square() + mu_y.array().square() + c1) * (var_x + var_y + c2);
  return (num / den).mean();
}

Eigen::MatrixXd laplacian_response(const ImageTensor& img) {
  const Eigen::MatrixXd y = to_luma_matrix(img);
  const int oh = img.height - 2, ow = img.width - 2;
  Eigen::MatrixXd out(oh, ow);
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c)
      out(r, c) = y(r, c + 1) + y(r + 2, c + 1) + y(r + 1, c) + y(r + 1, c + 2) - 4.0 * y(r + 1, c + 1);
  return out;
}

double sharpness(const ImageTensor& img) {
  const Eigen::MatrixXd lap = laplacian_response(img);
  const double mean = lap.mean();
  return (lap.array() - mean).square().mean();
}

Aggregate aggregate_of(std::vector<double> values) {
  Aggregate a;
  if (values.empty()) return a;
  const double n = static_cast<double>(values.size());
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - a.mean) * (v - a.mean);
  a.std_dev = std::sqrt(ss / n);
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  a.median = values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
  return a;
}

void MetricReport::finalize() {
  std::vector<double> p, s, sh;
  for (const auto& r : rows) {
    p.push_back(r.psnr_db);
    s.push_back(r.ssim);
    sh.push_back(r.sharpness);
  }
  aggregates["psnr_db"] = aggregate_of(p);
  aggregates["ssim"] = aggregate_of(s);
  aggregates["sharpness"] = aggregate_of(sh);
}

void MetricReport::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << "id,psnr_db,ssim,sharpness\n";
  out.precision(10);
  for (const auto& r : rows) out << r.id << ',' << r.psnr_db << ',' << r.ssim << ',' << r.sharpness << '\n';
}

void MetricReport::write_json(const std::string& path) const {
  nlohmann::json j;
  for (const auto& [key, agg] : aggregates)
    j[key] = {{"mean", agg.mean}, {"median", agg.median}, {"std", agg.std_dev}};
  j["count"] = rows.size();
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace idm
