#include "idm/eval.hpp"

#include <fstream>

#include "idm/diffusion.hpp"
#include "nlohmann/json.hpp"

namespace idm {

BatchRestoreFn checkpoint_restorer(const DenoiserCheckpoint& ckpt, const InferencePlan& plan,
                                   int workers) {
  return [ckpt, plan, workers](const std::vector<ImageTensor>& inputs, RngStream base) {
    return restore_many(ckpt, inputs, plan, base, workers);
  };
}

BatchRestoreFn identity_restorer() {
  return [](const std::vector<ImageTensor>& inputs, RngStream) { return inputs; };
}

BatchRestoreFn blur_restorer(double sigma) {
  return [sigma](const std::vector<ImageTensor>& inputs, RngStream) {
    std::vector<ImageTensor> out;
    out.reserve(inputs.size());
    for (const auto& img : inputs) out.push_back(gaussian_blur(img, sigma));
    return out;
  };
}

AuthenticityReport authenticity_test(const BatchRestoreFn& f, const std::vector<ImageTensor>& clean_set,
                                     const DegradationRanges& ranges, std::uint64_t seed,
                                     const AuthenticityThresholds& thresholds,
                                     const std::string& grid_png_path) {
  if (clean_set.empty()) throw std::invalid_argument("authenticity_test: empty clean set");
  const RngStream base(seed);

  std::vector<ImageTensor> degraded;
  degraded.reserve(clean_set.size());
  for (std::size_t i = 0; i < clean_set.size(); ++i) {
    RngStream s = base.child(i);
    const DegradationParams p = sample_degradation_params(ranges, s);
    degraded.push_back(degrade(clean_set[i], p, s.child(1)));
  }

  const std::vector<ImageTensor> f_clean = f(clean_set, base.child(1u << 20));
  const std::vector<ImageTensor> f_degraded = f(degraded, base.child(2u << 20));
  const std::vector<ImageTensor> f_twice = f(f_degraded, base.child(3u << 20));

  AuthenticityReport r;
  r.thresholds = thresholds;
  double clean_sum = 0, deg_sum = 0, res_sum = 0, idem_sum = 0;
  for (std::size_t i = 0; i < clean_set.size(); ++i) {
    clean_sum += psnr(f_clean[i], clean_set[i]);
    deg_sum += psnr(degraded[i], clean_set[i]);
    res_sum += psnr(f_degraded[i], clean_set[i]);
    idem_sum += psnr(f_twice[i], f_degraded[i]);
  }
  const double n = static_cast<double>(clean_set.size());
  r.clean_fidelity_db = clean_sum / n;
  r.degraded_psnr_db = deg_sum / n;
  r.restored_psnr_db = res_sum / n;
  r.restore_gain_db = r.restored_psnr_db - r.degraded_psnr_db;
  r.idempotence_db = idem_sum / n;
  r.evaluate();

  if (!grid_png_path.empty()) {
    std::vector<std::vector<ImageTensor>> rows;
    for (std::size_t i = 0; i < clean_set.size(); ++i)
      rows.push_back({degraded[i], f_degraded[i], f_twice[i], clean_set[i]});
    save_png(make_grid(rows), grid_png_path);
  }
  return r;
}

void write_authenticity_json(const AuthenticityReport& r, const std::string& path) {
  nlohmann::json j = {{"clean_fidelity_db", r.clean_fidelity_db},
                      {"restore_gain_db", r.restore_gain_db},
                      {"idempotence_db", r.idempotence_db},
                      {"degraded_psnr_db", r.degraded_psnr_db},
                      {"restored_psnr_db", r.restored_psnr_db},
                      {"tau_clean_db", r.thresholds.tau_clean_db},
                      {"tau_idem_db", r.thresholds.tau_idem_db},
                      {"pass", r.pass}};
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

MetricReport evaluate_dataset(const BatchRestoreFn& f,
                              const std::vector<std::pair<ImageTensor, ImageTensor>>& pairs,
                              std::uint64_t seed) {
  if (pairs.empty()) throw std::invalid_argument("evaluate_dataset: no pairs");
  std::vector<ImageTensor> inputs;
  inputs.reserve(pairs.size());
  for (const auto& [x_d, _] : pairs) inputs.push_back(x_d);
  const std::vector<ImageTensor> restored = f(inputs, RngStream(seed));

  MetricReport report;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    MetricRow row;
    row.id = std::to_string(i);
    row.psnr_db = psnr(restored[i], pairs[i].second);
    row.ssim = ssim(restored[i], pairs[i].second);
    row.sharpness = sharpness(restored[i]);
    report.rows.push_back(std::move(row));
  }
  report.finalize();
  return report;
}

ImageTensor make_grid(const std::vector<std::vector<ImageTensor>>& rows) {
  if (rows.empty() || rows[0].empty()) throw std::invalid_argument("make_grid: empty");
  const ImageTensor& probe = rows[0][0];
  const int cols = static_cast<int>(rows[0].size());
  ImageTensor grid(probe.height * static_cast<int>(rows.size()), probe.width * cols, probe.channels);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<int>(rows[r].size()) != cols) throw std::invalid_argument("make_grid: ragged rows");
    for (int c = 0; c < cols; ++c) {
      const ImageTensor& tile = rows[r][static_cast<std::size_t>(c)];
      if (!tile.same_shape(probe)) throw shape_error("make_grid: tiles must share one shape");
      for (int y = 0; y < probe.height; ++y)
        for (int x = 0; x < probe.width; ++x)
          for (int ch = 0; ch < probe.channels; ++ch)
            grid.at(static_cast<int>(r) * probe.height + y, c * probe.width + x, ch) = tile.at(y, x, ch);
    }
  }
  return grid;
}

}  // namespace idm
