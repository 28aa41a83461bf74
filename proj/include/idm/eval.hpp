#pragma once

#include <functional>

#include "idm/degrade.hpp"
#include "idm/denoiser.hpp"
#include "idm/metrics.hpp"
#include "idm/schedule.hpp"

namespace idm {

// A restorer applied to a whole set; the stream seeds any stochastic
// sampling. Lets the harness run identity/blur baselines and oracles
// through the same code path as checkpoint-backed models.
using BatchRestoreFn =
    std::function<std::vector<ImageTensor>(const std::vector<ImageTensor>&, RngStream)>;

BatchRestoreFn checkpoint_restorer(const DenoiserCheckpoint& ckpt, const InferencePlan& plan,
                                   int workers);
BatchRestoreFn identity_restorer();
BatchRestoreFn blur_restorer(double sigma);

struct AuthenticityThresholds {
  double tau_clean_db = 30.0;
  double tau_idem_db = 28.0;
};

// Measurable relaxation of the fixed-point criterion: a restorer should act
// near-identically on clean inputs, improve degraded ones, and be stable
// under a second application.
struct AuthenticityReport {
  double clean_fidelity_db = 0.0;  // mean PSNR(f(x), x), clean x
  double restore_gain_db = 0.0;    // mean PSNR(f(x_d), x) - mean PSNR(x_d, x)
  double idempotence_db = 0.0;     // mean PSNR(f(f(x_d)), f(x_d))
  double degraded_psnr_db = 0.0;
  double restored_psnr_db = 0.0;
  AuthenticityThresholds thresholds;
  bool pass = false;

  void evaluate() {
    pass = clean_fidelity_db >= thresholds.tau_clean_db &&
           idempotence_db >= thresholds.tau_idem_db && restore_gain_db > 0.0;
  }
};

void write_authenticity_json(const AuthenticityReport& r, const std::string& path);

// Degrades each clean image with recorded params, applies f to the clean
// set, to the degraded set, and to the result again, and aggregates the
// three statistics. grid_png_path, when set, receives rows of
// (degraded | f(x_d) | f(f(x_d)) | ground truth).
AuthenticityReport authenticity_test(const BatchRestoreFn& f, const std::vector<ImageTensor>& clean_set,
                                     const DegradationRanges& ranges, std::uint64_t seed,
                                     const AuthenticityThresholds& thresholds,
                                     const std::string& grid_png_path = "");

// Restores each pair's degraded side and scores against the reference.
MetricReport evaluate_dataset(const BatchRestoreFn& f,
                              const std::vector<std::pair<ImageTensor, ImageTensor>>& pairs,
                              std::uint64_t seed);

// Horizontal concatenation of equal-sized images into column-tiled rows.
ImageTensor make_grid(const std::vector<std::vector<ImageTensor>>& rows);

}  // namespace idm
