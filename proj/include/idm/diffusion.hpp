#pragma once

#include <functional>
#include <optional>

#include "idm/degrade.hpp"
#include "idm/denoiser.hpp"
#include "idm/image.hpp"

namespace idm {

// ---------------------------------------------------------------------------
// Model-range conversion: the one place [0,1] images meet the [-1,1] chain.

inline nn::Mat<float> to_model_range(const ImageTensor& img) {
  return (2.0f * img.planar().array() - 1.0f).matrix();
}

inline ImageTensor from_model_range(const nn::Mat<float>& m, int h, int w) {
  ImageTensor img(h, w, static_cast<int>(m.rows()));
  Eigen::Map<nn::Mat<float>>(img.data.data(), m.rows(), m.cols()) = (m.array() + 1.0f) * 0.5f;
  img.clip01();
  return img;
}

// ---------------------------------------------------------------------------
// Forward process: x_hat = sqrt(gamma) x0 + sqrt(1-gamma) eps.

template <typename S, typename A, typename B>
auto q_sample(const A& x0, S gamma, const B& eps) {
  if (!(gamma > S(0)) || gamma > S(1)) throw std::invalid_argument("q_sample: gamma in (0,1]");
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols())
    throw shape_error("q_sample: shape mismatch");
  using std::sqrt;
  return (sqrt(gamma) * x0 + sqrt(S(1) - gamma) * eps).eval();
}

// ---------------------------------------------------------------------------
// One reverse step (Langevin-style update). eps_hat is the noise estimate at
// (x_t, gamma); noise, when present, is the pre-drawn standard normal.

template <typename S, typename M>
M ddpm_update(const M& x_t, const M& eps_hat, S alpha, S gamma, const M* noise) {
  if (!(alpha > S(0)) || alpha > S(1)) throw std::invalid_argument("ddpm_update: alpha in (0,1]");
  if (!(gamma > S(0)) || gamma > S(1)) throw std::invalid_argument("ddpm_update: gamma in (0,1]");
  using std::sqrt;
  M next;
  if (gamma < S(1)) {
    const S coef = (S(1) - alpha) / sqrt(S(1) - gamma);
    next = (x_t - coef * eps_hat) / sqrt(alpha);
  } else {
    next = x_t / sqrt(alpha);  // alpha == gamma == 1 degenerate head of the chain
  }
  if (noise) next += sqrt(S(1) - alpha) * (*noise);
  return next;
}

// Scalar convenience overload for spot checks.
template <typename S>
S ddpm_update_scalar(S x_t, S eps_hat, S alpha, S gamma, S noise = S(0), bool add_noise = false) {
  using M = Eigen::Matrix<S, 1, 1>;
  M x;
  x(0, 0) = x_t;
  M e;
  e(0, 0) = eps_hat;
  M n;
  n(0, 0) = noise;
  const M out = ddpm_update<S, M>(x, e, alpha, gamma, add_noise ? &n : nullptr);
  return out(0, 0);
}

// Noise estimate from a network prediction; for x0-targets the prediction is
// clipped to model range first, then converted via the q_sample identity.
template <typename S, typename M>
M eps_from_prediction(const M& pred, const M& x_t, S gamma, const std::string& target) {
  using std::sqrt;
  if (target == "epsilon") return pred;
  if (gamma >= S(1))
    throw numeric_error("eps_from_prediction: gamma == 1 cannot be inverted to a noise estimate");
  const M x0 = pred.array().min(S(1)).max(S(-1)).matrix();
  return ((x_t - sqrt(gamma) * x0) / sqrt(S(1) - gamma)).eval();
}

// ---------------------------------------------------------------------------
// Loss on a frozen batch (pure function of parameters; shared by training
// and the finite-difference gradient checks).

template <typename S>
struct LossBatch {
  nn::Mat<S> cond;    // model-range condition
  nn::Mat<S> noisy;   // x_hat from q_sample
  nn::Mat<S> target;  // eps or model-range x0
  nn::Vec<S> gammas;
  nn::Shape shape;
};

template <typename S>
S lp_loss(const nn::Mat<S>& pred, const nn::Mat<S>& target, int p) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw shape_error("lp_loss: shape mismatch");
  const auto r = (pred - target).array();
  if (p == 1) return r.abs().sum() / static_cast<S>(r.size());
  return r.square().sum() / static_cast<S>(r.size());
}

// norm_elements overrides the mean's denominator so per-worker partial
// batches sum exactly to the full-batch mean (0 = use the batch itself).
template <typename S>
S loss_value(nn::UNet<S>& net, const LossBatch<S>& b, const LossConfig& lc,
             Eigen::Index norm_elements = 0) {
  const auto& pred = net.forward(b.cond, b.noisy, b.gammas, b.shape);
  const auto r = (pred - b.target).array();
  if (!r.isFinite().all()) throw numeric_error("loss_value: non-finite forward output");
  const S inv_n = S(1) / static_cast<S>(norm_elements > 0 ? norm_elements : r.size());
  if (lc.p_norm == 1) return r.abs().sum() * inv_n;
  return r.square().sum() * inv_n;
}

template <typename S>
S loss_and_backward(nn::UNet<S>& net, const LossBatch<S>& b, const LossConfig& lc,
                    Eigen::Index norm_elements = 0) {
  const auto& pred = net.forward(b.cond, b.noisy, b.gammas, b.shape);
  const auto r = (pred - b.target).array();
  if (!r.isFinite().all()) throw numeric_error("loss_and_backward: non-finite forward output");
  const S inv_n = S(1) / static_cast<S>(norm_elements > 0 ? norm_elements : r.size());
  S loss;
  nn::Mat<S> gout;
  if (lc.p_norm == 1) {
    loss = r.abs().sum() * inv_n;
    gout = r.sign().matrix() * inv_n;
  } else {
    loss = r.square().sum() * inv_n;
    gout = (S(2) * r).matrix() * inv_n;
  }
  net.backward(gout);
  return loss;
}

// Per-sample gamma draw: discrete_t picks gamma_t at a uniform t; the
// continuous band picks t uniformly then gamma uniform in (gamma_t,
// gamma_{t-1}), keeping arbitrary inference grids in-distribution.
double draw_gamma(const NoiseSchedule& s, const std::string& gamma_sampling, RngStream& rng);

// Spec-level loss entry point: draws (gamma, eps) per pair and evaluates the
// objective once on the live network.
float diffusion_loss(Denoiser& den, const std::vector<std::pair<ImageTensor, ImageTensor>>& pairs,
                     const NoiseSchedule& schedule, const LossConfig& lc,
                     const std::string& gamma_sampling, RngStream rng);

// ---------------------------------------------------------------------------
// Training.

struct TrainingCorpus {
  // Regression targets and the images the degraded condition is synthesized
  // from. Round 0 uses the same list for both; the extrinsic round points
  // targets at enhanced files while conditions still degrade the originals.
  std::vector<ImageTensor> targets;
  std::vector<ImageTensor> cond_sources;

  std::size_t size() const { return targets.size(); }
};

struct TraceRow {
  std::int64_t step = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
  double wall_ms = 0.0;
};

struct TrainHooks {
  std::string trace_csv_path;   // streamed per step when non-empty
  std::string checkpoint_dir;   // periodic + final checkpoints when non-empty
  std::function<void(const TraceRow&)> on_step;
};

struct TrainResult {
  DenoiserCheckpoint checkpoint;
  std::vector<TraceRow> trace;
};

// Runs total_steps optimizer steps from the given snapshot (which may carry
// Adam state for exact resume). Bit-reproducible for fixed seed and worker
// count. NaN loss aborts with a diagnostic dump.
TrainResult train(const DenoiserCheckpoint& start, const TrainingCorpus& corpus,
                  const DegradationRanges& ranges, const NoiseSchedule& schedule,
                  const TrainConfig& tc, const LossConfig& lc, const TrainHooks& hooks = {});

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows);

// ---------------------------------------------------------------------------
// Sampling.

using DenoiseFn =
    std::function<nn::Mat<float>(const nn::Mat<float>& cond, const nn::Mat<float>& noisy, float gamma)>;

// Full reverse chain on one image: x_K ~ N(0,I), Langevin updates with fresh
// noise on every step except the last, which emits the clipped x0 prediction
// deterministically.
ImageTensor restore(const DenoiseFn& denoise, const std::string& prediction_target,
                    const ImageTensor& x_d, const InferencePlan& plan, RngStream rng);

ImageTensor restore(Denoiser& den, const ImageTensor& x_d, const InferencePlan& plan, RngStream rng);

// Per-step L2 deltas of the chain (diagnostic for convergence behavior).
struct RestoreDiagnostics {
  std::vector<double> step_deltas;  // ||x_{k-1} - x_k|| for each Langevin step
};
ImageTensor restore_with_diagnostics(const DenoiseFn& denoise, const std::string& prediction_target,
                                     const ImageTensor& x_d, const InferencePlan& plan, RngStream rng,
                                     RestoreDiagnostics* diag);

// Parallel enhancement/evaluation helper: each image restored independently
// at batch 1 with stream base.child(image index), so outputs depend on
// neither worker count nor processing order.
std::vector<ImageTensor> restore_many(const DenoiserCheckpoint& ckpt,
                                      const std::vector<ImageTensor>& inputs,
                                      const InferencePlan& plan, RngStream base, int workers);

}  // namespace idm
