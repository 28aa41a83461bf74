#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace idm {

// Forward-process schedule: per-step retention alpha_t and its running
// product gamma_t = prod_{i<=t} alpha_i, t = 1..T. All arithmetic in double
// so gamma_T stays accurate for large T.
struct NoiseSchedule {
  int T = 0;
  Eigen::VectorXd alphas;  // alphas[t-1] = alpha_t
  Eigen::VectorXd gammas;  // gammas[t-1] = gamma_t

  double alpha(int t) const { return alphas[t - 1]; }
  double gamma(int t) const { return gammas[t - 1]; }
  // gamma_{t-1} with the gamma_0 := 1 convention.
  double gamma_prev(int t) const { return t > 1 ? gammas[t - 2] : 1.0; }
};

struct ScheduleConfig {
  int T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::string family = "linear";
};

inline NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("make_linear_schedule: T must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw std::invalid_argument("make_linear_schedule: need 0 < beta_start <= beta_end < 1");

  NoiseSchedule s;
  s.T = T;
  s.alphas.resize(T);
  s.gammas.resize(T);
  double running = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
    const double beta = beta_start + frac * (beta_end - beta_start);
    s.alphas[t - 1] = 1.0 - beta;
    running *= s.alphas[t - 1];
    s.gammas[t - 1] = running;
  }
  return s;
}

inline NoiseSchedule make_schedule(const ScheduleConfig& cfg) {
  if (cfg.family != "linear")
    throw std::invalid_argument("make_schedule: unknown schedule family: " + cfg.family);
  return make_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
}

// K-step inference grid over a T-step schedule. The effective alphas
// telescope so the sampling update stays valid verbatim on the coarse chain.
struct InferencePlan {
  int K = 0;
  std::vector<int> t_indices;        // strictly increasing, last element = T
  Eigen::VectorXd effective_alphas;  // [k-1] = gamma_{t_k} / gamma_{t_{k-1}}
  Eigen::VectorXd effective_gammas;  // [k-1] = gamma_{t_k}

  double alpha(int k) const { return effective_alphas[k - 1]; }
  double gamma(int k) const { return effective_gammas[k - 1]; }
};

inline InferencePlan make_inference_plan(const NoiseSchedule& s, int K) {
  if (K < 1 || K > s.T) throw std::invalid_argument("make_inference_plan: need 1 <= K <= T");

  InferencePlan plan;
  plan.K = K;
  plan.t_indices.resize(K);
  for (int k = 1; k <= K; ++k) {
    const double pos = static_cast<double>(k) * static_cast<double>(s.T) / static_cast<double>(K);
    plan.t_indices[k - 1] = static_cast<int>(std::lround(pos));
  }
  plan.t_indices[K - 1] = s.T;
  // dedupe upward; K <= T guarantees room
  for (int k = 1; k < K; ++k)
    if (plan.t_indices[k] <= plan.t_indices[k - 1]) plan.t_indices[k] = plan.t_indices[k - 1] + 1;
  for (int k = K - 2; k >= 0; --k)
    if (plan.t_indices[k] >= plan.t_indices[k + 1]) plan.t_indices[k] = plan.t_indices[k + 1] - 1;
  if (plan.t_indices[0] < 1) throw std::invalid_argument("make_inference_plan: degenerate grid");

  plan.effective_alphas.resize(K);
  plan.effective_gammas.resize(K);
  double prev_gamma = 1.0;
  for (int k = 1; k <= K; ++k) {
    const double g = s.gamma(plan.t_indices[k - 1]);
    plan.effective_gammas[k - 1] = g;
    plan.effective_alphas[k - 1] = g / prev_gamma;
    prev_gamma = g;
  }
  return plan;
}

}  // namespace idm
