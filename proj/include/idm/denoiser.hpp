#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "idm/diffusion_config.hpp"
#include "idm/nn/unet.hpp"
#include "idm/rng.hpp"
#include "idm/schedule.hpp"

namespace idm {

struct ParamBlob {
  std::vector<std::uint64_t> dims;  // row-major declared dims {rows, cols}
  std::vector<float> data;          // column-major payload, matching Eigen storage
};

// Serializable snapshot of the denoiser: model parameters, optional Adam
// moments (names prefixed "opt."), architecture + schedule configs and
// provenance counters. Binary format: magic "IDMC", u32 version, u64 JSON
// header length + header, then per tensor: u64 name length + name, u64 rank,
// u64 dims, raw little-endian f32 payload.
struct DenoiserCheckpoint {
  DenoiserConfig config;
  ScheduleConfig schedule;
  int training_round = 0;  // 0 = first intrinsic round, 1 = extrinsic round
  std::int64_t step_count = 0;
  std::uint64_t rng_seed = 0;
  std::int64_t adam_step = 0;
  std::map<std::string, ParamBlob> tensors;

  bool has_optimizer_state() const;
};

void save_checkpoint(const DenoiserCheckpoint& ckpt, const std::string& path);
DenoiserCheckpoint load_checkpoint(const std::string& path);

// Runtime wrapper pairing a float network with its config.
class Denoiser {
 public:
  explicit Denoiser(const DenoiserConfig& cfg) : net_(cfg) {}

  static Denoiser from_checkpoint(const DenoiserCheckpoint& ckpt);

  nn::UNet<float>& net() { return net_; }
  const DenoiserConfig& config() const { return net_.config(); }

  // Single-image convenience forward.
  nn::Mat<float> forward(const nn::Mat<float>& cond, const nn::Mat<float>& noisy, float gamma,
                         int h, int w);

 private:
  nn::UNet<float> net_;
};

// Fresh fan-in-initialized checkpoint (no optimizer state).
DenoiserCheckpoint init_denoiser(const DenoiserConfig& cfg, const ScheduleConfig& schedule,
                                 RngStream rng);

// Parameter transfer between a live net and a checkpoint.
template <typename S>
void load_params(nn::UNet<S>& net, const DenoiserCheckpoint& ckpt) {
  for (auto* p : net.params()) {
    auto it = ckpt.tensors.find(p->name);
    if (it == ckpt.tensors.end())
      throw format_error("checkpoint missing tensor: " + p->name);
    const auto& blob = it->second;
    if (blob.dims.size() != 2 || static_cast<Eigen::Index>(blob.dims[0]) != p->value.rows() ||
        static_cast<Eigen::Index>(blob.dims[1]) != p->value.cols())
      throw format_error("checkpoint tensor shape mismatch: " + p->name);
    for (Eigen::Index i = 0; i < p->value.size(); ++i)
      p->value.data()[i] = static_cast<S>(blob.data[static_cast<std::size_t>(i)]);
  }
}

template <typename S>
void store_params(const nn::UNet<S>& net, DenoiserCheckpoint& ckpt) {
  auto& mutable_net = const_cast<nn::UNet<S>&>(net);
  for (auto* p : mutable_net.params()) {
    ParamBlob blob;
    blob.dims = {static_cast<std::uint64_t>(p->value.rows()), static_cast<std::uint64_t>(p->value.cols())};
    blob.data.resize(static_cast<std::size_t>(p->value.size()));
    for (Eigen::Index i = 0; i < p->value.size(); ++i)
      blob.data[static_cast<std::size_t>(i)] = static_cast<float>(p->value.data()[i]);
    ckpt.tensors[p->name] = std::move(blob);
  }
}

// Finite-difference verification of the analytic gradients on a tiny
// double-precision network.
struct GradCheckReport {
  double max_rel_error = 0.0;
  int params_checked = 0;
  double fd_step = 0.0;
  double min_abs_residual = 0.0;
};

GradCheckReport grad_check(const DenoiserConfig& cfg, int image_size, int batch,
                           const LossConfig& loss_cfg, RngStream rng, int n_params = 200);

}  // namespace idm
