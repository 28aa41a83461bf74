#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace idm {

// Training objective: regress the clean image ("x0") or the injected noise
// ("epsilon"), under an L^p pixel loss with p in {1,2}.
struct LossConfig {
  std::string target = "x0";
  int p_norm = 1;

  void validate() const {
    if (target != "x0" && target != "epsilon")
      throw std::invalid_argument("LossConfig: target must be x0 or epsilon");
    if (p_norm != 1 && p_norm != 2) throw std::invalid_argument("LossConfig: p_norm must be 1 or 2");
  }
};

struct TrainConfig {
  int batch_size = 32;
  double learning_rate = 1e-4;  // constant
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::int64_t total_steps = 0;
  std::string gamma_sampling = "continuous_band";  // or "discrete_t"
  std::uint64_t seed = 0;
  int checkpoint_interval = 2000;
  int workers = 0;  // 0 = hardware concurrency

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be >= 0");
    if (total_steps < 0) throw std::invalid_argument("TrainConfig: total_steps must be >= 0");
    if (gamma_sampling != "continuous_band" && gamma_sampling != "discrete_t")
      throw std::invalid_argument("TrainConfig: unknown gamma_sampling mode");
    if (checkpoint_interval < 1) throw std::invalid_argument("TrainConfig: checkpoint_interval >= 1");
  }
};

}  // namespace idm
