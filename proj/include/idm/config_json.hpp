#pragma once

#include <string>
#include <vector>

#include "idm/degrade.hpp"
#include "idm/diffusion_config.hpp"
#include "idm/nn/unet.hpp"
#include "idm/schedule.hpp"
#include "nlohmann/json.hpp"

namespace idm {

using nlohmann::json;

// Strict object parsing: every run config rejects unknown keys so typos
// cannot silently fall back to defaults.
void require_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where);

json to_json(const ScheduleConfig& c);
ScheduleConfig schedule_config_from_json(const json& j);

json to_json(const DenoiserConfig& c);
DenoiserConfig denoiser_config_from_json(const json& j);

json to_json(const LossConfig& c);
LossConfig loss_config_from_json(const json& j);

json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const json& j);

json to_json(const DegradationRanges& c);
DegradationRanges degradation_ranges_from_json(const json& j);

// Whole-run configuration consumed by the CLI.
struct RunConfig {
  ScheduleConfig schedule;
  DenoiserConfig model;
  TrainConfig train;
  LossConfig loss;
  DegradationRanges degrade;
  int infer_steps = 10;
  std::uint64_t seed = 0;
};

json to_json(const RunConfig& c);
RunConfig run_config_from_json(const json& j);
RunConfig load_run_config(const std::string& path);

}  // namespace idm
