#include "idm/config_json.hpp"

#include <fstream>

#include "idm/errors.hpp"

namespace idm {

void require_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const auto& a : allowed)
      if (key == a) {
        ok = true;
        break;
      }
    if (!ok) throw std::invalid_argument(where + ": unknown key '" + key + "'");
  }
}

json to_json(const ScheduleConfig& c) {
  return {{"T", c.T}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end}, {"family", c.family}};
}

ScheduleConfig schedule_config_from_json(const json& j) {
  require_keys(j, {"T", "beta_start", "beta_end", "family"}, "schedule");
  ScheduleConfig c;
  c.T = j.value("T", c.T);
  c.beta_start = j.value("beta_start", c.beta_start);
  c.beta_end = j.value("beta_end", c.beta_end);
  c.family = j.value("family", c.family);
  return c;
}

json to_json(const DenoiserConfig& c) {
  return {{"base_channels", c.base_channels},
          {"channel_multipliers", c.channel_multipliers},
          {"num_res_blocks_per_scale", c.num_res_blocks_per_scale},
          {"attention_scales", std::vector<int>(c.attention_scales.begin(), c.attention_scales.end())},
          {"gamma_embed_dim", c.gamma_embed_dim},
          {"image_channels", c.image_channels},
          {"prediction_target", c.prediction_target}};
}

DenoiserConfig denoiser_config_from_json(const json& j) {
  require_keys(j,
               {"base_channels", "channel_multipliers", "num_res_blocks_per_scale",
                "attention_scales", "gamma_embed_dim", "image_channels", "prediction_target"},
               "model");
  DenoiserConfig c;
  c.base_channels = j.value("base_channels", c.base_channels);
  if (j.contains("channel_multipliers")) c.channel_multipliers = j["channel_multipliers"].get<std::vector<int>>();
  c.num_res_blocks_per_scale = j.value("num_res_blocks_per_scale", c.num_res_blocks_per_scale);
  if (j.contains("attention_scales")) {
    auto v = j["attention_scales"].get<std::vector<int>>();
    c.attention_scales = std::set<int>(v.begin(), v.end());
  }
  c.gamma_embed_dim = j.value("gamma_embed_dim", c.gamma_embed_dim);
  c.image_channels = j.value("image_channels", c.image_channels);
  c.prediction_target = j.value("prediction_target", c.prediction_target);
  c.validate();
  return c;
}

json to_json(const LossConfig& c) { return {{"target", c.target}, {"p_norm", c.p_norm}}; }

LossConfig loss_config_from_json(const json& j) {
  require_keys(j, {"target", "p_norm"}, "loss");
  LossConfig c;
  c.target = j.value("target", c.target);
  c.p_norm = j.value("p_norm", c.p_norm);
  c.validate();
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"total_steps", c.total_steps},
          {"gamma_sampling", c.gamma_sampling},
          {"seed", c.seed},
          {"checkpoint_interval", c.checkpoint_interval},
          {"workers", c.workers}};
}

TrainConfig train_config_from_json(const json& j) {
  require_keys(j,
               {"batch_size", "learning_rate", "beta1", "beta2", "adam_eps", "total_steps",
                "gamma_sampling", "seed", "checkpoint_interval", "workers"},
               "train");
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.gamma_sampling = j.value("gamma_sampling", c.gamma_sampling);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
  c.workers = j.value("workers", c.workers);
  c.validate();
  return c;
}

json to_json(const DegradationRanges& c) {
  return {{"sigma", {c.sigma_lo, c.sigma_hi}},
          {"r", {c.r_lo, c.r_hi}},
          {"delta", {c.delta_lo, c.delta_hi}},
          {"q", {c.q_lo, c.q_hi}}};
}

DegradationRanges degradation_ranges_from_json(const json& j) {
  require_keys(j, {"sigma", "r", "delta", "q"}, "degrade");
  DegradationRanges c;
  auto pair = [&](const char* key, double& lo, double& hi) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2)
      throw std::invalid_argument(std::string("degrade.") + key + ": expected [lo, hi]");
    lo = v[0].get<double>();
    hi = v[1].get<double>();
  };
  pair("sigma", c.sigma_lo, c.sigma_hi);
  pair("r", c.r_lo, c.r_hi);
  pair("delta", c.delta_lo, c.delta_hi);
  if (j.contains("q")) {
    const auto& v = j.at("q");
    if (!v.is_array() || v.size() != 2) throw std::invalid_argument("degrade.q: expected [lo, hi]");
    c.q_lo = v[0].get<int>();
    c.q_hi = v[1].get<int>();
  }
  c.validate();
  return c;
}

json to_json(const RunConfig& c) {
  return {{"schedule", to_json(c.schedule)}, {"model", to_json(c.model)},
          {"train", to_json(c.train)},       {"loss", to_json(c.loss)},
          {"degrade", to_json(c.degrade)},   {"infer", {{"K", c.infer_steps}}},
          {"seed", c.seed}};
}

RunConfig run_config_from_json(const json& j) {
  require_keys(j, {"schedule", "model", "train", "loss", "degrade", "infer", "seed"}, "config");
  RunConfig c;
  if (j.contains("schedule")) c.schedule = schedule_config_from_json(j["schedule"]);
  if (j.contains("model")) c.model = denoiser_config_from_json(j["model"]);
  if (j.contains("train")) c.train = train_config_from_json(j["train"]);
  if (j.contains("loss")) c.loss = loss_config_from_json(j["loss"]);
  if (j.contains("degrade")) c.degrade = degradation_ranges_from_json(j["degrade"]);
  if (j.contains("infer")) {
    require_keys(j["infer"], {"K"}, "infer");
    c.infer_steps = j["infer"].value("K", c.infer_steps);
  }
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw format_error("config parse error in " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace idm
