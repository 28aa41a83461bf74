#include "idm/denoiser.hpp"

#include <cstring>
#include <fstream>

#include "idm/config_json.hpp"
#include "idm/diffusion.hpp"

namespace idm {

namespace {

constexpr char kMagic[4] = {'I', 'D', 'M', 'C'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw format_error("checkpoint truncated");
  return v;
}

}  // namespace

bool DenoiserCheckpoint::has_optimizer_state() const {
  for (const auto& [name, _] : tensors)
    if (name.rfind("opt.", 0) == 0) return true;
  return false;
}

void save_checkpoint(const DenoiserCheckpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write checkpoint: " + path);

  out.write(kMagic, 4);
  write_raw(out, kFormatVersion);

  json header = {{"config", to_json(ckpt.config)},
                 {"schedule", to_json(ckpt.schedule)},
                 {"round", ckpt.training_round},
                 {"step", ckpt.step_count},
                 {"seed", ckpt.rng_seed},
                 {"adam_step", ckpt.adam_step},
                 {"tensor_count", ckpt.tensors.size()}};
  const std::string hs = header.dump();
  write_raw(out, static_cast<std::uint64_t>(hs.size()));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));

  for (const auto& [name, blob] : ckpt.tensors) {
    write_raw(out, static_cast<std::uint64_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_raw(out, static_cast<std::uint64_t>(blob.dims.size()));
    for (std::uint64_t d : blob.dims) write_raw(out, d);
    out.write(reinterpret_cast<const char*>(blob.data.data()),
              static_cast<std::streamsize>(blob.data.size() * sizeof(float)));
  }
  if (!out) throw io_error("checkpoint write failed: " + path);
}

DenoiserCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open checkpoint: " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw format_error("bad checkpoint magic");
  const auto version = read_raw<std::uint32_t>(in);
  if (version != kFormatVersion)
    throw format_error("unsupported checkpoint version: " + std::to_string(version));

  const auto header_len = read_raw<std::uint64_t>(in);
  std::string hs(header_len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw format_error("checkpoint truncated in header");
  json header;
  try {
    header = json::parse(hs);
  } catch (const json::parse_error& e) {
    throw format_error(std::string("checkpoint header parse error: ") + e.what());
  }

  DenoiserCheckpoint ckpt;
  ckpt.config = denoiser_config_from_json(header.at("config"));
  ckpt.schedule = schedule_config_from_json(header.at("schedule"));
  ckpt.training_round = header.at("round").get<int>();
  ckpt.step_count = header.at("step").get<std::int64_t>();
  ckpt.rng_seed = header.at("seed").get<std::uint64_t>();
  ckpt.adam_step = header.value("adam_step", std::int64_t{0});
  const auto tensor_count = header.at("tensor_count").get<std::uint64_t>();

  for (std::uint64_t i = 0; i < tensor_count; ++i) {
    const auto name_len = read_raw<std::uint64_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    const auto rank = read_raw<std::uint64_t>(in);
    ParamBlob blob;
    blob.dims.resize(rank);
    std::uint64_t total = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      blob.dims[d] = read_raw<std::uint64_t>(in);
      total *= blob.dims[d];
    }
    blob.data.resize(total);
    in.read(reinterpret_cast<char*>(blob.data.data()),
            static_cast<std::streamsize>(total * sizeof(float)));
    if (!in) throw format_error("checkpoint truncated in tensor " + name);
    for (float f : blob.data)
      if (!std::isfinite(f)) throw format_error("non-finite value in checkpoint tensor " + name);
    ckpt.tensors[name] = std::move(blob);
  }
  return ckpt;
}

Denoiser Denoiser::from_checkpoint(const DenoiserCheckpoint& ckpt) {
  Denoiser d(ckpt.config);
  load_params(d.net_, ckpt);
  return d;
}

nn::Mat<float> Denoiser::forward(const nn::Mat<float>& cond, const nn::Mat<float>& noisy,
                                 float gamma, int h, int w) {
  nn::Vec<float> g(1);
  g[0] = gamma;
  return net_.forward(cond, noisy, g, {1, h, w});
}

DenoiserCheckpoint init_denoiser(const DenoiserConfig& cfg, const ScheduleConfig& schedule,
                                 RngStream rng) {
  cfg.validate();
  nn::UNet<float> net(cfg);
  net.init_params(rng);
  DenoiserCheckpoint ckpt;
  ckpt.config = cfg;
  ckpt.schedule = schedule;
  ckpt.training_round = 0;
  ckpt.step_count = 0;
  ckpt.rng_seed = rng.seed();
  store_params(net, ckpt);
  return ckpt;
}

GradCheckReport grad_check(const DenoiserConfig& cfg, int image_size, int batch,
                           const LossConfig& loss_cfg, RngStream rng, int n_params) {
  cfg.validate();
  loss_cfg.validate();

  nn::UNet<double> net(cfg);
  net.init_params(rng.child(1));
  // Nudge every parameter (including the zero-init head and attention
  // projections) so all backward paths carry signal.
  RngStream nudge = rng.child(2);
  for (auto* p : net.params())
    for (Eigen::Index i = 0; i < p->value.size(); ++i)
      p->value.data()[i] += 0.02 * nudge.normal();

  const nn::Shape shape{batch, image_size, image_size};
  const int c = cfg.image_channels;
  LossBatch<double> lb;
  lb.shape = shape;
  lb.gammas.resize(batch);

  // p=1 has a kink at zero residual; redraw until all residuals clear it.
  RngStream data = rng.child(3);
  double min_res = 0.0;
  for (int attempt = 0; attempt < 20; ++attempt) {
    lb.cond.resize(c, shape.cols());
    lb.noisy.resize(c, shape.cols());
    lb.target.resize(c, shape.cols());
    nn::Mat<double> x0(c, shape.cols()), eps(c, shape.cols());
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
      const double mag = data.uniform(0.2, 0.9);
      x0.data()[i] = data.uniform() < 0.5 ? -mag : mag;
      lb.cond.data()[i] = data.uniform(-1.0, 1.0);
      eps.data()[i] = data.normal();
    }
    for (int b = 0; b < batch; ++b) lb.gammas[b] = data.uniform(0.1, 0.95);
    for (int b = 0; b < batch; ++b) {
      const auto cols = Eigen::seqN(b * shape.hw(), shape.hw());
      lb.noisy(Eigen::all, cols) = q_sample(x0(Eigen::all, cols), lb.gammas[b], eps(Eigen::all, cols));
      lb.target(Eigen::all, cols) = loss_cfg.target == "x0" ? x0(Eigen::all, cols) : eps(Eigen::all, cols);
    }
    const auto& pred = net.forward(lb.cond, lb.noisy, lb.gammas, lb.shape);
    min_res = (pred - lb.target).array().abs().minCoeff();
    if (loss_cfg.p_norm != 1 || min_res > 1e-4) break;
  }
  if (loss_cfg.p_norm == 1 && min_res <= 1e-4)
    throw numeric_error("grad_check: could not find a kink-free evaluation point");

  net.zero_grads();
  loss_and_backward(net, lb, loss_cfg);
  for (auto* p : net.params())
    if (!p->grad.allFinite()) throw numeric_error("grad_check: non-finite analytic gradient");

  Eigen::Index total = 0;
  for (auto* p : net.params()) total += p->value.size();

  GradCheckReport report;
  report.fd_step = 1e-5;
  report.min_abs_residual = min_res;
  RngStream pick = rng.child(4);
  for (int k = 0; k < n_params; ++k) {
    const Eigen::Index flat = pick.uniform_int(0, total - 1);
    Eigen::Index off = flat;
    nn::Param<double>* param = nullptr;
    for (auto* p : net.params()) {
      if (off < p->value.size()) {
        param = p;
        break;
      }
      off -= p->value.size();
    }
    const double g_an = param->grad.data()[off];
    const double saved = param->value.data()[off];
    param->value.data()[off] = saved + report.fd_step;
    const double lp = loss_value(net, lb, loss_cfg);
    param->value.data()[off] = saved - report.fd_step;
    const double lm = loss_value(net, lb, loss_cfg);
    param->value.data()[off] = saved;
    const double g_fd = (lp - lm) / (2.0 * report.fd_step);
    const double denom = std::max({std::abs(g_fd), std::abs(g_an), 1e-6});
    report.max_rel_error = std::max(report.max_rel_error, std::abs(g_fd - g_an) / denom);
    ++report.params_checked;
  }
  return report;
}

}  // namespace idm
