#include "idm/diffusion.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include "idm/config_json.hpp"
#include "idm/parallel.hpp"

namespace idm {

double draw_gamma(const NoiseSchedule& s, const std::string& gamma_sampling, RngStream& rng) {
  const int t = static_cast<int>(rng.uniform_int(1, s.T));
  if (gamma_sampling == "discrete_t") return s.gamma(t);
  return rng.uniform(s.gamma(t), s.gamma_prev(t));
}

namespace {

// Fill one sample's model-range slices from a (target, condition-source)
// pair, drawing degradation, gamma and noise from its private stream.
void fill_sample(const ImageTensor& target_img, const ImageTensor& src_img,
                 const DegradationRanges& ranges, const NoiseSchedule& schedule,
                 const LossConfig& lc, const std::string& gamma_sampling, RngStream sample_rng,
                 LossBatch<float>& lb, int local_index) {
  const Eigen::Index hw = lb.shape.hw();
  const auto cols = Eigen::seqN(local_index * hw, hw);

  const DegradationParams p = sample_degradation_params(ranges, sample_rng);
  const ImageTensor x_d = degrade(src_img, p, sample_rng.child(1));
  const double gamma = draw_gamma(schedule, gamma_sampling, sample_rng);

  RngStream eps_rng = sample_rng.child(2);
  const nn::Mat<float> x0m = to_model_range(target_img);
  nn::Mat<float> eps(x0m.rows(), x0m.cols());
  for (Eigen::Index i = 0; i < eps.size(); ++i)
    eps.data()[i] = static_cast<float>(eps_rng.normal());

  lb.cond(Eigen::all, cols) = to_model_range(x_d);
  lb.gammas[local_index] = static_cast<float>(gamma);
  lb.noisy(Eigen::all, cols) = q_sample(x0m, static_cast<float>(gamma), eps);
  lb.target(Eigen::all, cols) = lc.target == "x0" ? x0m : eps;
}

DenoiserCheckpoint snapshot(nn::UNet<float>& net, const DenoiserCheckpoint& start,
                            const TrainConfig& tc, std::int64_t step, std::int64_t adam_step,
                            const std::vector<nn::Mat<float>>& m,
                            const std::vector<nn::Mat<float>>& v) {
  DenoiserCheckpoint ckpt;
  ckpt.config = start.config;
  ckpt.schedule = start.schedule;
  ckpt.training_round = start.training_round;
  ckpt.step_count = step;
  ckpt.rng_seed = tc.seed;
  ckpt.adam_step = adam_step;
  store_params(net, ckpt);
  const auto& params = net.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (const auto& [prefix, mat] : {std::pair{"opt.m.", &m[i]}, std::pair{"opt.v.", &v[i]}}) {
      ParamBlob blob;
      blob.dims = {static_cast<std::uint64_t>(mat->rows()), static_cast<std::uint64_t>(mat->cols())};
      blob.data.assign(mat->data(), mat->data() + mat->size());
      ckpt.tensors[prefix + params[i]->name] = std::move(blob);
    }
  }
  return ckpt;
}

}  // namespace

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write trace: " + path);
  out << "step,loss,learning_rate,wall_ms\n";
  out << std::setprecision(17);
  for (const auto& r : rows)
    out << r.step << ',' << r.loss << ',' << r.learning_rate << ',' << r.wall_ms << '\n';
}

TrainResult train(const DenoiserCheckpoint& start, const TrainingCorpus& corpus,
                  const DegradationRanges& ranges, const NoiseSchedule& schedule,
                  const TrainConfig& tc, const LossConfig& lc, const TrainHooks& hooks) {
  tc.validate();
  lc.validate();
  ranges.validate();
  if (corpus.size() == 0 || corpus.targets.size() != corpus.cond_sources.size())
    throw std::invalid_argument("train: corpus empty or mismatched");
  if (static_cast<int>(corpus.size()) < tc.batch_size &&
      corpus.size() != 1)  // single-image overfit runs are allowed
    throw std::invalid_argument("train: corpus smaller than batch size");

  const ImageTensor& probe = corpus.targets[0];
  const int h = probe.height, w = probe.width, c = probe.channels;
  if (c != start.config.image_channels) throw shape_error("train: corpus channels != model channels");
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (corpus.targets[i].height != h || corpus.targets[i].width != w ||
        !corpus.cond_sources[i].same_shape(corpus.targets[i]))
      throw shape_error("train: corpus images must share one shape");

  const int workers = resolve_workers(tc.workers, tc.batch_size);
  std::vector<std::unique_ptr<nn::UNet<float>>> nets;
  for (int i = 0; i < workers; ++i) {
    nets.push_back(std::make_unique<nn::UNet<float>>(start.config));
    load_params(*nets[i], start);
  }
  auto& net0 = *nets[0];
  const auto& params = net0.params();

  // Adam state, resumed from the snapshot when present.
  std::vector<nn::Mat<float>> m(params.size()), v(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i].setZero(params[i]->value.rows(), params[i]->value.cols());
    v[i].setZero(params[i]->value.rows(), params[i]->value.cols());
    for (const auto& [prefix, mat] : {std::pair{"opt.m.", &m[i]}, std::pair{"opt.v.", &v[i]}}) {
      auto it = start.tensors.find(prefix + params[i]->name);
      if (it != start.tensors.end()) {
        if (static_cast<Eigen::Index>(it->second.data.size()) != mat->size())
          throw format_error("train: optimizer tensor size mismatch for " + params[i]->name);
        std::copy(it->second.data.begin(), it->second.data.end(), mat->data());
      }
    }
  }
  std::int64_t adam_step = start.adam_step;

  const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
  const Eigen::Index total_elements = static_cast<Eigen::Index>(tc.batch_size) * c * hw;

  std::ofstream trace_out;
  if (!hooks.trace_csv_path.empty()) {
    trace_out.open(hooks.trace_csv_path);
    if (!trace_out) throw io_error("cannot write trace: " + hooks.trace_csv_path);
    trace_out << "step,loss,learning_rate,wall_ms\n" << std::setprecision(17);
  }

  // per-worker batches and partial losses
  std::vector<LossBatch<float>> batches(workers);
  std::vector<float> partial(workers, 0.0f);
  const RngStream run_stream(tc.seed);

  TrainResult result;
  result.trace.reserve(static_cast<std::size_t>(tc.total_steps));

  const std::int64_t first = start.step_count + 1;
  const std::int64_t last = start.step_count + tc.total_steps;
  for (std::int64_t step = first; step <= last; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const RngStream step_stream = run_stream.child(static_cast<std::uint64_t>(step));

    for (auto& net : nets) net->zero_grads();
    parallel_ranges(tc.batch_size, workers, [&](int wk, int begin, int end) {
      const int count = end - begin;
      if (count <= 0) return;
      LossBatch<float>& lb = batches[wk];
      lb.shape = {count, h, w};
      lb.cond.resize(c, lb.shape.cols());
      lb.noisy.resize(c, lb.shape.cols());
      lb.target.resize(c, lb.shape.cols());
      lb.gammas.resize(count);
      for (int j = begin; j < end; ++j) {
        RngStream sample_rng = step_stream.child(static_cast<std::uint64_t>(j));
        const auto idx = static_cast<std::size_t>(
            sample_rng.uniform_int(0, static_cast<std::int64_t>(corpus.size()) - 1));
        fill_sample(corpus.targets[idx], corpus.cond_sources[idx], ranges, schedule, lc,
                    tc.gamma_sampling, sample_rng, lb, j - begin);
      }
      partial[wk] = loss_and_backward(*nets[wk], lb, lc, total_elements);
    });

    // ordered reductions keep the step bit-reproducible for fixed workers
    float loss = 0.0f;
    for (int wk = 0; wk < workers; ++wk) loss += partial[wk];
    for (int wk = 1; wk < workers; ++wk) {
      const auto& other = nets[wk]->params();
      for (std::size_t i = 0; i < params.size(); ++i) params[i]->grad += other[i]->grad;
    }

    if (!std::isfinite(loss)) {
      if (!hooks.checkpoint_dir.empty()) {
        json dump = {{"step", step}, {"loss", loss}, {"note", "aborted on non-finite loss"}};
        std::ofstream d(std::filesystem::path(hooks.checkpoint_dir) / "nan_dump.json");
        d << dump.dump(2) << '\n';
        save_checkpoint(snapshot(net0, start, tc, step - 1, adam_step, m, v),
                        (std::filesystem::path(hooks.checkpoint_dir) / "nan_state.ckpt").string());
      }
      throw numeric_error("train: non-finite loss at step " + std::to_string(step));
    }

    ++adam_step;
    const float lr = static_cast<float>(tc.learning_rate);
    const float b1 = static_cast<float>(tc.beta1), b2 = static_cast<float>(tc.beta2);
    const float eps = static_cast<float>(tc.adam_eps);
    const float bc1 = 1.0f - std::pow(b1, static_cast<float>(adam_step));
    const float bc2 = 1.0f - std::pow(b2, static_cast<float>(adam_step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& g = params[i]->grad;
      m[i] = b1 * m[i] + (1.0f - b1) * g;
      v[i] = (b2 * v[i].array() + (1.0f - b2) * g.array().square()).matrix();
      params[i]->value.array() -=
          lr * (m[i].array() / bc1) / ((v[i].array() / bc2).sqrt() + eps);
      if (!params[i]->value.allFinite())
        throw numeric_error("train: non-finite parameter after step " + std::to_string(step));
    }
    for (int wk = 1; wk < workers; ++wk) {
      const auto& other = nets[wk]->params();
      for (std::size_t i = 0; i < params.size(); ++i) other[i]->value = params[i]->value;
    }

    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    TraceRow row{step, static_cast<double>(loss), tc.learning_rate, wall_ms};
    result.trace.push_back(row);
    if (trace_out)
      trace_out << row.step << ',' << row.loss << ',' << row.learning_rate << ',' << row.wall_ms
                << std::endl;
    if (hooks.on_step) hooks.on_step(row);

    if (!hooks.checkpoint_dir.empty() && step % tc.checkpoint_interval == 0)
      save_checkpoint(snapshot(net0, start, tc, step, adam_step, m, v),
                      (std::filesystem::path(hooks.checkpoint_dir) / ("ckpt_" + std::to_string(step) + ".ckpt"))
                          .string());
  }

  result.checkpoint = snapshot(net0, start, tc, last, adam_step, m, v);
  return result;
}

float diffusion_loss(Denoiser& den, const std::vector<std::pair<ImageTensor, ImageTensor>>& pairs,
                     const NoiseSchedule& schedule, const LossConfig& lc,
                     const std::string& gamma_sampling, RngStream rng) {
  if (pairs.empty()) throw std::invalid_argument("diffusion_loss: empty batch");
  const int h = pairs[0].first.height, w = pairs[0].first.width, c = pairs[0].first.channels;
  LossBatch<float> lb;
  lb.shape = {static_cast<int>(pairs.size()), h, w};
  lb.cond.resize(c, lb.shape.cols());
  lb.noisy.resize(c, lb.shape.cols());
  lb.target.resize(c, lb.shape.cols());
  lb.gammas.resize(lb.shape.b);

  const Eigen::Index hw = lb.shape.hw();
  for (std::size_t j = 0; j < pairs.size(); ++j) {
    const auto& [x, x_d] = pairs[j];
    if (!x.same_shape(pairs[0].first) || !x_d.same_shape(x))
      throw shape_error("diffusion_loss: images must share one shape");
    RngStream sample_rng = rng.child(j);
    const double gamma = draw_gamma(schedule, gamma_sampling, sample_rng);
    const nn::Mat<float> x0m = to_model_range(x);
    nn::Mat<float> eps(c, hw);
    RngStream eps_rng = sample_rng.child(2);
    for (Eigen::Index i = 0; i < eps.size(); ++i)
      eps.data()[i] = static_cast<float>(eps_rng.normal());
    const auto cols = Eigen::seqN(static_cast<Eigen::Index>(j) * hw, hw);
    lb.cond(Eigen::all, cols) = to_model_range(x_d);
    lb.gammas[static_cast<Eigen::Index>(j)] = static_cast<float>(gamma);
    lb.noisy(Eigen::all, cols) = q_sample(x0m, static_cast<float>(gamma), eps);
    lb.target(Eigen::all, cols) = lc.target == "x0" ? x0m : eps;
  }
  return loss_value(den.net(), lb, lc);
}

ImageTensor restore_with_diagnostics(const DenoiseFn& denoise, const std::string& prediction_target,
                                     const ImageTensor& x_d, const InferencePlan& plan,
                                     RngStream rng, RestoreDiagnostics* diag) {
  const int h = x_d.height, w = x_d.width, c = x_d.channels;
  const nn::Mat<float> cond = to_model_range(x_d);

  nn::Mat<float> x(c, static_cast<Eigen::Index>(h) * w);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(rng.normal());

  if (diag) diag->step_deltas.clear();
  for (int k = plan.K; k >= 2; --k) {
    const float gamma = static_cast<float>(plan.gamma(k));
    const float alpha = static_cast<float>(plan.alpha(k));
    const nn::Mat<float> pred = denoise(cond, x, gamma);
    const nn::Mat<float> eps_hat = eps_from_prediction(pred, x, gamma, prediction_target);
    nn::Mat<float> noise(c, x.cols());
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = static_cast<float>(rng.normal());
    nn::Mat<float> next = ddpm_update(x, eps_hat, alpha, gamma, &noise);
    if (diag) diag->step_deltas.push_back((next - x).norm());
    x.swap(next);
  }

  // terminal step: emit the clipped x0 prediction deterministically
  const float gamma1 = static_cast<float>(plan.gamma(1));
  const nn::Mat<float> pred = denoise(cond, x, gamma1);
  nn::Mat<float> x0;
  if (prediction_target == "x0") {
    x0 = pred.array().min(1.0f).max(-1.0f).matrix();
  } else {
    if (gamma1 >= 1.0f) throw numeric_error("restore: gamma == 1 at terminal epsilon conversion");
    x0 = ((x - std::sqrt(1.0f - gamma1) * pred) / std::sqrt(gamma1)).array().min(1.0f).max(-1.0f).matrix();
  }
  return from_model_range(x0, h, w);
}

ImageTensor restore(const DenoiseFn& denoise, const std::string& prediction_target,
                    const ImageTensor& x_d, const InferencePlan& plan, RngStream rng) {
  return restore_with_diagnostics(denoise, prediction_target, x_d, plan, rng, nullptr);
}

ImageTensor restore(Denoiser& den, const ImageTensor& x_d, const InferencePlan& plan, RngStream rng) {
  const int h = x_d.height, w = x_d.width;
  DenoiseFn fn = [&](const nn::Mat<float>& cond, const nn::Mat<float>& noisy, float gamma) {
    return den.forward(cond, noisy, gamma, h, w);
  };
  return restore(fn, den.config().prediction_target, x_d, plan, rng);
}

std::vector<ImageTensor> restore_many(const DenoiserCheckpoint& ckpt,
                                      const std::vector<ImageTensor>& inputs,
                                      const InferencePlan& plan, RngStream base, int workers) {
  std::vector<ImageTensor> out(inputs.size());
  const int n = static_cast<int>(inputs.size());
  parallel_ranges(n, resolve_workers(workers, n), [&](int, int begin, int end) {
    if (begin >= end) return;
    Denoiser den = Denoiser::from_checkpoint(ckpt);
    for (int i = begin; i < end; ++i)
      out[static_cast<std::size_t>(i)] =
          restore(den, inputs[static_cast<std::size_t>(i)], plan, base.child(static_cast<std::uint64_t>(i)));
  });
  return out;
}

}  // namespace idm
