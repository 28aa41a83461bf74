#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "idm/config_json.hpp"
#include "idm/diffusion.hpp"
#include "idm/eval.hpp"
#include "idm/extrinsic.hpp"
#include "idm/manifest.hpp"
#include "idm/parallel.hpp"
#include "idm/toyface.hpp"

namespace fs = std::filesystem;
using namespace idm;

namespace {

constexpr const char* kToolVersion = "idm 0.1.0";

struct GlobalOpts {
  int workers = 0;
};

// Every command leaves a run.json next to its outputs: resolved config,
// seed, tool version and input checksums are enough to replay the run.
void write_run_record(const std::string& out_dir, const std::string& command, std::uint64_t seed,
                      int workers, const json& resolved_config,
                      const std::vector<std::string>& input_files) {
  json inputs = json::object();
  for (const auto& f : input_files)
    if (!f.empty() && fs::exists(f)) inputs[f] = sha256_file(f);
  json j = {{"command", command}, {"tool_version", kToolVersion}, {"seed", seed},
            {"workers", workers},  {"config", resolved_config},   {"inputs", inputs}};
  std::ofstream out(fs::path(out_dir) / "run.json");
  if (!out) throw io_error("cannot write run.json in " + out_dir);
  out << j.dump(2) << '\n';
}

std::string cache_dir() {
  const char* env = std::getenv("IDM_CACHE_DIR");
  return env ? std::string(env) : std::string();
}

DegradationRanges load_ranges_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open ranges file: " + path);
  json j;
  in >> j;
  return degradation_ranges_from_json(j);
}

TrainingCorpus load_corpus(const std::string& manifest_path, const DatasetManifest& m) {
  TrainingCorpus corpus;
  corpus.targets.reserve(m.images.size());
  for (const auto& img : m.images)
    corpus.targets.push_back(load_png(manifest_image_path(manifest_path, img)));
  corpus.cond_sources = corpus.targets;
  return corpus;
}

// mid-severity band used when synthesizing an imperfect corpus
DegradationRanges contamination_ranges() {
  DegradationRanges r;
  r.sigma_lo = 2.0;
  r.sigma_hi = 4.0;
  r.r_lo = 1.5;
  r.r_hi = 3.0;
  r.delta_lo = 5.0;
  r.delta_hi = 10.0;
  r.q_lo = 60;
  r.q_hi = 80;
  return r;
}

int cmd_gen_toy(const std::string& out_dir, int count, int size, std::uint64_t seed, int channels,
                int freckles, int hair, double contrast, double contaminate_frac) {
  if (size < 16) throw std::invalid_argument("gen-toy: --size must be >= 16");
  if (count < 1) throw std::invalid_argument("gen-toy: --count must be >= 1");
  if (contaminate_frac < 0.0 || contaminate_frac > 1.0)
    throw std::invalid_argument("gen-toy: --contaminate-frac in [0,1]");

  fs::create_directories(fs::path(out_dir) / "images");
  const RngStream base(seed);
  const int n_contaminated = static_cast<int>(std::lround(contaminate_frac * count));
  const DegradationRanges cranges = contamination_ranges();

  DatasetManifest manifest;
  manifest.round = 0;
  for (int i = 0; i < count; ++i) {
    ToyFaceSpec spec;
    spec.size = size;
    spec.channels = channels;
    spec.n_freckles = freckles;
    spec.freckle_contrast = static_cast<float>(contrast);
    spec.n_hair_strokes = hair;
    spec.palette_seed = mix64(seed) ^ static_cast<std::uint64_t>(i);
    ImageTensor img = gen_toy_face(spec, base.child(static_cast<std::uint64_t>(i)));

    if (i < n_contaminated) {
      RngStream cs = base.child(0xc0ffeeull).child(static_cast<std::uint64_t>(i));
      const DegradationParams p = sample_degradation_params(cranges, cs);
      img = degrade(img, p, cs.child(1));
    }

    char id[32];
    std::snprintf(id, sizeof(id), "face_%05d", i);
    ManifestImage rec;
    rec.id = id;
    rec.path = std::string("images/") + id + ".png";
    rec.source = "original";
    const std::string full = (fs::path(out_dir) / rec.path).string();
    save_png(img, full);
    rec.sha256 = sha256_file(full);
    manifest.images.push_back(std::move(rec));
  }
  const std::string mpath = (fs::path(out_dir) / "manifest.json").string();
  save_manifest(manifest, mpath);
  write_run_record(out_dir, "gen-toy", seed, 1,
                   {{"count", count},
                    {"size", size},
                    {"channels", channels},
                    {"freckles", freckles},
                    {"hair", hair},
                    {"contrast", contrast},
                    {"contaminate_frac", contaminate_frac}},
                   {});
  std::cout << "wrote " << count << " images + manifest to " << out_dir << "\n";
  return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& config_path, const std::string& data_path,
              const std::string& out_dir, const std::string& init_ckpt, int round,
              const std::string& orig_data_path, std::int64_t steps_override) {
  RunConfig cfg = load_run_config(config_path);
  if (g.workers > 0) cfg.train.workers = g.workers;
  if (steps_override >= 0) cfg.train.total_steps = steps_override;
  fs::create_directories(out_dir);

  const DatasetManifest manifest = load_manifest(data_path);
  const NoiseSchedule schedule = make_schedule(cfg.schedule);

  TrainHooks hooks;
  hooks.trace_csv_path = (fs::path(out_dir) / "trace.csv").string();
  hooks.checkpoint_dir = cache_dir().empty() ? out_dir : cache_dir();
  if (!cache_dir().empty()) fs::create_directories(hooks.checkpoint_dir);
  const std::int64_t log_every = std::max<std::int64_t>(1, cfg.train.total_steps / 20);
  hooks.on_step = [&](const TraceRow& r) {
    if (r.step % log_every == 0)
      std::cout << "step " << r.step << " loss " << r.loss << " (" << r.wall_ms << " ms)"
                << std::endl;
  };

  TrainResult result;
  if (round == 1) {
    if (init_ckpt.empty() || orig_data_path.empty())
      throw std::invalid_argument("train --round 1 requires --init and --orig-data");
    const DenoiserCheckpoint round0 = load_checkpoint(init_ckpt);
    const DatasetManifest original = load_manifest(orig_data_path);
    result = extrinsic_round(round0, orig_data_path, original, data_path, manifest, cfg.degrade,
                             schedule, cfg.train, cfg.loss, hooks);
  } else {
    DenoiserCheckpoint start;
    if (!init_ckpt.empty()) {
      start = load_checkpoint(init_ckpt);  // resume; optimizer state rides along
    } else {
      start = init_denoiser(cfg.model, cfg.schedule, RngStream(cfg.seed));
    }
    const TrainingCorpus corpus = load_corpus(data_path, manifest);
    result = train(start, corpus, cfg.degrade, schedule, cfg.train, cfg.loss, hooks);
  }

  const std::string final_path = (fs::path(out_dir) / "ckpt_final.ckpt").string();
  save_checkpoint(result.checkpoint, final_path);
  write_run_record(out_dir, "train", cfg.train.seed,
                   resolve_workers(cfg.train.workers, cfg.train.batch_size), to_json(cfg),
                   {config_path, data_path, init_ckpt, orig_data_path});
  std::cout << "final checkpoint: " << final_path << " (step " << result.checkpoint.step_count
            << ")\n";
  return 0;
}

int cmd_degrade(const GlobalOpts& g, const std::string& data_path, const std::string& out_dir,
                std::uint64_t seed, const std::string& ranges_path, const std::string& replay_path) {
  const DatasetManifest manifest = load_manifest(data_path);
  fs::create_directories(fs::path(out_dir) / "images");

  DegradationRanges ranges;
  if (!ranges_path.empty()) ranges = load_ranges_file(ranges_path);

  // replay: exact (params, seed) per id from a previous run's sidecar
  std::map<std::string, json> replay;
  if (!replay_path.empty()) {
    std::ifstream in(replay_path);
    if (!in) throw io_error("cannot open replay sidecar: " + replay_path);
    json sidecar_in;
    in >> sidecar_in;
    seed = sidecar_in.at("seed").get<std::uint64_t>();
    for (const auto& e : sidecar_in.at("images")) replay[e.at("id").get<std::string>()] = e;
  }

  json sidecar = {{"seed", seed}, {"kernel_rule", "side=2*ceil(3*sigma)+1"}, {"images", json::array()}};
  DatasetManifest out_manifest;
  out_manifest.round = manifest.round;

  const int n = static_cast<int>(manifest.images.size());
  std::vector<json> side_entries(manifest.images.size());
  std::vector<ManifestImage> records(manifest.images.size());
  parallel_ranges(n, resolve_workers(g.workers, n), [&](int, int begin, int end) {
    for (int i = begin; i < end; ++i) {
      const ManifestImage& src = manifest.images[static_cast<std::size_t>(i)];
      const ImageTensor x = load_png(manifest_image_path(data_path, src));
      DegradationParams p;
      RngStream stream(seed, fnv1a64(src.id));
      if (!replay.empty()) {
        const auto it = replay.find(src.id);
        if (it == replay.end()) throw manifest_error("replay sidecar missing id " + src.id);
        p.sigma = it->second.at("sigma").get<double>();
        p.r = it->second.at("r").get<double>();
        p.delta = it->second.at("delta").get<double>();
        p.q = it->second.at("q").get<int>();
        sample_degradation_params(ranges, stream);  // burn the draws the recorded run consumed
      } else {
        p = sample_degradation_params(ranges, stream);
      }
      const ImageTensor x_d = degrade(x, p, stream.child(1));
      ManifestImage rec = src;
      rec.path = "images/" + src.id + ".png";
      const std::string full = (fs::path(out_dir) / rec.path).string();
      save_png(x_d, full);
      rec.sha256 = sha256_file(full);
      records[static_cast<std::size_t>(i)] = std::move(rec);
      side_entries[static_cast<std::size_t>(i)] = {
          {"id", src.id}, {"sigma", p.sigma}, {"r", p.r}, {"delta", p.delta}, {"q", p.q}};
    }
  });
  out_manifest.images = std::move(records);
  for (auto& e : side_entries) sidecar["images"].push_back(std::move(e));

  save_manifest(out_manifest, (fs::path(out_dir) / "manifest.json").string());
  std::ofstream side_out(fs::path(out_dir) / "sidecar.json");
  side_out << sidecar.dump(2) << '\n';
  write_run_record(out_dir, "degrade", seed, resolve_workers(g.workers, n), to_json(ranges),
                   {data_path, ranges_path, replay_path});
  std::cout << "degraded " << n << " images into " << out_dir << "\n";
  return 0;
}

int cmd_restore(const GlobalOpts& g, const std::string& ckpt_path, const std::string& input_png,
                const std::string& data_path, const std::string& out_dir, int steps,
                std::uint64_t seed) {
  const DenoiserCheckpoint ckpt = load_checkpoint(ckpt_path);
  const NoiseSchedule schedule = make_schedule(ckpt.schedule);
  const InferencePlan plan = make_inference_plan(schedule, steps);
  fs::create_directories(fs::path(out_dir) / "images");

  std::vector<ImageTensor> inputs;
  std::vector<std::string> ids;
  if (!input_png.empty()) {
    inputs.push_back(load_png(input_png));
    ids.push_back(fs::path(input_png).stem().string());
  } else if (!data_path.empty()) {
    const DatasetManifest m = load_manifest(data_path);
    for (const auto& img : m.images) {
      inputs.push_back(load_png(manifest_image_path(data_path, img)));
      ids.push_back(img.id);
    }
  } else {
    throw std::invalid_argument("restore: provide --input or --data");
  }

  const int workers = resolve_workers(g.workers, static_cast<int>(inputs.size()));
  const std::vector<ImageTensor> restored = restore_many(ckpt, inputs, plan, RngStream(seed), workers);
  for (std::size_t i = 0; i < restored.size(); ++i)
    save_png(restored[i], (fs::path(out_dir) / "images" / (ids[i] + ".png")).string());
  write_run_record(out_dir, "restore", seed, workers,
                   {{"steps", steps}, {"checkpoint", checkpoint_id(ckpt)}},
                   {ckpt_path, input_png, data_path});
  std::cout << "restored " << restored.size() << " images into " << out_dir << "\n";
  return 0;
}

int cmd_enhance(const GlobalOpts& g, const std::string& ckpt_path, const std::string& data_path,
                const std::string& out_dir, int steps, std::uint64_t seed) {
  const DenoiserCheckpoint ckpt = load_checkpoint(ckpt_path);
  const DatasetManifest manifest = load_manifest(data_path);
  ExtrinsicConfig cfg;
  cfg.infer_steps = steps;
  cfg.enhancement_seed = seed;
  cfg.workers = g.workers;
  fs::create_directories(out_dir);
  const DatasetManifest out = enhance_dataset(ckpt, data_path, manifest, cfg, out_dir);
  write_run_record(out_dir, "enhance", seed,
                   resolve_workers(g.workers, static_cast<int>(manifest.images.size())),
                   {{"steps", steps}, {"checkpoint", checkpoint_id(ckpt)}, {"round", out.round}},
                   {ckpt_path, data_path});
  std::cout << "enhanced round " << out.round << " manifest: " << out_dir << "/manifest.json\n";
  return 0;
}

int cmd_authtest(const GlobalOpts& g, const std::string& ckpt_path, const std::string& data_path,
                 const std::string& out_dir, int steps, std::uint64_t seed, double tau_clean,
                 double tau_idem, const std::string& ranges_path) {
  const DenoiserCheckpoint ckpt = load_checkpoint(ckpt_path);
  const DatasetManifest manifest = load_manifest(data_path);
  const NoiseSchedule schedule = make_schedule(ckpt.schedule);
  const InferencePlan plan = make_inference_plan(schedule, steps);
  fs::create_directories(out_dir);

  DegradationRanges ranges;
  if (!ranges_path.empty()) ranges = load_ranges_file(ranges_path);

  std::vector<ImageTensor> clean;
  for (const auto& img : manifest.images)
    clean.push_back(load_png(manifest_image_path(data_path, img)));

  const int workers = resolve_workers(g.workers, static_cast<int>(clean.size()));
  const AuthenticityThresholds thresholds{tau_clean, tau_idem};
  const AuthenticityReport report =
      authenticity_test(checkpoint_restorer(ckpt, plan, workers), clean, ranges, seed, thresholds,
                        (fs::path(out_dir) / "grid.png").string());
  write_authenticity_json(report, (fs::path(out_dir) / "authenticity.json").string());
  write_run_record(out_dir, "authtest", seed, workers,
                   {{"steps", steps},
                    {"tau_clean_db", tau_clean},
                    {"tau_idem_db", tau_idem},
                    {"checkpoint", checkpoint_id(ckpt)},
                    {"ranges", to_json(ranges)}},
                   {ckpt_path, data_path, ranges_path});
  std::cout << "clean_fidelity " << report.clean_fidelity_db << " dB, gain " << report.restore_gain_db
            << " dB, idempotence " << report.idempotence_db << " dB, pass "
            << (report.pass ? "true" : "false") << "\n";
  return 0;
}

int cmd_eval(const GlobalOpts& g, const std::string& ckpt_path, const std::string& degraded_path,
             const std::string& reference_path, const std::string& out_dir, int steps,
             std::uint64_t seed) {
  const DenoiserCheckpoint ckpt = load_checkpoint(ckpt_path);
  const DatasetManifest degraded = load_manifest(degraded_path);
  const DatasetManifest reference = load_manifest(reference_path);
  const NoiseSchedule schedule = make_schedule(ckpt.schedule);
  const InferencePlan plan = make_inference_plan(schedule, steps);
  fs::create_directories(out_dir);

  std::vector<std::pair<ImageTensor, ImageTensor>> pairs;
  for (const auto& img : degraded.images) {
    const ManifestImage* ref = reference.find(img.id);
    if (!ref) throw manifest_error("eval: reference manifest missing id " + img.id);
    pairs.emplace_back(load_png(manifest_image_path(degraded_path, img)),
                       load_png(manifest_image_path(reference_path, *ref)));
  }

  const int workers = resolve_workers(g.workers, static_cast<int>(pairs.size()));
  MetricReport report = evaluate_dataset(checkpoint_restorer(ckpt, plan, workers), pairs, seed);
  report.write_csv((fs::path(out_dir) / "per_image.csv").string());
  report.write_json((fs::path(out_dir) / "aggregate.json").string());
  write_run_record(out_dir, "eval", seed, workers,
                   {{"steps", steps}, {"checkpoint", checkpoint_id(ckpt)}},
                   {ckpt_path, degraded_path, reference_path});
  std::cout << "mean psnr " << report.aggregates.at("psnr_db").mean << " dB over " << pairs.size()
            << " pairs\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale diffusion-based image restoration pipeline"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--workers", g.workers, "parallel workers (0 = hardware concurrency)");

  auto* gen = app.add_subcommand("gen-toy", "generate a toy-face corpus + manifest");
  std::string gen_out;
  int gen_count = 64, gen_size = 32, gen_channels = 3, gen_freckles = 6, gen_hair = 4;
  std::uint64_t gen_seed = 0;
  double gen_contrast = 0.3, gen_contaminate = 0.0;
  gen->add_option("--out", gen_out)->required();
  gen->add_option("--count", gen_count)->required();
  gen->add_option("--size", gen_size)->required();
  gen->add_option("--seed", gen_seed)->required();
  gen->add_option("--channels", gen_channels);
  gen->add_option("--freckles", gen_freckles);
  gen->add_option("--hair", gen_hair);
  gen->add_option("--contrast", gen_contrast);
  gen->add_option("--contaminate-frac", gen_contaminate);

  auto* tr = app.add_subcommand("train", "train a denoiser on a corpus manifest");
  std::string tr_config, tr_data, tr_out, tr_init, tr_orig;
  int tr_round = 0;
  std::int64_t tr_steps = -1;
  tr->add_option("--config", tr_config)->required();
  tr->add_option("--data", tr_data)->required();
  tr->add_option("--out", tr_out)->required();
  tr->add_option("--init", tr_init);
  tr->add_option("--round", tr_round);
  tr->add_option("--orig-data", tr_orig);
  tr->add_option("--steps", tr_steps);

  auto* dg = app.add_subcommand("degrade", "synthesize a degraded benchmark with sidecar");
  std::string dg_data, dg_out, dg_ranges, dg_replay;
  std::uint64_t dg_seed = 0;
  dg->add_option("--data", dg_data)->required();
  dg->add_option("--out", dg_out)->required();
  dg->add_option("--seed", dg_seed);
  dg->add_option("--ranges", dg_ranges);
  dg->add_option("--replay", dg_replay);

  auto* rs = app.add_subcommand("restore", "restore an image or a manifest");
  std::string rs_ckpt, rs_input, rs_data, rs_out;
  int rs_steps = 10;
  std::uint64_t rs_seed = 0;
  rs->add_option("--ckpt", rs_ckpt)->required();
  rs->add_option("--input", rs_input);
  rs->add_option("--data", rs_data);
  rs->add_option("--out", rs_out)->required();
  rs->add_option("--steps", rs_steps);
  rs->add_option("--seed", rs_seed);

  auto* en = app.add_subcommand("enhance", "enhance a corpus into the next round");
  std::string en_ckpt, en_data, en_out;
  int en_steps = 10;
  std::uint64_t en_seed = 0;
  en->add_option("--ckpt", en_ckpt)->required();
  en->add_option("--data", en_data)->required();
  en->add_option("--out", en_out)->required();
  en->add_option("--steps", en_steps);
  en->add_option("--seed", en_seed);

  auto* au = app.add_subcommand("authtest", "authenticity harness on a clean set");
  std::string au_ckpt, au_data, au_out, au_ranges;
  int au_steps = 10;
  std::uint64_t au_seed = 0;
  double au_tau_clean = 30.0, au_tau_idem = 28.0;
  au->add_option("--ckpt", au_ckpt)->required();
  au->add_option("--data", au_data)->required();
  au->add_option("--out", au_out)->required();
  au->add_option("--steps", au_steps);
  au->add_option("--seed", au_seed);
  au->add_option("--tau-clean", au_tau_clean);
  au->add_option("--tau-idem", au_tau_idem);
  au->add_option("--ranges", au_ranges);

  auto* ev = app.add_subcommand("eval", "restore a degraded set and score against references");
  std::string ev_ckpt, ev_degraded, ev_reference, ev_out;
  int ev_steps = 10;
  std::uint64_t ev_seed = 0;
  ev->add_option("--ckpt", ev_ckpt)->required();
  ev->add_option("--degraded", ev_degraded)->required();
  ev->add_option("--reference", ev_reference)->required();
  ev->add_option("--out", ev_out)->required();
  ev->add_option("--steps", ev_steps);
  ev->add_option("--seed", ev_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed())
      return cmd_gen_toy(gen_out, gen_count, gen_size, gen_seed, gen_channels, gen_freckles,
                         gen_hair, gen_contrast, gen_contaminate);
    if (tr->parsed())
      return cmd_train(g, tr_config, tr_data, tr_out, tr_init, tr_round, tr_orig, tr_steps);
    if (dg->parsed()) return cmd_degrade(g, dg_data, dg_out, dg_seed, dg_ranges, dg_replay);
    if (rs->parsed()) return cmd_restore(g, rs_ckpt, rs_input, rs_data, rs_out, rs_steps, rs_seed);
    if (en->parsed()) return cmd_enhance(g, en_ckpt, en_data, en_out, en_steps, en_seed);
    if (au->parsed())
      return cmd_authtest(g, au_ckpt, au_data, au_out, au_steps, au_seed, au_tau_clean, au_tau_idem,
                          au_ranges);
    if (ev->parsed())
      return cmd_eval(g, ev_ckpt, ev_degraded, ev_reference, ev_out, ev_steps, ev_seed);
  } catch (const std::invalid_argument& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
