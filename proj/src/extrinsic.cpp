#include "idm/extrinsic.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>

#include "idm/parallel.hpp"
#include "nlohmann/json.hpp"

namespace idm {

namespace fs = std::filesystem;
using nlohmann::json;

std::string checkpoint_id(const DenoiserCheckpoint& ckpt) {
  return "round" + std::to_string(ckpt.training_round) + "_step" + std::to_string(ckpt.step_count) +
         "_seed" + std::to_string(ckpt.rng_seed);
}

DatasetManifest enhance_dataset(const DenoiserCheckpoint& ckpt, const std::string& manifest_path,
                                const DatasetManifest& manifest, const ExtrinsicConfig& cfg,
                                const std::string& out_dir) {
  cfg.validate();
  if (ckpt.training_round != manifest.round)
    throw manifest_error("enhance_dataset: checkpoint round " + std::to_string(ckpt.training_round) +
                         " does not match manifest round " + std::to_string(manifest.round));

  fs::create_directories(fs::path(out_dir) / "images");
  const std::string enhancer = checkpoint_id(ckpt);
  const NoiseSchedule schedule = make_schedule(ckpt.schedule);
  const InferencePlan plan = make_inference_plan(schedule, cfg.infer_steps);

  // resume bookkeeping: id -> sha of already-written output
  std::map<std::string, std::string> done;
  const fs::path progress_path = fs::path(out_dir) / "progress.jsonl";
  if (fs::exists(progress_path)) {
    std::ifstream in(progress_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json e = json::parse(line, nullptr, false);
      if (!e.is_object()) continue;
      done[e.at("id").get<std::string>()] = e.at("sha256").get<std::string>();
    }
  }

  const int n = static_cast<int>(manifest.images.size());
  std::vector<ManifestImage> records(manifest.images.size());
  std::mutex progress_mutex;
  std::ofstream progress(progress_path, std::ios::app);

  parallel_ranges(n, resolve_workers(cfg.workers, n), [&](int, int begin, int end) {
    if (begin >= end) return;
    Denoiser den = Denoiser::from_checkpoint(ckpt);
    for (int i = begin; i < end; ++i) {
      const ManifestImage& src = manifest.images[static_cast<std::size_t>(i)];
      const std::string rel = "images/" + src.id + ".png";
      const std::string full = (fs::path(out_dir) / rel).string();

      ManifestImage rec;
      rec.id = src.id;
      rec.path = rel;
      rec.source = "enhanced";
      rec.parent_id = src.id;
      rec.enhancer_checkpoint_id = enhancer;

      auto it = done.find(src.id);
      if (it != done.end() && fs::exists(full) && sha256_file(full) == it->second) {
        rec.sha256 = it->second;  // verified leftover from an interrupted run
        records[static_cast<std::size_t>(i)] = std::move(rec);
        continue;
      }

      const ImageTensor x = load_png(manifest_image_path(manifest_path, src));
      const RngStream stream(cfg.enhancement_seed, fnv1a64(src.id));
      const ImageTensor enhanced = restore(den, x, plan, stream);
      save_png(enhanced, full);
      rec.sha256 = sha256_file(full);
      {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress << json({{"id", rec.id}, {"sha256", rec.sha256}}).dump() << '\n';
        progress.flush();
      }
      records[static_cast<std::size_t>(i)] = std::move(rec);
    }
  });

  DatasetManifest out;
  out.version = manifest.version;
  out.round = manifest.round + 1;
  out.images = std::move(records);
  save_manifest(out, (fs::path(out_dir) / "manifest.json").string());
  return out;
}

TrainingCorpus load_extrinsic_corpus(const std::string& original_manifest_path,
                                     const DatasetManifest& original,
                                     const std::string& enhanced_manifest_path,
                                     const DatasetManifest& enhanced,
                                     const std::string& pairing_mode) {
  if (enhanced.round != original.round + 1)
    throw manifest_error("extrinsic corpus: enhanced round must be original round + 1");
  TrainingCorpus corpus;
  corpus.targets.reserve(enhanced.images.size());
  corpus.cond_sources.reserve(enhanced.images.size());
  for (const auto& img : enhanced.images) {
    const ManifestImage* parent = original.find(img.parent_id);
    if (!parent) throw manifest_error("extrinsic corpus: unresolvable parent " + img.parent_id);
    corpus.targets.push_back(load_png(manifest_image_path(enhanced_manifest_path, img)));
    if (pairing_mode == "condition_from_enhanced")
      corpus.cond_sources.push_back(corpus.targets.back());
    else
      corpus.cond_sources.push_back(load_png(manifest_image_path(original_manifest_path, *parent)));
  }
  return corpus;
}

TrainResult extrinsic_round(const DenoiserCheckpoint& round0,
                            const std::string& original_manifest_path,
                            const DatasetManifest& original,
                            const std::string& enhanced_manifest_path,
                            const DatasetManifest& enhanced, const DegradationRanges& ranges,
                            const NoiseSchedule& schedule, const TrainConfig& tc,
                            const LossConfig& lc, const TrainHooks& hooks) {
  TrainingCorpus corpus = load_extrinsic_corpus(original_manifest_path, original,
                                                enhanced_manifest_path, enhanced);

  // warm start: parameters carry over, optimizer state does not
  DenoiserCheckpoint start = round0;
  for (auto it = start.tensors.begin(); it != start.tensors.end();) {
    if (it->first.rfind("opt.", 0) == 0)
      it = start.tensors.erase(it);
    else
      ++it;
  }
  start.training_round = round0.training_round + 1;
  start.step_count = 0;
  start.adam_step = 0;
  return train(start, corpus, ranges, schedule, tc, lc, hooks);
}

}  // namespace idm
