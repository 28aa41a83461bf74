#pragma once

#include "idm/diffusion.hpp"
#include "idm/manifest.hpp"

namespace idm {

struct ExtrinsicConfig {
  int infer_steps = 10;
  std::uint64_t enhancement_seed = 0;
  // The paper's setup keeps drawing conditions from the original corpus.
  std::string pairing_mode = "condition_from_original";
  int workers = 0;

  void validate() const {
    if (infer_steps < 1) throw std::invalid_argument("ExtrinsicConfig: infer_steps >= 1");
    if (pairing_mode != "condition_from_original" && pairing_mode != "condition_from_enhanced")
      throw std::invalid_argument("ExtrinsicConfig: unknown pairing_mode");
  }
};

std::string checkpoint_id(const DenoiserCheckpoint& ckpt);

// Restores every manifest image with a per-image stream derived from
// (enhancement_seed, image id) and writes round+1 PNGs plus manifest.json
// under out_dir. Originals are never touched. Reruns skip images whose
// output already exists with the checksum recorded in progress.jsonl.
DatasetManifest enhance_dataset(const DenoiserCheckpoint& ckpt, const std::string& manifest_path,
                                const DatasetManifest& manifest, const ExtrinsicConfig& cfg,
                                const std::string& out_dir);

// Loads the paired round-1 corpus: targets from the enhanced manifest,
// condition sources from each record's parent in the original manifest.
TrainingCorpus load_extrinsic_corpus(const std::string& original_manifest_path,
                                     const DatasetManifest& original,
                                     const std::string& enhanced_manifest_path,
                                     const DatasetManifest& enhanced,
                                     const std::string& pairing_mode = "condition_from_original");

// Warm-starts from the round-0 checkpoint (fresh optimizer state, round tag
// bumped) and trains on the extrinsic pairing.
TrainResult extrinsic_round(const DenoiserCheckpoint& round0,
                            const std::string& original_manifest_path,
                            const DatasetManifest& original,
                            const std::string& enhanced_manifest_path,
                            const DatasetManifest& enhanced, const DegradationRanges& ranges,
                            const NoiseSchedule& schedule, const TrainConfig& tc,
                            const LossConfig& lc, const TrainHooks& hooks = {});

}  // namespace idm
