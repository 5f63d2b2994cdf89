#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mssp/infer.hpp"
#include "mssp/metrics.hpp"
#include "mssp/optim.hpp"
#include "mssp/sampling.hpp"

namespace mssp {

/// Everything needed to go from prepared scenes to an evaluated change map.
struct PipelineConfig {
  SampleSpec sampling;
  TrainConfig train;
  ModelConfig model;
  std::size_t infer_stride = 16;
};

struct TrainingSet {
  PatchBatch patches;
  std::vector<Mask> centers;  // per input scene, 1 = drawn patch center
};

/// Samples each scene and pools the patches. Scene `scene_ids[i]` is sampled
/// with the "sampling.<id>" substream of `spec.seed` and tagged with that id.
TrainingSet pool_training_patches(const std::vector<const ScenePair*>& scenes,
                                  const std::vector<std::size_t>& scene_ids, const SampleSpec& spec);

struct FoldResult {
  std::string test_scene;
  EvalReport report;
  std::filesystem::path checkpoint;
  std::vector<double> losses;
  std::size_t training_patches = 0;
  bool audit_passed = false;  // no training patch was drawn from the held-out scene
};

/// Trains on every prepared scene except `scenes[test_index]`, then infers
/// and evaluates the held-out scene over all of its pixels. The checkpoint is
/// written to `checkpoint`.
FoldResult run_fold(const std::vector<ScenePair>& scenes, std::size_t test_index,
                    const PipelineConfig& config, const std::filesystem::path& checkpoint);

/// Single train/test split: trains on `train_scenes`, evaluates `test_scene`.
FoldResult cross_dataset_eval(const std::vector<ScenePair>& train_scenes, const ScenePair& test_scene,
                              const PipelineConfig& config, const std::filesystem::path& checkpoint);

/// Leave-one-out over all scenes, fold k holding out scene k. Checkpoints go
/// to `out_dir/fold_<k>/model.ckpt`.
std::vector<FoldResult> leave_one_out(const std::vector<ScenePair>& scenes, const PipelineConfig& config,
                                      const std::filesystem::path& out_dir);

}  // namespace mssp
