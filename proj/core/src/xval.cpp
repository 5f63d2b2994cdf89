#include "mssp/xval.hpp"

#include "mssp/checkpoint.hpp"
#include "mssp/rng.hpp"

namespace mssp {

TrainingSet pool_training_patches(const std::vector<const ScenePair*>& scenes,
                                  const std::vector<std::size_t>& scene_ids, const SampleSpec& spec) {
  if (scenes.empty()) throw ConfigError("no training scenes");
  if (scenes.size() != scene_ids.size()) throw ConfigError("scene id list does not match scene list");
  TrainingSet set;
  std::vector<PatchBatch> parts;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    SampleSpec s = spec;
    s.seed = substream_seed(spec.seed, "sampling." + std::to_string(scene_ids[i]));
    SampleResult r = sample_patches(*scenes[i], s, scene_ids[i]);
    parts.push_back(std::move(r.patches));
    set.centers.push_back(std::move(r.centers));
  }
  set.patches = concat_batches(parts);
  return set;
}

FoldResult run_fold(const std::vector<ScenePair>& scenes, std::size_t test_index,
                    const PipelineConfig& config, const std::filesystem::path& checkpoint) {
  if (scenes.size() < 2) throw ConfigError("cross-dataset evaluation needs at least 2 scenes");
  if (test_index >= scenes.size()) throw ConfigError("held-out scene index out of range");
  const ScenePair& test = scenes[test_index];
  if (!test.reference) throw ConfigError("held-out scene '" + test.name + "' has no reference");

  std::vector<const ScenePair*> train;
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (i == test_index) continue;
    train.push_back(&scenes[i]);
    ids.push_back(i);
  }
  const TrainingSet set = pool_training_patches(train, ids, config.sampling);

  FoldResult fold;
  fold.test_scene = test.name;
  fold.training_patches = set.patches.size();
  fold.audit_passed = true;
  for (const PatchSource& s : set.patches.sources) {
    if (s.scene == test_index) fold.audit_passed = false;
  }
  if (!fold.audit_passed) throw ConfigError("audit failed: held-out scene leaked into training");

  TrainResult trained =
      train_loop(init_params(config.train.seed, config.model), config.model, set.patches, config.train);
  fold.losses = std::move(trained.losses);
  save_checkpoint(trained.params, checkpoint, config.model);
  fold.checkpoint = checkpoint;

  const ChangeMap map = infer_scene(trained.params, config.model, test, config.infer_stride);
  fold.report = evaluate(map.labels, *test.reference);
  return fold;
}

FoldResult cross_dataset_eval(const std::vector<ScenePair>& train_scenes, const ScenePair& test_scene,
                              const PipelineConfig& config, const std::filesystem::path& checkpoint) {
  std::vector<ScenePair> all = train_scenes;
  all.push_back(test_scene);
  return run_fold(all, all.size() - 1, config, checkpoint);
}

std::vector<FoldResult> leave_one_out(const std::vector<ScenePair>& scenes, const PipelineConfig& config,
                                      const std::filesystem::path& out_dir) {
  std::vector<FoldResult> folds;
  for (std::size_t k = 0; k < scenes.size(); ++k) {
    const std::filesystem::path dir = out_dir / ("fold_" + std::to_string(k));
    std::filesystem::create_directories(dir);
    folds.push_back(run_fold(scenes, k, config, dir / "model.ckpt"));
  }
  return folds;
}

}  // namespace mssp
