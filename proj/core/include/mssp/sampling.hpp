#pragma once

#include <cstdint>
#include <vector>

#include "mssp/scene.hpp"
#include "mssp/tensor.hpp"

namespace mssp {

struct SampleSpec {
  double fraction = 0.20;        // share of pixel positions drawn as patch centers
  double boundary_share = 0.50;  // share of those centers drawn from the boundary band
  std::size_t boundary_band = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Where a training patch came from.
struct PatchSource {
  std::size_t scene = 0;
  std::size_t y = 0;
  std::size_t x = 0;
};

/// N×32×32×3 inputs in [0,1] (im1, im2, di) and N×32×32 binary labels.
struct PatchBatch {
  Tensorf inputs;
  Tensorf labels;
  std::vector<PatchSource> sources;

  std::size_t size() const noexcept { return sources.size(); }
};

struct SampleResult {
  PatchBatch patches;
  Mask centers;  // 1 where a patch center was drawn; exclude these when evaluating
};

/// Boundary-guided stratified draw of patch centers (without replacement):
/// ⌊fraction·H·W⌋ centers, `boundary_share` of them from the boundary band,
/// the rest split evenly between changed and unchanged pixels outside it.
/// Exhausted strata hand their quota to the others.
SampleResult sample_patches(const ScenePair& scene, const SampleSpec& spec, std::size_t scene_index = 0);

/// 32×32 crops centered at the given flat pixel indices (rows y−16..y+15),
/// edge-replicated at the borders. Labels need a reference; without one they are zero.
PatchBatch extract_patches(const ScenePair& scene, const std::vector<std::size_t>& centers,
                           std::size_t scene_index = 0);

/// Stacks batches in order.
PatchBatch concat_batches(const std::vector<PatchBatch>& batches);

/// Copies the selected samples, in the given order.
PatchBatch select_patches(const PatchBatch& batch, const std::vector<std::size_t>& indices);

}  // namespace mssp
