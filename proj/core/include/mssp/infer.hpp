#pragma once

#include <cstddef>
#include <vector>

#include "mssp/model.hpp"
#include "mssp/scene.hpp"

namespace mssp {

struct ChangeMap {
  Mask labels;  // 1 = changed; prob ≥ 0.5
  Image prob;   // changed-class probability
};

struct TileOrigin {
  std::size_t y = 0;
  std::size_t x = 0;
};

/// Top-left corners of the 32×32 tiles covering an h×w scene at `stride`:
/// 0, stride, 2·stride, ... along each axis until a tile reaches the far edge.
/// Tiles hanging over the border read edge-replicated pixels.
std::vector<TileOrigin> tile_origins(std::size_t height, std::size_t width, std::size_t stride);

struct InferStats {
  std::size_t tiles = 0;
};

/// Whole-scene change map: eval-mode forward over every tile, per-pixel
/// average of the changed probabilities of all tiles covering the pixel,
/// then a 0.5 threshold (ties count as changed).
ChangeMap infer_scene(const ModelParams<float>& params, const ModelConfig& model, const ScenePair& scene,
                      std::size_t stride = 16, InferStats* stats = nullptr);

}  // namespace mssp
