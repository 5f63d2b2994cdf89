#include "mssp/infer.hpp"

#include <algorithm>

namespace mssp {

std::vector<TileOrigin> tile_origins(std::size_t height, std::size_t width, std::size_t stride) {
  if (stride < 1 || stride > kPatchSize) {
    throw ConfigError("inference stride must be in [1, 32], got " + std::to_string(stride));
  }
  auto axis = [&](std::size_t extent) {
    std::vector<std::size_t> starts{0};
    while (starts.back() + kPatchSize < extent) starts.push_back(starts.back() + stride);
    return starts;
  };
  std::vector<TileOrigin> tiles;
  for (std::size_t y : axis(height)) {
    for (std::size_t x : axis(width)) tiles.push_back({y, x});
  }
  return tiles;
}

ChangeMap infer_scene(const ModelParams<float>& params, const ModelConfig& model, const ScenePair& scene,
                      std::size_t stride, InferStats* stats) {
  const std::array<Image, 3> planes = input_planes(scene);
  const std::size_t h = scene.height(), w = scene.width();
  const std::vector<TileOrigin> tiles = tile_origins(h, w, stride);
  constexpr std::size_t P = kPatchSize;
  constexpr std::size_t kChunk = 16;

  std::vector<double> sum(h * w, 0.0);
  std::vector<std::uint32_t> hits(h * w, 0);
  for (std::size_t start = 0; start < tiles.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, tiles.size() - start);
    Tensorf batch({n, P, P, kInputChannels});
    for (std::size_t k = 0; k < n; ++k) {
      const TileOrigin& t = tiles[start + k];
      float* dst = batch.raw() + k * P * P * kInputChannels;
      for (std::size_t py = 0; py < P; ++py) {
        for (std::size_t px = 0; px < P; ++px) {
          const auto y = static_cast<std::ptrdiff_t>(t.y + py), x = static_cast<std::ptrdiff_t>(t.x + px);
          for (std::size_t c = 0; c < kInputChannels; ++c) {
            dst[(py * P + px) * kInputChannels + c] = planes[c].clamped(y, x);
          }
        }
      }
    }
    const Tensorf prob = layers::softmax_positive(forward(params, model, batch, layers::Mode::eval).logits);
    for (std::size_t k = 0; k < n; ++k) {
      const TileOrigin& t = tiles[start + k];
      for (std::size_t py = 0; py < P && t.y + py < h; ++py) {
        for (std::size_t px = 0; px < P && t.x + px < w; ++px) {
          const std::size_t i = (t.y + py) * w + t.x + px;
          sum[i] += prob[(k * P + py) * P + px];
          hits[i] += 1;
        }
      }
    }
  }

  ChangeMap map{Mask(h, w), Image(h, w)};
  for (std::size_t i = 0; i < h * w; ++i) {
    map.prob[i] = static_cast<float>(sum[i] / hits[i]);
    map.labels[i] = map.prob[i] >= 0.5f ? 1 : 0;
  }
  if (stats) stats->tiles = tiles.size();
  return map;
}

}  // namespace mssp
