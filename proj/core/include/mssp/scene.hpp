#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>

#include "mssp/image.hpp"

namespace mssp {

struct ChannelRange {
  float lo = 0.0f;
  float hi = 1.0f;
};

/// Two co-registered acquisitions, their difference image and (for
/// training/evaluation) the reference change mask, 1 = changed.
struct ScenePair {
  std::string name;
  Image im1;
  Image im2;
  std::optional<Image> di;
  std::optional<Mask> reference;
  // Min-max constants of (im1, im2, di), recorded by prepare_scene.
  std::optional<std::array<ChannelRange, 3>> normalization;

  std::size_t height() const noexcept { return im1.height(); }
  std::size_t width() const noexcept { return im1.width(); }
};

/// Neighborhood log-ratio difference image: |ln((μ1 + ε) / (μ2 + ε))| with
/// μ the window mean (edge-replicated), min-max normalized to [0,1]. A
/// constant map normalizes to all zeros.
Image generate_di(const Image& im1, const Image& im2, std::size_t window = 3, double epsilon = 1e-6);

/// Un-normalized log-ratio map, exposed for inspection and tests.
Image log_ratio_map(const Image& im1, const Image& im2, std::size_t window = 3, double epsilon = 1e-6);

/// Morphological gradient of the reference: dilation XOR erosion with a
/// (2·band+1)² square. Outside-image pixels replicate the border.
Mask boundary_band(const Mask& reference, std::size_t band);

/// Validates plane shapes, computes the DI and the per-channel min-max constants.
void prepare_scene(ScenePair& scene, std::size_t di_window = 3);

/// The three network input channels (im1, im2, di), each min-max normalized
/// with the scene's recorded constants. Requires a prepared scene.
std::array<Image, 3> input_planes(const ScenePair& scene);

/// Reads {"im1","im2","reference","name"}; relative paths resolve against the
/// manifest's directory. "reference" may be omitted for inference-only scenes.
ScenePair load_scene(const std::filesystem::path& manifest);

void write_manifest(const std::filesystem::path& manifest, const std::string& name,
                    const std::filesystem::path& im1, const std::filesystem::path& im2,
                    const std::optional<std::filesystem::path>& reference);

}  // namespace mssp
