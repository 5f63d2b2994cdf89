#pragma once

#include <cstdint>
#include <vector>

#include "mssp/scene.hpp"

namespace mssp {

/// Desk-scale surrogate for a bitemporal SAR pair with known changes.
struct SynthSpec {
  std::size_t height = 256;
  std::size_t width = 256;
  std::uint32_t looks = 4;       // gamma speckle shape; variance 1/looks
  std::size_t n_regions = 6;     // changed discs
  double radius_min = 12.0;
  double radius_max = 20.0;
  double contrast = 4.0;         // intensity factor applied inside the discs at time 2
  std::uint64_t seed = 0;

  void validate() const;
};

struct Disc {
  double cy = 0.0;
  double cx = 0.0;
  double radius = 0.0;
  std::size_t pixels = 0;  // round(π r²)
};

struct SynthScene {
  ScenePair scene;      // im1, im2 and reference; not yet prepared
  Image background;     // clean time-1 reflectivity
  Image speckle1;       // multiplicative speckle realizations
  Image speckle2;
  std::vector<Disc> discs;
  double changed_fraction = 0.0;
};

/// im1 = b·S1 and im2 = b'·S2, where b is a smooth positive background, b'
/// multiplies each disc by `contrast`, and S1, S2 are independent unit-mean
/// gamma speckle fields with shape `looks`. Each disc is rasterized as the
/// round(π r²) pixels nearest its center. Throws ConfigError when the discs
/// cannot be placed without overlap.
SynthScene synth_scene(const SynthSpec& spec);

}  // namespace mssp
