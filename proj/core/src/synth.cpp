#include "mssp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <tuple>

#include "mssp/rng.hpp"

namespace mssp {

void SynthSpec::validate() const {
  if (height == 0 || width == 0) throw ConfigError("synth: scene extent must be >= 1");
  if (looks < 1) throw ConfigError("synth: looks must be >= 1");
  if (!(radius_min > 0.0) || radius_max < radius_min) throw ConfigError("synth: invalid radius range");
  if (!(contrast > 1.0)) throw ConfigError("synth: contrast must be > 1");
}

namespace {

Image smooth_background(const SynthSpec& spec, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double h = static_cast<double>(spec.height), w = static_cast<double>(spec.width);
  struct Bump {
    double cy, cx, sigma, amplitude;
  };
  std::vector<Bump> bumps(5);
  for (Bump& b : bumps) {
    b.cy = unit(rng) * h;
    b.cx = unit(rng) * w;
    b.sigma = (0.12 + 0.25 * unit(rng)) * std::max(h, w);
    b.amplitude = -0.4 + 1.2 * unit(rng);
  }
  Image bg(spec.height, spec.width);
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      double v = 1.0;
      for (const Bump& b : bumps) {
        const double dy = static_cast<double>(y) - b.cy, dx = static_cast<double>(x) - b.cx;
        v += b.amplitude * std::exp(-(dy * dy + dx * dx) / (2.0 * b.sigma * b.sigma));
      }
      bg(y, x) = static_cast<float>(std::max(v, 0.1));
    }
  }
  return bg;
}

std::vector<Disc> place_discs(const SynthSpec& spec, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Disc> discs;
  constexpr int kAttempts = 2000;
  for (std::size_t i = 0; i < spec.n_regions; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
      Disc d;
      d.radius = spec.radius_min + (spec.radius_max - spec.radius_min) * unit(rng);
      const double margin = d.radius + 2.0;
      const double span_y = static_cast<double>(spec.height) - 1.0 - 2.0 * margin;
      const double span_x = static_cast<double>(spec.width) - 1.0 - 2.0 * margin;
      if (span_y < 0.0 || span_x < 0.0) continue;
      d.cy = margin + span_y * unit(rng);
      d.cx = margin + span_x * unit(rng);
      placed = std::all_of(discs.begin(), discs.end(), [&](const Disc& o) {
        return std::hypot(d.cy - o.cy, d.cx - o.cx) >= d.radius + o.radius + 3.0;
      });
      if (placed) {
        d.pixels = static_cast<std::size_t>(std::llround(std::numbers::pi * d.radius * d.radius));
        discs.push_back(d);
      }
    }
    if (!placed) {
      throw ConfigError("synth: could not place region " + std::to_string(i + 1) + " of " +
                        std::to_string(spec.n_regions) + " without overlap");
    }
  }
  return discs;
}

void rasterize(const Disc& d, Mask& mask) {
  const double reach = d.radius + 2.0;
  const auto y0 = static_cast<std::ptrdiff_t>(std::floor(d.cy - reach));
  const auto y1 = static_cast<std::ptrdiff_t>(std::ceil(d.cy + reach));
  const auto x0 = static_cast<std::ptrdiff_t>(std::floor(d.cx - reach));
  const auto x1 = static_cast<std::ptrdiff_t>(std::ceil(d.cx + reach));
  std::vector<std::tuple<double, std::size_t, std::size_t>> candidates;
  for (std::ptrdiff_t y = y0; y <= y1; ++y) {
    for (std::ptrdiff_t x = x0; x <= x1; ++x) {
      if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(mask.height()) ||
          x >= static_cast<std::ptrdiff_t>(mask.width())) {
        continue;
      }
      const double dy = static_cast<double>(y) - d.cy, dx = static_cast<double>(x) - d.cx;
      candidates.emplace_back(dy * dy + dx * dx, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    }
  }
  std::sort(candidates.begin(), candidates.end());
  for (std::size_t k = 0; k < d.pixels && k < candidates.size(); ++k) {
    mask(std::get<1>(candidates[k]), std::get<2>(candidates[k])) = 1;
  }
}

Image speckle_field(std::size_t h, std::size_t w, std::uint32_t looks, Rng& rng) {
  const double shape = static_cast<double>(looks);
  std::gamma_distribution<double> gamma(shape, 1.0 / shape);
  Image s(h, w);
  for (float& v : s.data()) v = static_cast<float>(gamma(rng));
  return s;
}

}  // namespace

SynthScene synth_scene(const SynthSpec& spec) {
  spec.validate();
  Rng layout = make_rng(spec.seed, "synth.layout");
  Rng speckle = make_rng(spec.seed, "speckle");

  SynthScene out;
  out.background = smooth_background(spec, layout);
  out.discs = place_discs(spec, layout);

  Mask reference(spec.height, spec.width);
  for (const Disc& d : out.discs) rasterize(d, reference);

  out.speckle1 = speckle_field(spec.height, spec.width, spec.looks, speckle);
  out.speckle2 = speckle_field(spec.height, spec.width, spec.looks, speckle);

  ScenePair& scene = out.scene;
  scene.name = "synth-" + std::to_string(spec.seed);
  scene.im1 = Image(spec.height, spec.width);
  scene.im2 = Image(spec.height, spec.width);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const float b = out.background[i];
    const float b2 = reference[i] ? static_cast<float>(b * spec.contrast) : b;
    scene.im1[i] = b * out.speckle1[i];
    scene.im2[i] = b2 * out.speckle2[i];
    changed += reference[i];
  }
  out.changed_fraction = static_cast<double>(changed) / static_cast<double>(reference.size());
  scene.reference = std::move(reference);
  return out;
}

}  // namespace mssp
