#include "mssp/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mssp/model.hpp"
#include "mssp/rng.hpp"

namespace mssp {

void SampleSpec::validate() const {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("sample fraction must be in (0, 1], got " + std::to_string(fraction));
  }
  if (!(boundary_share >= 0.0 && boundary_share <= 1.0)) {
    throw ConfigError("boundary share must be in [0, 1], got " + std::to_string(boundary_share));
  }
}

namespace {

// Draws `count` distinct elements uniformly (partial Fisher–Yates).
std::vector<std::size_t> draw(std::vector<std::size_t> pool, std::size_t count, Rng& rng) {
  count = std::min(count, pool.size());
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace

SampleResult sample_patches(const ScenePair& scene, const SampleSpec& spec, std::size_t scene_index) {
  spec.validate();
  if (!scene.reference) throw ConfigError("scene '" + scene.name + "' has no reference; cannot sample");
  if (!scene.di) throw ConfigError("scene '" + scene.name + "' is not prepared (no difference image)");
  const Mask& ref = *scene.reference;
  const std::size_t pixels = ref.size();
  const auto total = static_cast<std::size_t>(std::floor(spec.fraction * static_cast<double>(pixels) + 1e-9));
  if (total < 1) throw ConfigError("sample fraction draws no centers on scene '" + scene.name + "'");

  const Mask band = boundary_band(ref, spec.boundary_band);
  std::vector<std::size_t> in_band, changed, unchanged;
  for (std::size_t i = 0; i < pixels; ++i) {
    if (band[i]) {
      in_band.push_back(i);
    } else if (ref[i]) {
      changed.push_back(i);
    } else {
      unchanged.push_back(i);
    }
  }

  std::size_t n_band = std::min<std::size_t>(
      static_cast<std::size_t>(std::llround(spec.boundary_share * static_cast<double>(total))), in_band.size());
  const std::size_t rest = total - n_band;
  std::size_t n_changed = std::min(rest / 2, changed.size());
  std::size_t n_unchanged = std::min(rest - n_changed, unchanged.size());
  n_changed = std::min(rest - n_unchanged, changed.size());
  // Whatever the two outer strata could not supply goes back to the band.
  n_band += rest - n_changed - n_unchanged;

  Rng rng = make_rng(spec.seed, "sampling");
  std::vector<std::size_t> centers = draw(std::move(in_band), n_band, rng);
  for (std::size_t c : draw(std::move(changed), n_changed, rng)) centers.push_back(c);
  for (std::size_t c : draw(std::move(unchanged), n_unchanged, rng)) centers.push_back(c);

  SampleResult result;
  result.centers = Mask(ref.height(), ref.width());
  for (std::size_t c : centers) result.centers[c] = 1;
  result.patches = extract_patches(scene, centers, scene_index);
  return result;
}

PatchBatch extract_patches(const ScenePair& scene, const std::vector<std::size_t>& centers,
                           std::size_t scene_index) {
  if (centers.empty()) throw ConfigError("extract_patches: no centers");
  const std::array<Image, 3> planes = input_planes(scene);
  const std::size_t h = scene.height(), w = scene.width();
  const std::size_t n = centers.size();
  constexpr std::size_t P = kPatchSize;
  constexpr auto half = static_cast<std::ptrdiff_t>(P / 2);

  PatchBatch batch;
  batch.inputs = Tensorf({n, P, P, kInputChannels});
  batch.labels = Tensorf({n, P, P});
  batch.sources.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (centers[k] >= h * w) throw ShapeError("extract_patches: center outside the scene");
    const auto cy = static_cast<std::ptrdiff_t>(centers[k] / w);
    const auto cx = static_cast<std::ptrdiff_t>(centers[k] % w);
    batch.sources.push_back({scene_index, static_cast<std::size_t>(cy), static_cast<std::size_t>(cx)});
    float* in = batch.inputs.raw() + k * P * P * kInputChannels;
    float* lab = batch.labels.raw() + k * P * P;
    for (std::size_t py = 0; py < P; ++py) {
      for (std::size_t px = 0; px < P; ++px) {
        const std::ptrdiff_t y = cy - half + static_cast<std::ptrdiff_t>(py);
        const std::ptrdiff_t x = cx - half + static_cast<std::ptrdiff_t>(px);
        const std::size_t o = py * P + px;
        for (std::size_t c = 0; c < kInputChannels; ++c) in[o * kInputChannels + c] = planes[c].clamped(y, x);
        lab[o] = scene.reference ? static_cast<float>(scene.reference->clamped(y, x)) : 0.0f;
      }
    }
  }
  return batch;
}

PatchBatch concat_batches(const std::vector<PatchBatch>& batches) {
  std::size_t n = 0;
  for (const PatchBatch& b : batches) n += b.size();
  if (n == 0) throw ConfigError("concat_batches: no patches");
  constexpr std::size_t P = kPatchSize;
  PatchBatch out;
  out.inputs = Tensorf({n, P, P, kInputChannels});
  out.labels = Tensorf({n, P, P});
  std::size_t at = 0;
  for (const PatchBatch& b : batches) {
    if (b.size() == 0) continue;
    std::copy(b.inputs.data().begin(), b.inputs.data().end(), out.inputs.raw() + at * P * P * kInputChannels);
    std::copy(b.labels.data().begin(), b.labels.data().end(), out.labels.raw() + at * P * P);
    out.sources.insert(out.sources.end(), b.sources.begin(), b.sources.end());
    at += b.size();
  }
  return out;
}

PatchBatch select_patches(const PatchBatch& batch, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ConfigError("select_patches: no indices");
  constexpr std::size_t P = kPatchSize;
  constexpr std::size_t in_stride = P * P * kInputChannels;
  constexpr std::size_t label_stride = P * P;
  PatchBatch out;
  out.inputs = Tensorf({indices.size(), P, P, kInputChannels});
  out.labels = Tensorf({indices.size(), P, P});
  out.sources.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= batch.size()) throw ShapeError("select_patches: index out of range");
    std::copy_n(batch.inputs.raw() + i * in_stride, in_stride, out.inputs.raw() + k * in_stride);
    std::copy_n(batch.labels.raw() + i * label_stride, label_stride, out.labels.raw() + k * label_stride);
    out.sources.push_back(batch.sources[i]);
  }
  return out;
}

}  // namespace mssp
