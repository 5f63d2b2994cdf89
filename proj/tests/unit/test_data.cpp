#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "mssp/image.hpp"
#include "mssp/sampling.hpp"
#include "mssp/scene.hpp"
#include "mssp/synth.hpp"
#include "tempdir.hpp"

namespace mssp {
namespace {

using testing_support::TempDir;
using testing_support::write_file;

Image random_image(std::size_t h, std::size_t w, std::mt19937_64& rng, float lo = 0.0f, float hi = 1.0f) {
  Image im(h, w);
  std::uniform_real_distribution<float> u(lo, hi);
  for (float& v : im.data()) v = u(rng);
  return im;
}

// Window mean by direct summation with clamped coordinates.
double window_mean(const Image& im, std::size_t y, std::size_t x, std::size_t window) {
  const auto r = static_cast<std::ptrdiff_t>(window / 2);
  double s = 0.0;
  for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
    for (std::ptrdiff_t dx = -r; dx <= r; ++dx) s += im.clamped(static_cast<std::ptrdiff_t>(y) + dy, static_cast<std::ptrdiff_t>(x) + dx);
  }
  return s / static_cast<double>(window * window);
}

// Dilation XOR erosion, evaluated pixel by pixel.
Mask brute_band(const Mask& ref, std::size_t band) {
  Mask out(ref.height(), ref.width());
  const auto b = static_cast<std::ptrdiff_t>(band);
  for (std::size_t y = 0; y < ref.height(); ++y) {
    for (std::size_t x = 0; x < ref.width(); ++x) {
      bool any = false, all = true;
      for (std::ptrdiff_t dy = -b; dy <= b; ++dy) {
        for (std::ptrdiff_t dx = -b; dx <= b; ++dx) {
          const bool v = ref.clamped(static_cast<std::ptrdiff_t>(y) + dy, static_cast<std::ptrdiff_t>(x) + dx) != 0;
          any = any || v;
          all = all && v;
        }
      }
      out(y, x) = (any != all) ? 1 : 0;
    }
  }
  return out;
}

std::size_t count(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.data()) n += v;
  return n;
}

// 100×100 scene with a 20-pixel checkerboard reference: plenty of boundary.
ScenePair checker_scene(std::size_t h = 100, std::size_t w = 100, std::size_t cell = 20) {
  std::mt19937_64 rng(5);
  ScenePair s;
  s.name = "checker";
  s.im1 = random_image(h, w, rng, 0.1f, 1.0f);
  s.im2 = random_image(h, w, rng, 0.1f, 1.0f);
  Mask ref(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) ref(y, x) = ((y / cell + x / cell) % 2) ? 1 : 0;
  s.reference = ref;
  prepare_scene(s);
  return s;
}

// ---- difference image ------------------------------------------------------

TEST(DifferenceImage, IdenticalInputsGiveZero) {
  std::mt19937_64 rng(1);
  const Image im = random_image(9, 7, rng);
  const Image di = generate_di(im, im);
  for (float v : di.data()) EXPECT_EQ(v, 0.0f);
}

TEST(DifferenceImage, UniformMeansTwoAndFourGiveLn2) {
  const Image a(5, 5, 2.0f), b(5, 5, 4.0f);
  const Image lr = log_ratio_map(a, b, 3, 1e-12);
  for (float v : lr.data()) EXPECT_NEAR(v, std::log(2.0), 1e-6);
}

TEST(DifferenceImage, MatchesDirectWindowFormula) {
  std::mt19937_64 rng(2);
  const Image a = random_image(11, 13, rng), b = random_image(11, 13, rng);
  for (std::size_t window : {1u, 3u, 5u}) {
    const Image lr = log_ratio_map(a, b, window, 1e-6);
    double lo = 1e300, hi = -1e300;
    for (std::size_t y = 0; y < 11; ++y) {
      for (std::size_t x = 0; x < 13; ++x) {
        const double want = std::abs(std::log((window_mean(a, y, x, window) + 1e-6) / (window_mean(b, y, x, window) + 1e-6)));
        EXPECT_NEAR(lr(y, x), want, 1e-5) << y << "," << x;
        lo = std::min(lo, want);
        hi = std::max(hi, want);
      }
    }
    const Image di = generate_di(a, b, window);
    for (std::size_t i = 0; i < di.size(); ++i) EXPECT_NEAR(di[i], (lr[i] - lo) / (hi - lo), 1e-4);
  }
}

TEST(DifferenceImage, SymmetricAndScaleInvariant) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Image a = random_image(16, 12, rng, 0.05f, 1.0f), b = random_image(16, 12, rng, 0.05f, 1.0f);
    const Image di = generate_di(a, b);
    EXPECT_EQ(di, generate_di(b, a));
    Image a2 = a, b2 = b;
    const float k = std::uniform_real_distribution<float>(0.5f, 20.0f)(rng);
    for (float& v : a2.data()) v *= k;
    for (float& v : b2.data()) v *= k;
    const Image scaled = generate_di(a2, b2);
    for (std::size_t i = 0; i < di.size(); ++i) EXPECT_NEAR(scaled[i], di[i], 1e-3);
    for (float v : di.data()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(DifferenceImage, Errors) {
  EXPECT_THROW(generate_di(Image(4, 4), Image(4, 5)), ShapeError);
  Image neg(3, 3, 1.0f);
  neg(1, 1) = -0.5f;
  EXPECT_THROW(generate_di(neg, Image(3, 3, 1.0f)), DomainError);
  EXPECT_THROW(generate_di(Image(3, 3), Image(3, 3), 4), ConfigError);
}

// ---- boundary band ---------------------------------------------------------

TEST(BoundaryBand, EmptyReferenceGivesEmptyBand) { EXPECT_EQ(count(boundary_band(Mask(10, 10), 2)), 0u); }

TEST(BoundaryBand, SinglePixelGivesItsNeighborhood) {
  Mask ref(7, 7);
  ref(3, 3) = 1;
  const Mask band = boundary_band(ref, 1);
  EXPECT_EQ(count(band), 9u);
  for (std::size_t y = 2; y <= 4; ++y)
    for (std::size_t x = 2; x <= 4; ++x) EXPECT_EQ(band(y, x), 1);
}

TEST(BoundaryBand, HalfPlaneGivesStraightStrip) {
  Mask ref(20, 30);
  for (std::size_t y = 0; y < 20; ++y)
    for (std::size_t x = 15; x < 30; ++x) ref(y, x) = 1;
  for (std::size_t b : {1u, 2u, 3u}) {
    const Mask band = boundary_band(ref, b);
    for (std::size_t y = 0; y < 20; ++y) {
      for (std::size_t x = 0; x < 30; ++x) {
        EXPECT_EQ(band(y, x), (x >= 15 - b && x < 15 + b) ? 1 : 0) << b << ":" << y << "," << x;
      }
    }
  }
}

TEST(BoundaryBand, MatchesBruteForceAndIsMonotone) {
  std::mt19937_64 rng(4);
  std::bernoulli_distribution coin(0.1);
  for (int trial = 0; trial < 10; ++trial) {
    Mask ref(23, 17);
    for (auto& v : ref.data()) v = coin(rng);
    Mask prev;
    for (std::size_t b = 1; b <= 4; ++b) {
      const Mask band = boundary_band(ref, b);
      EXPECT_EQ(band, brute_band(ref, b));
      if (b >= 2) {
        for (std::size_t i = 0; i < band.size(); ++i) EXPECT_GE(band[i], prev[i]);
      }
      prev = band;
    }
  }
}

// ---- sampling --------------------------------------------------------------

TEST(Sampling, DefaultsOnHundredSquareScene) {
  const ScenePair s = checker_scene();
  const Mask band = boundary_band(*s.reference, 2);
  ASSERT_GE(count(band), 1000u);
  const auto r = sample_patches(s, SampleSpec{});
  EXPECT_EQ(r.patches.size(), 2000u);
  EXPECT_EQ(count(r.centers), 2000u);
  std::size_t in_band = 0, changed = 0;
  for (std::size_t i = 0; i < r.centers.size(); ++i) {
    if (!r.centers[i]) continue;
    if (band[i]) ++in_band;
    else changed += (*s.reference)[i];
  }
  EXPECT_EQ(in_band, 1000u);
  EXPECT_EQ(changed, 500u);
}

TEST(Sampling, ExhaustiveDrawVisitsEveryPixelOnce) {
  const ScenePair s = checker_scene(40, 36, 9);
  const auto r = sample_patches(s, SampleSpec{1.0, 0.0, 2, 3});
  EXPECT_EQ(r.patches.size(), 40u * 36u);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& src : r.patches.sources) EXPECT_TRUE(seen.insert({src.y, src.x}).second);
  EXPECT_EQ(seen.size(), 40u * 36u);
}

TEST(Sampling, DeterministicUnderSeed) {
  const ScenePair s = checker_scene();
  const SampleSpec spec{0.05, 0.5, 2, 11};
  const auto a = sample_patches(s, spec), b = sample_patches(s, spec);
  EXPECT_EQ(a.centers, b.centers);
  EXPECT_EQ(a.patches.inputs, b.patches.inputs);
  SampleSpec other = spec;
  other.seed = 12;
  EXPECT_NE(sample_patches(s, other).centers, a.centers);
}

TEST(Sampling, CropsMatchReferenceAndNormalizedInputs) {
  const ScenePair s = checker_scene(50, 60, 7);
  const auto planes = input_planes(s);
  const auto r = sample_patches(s, SampleSpec{0.1, 0.5, 2, 4}, 3);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t n = 0; n < r.patches.size(); ++n) {
    const auto& src = r.patches.sources[n];
    EXPECT_EQ(src.scene, 3u);
    EXPECT_TRUE(seen.insert({src.y, src.x}).second);
    for (std::size_t py = 0; py < 32; ++py) {
      for (std::size_t px = 0; px < 32; ++px) {
        const auto y = static_cast<std::ptrdiff_t>(src.y + py) - 16, x = static_cast<std::ptrdiff_t>(src.x + px) - 16;
        ASSERT_EQ(r.patches.labels.at(n, py, px), static_cast<float>(s.reference->clamped(y, x)));
        for (std::size_t c = 0; c < 3; ++c) {
          const float v = r.patches.inputs.at(n, py, px, c);
          ASSERT_EQ(v, planes[c].clamped(y, x));
          ASSERT_GE(v, 0.0f);
          ASSERT_LE(v, 1.0f);
        }
      }
    }
  }
}

TEST(Sampling, SmallBandHandsQuotaToOtherStrata) {
  ScenePair s = checker_scene(64, 64, 64);  // a single cell: no changes, no band
  const auto r = sample_patches(s, SampleSpec{0.25, 0.5, 2, 1});
  EXPECT_EQ(r.patches.size(), 1024u);
}

TEST(Sampling, Errors) {
  ScenePair s = checker_scene();
  EXPECT_THROW(sample_patches(s, SampleSpec{0.0}), ConfigError);
  EXPECT_THROW(sample_patches(s, SampleSpec{0.2, 1.5}), ConfigError);
  EXPECT_THROW(sample_patches(s, SampleSpec{1e-6}), ConfigError);
  s.reference.reset();
  EXPECT_THROW(sample_patches(s, SampleSpec{}), ConfigError);
  ScenePair raw;
  raw.im1 = Image(40, 40);
  raw.im2 = Image(40, 40);
  raw.reference = Mask(40, 40);
  EXPECT_THROW(sample_patches(raw, SampleSpec{}), ConfigError);
  EXPECT_THROW(input_planes(raw), ConfigError);
}

TEST(Sampling, SelectAndConcat) {
  const auto r = sample_patches(checker_scene(), SampleSpec{0.001, 0.5, 2, 2});
  ASSERT_EQ(r.patches.size(), 10u);
  const PatchBatch picked = select_patches(r.patches, {3, 1});
  EXPECT_EQ(picked.inputs.dims(), (Dims{2, 32, 32, 3}));
  EXPECT_EQ(picked.sources[0].y, r.patches.sources[3].y);
  const PatchBatch both = concat_batches({picked, r.patches});
  EXPECT_EQ(both.size(), 12u);
  EXPECT_EQ(both.labels.at(2, 5, 5), r.patches.labels.at(0, 5, 5));
  EXPECT_THROW(select_patches(r.patches, {10}), ShapeError);
}

// ---- synthetic scenes ------------------------------------------------------

TEST(Synth, NoSpeckleLimitRecoversBackground) {
  SynthSpec spec;
  spec.looks = 1000000;
  spec.seed = 1;
  const auto s = synth_scene(spec);
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < s.background.size(); ++i) {
    err += std::pow(s.scene.im1[i] - s.background[i], 2);
    ref += std::pow(s.background[i], 2);
  }
  EXPECT_LT(std::sqrt(err / ref), 0.01);
}

TEST(Synth, SpeckleMomentsFollowGammaModel) {
  SynthSpec spec;
  spec.seed = 2;
  const auto s = synth_scene(spec);
  for (const Image* plane : {&s.speckle1, &s.speckle2}) {
    double mean = 0.0, sq = 0.0;
    for (float v : plane->data()) mean += v;
    mean /= plane->size();
    for (float v : plane->data()) sq += (v - mean) * (v - mean);
    EXPECT_NEAR(mean, 1.0, 0.02);
    EXPECT_NEAR(sq / (plane->size() - 1), 0.25, 0.025);
  }
}

TEST(Synth, ReferenceAreaMatchesDiscAreas) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthSpec spec;
    spec.seed = seed;
    const auto s = synth_scene(spec);
    ASSERT_EQ(s.discs.size(), spec.n_regions);
    double analytic = 0.0;
    for (const auto& d : s.discs) analytic += std::numbers::pi * d.radius * d.radius;
    const double area = static_cast<double>(count(*s.scene.reference));
    EXPECT_LE(std::abs(area - analytic), 1.0 * s.discs.size()) << "seed " << seed;
    EXPECT_NEAR(s.changed_fraction, area / (256.0 * 256.0), 1e-12);
  }
}

TEST(Synth, DiscIntensityRatioIsContrast) {
  SynthSpec spec;
  spec.radius_min = 13.0;  // every disc covers at least 500 pixels
  spec.radius_max = 20.0;
  spec.seed = 3;
  const auto s = synth_scene(spec);
  double sum1 = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < s.scene.im1.size(); ++i) {
    EXPECT_GE(s.scene.im1[i], 0.0f);
    EXPECT_GE(s.scene.im2[i], 0.0f);
    if ((*s.scene.reference)[i]) {
      sum1 += s.scene.im1[i];
      sum2 += s.scene.im2[i];
    }
  }
  EXPECT_NEAR(sum2 / sum1 / spec.contrast, 1.0, 0.1);
}

TEST(Synth, DeterministicAndValidated) {
  SynthSpec spec;
  spec.seed = 4;
  const auto a = synth_scene(spec), b = synth_scene(spec);
  EXPECT_EQ(a.scene.im1, b.scene.im1);
  EXPECT_EQ(a.scene.reference, b.scene.reference);
  SynthSpec crowded = spec;
  crowded.height = crowded.width = 48;
  crowded.n_regions = 20;
  EXPECT_THROW(synth_scene(crowded), ConfigError);
  SynthSpec flat = spec;
  flat.contrast = 1.0;
  EXPECT_THROW(synth_scene(flat), ConfigError);
}

// ---- PGM I/O ---------------------------------------------------------------

TEST(Pgm, HeaderWithTwelveBytes) {
  TempDir dir("pgm");
  std::string bytes = "P5 4 3 255\n";
  for (int i = 0; i < 12; ++i) bytes.push_back(static_cast<char>(i * 20));
  write_file(dir / "a.pgm", bytes);
  const Image im = load_image(dir / "a.pgm");
  EXPECT_EQ(im.height(), 3u);
  EXPECT_EQ(im.width(), 4u);
  EXPECT_FLOAT_EQ(im(2, 3), 220.0f / 255.0f);
}

TEST(Pgm, SixteenBitRoundTrip) {
  TempDir dir("pgm");
  std::mt19937_64 rng(6);
  const Image im = random_image(17, 23, rng);
  save_image(im, dir / "b.pgm", 16);
  const Image back = load_image(dir / "b.pgm");
  ASSERT_TRUE(back.same_shape(im));
  for (std::size_t i = 0; i < im.size(); ++i) EXPECT_LE(std::abs(back[i] - im[i]), 1.0 / 65535.0 + 1e-7);
  save_image(im, dir / "c.pgm", 8);
  const Image coarse = load_image(dir / "c.pgm");
  for (std::size_t i = 0; i < im.size(); ++i) EXPECT_LE(std::abs(coarse[i] - im[i]), 0.5 / 255.0 + 1e-6);
}

TEST(Pgm, DistinctErrors) {
  TempDir dir("pgm");
  write_file(dir / "t.pgm", "P5 4 3 255\n" + std::string(11, 'x'));
  EXPECT_THROW(load_image(dir / "t.pgm"), TruncationError);
  write_file(dir / "h.pgm", "P6 4 3 255\n" + std::string(36, 'x'));
  EXPECT_THROW(load_image(dir / "h.pgm"), HeaderError);
  write_file(dir / "w.pgm", "P5 four 3 255\n");
  EXPECT_THROW(load_image(dir / "w.pgm"), HeaderError);
  write_file(dir / "o.pgm", "P5 70000 2 255\n");
  EXPECT_THROW(load_image(dir / "o.pgm"), DimensionOverflowError);
  EXPECT_THROW(load_image(dir / "missing.pgm"), IoError);
}

TEST(Pgm, MasksAreZeroOrFull) {
  TempDir dir("pgm");
  Mask m(2, 3);
  m(0, 1) = 1;
  m(1, 2) = 1;
  save_mask(m, dir / "m.pgm");
  const std::string bytes = testing_support::read_file(dir / "m.pgm");
  EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 1]), 255);
  EXPECT_EQ(bytes[bytes.size() - 2], 0);
  EXPECT_EQ(load_mask(dir / "m.pgm"), m);
  write_file(dir / "g.pgm", std::string("P5 2 1 255\n") + '\0' + '\x80');
  EXPECT_THROW(load_mask(dir / "g.pgm"), DomainError);
}

// ---- manifests -------------------------------------------------------------

TEST(Manifest, RoundTripWithRelativePaths) {
  TempDir dir("manifest");
  std::mt19937_64 rng(7);
  const Image a = random_image(8, 9, rng), b = random_image(8, 9, rng);
  Mask ref(8, 9);
  ref(4, 4) = 1;
  save_image(a, dir / "a.pgm");
  save_image(b, dir / "b.pgm");
  save_mask(ref, dir / "r.pgm");
  write_manifest(dir / "scene.json", "demo", "a.pgm", "b.pgm", std::filesystem::path("r.pgm"));
  const ScenePair s = load_scene(dir / "scene.json");
  EXPECT_EQ(s.name, "demo");
  EXPECT_EQ(s.height(), 8u);
  ASSERT_TRUE(s.reference.has_value());
  EXPECT_EQ(*s.reference, ref);
  EXPECT_FALSE(s.di.has_value());
}

TEST(Manifest, RejectsUnknownKeysAndMissingImages) {
  TempDir dir("manifest");
  write_file(dir / "x.json", R"({"im1":"a.pgm","im2":"b.pgm","colour":"red"})");
  EXPECT_THROW(load_scene(dir / "x.json"), ConfigError);
  write_file(dir / "y.json", R"({"im1":"a.pgm"})");
  EXPECT_THROW(load_scene(dir / "y.json"), ConfigError);
  write_file(dir / "z.json", "{not json");
  EXPECT_THROW(load_scene(dir / "z.json"), ConfigError);
}

}  // namespace
}  // namespace mssp
