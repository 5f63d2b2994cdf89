#include "mssp/scene.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

namespace mssp {
namespace {

// Box mean with edge replication, via a summed-area table over the padded image.
Image window_mean(const Image& img, std::size_t window) {
  const std::size_t h = img.height(), w = img.width();
  const auto r = static_cast<std::ptrdiff_t>(window / 2);
  const std::size_t ph = h + 2 * r, pw = w + 2 * r;
  std::vector<double> sat((ph + 1) * (pw + 1), 0.0);
  for (std::size_t y = 0; y < ph; ++y) {
    double row = 0.0;
    for (std::size_t x = 0; x < pw; ++x) {
      row += img.clamped(static_cast<std::ptrdiff_t>(y) - r, static_cast<std::ptrdiff_t>(x) - r);
      sat[(y + 1) * (pw + 1) + x + 1] = sat[y * (pw + 1) + x + 1] + row;
    }
  }
  Image mean(h, w);
  const double inv = 1.0 / static_cast<double>(window * window);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t y1 = y + window, x1 = x + window;
      const double s = sat[y1 * (pw + 1) + x1] - sat[y * (pw + 1) + x1] - sat[y1 * (pw + 1) + x] +
                       sat[y * (pw + 1) + x];
      mean(y, x) = static_cast<float>(s * inv);
    }
  }
  return mean;
}

ChannelRange range_of(const Image& img) {
  ChannelRange r{img[0], img[0]};
  for (float v : img.data()) {
    r.lo = std::min(r.lo, v);
    r.hi = std::max(r.hi, v);
  }
  return r;
}

Image normalize(const Image& img, ChannelRange r) {
  Image out(img.height(), img.width());
  const float span = r.hi - r.lo;
  if (!(span > 0.0f)) return out;
  for (std::size_t i = 0; i < img.size(); ++i) {
    out[i] = std::clamp((img[i] - r.lo) / span, 0.0f, 1.0f);
  }
  return out;
}

void check_pair(const Image& im1, const Image& im2) {
  if (im1.empty()) throw ShapeError("difference image: empty input");
  if (!im1.same_shape(im2)) {
    throw ShapeError("difference image: im1 is " + std::to_string(im1.height()) + "x" +
                     std::to_string(im1.width()) + " but im2 is " + std::to_string(im2.height()) +
                     "x" + std::to_string(im2.width()));
  }
  for (const Image* img : {&im1, &im2}) {
    for (float v : img->data()) {
      if (!(v >= 0.0f)) throw DomainError("difference image: pixel value " + std::to_string(v) + " is negative or NaN");
    }
  }
}

}  // namespace

Image log_ratio_map(const Image& im1, const Image& im2, std::size_t window, double epsilon) {
  check_pair(im1, im2);
  if (window == 0 || window % 2 == 0) throw ConfigError("difference image: window must be odd");
  if (!(epsilon > 0.0)) throw ConfigError("difference image: epsilon must be > 0");
  const Image m1 = window_mean(im1, window);
  const Image m2 = window_mean(im2, window);
  Image lr(im1.height(), im1.width());
  for (std::size_t i = 0; i < lr.size(); ++i) {
    lr[i] = static_cast<float>(std::abs(std::log((m1[i] + epsilon) / (m2[i] + epsilon))));
  }
  return lr;
}

Image generate_di(const Image& im1, const Image& im2, std::size_t window, double epsilon) {
  const Image lr = log_ratio_map(im1, im2, window, epsilon);
  return normalize(lr, range_of(lr));
}

Mask boundary_band(const Mask& reference, std::size_t band) {
  require_binary(reference, "boundary_band");
  const std::size_t h = reference.height(), w = reference.width();
  const auto b = static_cast<std::ptrdiff_t>(band);
  // Separable min/max filters: rows, then columns.
  auto filter = [&](const Mask& in, bool horizontal, bool take_max) {
    Mask out(h, w);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        std::uint8_t acc = take_max ? 0 : 1;
        for (std::ptrdiff_t d = -b; d <= b; ++d) {
          const auto yy = static_cast<std::ptrdiff_t>(y) + (horizontal ? 0 : d);
          const auto xx = static_cast<std::ptrdiff_t>(x) + (horizontal ? d : 0);
          const std::uint8_t v = in.clamped(yy, xx);
          acc = take_max ? std::max(acc, v) : std::min(acc, v);
        }
        out(y, x) = acc;
      }
    }
    return out;
  };
  const Mask dilated = filter(filter(reference, true, true), false, true);
  const Mask eroded = filter(filter(reference, true, false), false, false);
  Mask result(h, w);
  for (std::size_t i = 0; i < result.size(); ++i) result[i] = dilated[i] ^ eroded[i];
  return result;
}

void prepare_scene(ScenePair& scene, std::size_t di_window) {
  check_pair(scene.im1, scene.im2);
  if (scene.reference) {
    if (!scene.reference->same_shape(scene.im1)) {
      throw ShapeError("scene '" + scene.name + "': reference dims differ from the images");
    }
    require_binary(*scene.reference, "reference");
  }
  scene.di = generate_di(scene.im1, scene.im2, di_window);
  scene.normalization = std::array<ChannelRange, 3>{range_of(scene.im1), range_of(scene.im2),
                                                    range_of(*scene.di)};
}

std::array<Image, 3> input_planes(const ScenePair& scene) {
  if (!scene.di || !scene.normalization) {
    throw ConfigError("scene '" + scene.name + "' is not prepared (no difference image)");
  }
  const auto& n = *scene.normalization;
  return {normalize(scene.im1, n[0]), normalize(scene.im2, n[1]), normalize(*scene.di, n[2])};
}

ScenePair load_scene(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest '" + manifest.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest '" + manifest.string() + "' is not valid JSON: " + e.what());
  }
  for (const auto& [key, value] : j.items()) {
    if (key != "im1" && key != "im2" && key != "reference" && key != "name") {
      throw ConfigError("manifest '" + manifest.string() + "': unknown key '" + key + "'");
    }
    if (!value.is_string()) throw ConfigError("manifest '" + manifest.string() + "': '" + key + "' must be a string");
  }
  if (!j.contains("im1") || !j.contains("im2")) {
    throw ConfigError("manifest '" + manifest.string() + "' must name im1 and im2");
  }
  const std::filesystem::path base = manifest.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  ScenePair scene;
  scene.name = j.value("name", manifest.stem().string());
  scene.im1 = load_image(resolve(j["im1"].get<std::string>()));
  scene.im2 = load_image(resolve(j["im2"].get<std::string>()));
  if (j.contains("reference")) scene.reference = load_mask(resolve(j["reference"].get<std::string>()));
  return scene;
}

void write_manifest(const std::filesystem::path& manifest, const std::string& name,
                    const std::filesystem::path& im1, const std::filesystem::path& im2,
                    const std::optional<std::filesystem::path>& reference) {
  nlohmann::ordered_json j;
  j["im1"] = im1.generic_string();
  j["im2"] = im2.generic_string();
  if (reference) j["reference"] = reference->generic_string();
  j["name"] = name;
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot open '" + manifest.string() + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + manifest.string() + "'");
}

}  // namespace mssp
