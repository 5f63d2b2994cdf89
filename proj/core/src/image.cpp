#include "mssp/image.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

namespace mssp {
namespace {

// Largest accepted side; keeps width·height·2 well inside size_t and memory.
constexpr std::uint64_t kMaxExtent = 1u << 16;

struct Pgm {
  std::size_t width = 0, height = 0;
  unsigned maxval = 0;
  std::vector<std::uint16_t> pixels;
};

class HeaderParser {
 public:
  HeaderParser(const std::vector<unsigned char>& data, const std::string& path) : d_(data), path_(path) {}

  void skip_space_and_comments() {
    while (pos_ < d_.size()) {
      if (d_[pos_] == '#') {
        while (pos_ < d_.size() && d_[pos_] != '\n') ++pos_;
      } else if (std::isspace(d_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::uint64_t number(const char* field) {
    skip_space_and_comments();
    if (pos_ >= d_.size()) throw TruncationError(path_ + ": header ends before " + field);
    if (!std::isdigit(d_[pos_])) throw HeaderError(path_ + ": malformed " + std::string(field));
    std::uint64_t v = 0;
    while (pos_ < d_.size() && std::isdigit(d_[pos_])) {
      v = v * 10 + (d_[pos_] - '0');
      if (v > std::numeric_limits<std::uint32_t>::max()) {
        throw DimensionOverflowError(path_ + ": " + field + " too large");
      }
      ++pos_;
    }
    return v;
  }

  std::size_t pos_ = 0;

 private:
  const std::vector<unsigned char>& d_;
  const std::string& path_;
};

Pgm read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  const std::vector<unsigned char> data(std::istreambuf_iterator<char>(in), {});
  const std::string name = path.string();

  if (data.size() < 2) throw TruncationError(name + ": file too short for a PGM header");
  if (data[0] != 'P' || data[1] != '5') throw HeaderError(name + ": not a binary PGM (P5)");
  HeaderParser p(data, name);
  p.pos_ = 2;
  if (p.pos_ < data.size() && !std::isspace(data[p.pos_]) && data[p.pos_] != '#') {
    throw HeaderError(name + ": malformed magic");
  }
  Pgm pgm;
  const std::uint64_t width = p.number("width");
  const std::uint64_t height = p.number("height");
  const std::uint64_t maxval = p.number("maxval");
  if (width == 0 || height == 0) throw HeaderError(name + ": zero image extent");
  if (width > kMaxExtent || height > kMaxExtent) {
    throw DimensionOverflowError(name + ": extent " + std::to_string(width) + "x" +
                                 std::to_string(height) + " exceeds limit");
  }
  if (maxval == 0 || maxval > 65535) throw HeaderError(name + ": maxval must be 1..65535");
  if (p.pos_ >= data.size()) throw TruncationError(name + ": missing pixel data");
  if (!std::isspace(data[p.pos_])) throw HeaderError(name + ": expected whitespace after maxval");
  ++p.pos_;

  pgm.width = width;
  pgm.height = height;
  pgm.maxval = static_cast<unsigned>(maxval);
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  const std::size_t count = pgm.width * pgm.height;
  if (data.size() - p.pos_ < count * bytes_per) {
    throw TruncationError(name + ": pixel data truncated (" + std::to_string(data.size() - p.pos_) +
                          " of " + std::to_string(count * bytes_per) + " bytes)");
  }
  pgm.pixels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t o = p.pos_ + i * bytes_per;
    // 16-bit PGM samples are big-endian.
    pgm.pixels[i] = bytes_per == 2 ? static_cast<std::uint16_t>((data[o] << 8) | data[o + 1]) : data[o];
    if (pgm.pixels[i] > pgm.maxval) {
      throw HeaderError(name + ": sample " + std::to_string(pgm.pixels[i]) + " exceeds maxval");
    }
  }
  return pgm;
}

void write_pgm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               unsigned maxval, const std::vector<std::uint16_t>& samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "P5\n" << width << ' ' << height << '\n' << maxval << '\n';
  if (maxval > 255) {
    for (std::uint16_t s : samples) {
      const char b[2] = {static_cast<char>(s >> 8), static_cast<char>(s & 0xff)};
      out.write(b, 2);
    }
  } else {
    for (std::uint16_t s : samples) out.put(static_cast<char>(s));
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  const Pgm pgm = read_pgm(path);
  Image img(pgm.height, pgm.width);
  const double scale = 1.0 / pgm.maxval;
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(pgm.pixels[i] * scale);
  return img;
}

void save_image(const Image& plane, const std::filesystem::path& path, int bits) {
  if (bits != 8 && bits != 16) throw ConfigError("save_image: bits must be 8 or 16");
  if (plane.empty()) throw ShapeError("save_image: empty image");
  const unsigned maxval = bits == 16 ? 65535u : 255u;
  std::vector<std::uint16_t> samples(plane.size());
  for (std::size_t i = 0; i < plane.size(); ++i) {
    const double v = std::clamp(static_cast<double>(plane[i]), 0.0, 1.0);
    samples[i] = static_cast<std::uint16_t>(std::lround(v * maxval));
  }
  write_pgm(path, plane.height(), plane.width(), maxval, samples);
}

Mask load_mask(const std::filesystem::path& path) {
  const Pgm pgm = read_pgm(path);
  Mask mask(pgm.height, pgm.width);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const std::uint16_t v = pgm.pixels[i];
    if (v != 0 && v != pgm.maxval) {
      throw DomainError(path.string() + ": mask pixel " + std::to_string(i) + " has value " +
                        std::to_string(v) + ", expected 0 or " + std::to_string(pgm.maxval));
    }
    mask[i] = v == 0 ? 0 : 1;
  }
  return mask;
}

void save_mask(const Mask& mask, const std::filesystem::path& path) {
  require_binary(mask, "save_mask");
  if (mask.empty()) throw ShapeError("save_mask: empty mask");
  std::vector<std::uint16_t> samples(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) samples[i] = mask[i] ? 255 : 0;
  write_pgm(path, mask.height(), mask.width(), 255, samples);
}

void require_binary(const Mask& mask, const char* what) {
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] > 1) {
      throw DomainError(std::string(what) + ": pixel " + std::to_string(i) + " has value " +
                        std::to_string(mask[i]) + ", expected 0 or 1");
    }
  }
}

}  // namespace mssp
