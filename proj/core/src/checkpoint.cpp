#include "mssp/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace mssp {
namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      buf_.push_back(static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
    }
  }
  const std::vector<unsigned char>& buffer() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> data) : data_(std::move(data)) {}

  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) {
      throw CheckpointTruncationError("checkpoint truncated while reading " + std::string(what) +
                                      " at byte " + std::to_string(pos_));
    }
  }
  template <typename U>
  U le(const char* what) {
    need(sizeof(U), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::vector<unsigned char> data_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path,
                     const ModelConfig& config) {
  try {
    validate_roster(params, config);
  } catch (const ShapeError& e) {
    throw CheckpointRosterError(std::string("cannot save incomplete model: ") + e.what());
  }
  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.le<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.dims()) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (float v : t.data()) w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const auto& buf = w.buffer();
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path, const ModelConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  Reader r(std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {}));

  if (r.remaining() < sizeof kCheckpointMagic ||
      r.str(sizeof kCheckpointMagic, "magic") != std::string(kCheckpointMagic, sizeof kCheckpointMagic)) {
    throw CheckpointMagicError("'" + path.string() + "' is not an MSSPNET1 checkpoint");
  }
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.le<std::uint32_t>("tensor count");

  const std::vector<RosterEntry> roster = model_roster(config);
  auto expected = [&](const std::string& name) -> const RosterEntry* {
    for (const RosterEntry& e : roster) {
      if (e.name == name) return &e;
    }
    return nullptr;
  };

  ModelParams<float> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.le<std::uint16_t>("name length");
    std::string name = r.str(name_len, "name");
    const RosterEntry* entry = expected(name);
    if (!entry) throw CheckpointRosterError("unexpected tensor '" + name + "' in checkpoint");
    if (params.contains(name)) throw CheckpointRosterError("duplicate tensor '" + name + "' in checkpoint");
    const auto rank = r.le<std::uint8_t>("rank");
    if (rank == 0 || rank > 4) {
      throw CheckpointError("tensor '" + name + "' has invalid rank " + std::to_string(rank));
    }
    Dims dims(rank);
    for (auto& d : dims) d = r.le<std::uint32_t>("dims");
    if (dims != entry->dims) {
      throw CheckpointRosterError("tensor '" + name + "' has dims " + dims_to_string(dims) +
                                  ", expected " + dims_to_string(entry->dims));
    }
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    r.need(n * sizeof(float), "tensor payload");
    std::vector<float> values(n);
    for (float& v : values) v = std::bit_cast<float>(r.le<std::uint32_t>("tensor payload"));
    params.insert(std::move(name), Tensor<float>(std::move(dims), std::move(values)));
  }
  if (r.remaining() != 0) {
    throw CheckpointError("checkpoint has " + std::to_string(r.remaining()) + " trailing bytes");
  }
  for (const RosterEntry& e : roster) {
    if (!params.contains(e.name)) throw CheckpointRosterError("checkpoint is missing tensor '" + e.name + "'");
  }
  // Restore roster order independent of the file's tensor order.
  ModelParams<float> ordered;
  for (const RosterEntry& e : roster) ordered.insert(e.name, params.get(e.name));
  return ordered;
}

}  // namespace mssp
