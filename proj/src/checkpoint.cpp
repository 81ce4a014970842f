#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "tap/errors.hpp"
#include "tap/json_io.hpp"
#include "tap/world_model.hpp"

namespace tap {
namespace {

constexpr char kMagic[4] = {'T', 'A', 'P', 'W'};

template <class T>
void put_le(std::string& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
  }
}

void put_f64(std::string& out, double v) {
  put_le(out, std::bit_cast<std::uint64_t>(v));
}

std::uint32_t crc_of(const char* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t offset() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw ParseError("checkpoint truncated while reading " + std::string(what) +
                           " at offset " + std::to_string(pos_),
                       pos_);
    }
  }

  std::string bytes_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Parses header and metadata; leaves the reader at the section count.
Json read_header(Reader& r) {
  const std::string magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw ParseError("not a checkpoint (bad magic)", 0);
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) +
                       ", expected " + std::to_string(kCheckpointVersion));
  }
  const auto meta_len = r.get<std::uint32_t>("metadata length");
  const std::size_t meta_at = r.offset();
  const std::string meta = r.take(meta_len, "metadata");
  Json j = Json::parse(meta, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("arch")) {
    throw ParseError("checkpoint metadata is not valid JSON", meta_at);
  }
  return j;
}

}  // namespace

void save_checkpoint(const WorldModel& model, const std::filesystem::path& path,
                     const std::string& extra_metadata_json) {
  Json extra = Json::parse(extra_metadata_json, nullptr, false);
  if (extra.is_discarded()) throw DomainError("save_checkpoint: extra metadata is not JSON");
  const Json meta = {{"arch", arch_to_json(model.arch)},
                     {"format", "tap-world-model"},
                     {"extra", extra}};
  const std::string meta_text = meta.dump();

  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(meta_text.size()));
  out += meta_text;
  WorldModel copy = model;
  const ParamList params = copy.params();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put_le<std::uint64_t>(out, p.rows);
    put_le<std::uint64_t>(out, p.cols);
    const std::size_t data_at = out.size();
    for (double v : p.values) put_f64(out, v);
    put_le<std::uint32_t>(out, crc_of(out.data() + data_at, out.size() - data_at));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

WorldModel load_checkpoint(const std::filesystem::path& path) {
  Reader r(read_file(path));
  const Json meta = read_header(r);
  ArchConfig arch;
  try {
    arch = arch_from_json(meta.at("arch"));
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint architecture: ") + e.what(), 0);
  }
  WorldModel model = init_world_model(arch, 0);
  ParamList params = model.params();
  const auto count = r.get<std::uint32_t>("section count");
  if (count != params.size()) {
    throw ParseError("checkpoint has " + std::to_string(count) + " sections, expected " +
                         std::to_string(params.size()),
                     r.offset());
  }
  for (auto& p : params) {
    const std::size_t at = r.offset();
    const auto name_len = r.get<std::uint32_t>("section name length");
    const std::string name = r.take(name_len, "section name");
    const auto rows = r.get<std::uint64_t>("section rows");
    const auto cols = r.get<std::uint64_t>("section cols");
    if (name != p.name || rows != p.rows || cols != p.cols) {
      throw ParseError("section '" + name + "' does not match expected '" + p.name + "'", at);
    }
    const std::size_t data_at = r.offset();
    const std::string data = r.take(rows * cols * 8, "section data");
    const auto crc = r.get<std::uint32_t>("section crc");
    if (crc != crc_of(data.data(), data.size())) {
      throw ParseError("CRC mismatch in section '" + name + "'", data_at);
    }
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      std::uint64_t bits = 0;
      for (std::size_t b = 0; b < 8; ++b) {
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[i * 8 + b])) << (8 * b);
      }
      p.values[i] = std::bit_cast<double>(bits);
    }
  }
  return model;
}

std::string read_checkpoint_metadata(const std::filesystem::path& path) {
  Reader r(read_file(path));
  return read_header(r).dump();
}

}  // namespace tap
