#include "ltssl/checkpoint.hpp"

#include "ltssl/errors.hpp"

#include <cstring>
#include <fstream>

namespace ltssl {

// Layout: "LTCK", version byte, fingerprint (u32 length + bytes), iteration
// (u64), array count (u32), then per array: name (u32 length + bytes),
// rank (u32), dims (u32 each), float32 values. All integers little-endian.

namespace {

constexpr char kMagic[4] = {'L', 'T', 'C', 'K'};
constexpr std::uint8_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t get_le(std::istream& is, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof()) throw DataError("checkpoint truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

std::string get_string(std::istream& is) {
  const auto n = static_cast<std::size_t>(get_le(is, 4));
  if (n > (1u << 20)) throw DataError("checkpoint string too long");
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw DataError("checkpoint truncated");
  return s;
}

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

void Checkpoint::put(const std::string& name, std::vector<int> shape, std::vector<float> values) {
  arrays.push_back({name, std::move(shape), std::move(values)});
}

void Checkpoint::put(const std::string& prefix, const ModelParams& params) {
  for (const auto& t : params) {
    std::vector<float> v(t.values().begin(), t.values().end());
    put(prefix + "/" + t.name(), t.shape(), std::move(v));
  }
}

void Checkpoint::get(const std::string& prefix, ModelParams& params) const {
  for (auto& t : params) {
    const std::string key = prefix + "/" + t.name();
    const NamedArray* a = find(key);
    if (!a) throw ConfigError("checkpoint is missing array '" + key + "'");
    if (a->shape != t.shape()) throw ConfigError("checkpoint array '" + key + "' has the wrong shape");
    auto dst = t.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = a->values[i];
  }
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint '" + path.string() + "'");
    os.write(kMagic, 4);
    os.put(static_cast<char>(kVersion));
    put_string(os, ckpt.fingerprint);
    put_u64(os, static_cast<std::uint64_t>(ckpt.iteration));
    put_u32(os, static_cast<std::uint32_t>(ckpt.arrays.size()));
    for (const auto& a : ckpt.arrays) {
      put_string(os, a.name);
      put_u32(os, static_cast<std::uint32_t>(a.shape.size()));
      for (int d : a.shape) put_u32(os, static_cast<std::uint32_t>(d));
      for (float f : a.values) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(os, bits);
      }
    }
    if (!os) throw DataError("write to checkpoint '" + path.string() + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint '" + path.string() + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("'" + path.string() + "' is not a checkpoint");
  if (is.get() != kVersion) throw DataError("unsupported checkpoint version");
  Checkpoint ckpt;
  ckpt.fingerprint = get_string(is);
  ckpt.iteration = static_cast<std::int64_t>(get_le(is, 8));
  const auto count = get_le(is, 4);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = get_string(is);
    const auto rank = get_le(is, 4);
    std::size_t n = 1;
    for (std::uint64_t r = 0; r < rank; ++r) {
      a.shape.push_back(static_cast<int>(get_le(is, 4)));
      n *= static_cast<std::size_t>(a.shape.back());
    }
    a.values.resize(n);
    for (float& f : a.values) {
      const auto bits = static_cast<std::uint32_t>(get_le(is, 4));
      std::memcpy(&f, &bits, 4);
    }
    ckpt.arrays.push_back(std::move(a));
  }
  return ckpt;
}

}  // namespace ltssl
