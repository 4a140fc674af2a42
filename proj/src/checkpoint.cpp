#include "alphapool/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace alphapool {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

constexpr char kMagic[4] = {'A', 'P', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
  std::ofstream f;

  explicit Writer(const std::string& path) : f(path, std::ios::binary) {
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  }

  void bytes(const void* p, std::size_t n) { f.write(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void i32(std::int32_t v) { bytes(&v, 4); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void floats(const std::vector<float>& v) {
    u64(v.size());
    bytes(v.data(), v.size() * sizeof(float));
  }
};

struct Reader {
  std::vector<char> buf;
  std::size_t pos = 0;
  std::string path;

  explicit Reader(const std::string& p) : path(p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + p);
    f.seekg(0, std::ios::end);
    buf.resize(static_cast<std::size_t>(f.tellg()));
    f.seekg(0, std::ios::beg);
    if (!buf.empty()) f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("failed to read checkpoint: " + p);
  }

  void bytes(void* p, std::size_t n) {
    if (pos + n > buf.size())
      throw std::runtime_error("corrupted checkpoint (truncated): " + path);
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
  std::int32_t i32() { std::int32_t v; bytes(&v, 4); return v; }
  std::string str() {
    const std::uint64_t n = u64();
    if (pos + n > buf.size())
      throw std::runtime_error("corrupted checkpoint (truncated): " + path);
    std::string s(buf.data() + pos, n);
    pos += n;
    return s;
  }
  std::vector<float> floats() {
    const std::uint64_t n = u64();
    if (pos + n * sizeof(float) > buf.size())
      throw std::runtime_error("corrupted checkpoint (truncated): " + path);
    std::vector<float> v(n);
    bytes(v.data(), n * sizeof(float));
    return v;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  Writer w(path);
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.str(data.config_text);
  w.i32(data.epochs_done);
  for (const auto& s : data.rng_states) w.str(s);
  w.u32(static_cast<std::uint32_t>(data.params.size()));
  for (const auto& [name, values] : data.params) {
    w.str(name);
    w.floats(values);
  }
  w.u32(static_cast<std::uint32_t>(data.velocities.size()));
  for (const auto& [name, values] : data.velocities) {
    w.str(name);
    w.floats(values);
  }
  w.f.flush();
  if (!w.f) throw std::runtime_error("failed to write checkpoint: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic): " + path);
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                             " in " + path);
  CheckpointData d;
  d.config_text = r.str();
  d.epochs_done = r.i32();
  for (auto& s : d.rng_states) s = r.str();
  const std::uint32_t np = r.u32();
  for (std::uint32_t i = 0; i < np; ++i) {
    std::string name = r.str();
    d.params.emplace_back(std::move(name), r.floats());
  }
  const std::uint32_t nv = r.u32();
  for (std::uint32_t i = 0; i < nv; ++i) {
    std::string name = r.str();
    d.velocities.emplace_back(std::move(name), r.floats());
  }
  if (r.pos != r.buf.size())
    throw std::runtime_error("corrupted checkpoint (trailing bytes): " + path);
  return d;
}

}  // namespace alphapool
