#include "alphapool/data.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <zlib.h>

namespace alphapool {
namespace {

std::vector<std::uint8_t> read_raw(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  f.seekg(0, std::ios::end);
  const auto n = f.tellg();
  f.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(n));
  if (n > 0) f.read(reinterpret_cast<char*>(buf.data()), n);
  if (!f) throw std::runtime_error("failed to read file: " + path);
  return buf;
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in,
                                 const std::string& path) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 32) != Z_OK)
    throw std::runtime_error("zlib init failed for " + path);
  std::vector<std::uint8_t> out;
  out.reserve(in.size() * 4);
  std::uint8_t chunk[1 << 16];
  zs.next_in = const_cast<std::uint8_t*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  int rc = Z_OK;
  do {
    zs.next_out = chunk;
    zs.avail_out = sizeof(chunk);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw std::runtime_error("corrupt gzip stream: " + path);
    }
    out.insert(out.end(), chunk, chunk + (sizeof(chunk) - zs.avail_out));
  } while (rc != Z_STREAM_END);
  inflateEnd(&zs);
  return out;
}

std::string resolve(const std::string& path) {
  if (std::ifstream(path).good()) return path;
  if (std::ifstream(path + ".gz").good()) return path + ".gz";
  throw std::runtime_error("dataset file not found: " + path + " (nor .gz)");
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t off,
                        const std::string& path) {
  if (off + 4 > buf.size()) throw std::runtime_error("truncated file: " + path);
  return (std::uint32_t(buf[off]) << 24) | (std::uint32_t(buf[off + 1]) << 16) |
         (std::uint32_t(buf[off + 2]) << 8) | std::uint32_t(buf[off + 3]);
}

}  // namespace

std::vector<std::uint8_t> read_file_maybe_gz(const std::string& path) {
  auto buf = read_raw(path);
  if (buf.size() >= 2 && buf[0] == 0x1f && buf[1] == 0x8b) return gunzip(buf, path);
  return buf;
}

Tensor<float> load_idx_images(const std::string& path) {
  const std::string real = resolve(path);
  const auto buf = read_file_maybe_gz(real);
  const std::uint32_t magic = read_be32(buf, 0, real);
  if (magic != 2051)
    throw std::runtime_error("bad IDX image magic in " + real + ": got " +
                             std::to_string(magic) + ", expected 2051");
  const std::int64_t n = read_be32(buf, 4, real);
  const std::int64_t h = read_be32(buf, 8, real);
  const std::int64_t w = read_be32(buf, 12, real);
  if (n < 1 || h < 1 || w < 1)
    throw std::runtime_error("bad IDX image dimensions in " + real);
  if (buf.size() != 16 + static_cast<std::size_t>(n * h * w))
    throw std::runtime_error("IDX image payload size mismatch in " + real);

  Tensor<float> out(Shape{n, 1, h, w});
  float* p = out.data();
  const std::uint8_t* src = buf.data() + 16;
  for (std::int64_t i = 0; i < n * h * w; ++i) p[i] = static_cast<float>(src[i]) / 255.0f;
  return out;
}

std::vector<int> load_idx_labels(const std::string& path) {
  const std::string real = resolve(path);
  const auto buf = read_file_maybe_gz(real);
  const std::uint32_t magic = read_be32(buf, 0, real);
  if (magic != 2049)
    throw std::runtime_error("bad IDX label magic in " + real + ": got " +
                             std::to_string(magic) + ", expected 2049");
  const std::int64_t n = read_be32(buf, 4, real);
  if (n < 1) throw std::runtime_error("bad IDX label count in " + real);
  if (buf.size() != 8 + static_cast<std::size_t>(n))
    throw std::runtime_error("IDX label payload size mismatch in " + real);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = buf[8 + i];
  return labels;
}

Dataset load_mnist(const std::string& dir, const std::string& split) {
  std::string img, lab;
  if (split == "train") {
    img = dir + "/train-images-idx3-ubyte";
    lab = dir + "/train-labels-idx1-ubyte";
  } else if (split == "test") {
    img = dir + "/t10k-images-idx3-ubyte";
    lab = dir + "/t10k-labels-idx1-ubyte";
  } else {
    throw std::invalid_argument("mnist split must be train or test, got '" + split + "'");
  }
  Dataset d;
  d.images = load_idx_images(img);
  d.labels = load_idx_labels(lab);
  if (d.images.shape()[0] != static_cast<std::int64_t>(d.labels.size()))
    throw std::runtime_error("mnist: image/label count mismatch: " +
                             std::to_string(d.images.shape()[0]) + " vs " +
                             std::to_string(d.labels.size()));
  for (int y : d.labels)
    if (y < 0 || y > 9) throw std::runtime_error("mnist: label out of range");
  return d;
}

Dataset load_cifar10(const std::string& dir, const std::string& split) {
  std::vector<std::string> files;
  if (split == "train") {
    for (int i = 1; i <= 5; ++i) files.push_back(dir + "/data_batch_" + std::to_string(i) + ".bin");
  } else if (split == "test") {
    files.push_back(dir + "/test_batch.bin");
  } else {
    throw std::invalid_argument("cifar10 split must be train or test, got '" + split + "'");
  }

  constexpr std::int64_t kRecord = 3073;
  std::vector<std::uint8_t> all;
  for (const auto& f : files) {
    auto buf = read_file_maybe_gz(resolve(f));
    if (buf.empty() || buf.size() % kRecord != 0)
      throw std::runtime_error("cifar10: file size not a multiple of 3073: " + f);
    all.insert(all.end(), buf.begin(), buf.end());
  }

  const std::int64_t n = static_cast<std::int64_t>(all.size()) / kRecord;
  Dataset d;
  d.images = Tensor<float>(Shape{n, 3, 32, 32});
  d.labels.resize(static_cast<std::size_t>(n));
  float* p = d.images.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = all.data() + i * kRecord;
    if (rec[0] > 9) throw std::runtime_error("cifar10: label out of range");
    d.labels[static_cast<std::size_t>(i)] = rec[0];
    for (std::int64_t j = 0; j < 3072; ++j)
      p[i * 3072 + j] = static_cast<float>(rec[1 + j]) / 255.0f;
  }
  return d;
}

Dataset load_dataset(const std::string& name, const std::string& dir,
                     const std::string& split) {
  if (name == "mnist") return load_mnist(dir, split);
  if (name == "cifar10") return load_cifar10(dir, split);
  throw std::invalid_argument("unknown dataset '" + name + "' (expected mnist or cifar10)");
}

void augment_pad_crop(Batch& batch, int pad, std::mt19937& rng) {
  if (pad < 0) throw std::invalid_argument("augment: pad must be non-negative");
  if (pad == 0) return;
  const Shape& s = batch.images.shape();
  const std::int64_t n = s[0], c = s[1], h = s[2], w = s[3];
  std::uniform_int_distribution<int> off(0, 2 * pad);
  Tensor<float> out(s);
  const float* src = batch.images.data();
  float* dst = out.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const int dy = off(rng) - pad;
    const int dx = off(rng) - pad;
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const float* sp = src + (i * c + ch) * h * w;
      float* dp = dst + (i * c + ch) * h * w;
      for (std::int64_t y = 0; y < h; ++y) {
        const std::int64_t sy = y + dy;
        for (std::int64_t x = 0; x < w; ++x) {
          const std::int64_t sx = x + dx;
          dp[y * w + x] = (sy >= 0 && sy < h && sx >= 0 && sx < w) ? sp[sy * w + sx] : 0.0f;
        }
      }
    }
  }
  batch.images = std::move(out);
}

BatchIterator::BatchIterator(const Dataset& data, std::int64_t batch_size, bool shuffle,
                             std::mt19937& rng)
    : data_(data), batch_size_(batch_size) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  order_.resize(static_cast<std::size_t>(data.size()));
  std::iota(order_.begin(), order_.end(), 0);
  if (shuffle) std::shuffle(order_.begin(), order_.end(), rng);
}

bool BatchIterator::next(Batch& out) {
  const std::int64_t n = data_.size();
  if (cursor_ >= n) return false;
  const std::int64_t b = std::min(batch_size_, n - cursor_);
  const Shape& s = data_.images.shape();
  const std::int64_t item = s[1] * s[2] * s[3];
  out.images = Tensor<float>(Shape{b, s[1], s[2], s[3]});
  out.labels.resize(static_cast<std::size_t>(b));
  for (std::int64_t i = 0; i < b; ++i) {
    const std::int64_t src = order_[static_cast<std::size_t>(cursor_ + i)];
    std::memcpy(out.images.data() + i * item, data_.images.data() + src * item,
                static_cast<std::size_t>(item) * sizeof(float));
    out.labels[static_cast<std::size_t>(i)] = data_.labels[static_cast<std::size_t>(src)];
  }
  cursor_ += b;
  ++batches_done_;
  return true;
}

}  // namespace alphapool
