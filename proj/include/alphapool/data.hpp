#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "alphapool/tensor.hpp"

namespace alphapool {

struct Dataset {
  Tensor<float> images;  // (N, C, H, W), values in [0, 1]
  std::vector<int> labels;
  int num_classes = 10;

  std::int64_t size() const { return images.empty() ? 0 : images.shape()[0]; }
};

struct Batch {
  Tensor<float> images;
  std::vector<int> labels;
};

// Whole file into memory; transparently inflates gzip (magic 1f 8b).
std::vector<std::uint8_t> read_file_maybe_gz(const std::string& path);

// IDX files as distributed for MNIST-style datasets.  Accepts "<name>" or
// "<name>.gz" on disk.
Tensor<float> load_idx_images(const std::string& path);
std::vector<int> load_idx_labels(const std::string& path);

Dataset load_mnist(const std::string& dir, const std::string& split);
Dataset load_cifar10(const std::string& dir, const std::string& split);
Dataset load_dataset(const std::string& name, const std::string& dir,
                     const std::string& split);

// Zero-pad by `pad` on each side, then crop back at a uniformly random
// offset.  Offsets are drawn per image, row then column.  pad = 0 is the
// identity and consumes no randomness.
void augment_pad_crop(Batch& batch, int pad, std::mt19937& rng);

// One pass over a dataset in fixed batches; optionally shuffled once at
// construction.  The final batch may be smaller.
class BatchIterator {
 public:
  BatchIterator(const Dataset& data, std::int64_t batch_size, bool shuffle,
                std::mt19937& rng);

  bool next(Batch& out);
  std::int64_t batches_done() const { return batches_done_; }

 private:
  const Dataset& data_;
  std::int64_t batch_size_;
  std::vector<std::int64_t> order_;
  std::int64_t cursor_ = 0;
  std::int64_t batches_done_ = 0;
};

}  // namespace alphapool
