#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sparsetrain {

struct LabeledDataset {
  std::vector<float> inputs;   // size() * sample_dim(), row-major
  std::vector<int> labels;     // in [0, num_classes)
  std::vector<int> shape;      // per-sample dims, e.g. {1, 28, 28} or {features}
  int num_classes = 0;
  std::string split = "train";
  std::string normalization = "none";

  std::size_t size() const { return labels.size(); }
  std::size_t sample_dim() const {
    std::size_t d = 1;
    for (int s : shape) d *= static_cast<std::size_t>(s);
    return d;
  }
  const float* sample(std::size_t i) const { return inputs.data() + i * sample_dim(); }
};

// Reads an IDX image/label file pair (big-endian, magic 0x00000803 for images
// and 0x00000801 for labels). Pixels are scaled to [0, 1]. Throws FormatError
// naming the offending field on bad magic, truncation, or count mismatch.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

// Class-conditional Gaussians with fixed means on a scaled simplex
// (class c has mean blob_mean_scale * e_{c mod dims}). Deterministic per seed.
inline constexpr double kBlobMeanScale = 2.5;
inline constexpr double kBlobStddev = 0.5;

LabeledDataset synth_gaussian_blobs(int num_classes, int dims, int per_class,
                                    std::uint64_t seed);

// Epoch-keyed deterministic shuffle split into batches; the final partial
// batch is retained.
std::vector<std::vector<std::int32_t>> batches(const LabeledDataset& data,
                                               int batch_size, std::uint64_t seed,
                                               int epoch);

}  // namespace sparsetrain
