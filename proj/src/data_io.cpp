#include "sparsetrain/data_io.hpp"

#include <fstream>

#include "sparsetrain/errors.hpp"
#include "sparsetrain/rng.hpp"

namespace sparsetrain {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be_u32(std::ifstream& in, const std::string& field) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
    throw FormatError("truncated file while reading " + field);
  }
  return (static_cast<std::uint32_t>(bytes[0]) << 24) |
         (static_cast<std::uint32_t>(bytes[1]) << 16) |
         (static_cast<std::uint32_t>(bytes[2]) << 8) |
         static_cast<std::uint32_t>(bytes[3]);
}

std::ifstream open_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open " + path);
  }
  return in;
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream images = open_binary(images_path);
  const std::uint32_t image_magic = read_be_u32(images, "image magic");
  if (image_magic != kImagesMagic) {
    throw FormatError("image magic: expected 0x00000803, got " +
                      std::to_string(image_magic));
  }
  const std::uint32_t image_count = read_be_u32(images, "image count");
  const std::uint32_t rows = read_be_u32(images, "image rows");
  const std::uint32_t cols = read_be_u32(images, "image cols");
  if (rows == 0 || cols == 0) {
    throw FormatError("image dims: rows and cols must be nonzero");
  }

  std::ifstream labels = open_binary(labels_path);
  const std::uint32_t label_magic = read_be_u32(labels, "label magic");
  if (label_magic != kLabelsMagic) {
    throw FormatError("label magic: expected 0x00000801, got " +
                      std::to_string(label_magic));
  }
  const std::uint32_t label_count = read_be_u32(labels, "label count");
  if (label_count != image_count) {
    throw FormatError("count mismatch: " + std::to_string(image_count) + " images vs " +
                      std::to_string(label_count) + " labels");
  }

  LabeledDataset data;
  data.shape = {1, static_cast<int>(rows), static_cast<int>(cols)};
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> buffer(pixels);
  data.inputs.reserve(static_cast<std::size_t>(image_count) * pixels);
  data.labels.reserve(image_count);
  int max_label = -1;
  for (std::uint32_t i = 0; i < image_count; ++i) {
    if (!images.read(reinterpret_cast<char*>(buffer.data()),
                     static_cast<std::streamsize>(pixels))) {
      throw FormatError("truncated image data at sample " + std::to_string(i));
    }
    for (unsigned char px : buffer) {
      data.inputs.push_back(static_cast<float>(px) / 255.0f);
    }
    unsigned char label;
    if (!labels.read(reinterpret_cast<char*>(&label), 1)) {
      throw FormatError("truncated label data at sample " + std::to_string(i));
    }
    data.labels.push_back(static_cast<int>(label));
    max_label = std::max(max_label, static_cast<int>(label));
  }
  data.num_classes = max_label + 1;
  data.normalization = "divide_by_255";
  return data;
}

LabeledDataset synth_gaussian_blobs(int num_classes, int dims, int per_class,
                                    std::uint64_t seed) {
  if (num_classes < 1 || dims < 1 || per_class < 1) {
    throw std::invalid_argument("synth_gaussian_blobs: all counts must be positive");
  }
  LabeledDataset data;
  data.shape = {dims};
  data.num_classes = num_classes;
  data.normalization = "none";
  const std::size_t n = static_cast<std::size_t>(num_classes) * per_class;
  data.inputs.resize(n * static_cast<std::size_t>(dims));
  data.labels.resize(n);
  Rng rng(mix_seed(seed, 0x626c6f62));  // "blob"
  std::size_t row = 0;
  for (int c = 0; c < num_classes; ++c) {
    const int mean_axis = c % dims;
    for (int k = 0; k < per_class; ++k, ++row) {
      float* sample = data.inputs.data() + row * static_cast<std::size_t>(dims);
      for (int d = 0; d < dims; ++d) {
        const double mean = d == mean_axis ? kBlobMeanScale : 0.0;
        sample[d] = static_cast<float>(rng.normal(mean, kBlobStddev));
      }
      data.labels[row] = c;
    }
  }
  return data;
}

std::vector<std::vector<std::int32_t>> batches(const LabeledDataset& data,
                                               int batch_size, std::uint64_t seed,
                                               int epoch) {
  if (batch_size < 1) {
    throw std::invalid_argument("batches: batch_size must be >= 1");
  }
  const std::size_t n = data.size();
  std::vector<std::int32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::int32_t>(i);

  // Fisher-Yates keyed by (seed, epoch).
  Rng rng(mix_seed(seed, 0x73687566ull + static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng.index(i)]);
  }

  std::vector<std::vector<std::int32_t>> out;
  out.reserve((n + batch_size - 1) / batch_size);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + start, order.begin() + end);
  }
  return out;
}

}  // namespace sparsetrain
