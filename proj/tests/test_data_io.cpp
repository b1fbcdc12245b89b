#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <vector>

#include "sparsetrain/data_io.hpp"
#include "sparsetrain/errors.hpp"
#include "support.hpp"

using namespace sparsetrain;

TEST_CASE("load_idx reads a well-formed pair and scales pixels") {
  testutil::TempDir tmp;
  const int n = 50, rows = 28, cols = 28;
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(n) * rows * cols);
  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = static_cast<std::uint8_t>(i % 256);
  }
  for (int i = 0; i < n; ++i) labels[i] = static_cast<std::uint8_t>(i % 10);
  testutil::write_idx_pair(tmp.file("img"), tmp.file("lab"), pixels, labels, rows,
                           cols);

  const LabeledDataset ds = load_idx(tmp.file("img"), tmp.file("lab"));
  CHECK(ds.size() == 50);
  CHECK(ds.shape == std::vector<int>{1, 28, 28});
  CHECK(ds.sample_dim() == 784);
  CHECK(ds.num_classes == 10);
  CHECK(ds.normalization == "divide_by_255");
  CHECK(ds.inputs[0] == 0.0f);
  CHECK(ds.inputs[255] == 1.0f);
  CHECK(ds.inputs[128] == doctest::Approx(128.0 / 255.0));
  CHECK(ds.labels[7] == 7);
}

TEST_CASE("load_idx names the offending field on malformed input") {
  testutil::TempDir tmp;
  const std::vector<std::uint8_t> pixels(2 * 4 * 4, 9);
  const std::vector<std::uint8_t> labels = {0, 1};
  testutil::write_idx_pair(tmp.file("img"), tmp.file("lab"), pixels, labels, 4, 4);

  SUBCASE("wrong magic in labels") {
    // overwrite the labels file with the image magic
    std::ofstream out(tmp.file("lab"), std::ios::binary | std::ios::trunc);
    testutil::write_be32(out, 0x00000803);
    testutil::write_be32(out, 2);
    out.put(0);
    out.put(1);
    out.close();
    CHECK_THROWS_WITH_AS(load_idx(tmp.file("img"), tmp.file("lab")),
                         doctest::Contains("label magic"), FormatError);
  }
  SUBCASE("empty files") {
    std::ofstream(tmp.file("img"), std::ios::trunc).close();
    CHECK_THROWS_AS(load_idx(tmp.file("img"), tmp.file("lab")), FormatError);
  }
  SUBCASE("count mismatch") {
    const std::vector<std::uint8_t> three_labels = {0, 1, 2};
    {
      std::ofstream out(tmp.file("lab"), std::ios::binary | std::ios::trunc);
      testutil::write_be32(out, 0x00000801);
      testutil::write_be32(out, 3);
      out.write(reinterpret_cast<const char*>(three_labels.data()), 3);
    }
    CHECK_THROWS_WITH_AS(load_idx(tmp.file("img"), tmp.file("lab")),
                         doctest::Contains("count mismatch"), FormatError);
  }
  SUBCASE("truncated pixel payload") {
    // header says 2 images, provide only half the bytes
    std::ofstream out(tmp.file("img"), std::ios::binary | std::ios::trunc);
    testutil::write_be32(out, 0x00000803);
    testutil::write_be32(out, 2);
    testutil::write_be32(out, 4);
    testutil::write_be32(out, 4);
    const std::vector<std::uint8_t> half(16, 1);
    out.write(reinterpret_cast<const char*>(half.data()), 16);
    out.close();
    CHECK_THROWS_WITH_AS(load_idx(tmp.file("img"), tmp.file("lab")),
                         doctest::Contains("truncated"), FormatError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_idx(tmp.file("nope"), tmp.file("lab")), FormatError);
  }
}

TEST_CASE("synthetic blobs are separable and deterministic") {
  const LabeledDataset a = synth_gaussian_blobs(2, 2, 100, 7);
  CHECK(a.size() == 200);
  CHECK(a.num_classes == 2);

  // closed-form Bayes rule for equal isotropic Gaussians: nearest class mean
  int correct = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const float* x = a.sample(i);
    int best = 0;
    double best_d = 1e300;
    for (int c = 0; c < 2; ++c) {
      double d = 0.0;
      for (int k = 0; k < 2; ++k) {
        const double mean = (c % 2 == k) ? kBlobMeanScale : 0.0;
        d += (x[k] - mean) * (x[k] - mean);
      }
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    if (best == a.labels[i]) ++correct;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(a.size()) >= 0.99);

  const LabeledDataset b = synth_gaussian_blobs(2, 2, 100, 7);
  CHECK(a.inputs == b.inputs);  // bitwise
  CHECK(a.labels == b.labels);

  const LabeledDataset c = synth_gaussian_blobs(2, 2, 100, 8);
  CHECK(a.inputs != c.inputs);

  const LabeledDataset one = synth_gaussian_blobs(1, 3, 10, 1);
  CHECK(std::all_of(one.labels.begin(), one.labels.end(),
                    [](int l) { return l == 0; }));
}

TEST_CASE("batches: sizes, determinism, and permutation property") {
  const LabeledDataset ds = synth_gaussian_blobs(2, 2, 5, 3);  // N = 10
  const auto bs = batches(ds, 4, 11, 0);
  REQUIRE(bs.size() == 3);
  CHECK(bs[0].size() == 4);
  CHECK(bs[1].size() == 4);
  CHECK(bs[2].size() == 2);

  CHECK(batches(ds, 4, 11, 0) == bs);  // same seed and epoch

  const auto other_epoch = batches(ds, 4, 11, 1);
  CHECK(other_epoch != bs);

  // both are permutations of 0..N-1
  for (const auto& split : {bs, other_epoch}) {
    std::vector<std::int32_t> flat;
    for (const auto& b : split) flat.insert(flat.end(), b.begin(), b.end());
    std::sort(flat.begin(), flat.end());
    for (std::int32_t i = 0; i < 10; ++i) CHECK(flat[i] == i);
  }
}

TEST_CASE("batches validates batch_size") {
  const LabeledDataset ds = synth_gaussian_blobs(2, 2, 5, 3);
  CHECK_THROWS_AS(batches(ds, 0, 1, 0), std::invalid_argument);
}
