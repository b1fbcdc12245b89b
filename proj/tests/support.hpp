#pragma once

// Shared test helpers: scratch directories, IDX fixtures, error metrics.

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace testutil {

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1.0);
}

// Scratch directory under the system temp root, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::uint64_t counter = 0;
    const auto base = std::filesystem::temp_directory_path();
    path_ = base / ("sparsetrain_test_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_be32(std::ofstream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {
      static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
      static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

// Writes an IDX image/label file pair with the given pixel bytes (row-major
// n * rows * cols) and labels.
inline void write_idx_pair(const std::string& images_path,
                           const std::string& labels_path,
                           const std::vector<std::uint8_t>& pixels,
                           const std::vector<std::uint8_t>& labels, int rows,
                           int cols) {
  const std::uint32_t n = static_cast<std::uint32_t>(labels.size());
  {
    std::ofstream out(images_path, std::ios::binary | std::ios::trunc);
    write_be32(out, 0x00000803);
    write_be32(out, n);
    write_be32(out, static_cast<std::uint32_t>(rows));
    write_be32(out, static_cast<std::uint32_t>(cols));
    out.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
  }
  {
    std::ofstream out(labels_path, std::ios::binary | std::ios::trunc);
    write_be32(out, 0x00000801);
    write_be32(out, n);
    out.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size()));
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace testutil
