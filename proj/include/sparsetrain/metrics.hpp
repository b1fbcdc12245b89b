#pragma once

#include <fstream>
#include <string>

#include "sparsetrain/trainer.hpp"

namespace sparsetrain {

// Appends one line per epoch to a CSV file and a JSON-lines mirror. Row
// formatting is fixed-width-free but fully deterministic, so two identical
// runs produce byte-identical files.
class MetricsWriter {
 public:
  MetricsWriter(const std::string& csv_path, const std::string& jsonl_path);

  void write(const EpochRecord& record);
  void flush();

  // Version comment + column row; bump the version when columns change.
  static std::string csv_header();
  static std::string csv_row(const EpochRecord& record);
  static std::string json_row(const EpochRecord& record);

 private:
  std::ofstream csv_;
  std::ofstream jsonl_;
};

}  // namespace sparsetrain
