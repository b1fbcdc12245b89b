#pragma once

#include <string>

#include <json.hpp>

#include "sparsetrain/sparse_model.hpp"

namespace sparsetrain {

struct Checkpoint {
  Model model;
  int epoch = -1;
  nlohmann::json extra;  // config snapshot etc.; absent fields stay null
};

// JSON checkpoint with full layer shapes, weights, biases, and thresholds.
// Written atomically (temp file + rename) so readers never see a torn file.
void save_checkpoint(const std::string& path, const Model& model, int epoch,
                     const nlohmann::json& extra = nlohmann::json());

// Throws FormatError naming the offending field on malformed input.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sparsetrain
