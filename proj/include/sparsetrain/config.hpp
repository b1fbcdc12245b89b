#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "sparsetrain/sparse_model.hpp"
#include "sparsetrain/trainer.hpp"

namespace sparsetrain {

// Where training data comes from: IDX file pairs or the synthetic blob
// generator. Paths are resolved against `base_dir` (CLI: --data-dir or the
// SPARSETRAIN_DATA_DIR environment variable).
struct DataSpec {
  std::string source = "synthetic";  // "idx" or "synthetic"
  std::string images, labels;            // idx train pair
  std::string eval_images, eval_labels;  // idx eval pair (optional)
  int num_classes = 10;      // synthetic
  int dims = 784;            // synthetic feature count
  int per_class = 100;       // synthetic train samples per class
  int eval_per_class = 0;    // synthetic eval samples per class (0 = no eval set)
  std::uint64_t seed = 7;    // synthetic generator seed
  int limit = 0;       // keep only the first N train samples (0 = all)
  int eval_limit = 0;  // same for eval
};

// Full description of one run: architecture, optimizer/annealing settings,
// and data source. Serialized into every run's manifest.
struct RunSpec {
  ModelSpec model;
  TrainConfig train;
  DataSpec data;
  int checkpoint_every = 0;  // epochs between checkpoints (0 = final only)
};

// Parse/serialize with field-level errors: a bad or missing value raises
// ConfigError naming the dotted path (e.g. "train.alpha0"). An autotune
// section may carry "ref_loss" inline or "ref_loss_path" pointing at a JSON
// array file (as written by --record-ref-loss).
RunSpec parse_run_spec(const nlohmann::json& j);
RunSpec load_run_spec(const std::string& path);
nlohmann::json run_spec_to_json(const RunSpec& spec);

// Apply one "dotted.path=value" override onto the raw JSON document; the
// value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

// Materialize the configured datasets.
LabeledDataset load_train_data(const DataSpec& data, const std::string& base_dir);
// Returns false when the spec defines no eval split.
bool load_eval_data(const DataSpec& data, const std::string& base_dir,
                    LabeledDataset& out);

}  // namespace sparsetrain
