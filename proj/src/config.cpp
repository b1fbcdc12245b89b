#include "sparsetrain/config.hpp"

#include <filesystem>
#include <fstream>

#include "sparsetrain/data_io.hpp"
#include "sparsetrain/errors.hpp"
#include "sparsetrain/rng.hpp"

namespace sparsetrain {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path, msg);
}

const json* find(const json& j, const char* key) {
  if (!j.is_object()) return nullptr;
  const auto it = j.find(key);
  return it == j.end() || it->is_null() ? nullptr : &*it;
}

double get_double(const json& j, const std::string& scope, const char* key,
                  double fallback) {
  const json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_number()) fail(scope + "." + key, "expected a number");
  return v->get<double>();
}

int get_int(const json& j, const std::string& scope, const char* key, int fallback) {
  const json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_number_integer()) fail(scope + "." + key, "expected an integer");
  return v->get<int>();
}

int require_int(const json& j, const std::string& scope, const char* key) {
  if (!find(j, key)) fail(scope + "." + key, "missing required field");
  return get_int(j, scope, key, 0);
}

double require_double(const json& j, const std::string& scope, const char* key) {
  if (!find(j, key)) fail(scope + "." + key, "missing required field");
  return get_double(j, scope, key, 0.0);
}

bool get_bool(const json& j, const std::string& scope, const char* key,
              bool fallback) {
  const json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_boolean()) fail(scope + "." + key, "expected a boolean");
  return v->get<bool>();
}

std::string get_string(const json& j, const std::string& scope, const char* key,
                       const std::string& fallback) {
  const json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_string()) fail(scope + "." + key, "expected a string");
  return v->get<std::string>();
}

AnnealKind parse_anneal_kind(const std::string& s, const std::string& path) {
  if (s == "fixed") return AnnealKind::Fixed;
  if (s == "linear") return AnnealKind::Linear;
  if (s == "cosine") return AnnealKind::Cosine;
  if (s == "sigmoid") return AnnealKind::Sigmoid;
  if (s == "sigmoid_cosine") return AnnealKind::SigmoidCosine;
  if (s == "exponential") return AnnealKind::Exponential;
  fail(path, "unknown schedule kind '" + s + "'");
}

const char* anneal_kind_name(AnnealKind k) {
  switch (k) {
    case AnnealKind::Fixed: return "fixed";
    case AnnealKind::Linear: return "linear";
    case AnnealKind::Cosine: return "cosine";
    case AnnealKind::Sigmoid: return "sigmoid";
    case AnnealKind::SigmoidCosine: return "sigmoid_cosine";
    case AnnealKind::Exponential: return "exponential";
  }
  return "sigmoid_cosine";
}

ModelSpec parse_model(const json& j) {
  const std::string scope = "model";
  ModelSpec spec;
  const json* shape = find(j, "input_shape");
  if (!shape || !shape->is_array() || shape->empty()) {
    fail("model.input_shape", "expected a non-empty array of dims");
  }
  for (const json& d : *shape) {
    if (!d.is_number_integer() || d.get<int>() <= 0) {
      fail("model.input_shape", "dims must be positive integers");
    }
    spec.input_shape.push_back(d.get<int>());
  }
  spec.s0 = get_double(j, scope, "s0", -5.0);
  const json* layers = find(j, "layers");
  if (!layers || !layers->is_array() || layers->empty()) {
    fail("model.layers", "expected a non-empty array");
  }
  for (std::size_t i = 0; i < layers->size(); ++i) {
    const json& lj = (*layers)[i];
    const std::string lscope = "model.layers[" + std::to_string(i) + "]";
    LayerSpec ls;
    const std::string kind = get_string(lj, lscope, "kind", "affine");
    if (kind == "affine") {
      ls.kind = LayerKind::Affine;
      ls.out_features = require_int(lj, lscope, "out_features");
    } else if (kind == "conv2d") {
      ls.kind = LayerKind::Conv2d;
      ls.out_channels = require_int(lj, lscope, "out_channels");
      ls.kernel_h = require_int(lj, lscope, "kernel_h");
      ls.kernel_w = require_int(lj, lscope, "kernel_w");
    } else {
      fail(lscope + ".kind", "expected 'affine' or 'conv2d'");
    }
    ls.relu = get_bool(lj, lscope, "relu", false);
    ls.dense_exempt = get_bool(lj, lscope, "dense_exempt", false);
    spec.layers.push_back(ls);
  }
  return spec;
}

std::vector<double> load_ref_loss_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("train.autotune.ref_loss_path", "cannot read '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail("train.autotune.ref_loss_path", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_array()) fail("train.autotune.ref_loss_path", "expected a JSON array");
  std::vector<double> out;
  for (const json& v : j) {
    if (!v.is_number()) fail("train.autotune.ref_loss_path", "expected numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

TrainConfig parse_train(const json& j) {
  const std::string scope = "train";
  TrainConfig cfg;
  cfg.epochs = require_int(j, scope, "epochs");
  cfg.batch_size = get_int(j, scope, "batch_size", cfg.batch_size);
  cfg.momentum = get_double(j, scope, "momentum", cfg.momentum);
  cfg.max_lr = get_double(j, scope, "max_lr", cfg.max_lr);
  cfg.warmup = get_int(j, scope, "warmup", cfg.warmup);
  cfg.weight_decay = get_double(j, scope, "weight_decay", cfg.weight_decay);
  cfg.label_smoothing = get_double(j, scope, "label_smoothing", cfg.label_smoothing);
  cfg.alpha0 = require_double(j, scope, "alpha0");
  if (const json* sj = find(j, "schedule")) {
    const std::string sscope = "train.schedule";
    cfg.schedule.kind = parse_anneal_kind(
        get_string(*sj, sscope, "kind", "sigmoid_cosine"), sscope + ".kind");
    cfg.schedule.lower_logit =
        get_double(*sj, sscope, "lower_logit", cfg.schedule.lower_logit);
    cfg.schedule.upper_logit =
        get_double(*sj, sscope, "upper_logit", cfg.schedule.upper_logit);
    cfg.schedule.beta = get_double(*sj, sscope, "beta", cfg.schedule.beta);
  }
  if (find(j, "zero_from")) cfg.zero_from = get_int(j, scope, "zero_from", 0);
  if (const json* aj = find(j, "autotune")) {
    const std::string ascope = "train.autotune";
    AutoTuneConfig at;
    at.tuning_epochs = require_int(*aj, ascope, "tuning_epochs");
    if (const json* rl = find(*aj, "ref_loss")) {
      if (!rl->is_array()) fail(ascope + ".ref_loss", "expected an array");
      for (const json& v : *rl) {
        if (!v.is_number()) fail(ascope + ".ref_loss", "expected numbers");
        at.ref_loss.push_back(v.get<double>());
      }
    } else if (find(*aj, "ref_loss_path")) {
      at.ref_loss =
          load_ref_loss_file(get_string(*aj, ascope, "ref_loss_path", ""));
    } else {
      fail(ascope, "needs 'ref_loss' or 'ref_loss_path'");
    }
    at.eps0 = get_double(*aj, ascope, "eps0", at.eps0);
    at.eps1 = get_double(*aj, ascope, "eps1", at.eps1);
    at.eps2 = get_double(*aj, ascope, "eps2", at.eps2);
    cfg.autotune = std::move(at);
  }
  if (const json* v = find(j, "seed")) {
    if (!v->is_number_integer()) fail("train.seed", "expected an integer");
    cfg.seed = v->get<std::uint64_t>();
  }
  if (const json* bj = find(j, "backward_superset")) {
    const std::string bscope = "train.backward_superset";
    const std::string mode = get_string(*bj, bscope, "mode", "all_weights");
    if (mode == "all_weights") {
      cfg.backward_superset.mode = SupersetMode::AllWeights;
    } else if (mode == "topk_fraction") {
      cfg.backward_superset.mode = SupersetMode::TopKFraction;
    } else {
      fail(bscope + ".mode", "expected 'all_weights' or 'topk_fraction'");
    }
    cfg.backward_superset.keep_fraction =
        get_double(*bj, bscope, "keep_fraction", cfg.backward_superset.keep_fraction);
  }
  cfg.flops_per_iteration =
      get_bool(j, scope, "flops_per_iteration", cfg.flops_per_iteration);
  return cfg;
}

DataSpec parse_data(const json& j) {
  const std::string scope = "data";
  DataSpec d;
  d.source = get_string(j, scope, "source", d.source);
  if (d.source != "idx" && d.source != "synthetic") {
    fail("data.source", "expected 'idx' or 'synthetic'");
  }
  d.images = get_string(j, scope, "images", "");
  d.labels = get_string(j, scope, "labels", "");
  d.eval_images = get_string(j, scope, "eval_images", "");
  d.eval_labels = get_string(j, scope, "eval_labels", "");
  d.num_classes = get_int(j, scope, "num_classes", d.num_classes);
  d.dims = get_int(j, scope, "dims", d.dims);
  d.per_class = get_int(j, scope, "per_class", d.per_class);
  d.eval_per_class = get_int(j, scope, "eval_per_class", d.eval_per_class);
  if (const json* v = find(j, "seed")) {
    if (!v->is_number_integer()) fail("data.seed", "expected an integer");
    d.seed = v->get<std::uint64_t>();
  }
  d.limit = get_int(j, scope, "limit", d.limit);
  d.eval_limit = get_int(j, scope, "eval_limit", d.eval_limit);
  if (d.source == "idx") {
    if (d.images.empty()) fail("data.images", "missing required field");
    if (d.labels.empty()) fail("data.labels", "missing required field");
  }
  return d;
}

}  // namespace

RunSpec parse_run_spec(const json& j) {
  if (!j.is_object()) throw ConfigError("config", "top level must be an object");
  RunSpec spec;
  const json* mj = find(j, "model");
  if (!mj) throw ConfigError("model", "missing required section");
  spec.model = parse_model(*mj);
  const json* tj = find(j, "train");
  if (!tj) throw ConfigError("train", "missing required section");
  spec.train = parse_train(*tj);
  if (const json* dj = find(j, "data")) spec.data = parse_data(*dj);
  spec.checkpoint_every = get_int(j, "", "checkpoint_every", 0);
  return spec;
}

RunSpec load_run_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
  return parse_run_spec(j);
}

nlohmann::json run_spec_to_json(const RunSpec& spec) {
  json model;
  model["input_shape"] = spec.model.input_shape;
  model["s0"] = spec.model.s0;
  model["layers"] = json::array();
  for (const LayerSpec& ls : spec.model.layers) {
    json lj;
    if (ls.kind == LayerKind::Affine) {
      lj["kind"] = "affine";
      lj["out_features"] = ls.out_features;
    } else {
      lj["kind"] = "conv2d";
      lj["out_channels"] = ls.out_channels;
      lj["kernel_h"] = ls.kernel_h;
      lj["kernel_w"] = ls.kernel_w;
    }
    lj["relu"] = ls.relu;
    lj["dense_exempt"] = ls.dense_exempt;
    model["layers"].push_back(lj);
  }

  json train;
  train["epochs"] = spec.train.epochs;
  train["batch_size"] = spec.train.batch_size;
  train["momentum"] = spec.train.momentum;
  train["max_lr"] = spec.train.max_lr;
  train["warmup"] = spec.train.warmup;
  train["weight_decay"] = spec.train.weight_decay;
  train["label_smoothing"] = spec.train.label_smoothing;
  train["alpha0"] = spec.train.alpha0;
  train["schedule"] = {{"kind", anneal_kind_name(spec.train.schedule.kind)},
                       {"lower_logit", spec.train.schedule.lower_logit},
                       {"upper_logit", spec.train.schedule.upper_logit},
                       {"beta", spec.train.schedule.beta}};
  if (spec.train.zero_from) train["zero_from"] = *spec.train.zero_from;
  if (spec.train.autotune) {
    const AutoTuneConfig& at = *spec.train.autotune;
    train["autotune"] = {{"tuning_epochs", at.tuning_epochs},
                         {"ref_loss", at.ref_loss},
                         {"eps0", at.eps0},
                         {"eps1", at.eps1},
                         {"eps2", at.eps2}};
  }
  train["seed"] = spec.train.seed;
  train["backward_superset"] = {
      {"mode", spec.train.backward_superset.mode == SupersetMode::AllWeights
                   ? "all_weights"
                   : "topk_fraction"},
      {"keep_fraction", spec.train.backward_superset.keep_fraction}};
  train["flops_per_iteration"] = spec.train.flops_per_iteration;

  json data;
  data["source"] = spec.data.source;
  if (!spec.data.images.empty()) data["images"] = spec.data.images;
  if (!spec.data.labels.empty()) data["labels"] = spec.data.labels;
  if (!spec.data.eval_images.empty()) data["eval_images"] = spec.data.eval_images;
  if (!spec.data.eval_labels.empty()) data["eval_labels"] = spec.data.eval_labels;
  data["num_classes"] = spec.data.num_classes;
  data["dims"] = spec.data.dims;
  data["per_class"] = spec.data.per_class;
  data["eval_per_class"] = spec.data.eval_per_class;
  data["seed"] = spec.data.seed;
  data["limit"] = spec.data.limit;
  data["eval_limit"] = spec.data.eval_limit;

  json j;
  j["model"] = model;
  j["train"] = train;
  j["data"] = data;
  j["checkpoint_every"] = spec.checkpoint_every;
  return j;
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set", "expected key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // bare strings are fine unquoted
  }
  json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string segment =
        key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (segment.empty()) throw ConfigError("--set", "empty path segment in '" + key + "'");
    if (dot == std::string::npos) {
      (*cur)[segment] = parsed;
      return;
    }
    cur = &((*cur)[segment]);
    start = dot + 1;
  }
}

namespace {

std::string resolve(const std::string& base_dir, const std::string& path) {
  namespace fs = std::filesystem;
  if (base_dir.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).string();
}

void truncate(LabeledDataset& ds, int limit) {
  if (limit <= 0 || ds.size() <= static_cast<std::size_t>(limit)) return;
  ds.labels.resize(limit);
  ds.inputs.resize(static_cast<std::size_t>(limit) * ds.sample_dim());
}

}  // namespace

LabeledDataset load_train_data(const DataSpec& data, const std::string& base_dir) {
  LabeledDataset ds;
  if (data.source == "synthetic") {
    ds = synth_gaussian_blobs(data.num_classes, data.dims, data.per_class, data.seed);
  } else {
    ds = load_idx(resolve(base_dir, data.images), resolve(base_dir, data.labels));
  }
  truncate(ds, data.limit);
  ds.split = "train";
  return ds;
}

bool load_eval_data(const DataSpec& data, const std::string& base_dir,
                    LabeledDataset& out) {
  if (data.source == "synthetic") {
    if (data.eval_per_class <= 0) return false;
    out = synth_gaussian_blobs(data.num_classes, data.dims, data.eval_per_class,
                               mix_seed(data.seed, 0x6576616c));  // "eval"
  } else {
    if (data.eval_images.empty() || data.eval_labels.empty()) return false;
    out = load_idx(resolve(base_dir, data.eval_images),
                   resolve(base_dir, data.eval_labels));
  }
  truncate(out, data.eval_limit);
  out.split = "eval";
  return true;
}

}  // namespace sparsetrain
