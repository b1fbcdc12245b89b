#include "sparsetrain/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include "sparsetrain/errors.hpp"

namespace sparsetrain {

namespace {

using nlohmann::json;

json layer_to_json(const Layer& layer) {
  json lj;
  if (layer.kind == LayerKind::Affine) {
    lj["kind"] = "affine";
    lj["in_features"] = layer.in_features;
    lj["out_features"] = layer.out_features;
  } else {
    lj["kind"] = "conv2d";
    lj["in_channels"] = layer.in_channels;
    lj["out_channels"] = layer.out_channels;
    lj["kernel_h"] = layer.kernel_h;
    lj["kernel_w"] = layer.kernel_w;
    lj["in_h"] = layer.in_h;
    lj["in_w"] = layer.in_w;
    lj["out_h"] = layer.out_h;
    lj["out_w"] = layer.out_w;
  }
  lj["relu"] = layer.relu;
  lj["dense_exempt"] = layer.dense_exempt;
  lj["s"] = static_cast<double>(layer.s);
  // doubles round-trip float values exactly
  lj["weights"] = json::array();
  for (float w : layer.weights) lj["weights"].push_back(static_cast<double>(w));
  lj["bias"] = json::array();
  for (float b : layer.bias) lj["bias"].push_back(static_cast<double>(b));
  return lj;
}

template <typename T>
T field(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) {
    throw FormatError(std::string("checkpoint: missing field '") + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw FormatError(std::string("checkpoint: bad value for field '") + key + "'");
  }
}

std::vector<float> float_array(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_array()) {
    throw FormatError(std::string("checkpoint: missing array field '") + key + "'");
  }
  std::vector<float> out;
  out.reserve(it->size());
  for (const json& v : *it) {
    if (!v.is_number()) {
      throw FormatError(std::string("checkpoint: non-numeric entry in '") + key + "'");
    }
    out.push_back(static_cast<float>(v.get<double>()));
  }
  return out;
}

Layer layer_from_json(const json& lj) {
  Layer layer;
  const std::string kind = field<std::string>(lj, "kind");
  if (kind == "affine") {
    layer.kind = LayerKind::Affine;
    layer.in_features = field<int>(lj, "in_features");
    layer.out_features = field<int>(lj, "out_features");
  } else if (kind == "conv2d") {
    layer.kind = LayerKind::Conv2d;
    layer.in_channels = field<int>(lj, "in_channels");
    layer.out_channels = field<int>(lj, "out_channels");
    layer.kernel_h = field<int>(lj, "kernel_h");
    layer.kernel_w = field<int>(lj, "kernel_w");
    layer.in_h = field<int>(lj, "in_h");
    layer.in_w = field<int>(lj, "in_w");
    layer.out_h = field<int>(lj, "out_h");
    layer.out_w = field<int>(lj, "out_w");
  } else {
    throw FormatError("checkpoint: unknown layer kind '" + kind + "'");
  }
  layer.relu = field<bool>(lj, "relu");
  layer.dense_exempt = field<bool>(lj, "dense_exempt");
  layer.s = static_cast<float>(field<double>(lj, "s"));
  layer.weights = float_array(lj, "weights");
  layer.bias = float_array(lj, "bias");
  const std::size_t want_weights =
      layer.kind == LayerKind::Affine
          ? static_cast<std::size_t>(layer.out_features) * layer.in_features
          : static_cast<std::size_t>(layer.out_channels) * layer.in_channels *
                layer.kernel_h * layer.kernel_w;
  const std::size_t want_bias = layer.kind == LayerKind::Affine
                                    ? static_cast<std::size_t>(layer.out_features)
                                    : static_cast<std::size_t>(layer.out_channels);
  if (layer.weights.size() != want_weights || layer.bias.size() != want_bias) {
    throw FormatError("checkpoint: weight/bias counts do not match layer shape");
  }
  return layer;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, int epoch,
                     const nlohmann::json& extra) {
  json j;
  j["format"] = "sparsetrain-checkpoint-v1";
  j["epoch"] = epoch;
  j["input_shape"] = model.input_shape;
  j["layers"] = json::array();
  for (const Layer& layer : model.layers) j["layers"].push_back(layer_to_json(layer));
  if (!extra.is_null()) j["extra"] = extra;

  namespace fs = std::filesystem;
  const fs::path target(path);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + tmp.string());
    out << j.dump();
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("checkpoint: cannot read '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: invalid JSON: ") + e.what());
  }
  if (field<std::string>(j, "format") != "sparsetrain-checkpoint-v1") {
    throw FormatError("checkpoint: unrecognized format tag");
  }
  Checkpoint ckpt;
  ckpt.epoch = field<int>(j, "epoch");
  const auto shape_it = j.find("input_shape");
  if (shape_it == j.end() || !shape_it->is_array()) {
    throw FormatError("checkpoint: missing field 'input_shape'");
  }
  for (const json& d : *shape_it) ckpt.model.input_shape.push_back(d.get<int>());
  const auto layers_it = j.find("layers");
  if (layers_it == j.end() || !layers_it->is_array()) {
    throw FormatError("checkpoint: missing field 'layers'");
  }
  for (const json& lj : *layers_it) ckpt.model.layers.push_back(layer_from_json(lj));
  if (j.contains("extra")) ckpt.extra = j["extra"];
  return ckpt;
}

}  // namespace sparsetrain
