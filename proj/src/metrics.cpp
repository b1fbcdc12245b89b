#include "sparsetrain/metrics.hpp"

#include <cstdio>
#include <stdexcept>

#include <json.hpp>

namespace sparsetrain {

namespace {

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

MetricsWriter::MetricsWriter(const std::string& csv_path,
                             const std::string& jsonl_path)
    : csv_(csv_path, std::ios::trunc), jsonl_(jsonl_path, std::ios::trunc) {
  if (!csv_) throw std::runtime_error("cannot open metrics csv: " + csv_path);
  if (!jsonl_) throw std::runtime_error("cannot open metrics jsonl: " + jsonl_path);
  csv_ << csv_header();
}

std::string MetricsWriter::csv_header() {
  return "# sparsetrain metrics v1\n"
         "epoch,train_loss,eval_accuracy,alpha,global_sparsity,"
         "per_layer_sparsity,train_flops_fraction,infer_flops_fraction,lr\n";
}

std::string MetricsWriter::csv_row(const EpochRecord& r) {
  std::string per_layer;
  for (std::size_t i = 0; i < r.per_layer_sparsity.size(); ++i) {
    if (i) per_layer += ';';
    per_layer += fmt_real(r.per_layer_sparsity[i]);
  }
  std::string row = std::to_string(r.epoch);
  row += ',';
  row += fmt_real(r.train_loss);
  row += ',';
  row += fmt_real(r.eval_accuracy);
  row += ',';
  row += fmt_real(r.alpha);
  row += ',';
  row += fmt_real(r.global_sparsity);
  row += ',';
  row += per_layer;
  row += ',';
  row += fmt_real(r.train_flops_fraction);
  row += ',';
  row += fmt_real(r.infer_flops_fraction);
  row += ',';
  row += fmt_real(r.lr);
  row += '\n';
  return row;
}

std::string MetricsWriter::json_row(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["eval_accuracy"] = r.eval_accuracy;
  j["alpha"] = r.alpha;
  j["global_sparsity"] = r.global_sparsity;
  j["per_layer_sparsity"] = r.per_layer_sparsity;
  j["train_flops_fraction"] = r.train_flops_fraction;
  j["infer_flops_fraction"] = r.infer_flops_fraction;
  j["lr"] = r.lr;
  return j.dump() + "\n";
}

void MetricsWriter::write(const EpochRecord& record) {
  csv_ << csv_row(record);
  jsonl_ << json_row(record);
}

void MetricsWriter::flush() {
  csv_.flush();
  jsonl_.flush();
}

}  // namespace sparsetrain
