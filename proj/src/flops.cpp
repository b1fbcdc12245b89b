#include "sparsetrain/flops.hpp"

#include <algorithm>
#include <numeric>

namespace sparsetrain {

namespace {

std::uint64_t sum(const std::vector<std::uint64_t>& v) {
  return std::accumulate(v.begin(), v.end(), std::uint64_t{0});
}

void check_shapes(const FlopsLedger& ledger) {
  if (ledger.per_layer_sparse.size() != ledger.per_layer_dense.size()) {
    throw std::invalid_argument("flops ledger: dense/sparse layer counts differ");
  }
  for (std::size_t i = 0; i < ledger.per_layer_dense.size(); ++i) {
    if (ledger.per_layer_sparse[i] > ledger.per_layer_dense[i]) {
      throw std::invalid_argument("flops ledger: sparse count exceeds dense count");
    }
  }
}

}  // namespace

// Per-sample training cost. Forward and input-gradient passes always run on
// the sparse weights (2 Σ f_S); the weight-gradient pass depends on how far
// gradients flow back:
//   alpha=0, all weights   -> extra Σ f_S           (only active weights move)
//   alpha>0, all weights   -> extra Σ f_D           (every weight gets a gradient)
//   alpha>0, top-k superset-> extra Σ f_B
//   alpha=0, top-k superset-> extra Σ max(f_B, f_S) (budget never undercuts active)
std::uint64_t train_sample_flops(const FlopsLedger& ledger, bool alpha_zero,
                                 const BackwardSupersetSpec& superset) {
  check_shapes(ledger);
  const std::uint64_t fs = sum(ledger.per_layer_sparse);
  std::uint64_t total = 2 * fs;
  if (superset.mode == SupersetMode::AllWeights) {
    total += alpha_zero ? fs : sum(ledger.per_layer_dense);
  } else {
    if (!ledger.backward_budget.has_value() ||
        ledger.backward_budget->size() != ledger.per_layer_dense.size()) {
      throw std::logic_error(
          "train_sample_flops: backward budget missing for top-k superset mode");
    }
    for (std::size_t i = 0; i < ledger.per_layer_dense.size(); ++i) {
      const std::uint64_t fb = (*ledger.backward_budget)[i];
      total += alpha_zero ? std::max(fb, ledger.per_layer_sparse[i]) : fb;
    }
  }
  return total;
}

std::uint64_t infer_sample_flops(const FlopsLedger& ledger, bool sparse) {
  check_shapes(ledger);
  return sparse ? sum(ledger.per_layer_sparse) : sum(ledger.per_layer_dense);
}

void fill_totals(FlopsLedger& ledger, bool alpha_zero,
                 const BackwardSupersetSpec& superset) {
  ledger.totals.dense_infer = infer_sample_flops(ledger, /*sparse=*/false);
  ledger.totals.sparse_infer = infer_sample_flops(ledger, /*sparse=*/true);
  ledger.totals.dense_train = 3 * ledger.totals.dense_infer;
  ledger.totals.sparse_train = train_sample_flops(ledger, alpha_zero, superset);
}

// Whole-run cost relative to training the same model dense. Each snapshot is
// weighted by the number of samples it stood for; the inference fraction uses
// the final snapshot's sparse counts.
RunFlopsFraction run_flops_fraction(std::span<const EpochFlopsSnapshot> epochs,
                                    const FlopsLedger& dense_reference) {
  if (epochs.empty()) {
    throw std::invalid_argument("run_flops_fraction: no epoch snapshots");
  }
  check_shapes(dense_reference);
  const std::uint64_t dense_train_per_sample =
      3 * sum(dense_reference.per_layer_dense);
  const std::uint64_t dense_infer_per_sample = sum(dense_reference.per_layer_dense);
  if (dense_train_per_sample == 0) {
    throw std::invalid_argument("run_flops_fraction: dense reference is empty");
  }
  long double sparse_acc = 0.0L, dense_acc = 0.0L;
  for (const EpochFlopsSnapshot& e : epochs) {
    const long double w = static_cast<long double>(e.samples);
    sparse_acc += w * static_cast<long double>(
                          train_sample_flops(e.ledger, e.alpha_zero, e.superset));
    dense_acc += w * static_cast<long double>(dense_train_per_sample);
  }
  RunFlopsFraction out;
  out.train_fraction = dense_acc == 0.0L
                           ? 1.0
                           : static_cast<double>(sparse_acc / dense_acc);
  out.infer_fraction =
      static_cast<double>(infer_sample_flops(epochs.back().ledger, /*sparse=*/true)) /
      static_cast<double>(dense_infer_per_sample);
  return out;
}

}  // namespace sparsetrain
