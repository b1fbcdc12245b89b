#pragma once

#include <concepts>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "sparsetrain/sparse_model.hpp"
#include "sparsetrain/threshold_prune.hpp"

namespace sparsetrain {

// All counts are multiply-accumulates per sample; biases and activations are
// excluded. Ratios are what matter downstream, so the unit just has to be
// applied consistently.

struct FlopsTotals {
  std::uint64_t dense_train = 0;
  std::uint64_t sparse_train = 0;
  std::uint64_t dense_infer = 0;
  std::uint64_t sparse_infer = 0;
};

struct FlopsLedger {
  std::vector<std::uint64_t> per_layer_dense;   // f_D
  std::vector<std::uint64_t> per_layer_sparse;  // f_S at the snapshot
  std::optional<std::vector<std::uint64_t>> backward_budget;  // f_B
  FlopsTotals totals;
};

struct EpochFlopsSnapshot {
  FlopsLedger ledger;
  bool alpha_zero = false;
  BackwardSupersetSpec superset;
  std::uint64_t samples = 1;  // weight of this snapshot in the run total
};

struct RunFlopsFraction {
  double train_fraction = 1.0;
  double infer_fraction = 1.0;
};

// Forward MACs per sample: affine out*in; conv out_h*out_w*oc*ic*kh*kw.
template <std::floating_point T>
std::uint64_t layer_dense_flops(const LayerT<T>& layer) {
  if (layer.kind == LayerKind::Affine) {
    return static_cast<std::uint64_t>(layer.out_features) *
           static_cast<std::uint64_t>(layer.in_features);
  }
  return static_cast<std::uint64_t>(layer.out_h) * layer.out_w * layer.out_channels *
         layer.in_channels * layer.kernel_h * layer.kernel_w;
}

// Each nonzero weight costs f_D / weight_count MACs per sample (1 for affine,
// out_h*out_w for conv), so sparse counts stay exact integers.
template <std::floating_point T>
std::uint64_t layer_positions_factor(const LayerT<T>& layer) {
  return layer.kind == LayerKind::Affine
             ? 1
             : static_cast<std::uint64_t>(layer.out_h) * layer.out_w;
}

std::uint64_t train_sample_flops(const FlopsLedger& ledger, bool alpha_zero,
                                 const BackwardSupersetSpec& superset);
std::uint64_t infer_sample_flops(const FlopsLedger& ledger, bool sparse);
void fill_totals(FlopsLedger& ledger, bool alpha_zero,
                 const BackwardSupersetSpec& superset);
RunFlopsFraction run_flops_fraction(std::span<const EpochFlopsSnapshot> epochs,
                                    const FlopsLedger& dense_reference);

// Snapshot the model's current per-layer cost. Sparse counts come from the
// cached forward masks when present, otherwise from the current weights and
// threshold. Dense-exempt layers count as fully dense in every column.
template <std::floating_point T>
FlopsLedger model_flops_ledger(const ModelT<T>& model,
                               const BackwardSupersetSpec& superset) {
  FlopsLedger ledger;
  const bool want_budget = superset.mode == SupersetMode::TopKFraction;
  if (want_budget) ledger.backward_budget.emplace();
  for (const LayerT<T>& layer : model.layers) {
    const std::uint64_t dense = layer_dense_flops(layer);
    const std::uint64_t factor = layer_positions_factor(layer);
    ledger.per_layer_dense.push_back(dense);
    std::uint64_t nnz;
    if (layer.dense_exempt) {
      nnz = layer.weight_count();
    } else if (layer.last_forward.has_value()) {
      nnz = layer.last_forward->active_count;
    } else {
      nnz = prune_forward<T>(layer.weights, static_cast<double>(layer.s)).active_count;
    }
    ledger.per_layer_sparse.push_back(nnz * factor);
    if (want_budget) {
      const std::uint64_t budget =
          layer.dense_exempt
              ? layer.weight_count()
              : static_cast<std::uint64_t>(std::ceil(
                    superset.keep_fraction *
                    static_cast<double>(layer.weight_count())));
      ledger.backward_budget->push_back(budget * factor);
    }
  }
  return ledger;
}

}  // namespace sparsetrain
