#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparsetrain/data_io.hpp"
#include "sparsetrain/flops.hpp"
#include "sparsetrain/schedules.hpp"
#include "sparsetrain/sparse_model.hpp"
#include "sparsetrain/threshold_prune.hpp"

namespace sparsetrain {

class MetricsWriter;  // metrics.hpp

// Closed-loop alpha tuning over the first tuning_epochs epochs, driven by a
// reference loss trace recorded from a dense run of the same config.
struct AutoTuneConfig {
  int tuning_epochs = 0;             // T0
  std::vector<double> ref_loss;      // length >= tuning_epochs
  double eps0 = 0.01;                // loss tolerance
  double eps1 = 0.05;                // alpha increase rate
  double eps2 = 0.005;               // alpha decrease rate
};

struct TrainConfig {
  int epochs = 0;
  int batch_size = 128;
  double momentum = 0.875;
  double max_lr = 0.256;
  int warmup = 5;
  double weight_decay = 3.0517578125e-5;
  double label_smoothing = 0.1;
  double alpha0 = 0.0;
  AnnealSchedule schedule;
  std::optional<int> zero_from;            // epoch from which alpha is forced to 0
  std::optional<AutoTuneConfig> autotune;
  std::uint64_t seed = 0;
  BackwardSupersetSpec backward_superset;
  bool flops_per_iteration = true;  // false: one sparsity snapshot per epoch
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double eval_accuracy = 0.0;
  double alpha = 0.0;
  double global_sparsity = 0.0;
  std::vector<double> per_layer_sparsity;
  double train_flops_fraction = 1.0;  // cumulative over the run so far
  double infer_flops_fraction = 1.0;  // at this epoch's final model
  double lr = 0.0;
};

// Raised when the loss or an update goes non-finite; carries the last
// completed epoch's record, if any, for post-mortem reporting.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(const std::string& what, std::optional<EpochRecord> last)
      : std::runtime_error(what), last_record(std::move(last)) {}
  std::optional<EpochRecord> last_record;
};

struct TrainResult {
  std::vector<EpochRecord> records;
  RunFlopsFraction fractions;  // whole-run train fraction, final infer fraction
};

// One multiplicative adjustment of alpha from the epoch's mean training loss.
double autotune_alpha(double alpha, int epoch, double epoch_loss,
                      const AutoTuneConfig& cfg);

// Alpha after the tuning phase: the frozen tuned value decays by
// sigmoid-cosine over the remaining epochs, forced to 0 from reset_epoch.
double post_tune_schedule(double alpha_at_t0, int epoch, int t0, int total_epochs,
                          std::optional<int> reset_epoch = std::nullopt);

// Per-epoch alpha policy: plain annealing schedule, or AutoTune followed by
// the freeze-then-decay handoff. Feed mean losses in via on_epoch_end.
class AlphaController {
 public:
  AlphaController(double alpha0, AnnealSchedule schedule, int total_epochs,
                  std::optional<int> zero_from,
                  std::optional<AutoTuneConfig> autotune);

  double alpha_for_epoch(int epoch) const;
  void on_epoch_end(int epoch, double mean_loss);

 private:
  double alpha0_;
  AnnealSchedule schedule_;
  int total_epochs_;
  std::optional<int> zero_from_;
  std::optional<AutoTuneConfig> autotune_;
  double tuned_alpha_;  // live value during tuning, frozen afterwards
};

// In-place momentum-SGD update with L2 decay folded into the gradient:
//   buf <- momentum*buf + (grad + weight_decay*param)
//   param <- param - lr*buf
template <std::floating_point T>
void sgd_step(std::span<T> params, std::span<const T> grads,
              std::span<T> momentum_buffers, double lr, double momentum,
              double weight_decay) {
  if (grads.size() != params.size() || momentum_buffers.size() != params.size()) {
    throw std::invalid_argument("sgd_step: shape mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double update = momentum * static_cast<double>(momentum_buffers[i]) +
                          (static_cast<double>(grads[i]) +
                           weight_decay * static_cast<double>(params[i]));
    momentum_buffers[i] = static_cast<T>(update);
    params[i] = static_cast<T>(static_cast<double>(params[i]) - lr * update);
    if (!std::isfinite(static_cast<double>(params[i]))) {
      throw DivergedError("sgd_step: non-finite parameter after update",
                          std::nullopt);
    }
  }
}

// Classification accuracy over the whole dataset (argmax, first index wins
// ties). Runs forward in chunks; does not disturb weights or thresholds.
double evaluate(Model& model, const LabeledDataset& data, int batch_size);

// The full training loop: deterministic shuffling, pruned forward, proxy
// backward, momentum SGD on weights/biases/thresholds, per-epoch alpha
// policy, and flops accounting. Emits one EpochRecord per epoch (also to
// `metrics` when given) and calls `on_epoch` after each record.
TrainResult train(Model& model, const LabeledDataset& train_data,
                  const LabeledDataset* eval_data, const TrainConfig& cfg,
                  MetricsWriter* metrics = nullptr,
                  const std::function<void(const Model&, const EpochRecord&)>&
                      on_epoch = {});

}  // namespace sparsetrain
