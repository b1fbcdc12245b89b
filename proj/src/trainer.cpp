#include "sparsetrain/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "sparsetrain/errors.hpp"
#include "sparsetrain/loss.hpp"
#include "sparsetrain/metrics.hpp"

namespace sparsetrain {

namespace {

void validate(const TrainConfig& cfg, const Model& model,
              const LabeledDataset& train_data, const LabeledDataset* eval_data) {
  if (cfg.epochs < 0) throw ConfigError("epochs", "must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) {
    throw ConfigError("momentum", "must be in [0, 1)");
  }
  if (!(cfg.max_lr >= 0.0)) throw ConfigError("max_lr", "must be >= 0");
  if (cfg.warmup < 0) throw ConfigError("warmup", "must be >= 0");
  if (!(cfg.weight_decay >= 0.0)) throw ConfigError("weight_decay", "must be >= 0");
  if (!(cfg.label_smoothing >= 0.0 && cfg.label_smoothing < 1.0)) {
    throw ConfigError("label_smoothing", "must be in [0, 1)");
  }
  if (!(cfg.alpha0 >= 0.0 && cfg.alpha0 <= 1.0)) {
    throw ConfigError("alpha0", "must be in [0, 1]");
  }
  if (cfg.zero_from && *cfg.zero_from < 0) {
    throw ConfigError("zero_from", "must be >= 0");
  }
  if (cfg.backward_superset.mode == SupersetMode::TopKFraction &&
      !(cfg.backward_superset.keep_fraction > 0.0 &&
        cfg.backward_superset.keep_fraction <= 1.0)) {
    throw ConfigError("backward_superset.keep_fraction", "must be in (0, 1]");
  }
  if (cfg.autotune) {
    const AutoTuneConfig& at = *cfg.autotune;
    if (at.tuning_epochs < 0 || at.tuning_epochs > cfg.epochs) {
      throw ConfigError("autotune.tuning_epochs", "must be in [0, epochs]");
    }
    if (at.ref_loss.size() < static_cast<std::size_t>(at.tuning_epochs)) {
      throw ConfigError("autotune.ref_loss",
                        "need one reference loss per tuning epoch");
    }
    if (!(at.eps0 > 0.0)) throw ConfigError("autotune.eps0", "must be > 0");
    if (!(at.eps1 > 0.0)) throw ConfigError("autotune.eps1", "must be > 0");
    if (!(at.eps2 > 0.0)) throw ConfigError("autotune.eps2", "must be > 0");
  }
  if (train_data.size() == 0) {
    throw std::invalid_argument("train: dataset is empty");
  }
  if (train_data.sample_dim() != model.input_dim() ||
      static_cast<std::size_t>(train_data.num_classes) != model.output_dim()) {
    throw std::invalid_argument("train: dataset shape does not match model");
  }
  if (eval_data &&
      (eval_data->sample_dim() != model.input_dim() ||
       eval_data->num_classes != train_data.num_classes)) {
    throw std::invalid_argument("train: eval dataset shape does not match model");
  }
}

}  // namespace

double autotune_alpha(double alpha, int epoch, double epoch_loss,
                      const AutoTuneConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.tuning_epochs) {
    throw std::invalid_argument("autotune_alpha: epoch outside the tuning phase");
  }
  if (static_cast<std::size_t>(epoch) >= cfg.ref_loss.size()) {
    throw std::invalid_argument("autotune_alpha: no reference loss for epoch");
  }
  const double ref = cfg.ref_loss[epoch];
  const double next = epoch_loss >= (1.0 + cfg.eps0) * ref
                          ? alpha * (1.0 + cfg.eps1)
                          : alpha * (1.0 - cfg.eps2);
  return std::clamp(next, 0.0, 1.0);
}

double post_tune_schedule(double alpha_at_t0, int epoch, int t0, int total_epochs,
                          std::optional<int> reset_epoch) {
  if (epoch < t0) {
    throw std::invalid_argument("post_tune_schedule: epoch precedes end of tuning");
  }
  if (reset_epoch && epoch >= *reset_epoch) return 0.0;
  const int span = total_epochs - t0;
  if (span <= 0) return alpha_at_t0;
  return alpha_at_t0 * sigmoid_cosine_decay(epoch - t0, span, -6.0, 6.0);
}

AlphaController::AlphaController(double alpha0, AnnealSchedule schedule,
                                 int total_epochs, std::optional<int> zero_from,
                                 std::optional<AutoTuneConfig> autotune)
    : alpha0_(alpha0),
      schedule_(schedule),
      total_epochs_(total_epochs),
      zero_from_(zero_from),
      autotune_(std::move(autotune)),
      tuned_alpha_(alpha0) {
  if (autotune_ &&
      autotune_->ref_loss.size() <
          static_cast<std::size_t>(std::max(autotune_->tuning_epochs, 0))) {
    throw ConfigError("autotune.ref_loss", "need one reference loss per tuning epoch");
  }
}

double AlphaController::alpha_for_epoch(int epoch) const {
  if (zero_from_ && epoch >= *zero_from_) return 0.0;
  if (!autotune_) {
    return alpha_at_epoch(alpha0_, schedule_, epoch, total_epochs_, zero_from_);
  }
  const int t0 = autotune_->tuning_epochs;
  if (epoch < t0) return tuned_alpha_;
  return post_tune_schedule(tuned_alpha_, epoch, t0, total_epochs_, zero_from_);
}

void AlphaController::on_epoch_end(int epoch, double mean_loss) {
  if (!autotune_ || epoch >= autotune_->tuning_epochs) return;
  tuned_alpha_ = autotune_alpha(tuned_alpha_, epoch, mean_loss, *autotune_);
}

double evaluate(Model& model, const LabeledDataset& data, int batch_size) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: dataset is empty");
  if (batch_size < 1) throw std::invalid_argument("evaluate: batch_size must be >= 1");
  const std::size_t in_dim = model.input_dim();
  const std::size_t classes = model.output_dim();
  std::vector<float> chunk;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t n =
        std::min<std::size_t>(batch_size, data.size() - start);
    chunk.assign(data.sample(start), data.sample(start) + n * in_dim);
    const std::vector<float> logits =
        forward(model, std::span<const float>(chunk), static_cast<int>(n), 0.0);
    for (std::size_t b = 0; b < n; ++b) {
      const float* row = logits.data() + b * classes;
      std::size_t best = 0;
      for (std::size_t k = 1; k < classes; ++k) {
        if (row[k] > row[best]) best = k;
      }
      if (static_cast<int>(best) == data.labels[start + b]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(Model& model, const LabeledDataset& train_data,
                  const LabeledDataset* eval_data, const TrainConfig& cfg,
                  MetricsWriter* metrics,
                  const std::function<void(const Model&, const EpochRecord&)>&
                      on_epoch) {
  validate(cfg, model, train_data, eval_data);
  TrainResult result;
  if (cfg.epochs == 0) return result;

  AlphaController controller(cfg.alpha0, cfg.schedule, cfg.epochs, cfg.zero_from,
                             cfg.autotune);
  const LrSchedule lr_schedule{cfg.max_lr, cfg.warmup, cfg.epochs};

  std::vector<std::vector<float>> weight_buf, bias_buf;
  std::vector<float> s_buf(model.layers.size(), 0.0f);
  for (const Layer& layer : model.layers) {
    weight_buf.emplace_back(layer.weight_count(), 0.0f);
    bias_buf.emplace_back(layer.bias.size(), 0.0f);
  }

  const std::size_t in_dim = model.input_dim();
  const int num_classes = static_cast<int>(model.output_dim());
  std::uint64_t dense_infer_per_sample = 0;
  for (const Layer& layer : model.layers) {
    dense_infer_per_sample += layer_dense_flops(layer);
  }
  const std::uint64_t dense_train_per_sample = 3 * dense_infer_per_sample;
  long double sparse_flops = 0.0L, dense_flops = 0.0L;

  std::optional<EpochRecord> last_record;
  std::vector<float> batch_inputs, dlogits;
  std::vector<int> batch_labels;
  ForwardCache cache;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(lr_schedule, epoch);
    const double alpha = controller.alpha_for_epoch(epoch);
    const bool alpha_zero = alpha == 0.0;
    double loss_sum = 0.0;
    std::size_t samples_seen = 0;

    try {
      for (const std::vector<std::int32_t>& idx :
           batches(train_data, cfg.batch_size, cfg.seed, epoch)) {
        const int bn = static_cast<int>(idx.size());
        batch_inputs.resize(static_cast<std::size_t>(bn) * in_dim);
        batch_labels.resize(bn);
        for (int b = 0; b < bn; ++b) {
          const float* src = train_data.sample(static_cast<std::size_t>(idx[b]));
          std::copy(src, src + in_dim,
                    batch_inputs.begin() + static_cast<std::size_t>(b) * in_dim);
          batch_labels[b] = train_data.labels[static_cast<std::size_t>(idx[b])];
        }

        const std::vector<float> logits =
            forward(model, std::span<const float>(batch_inputs), bn, alpha, &cache);
        dlogits.resize(logits.size());
        const double loss = smoothed_ce_batch<float>(
            logits, batch_labels, num_classes, cfg.label_smoothing,
            std::span<float>(dlogits));
        if (!std::isfinite(loss)) {
          throw DivergedError(
              "training loss is non-finite at epoch " + std::to_string(epoch),
              std::nullopt);
        }
        Gradients grads = backward(model, cache, std::span<const float>(dlogits),
                                   cfg.backward_superset);

        if (cfg.flops_per_iteration) {
          const FlopsLedger ledger = model_flops_ledger(model, cfg.backward_superset);
          sparse_flops +=
              static_cast<long double>(bn) *
              train_sample_flops(ledger, alpha_zero, cfg.backward_superset);
          dense_flops += static_cast<long double>(bn) * dense_train_per_sample;
        }

        for (std::size_t li = 0; li < model.layers.size(); ++li) {
          Layer& layer = model.layers[li];
          sgd_step<float>(layer.weights, grads.layers[li].weights, weight_buf[li],
                          lr, cfg.momentum, cfg.weight_decay);
          sgd_step<float>(layer.bias, grads.layers[li].bias, bias_buf[li], lr,
                          cfg.momentum, /*weight_decay=*/0.0);
          if (!layer.dense_exempt) {
            sgd_step<float>(std::span<float>(&layer.s, 1),
                            std::span<const float>(&grads.layers[li].s, 1),
                            std::span<float>(&s_buf[li], 1), lr, cfg.momentum,
                            cfg.weight_decay);
          }
        }
        loss_sum += loss * bn;
        samples_seen += static_cast<std::size_t>(bn);
      }
    } catch (const DivergedError& e) {
      throw DivergedError(e.what(), last_record);
    }

    if (!cfg.flops_per_iteration) {
      const FlopsLedger ledger = model_flops_ledger(model, cfg.backward_superset);
      sparse_flops +=
          static_cast<long double>(samples_seen) *
          train_sample_flops(ledger, alpha_zero, cfg.backward_superset);
      dense_flops += static_cast<long double>(samples_seen) * dense_train_per_sample;
    }

    const double mean_loss = loss_sum / static_cast<double>(samples_seen);
    controller.on_epoch_end(epoch, mean_loss);

    const SparsityReport report = sparsity_report(model);
    const FlopsLedger current = model_flops_ledger(model, cfg.backward_superset);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = mean_loss;
    rec.eval_accuracy =
        evaluate(model, eval_data ? *eval_data : train_data, cfg.batch_size);
    rec.alpha = alpha;
    rec.global_sparsity = report.global_sparsity;
    for (const LayerSparsity& ls : report.per_layer) {
      rec.per_layer_sparsity.push_back(ls.zero_fraction);
    }
    rec.train_flops_fraction =
        dense_flops == 0.0L ? 1.0 : static_cast<double>(sparse_flops / dense_flops);
    rec.infer_flops_fraction =
        static_cast<double>(infer_sample_flops(current, /*sparse=*/true)) /
        static_cast<double>(dense_infer_per_sample);
    rec.lr = lr;

    result.records.push_back(rec);
    last_record = rec;
    if (metrics) metrics->write(rec);
    if (on_epoch) on_epoch(model, rec);
  }

  result.fractions.train_fraction = result.records.back().train_flops_fraction;
  result.fractions.infer_fraction = result.records.back().infer_flops_fraction;
  return result;
}

}  // namespace sparsetrain
