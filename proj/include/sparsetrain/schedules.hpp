#pragma once

#include <optional>

namespace sparsetrain {

enum class AnnealKind { Fixed, Linear, Cosine, Sigmoid, SigmoidCosine, Exponential };

// Per-epoch decay rule for the proxy-gradient scale alpha. Every schedule
// maps epoch e in [0, T] to a scale in [0, 1], non-increasing in e
// (constant for Fixed).
struct AnnealSchedule {
  AnnealKind kind = AnnealKind::SigmoidCosine;
  double lower_logit = -6.0;  // sigmoid L0
  double upper_logit = 6.0;   // sigmoid L1
  double beta = 1.0;          // exponential rate
};

// (1 + cos(pi * epoch / total)) / 2
double cosine_decay(int epoch, int total_epochs);

// 1 - logistic(L0 + (L1 - L0) * epoch / total)
double sigmoid_decay(int epoch, int total_epochs, double lower_logit, double upper_logit);

// max of the cosine and sigmoid scales
double sigmoid_cosine_decay(int epoch, int total_epochs, double lower_logit,
                            double upper_logit);

// exp(-beta * t)
double exponential_decay(double t, double beta);

// Scale for `schedule` at `epoch` of `total_epochs`.
double anneal_scale(const AnnealSchedule& schedule, int epoch, int total_epochs);

// alpha0 * scale(epoch), forced to exactly 0.0 for epoch >= zero_from.
double alpha_at_epoch(double alpha0, const AnnealSchedule& schedule, int epoch,
                      int total_epochs, std::optional<int> zero_from);

// Linear warmup to max_lr over warmup_epochs, then cosine decay to 0 at
// total_epochs.
struct LrSchedule {
  double max_lr = 0.256;
  int warmup_epochs = 5;
  int total_epochs = 100;
};

double lr_at_epoch(const LrSchedule& schedule, int epoch);

}  // namespace sparsetrain
