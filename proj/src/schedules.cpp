#include "sparsetrain/schedules.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sparsetrain {

namespace {

// Overflow-safe logistic function.
double logistic(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_epoch_range(int epoch, int total_epochs) {
  if (total_epochs < 1) {
    throw std::invalid_argument("total_epochs must be >= 1, got " +
                                std::to_string(total_epochs));
  }
  if (epoch < 0 || epoch > total_epochs) {
    throw std::invalid_argument("epoch " + std::to_string(epoch) +
                                " outside [0, " + std::to_string(total_epochs) + "]");
  }
}

}  // namespace

double cosine_decay(int epoch, int total_epochs) {
  check_epoch_range(epoch, total_epochs);
  const double ratio = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return (1.0 + std::cos(M_PI * ratio)) / 2.0;
}

double sigmoid_decay(int epoch, int total_epochs, double lower_logit,
                     double upper_logit) {
  check_epoch_range(epoch, total_epochs);
  if (!(lower_logit < upper_logit)) {
    throw std::invalid_argument("sigmoid decay requires lower_logit < upper_logit");
  }
  const double ratio = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return 1.0 - logistic(lower_logit + (upper_logit - lower_logit) * ratio);
}

double sigmoid_cosine_decay(int epoch, int total_epochs, double lower_logit,
                            double upper_logit) {
  return std::max(cosine_decay(epoch, total_epochs),
                  sigmoid_decay(epoch, total_epochs, lower_logit, upper_logit));
}

double exponential_decay(double t, double beta) {
  if (!(beta > 0.0)) {
    throw std::invalid_argument("exponential decay requires beta > 0");
  }
  if (t < 0.0) {
    throw std::invalid_argument("exponential decay requires t >= 0");
  }
  return std::exp(-beta * t);
}

double anneal_scale(const AnnealSchedule& schedule, int epoch, int total_epochs) {
  switch (schedule.kind) {
    case AnnealKind::Fixed:
      check_epoch_range(epoch, total_epochs);
      return 1.0;
    case AnnealKind::Linear:
      check_epoch_range(epoch, total_epochs);
      return 1.0 - static_cast<double>(epoch) / static_cast<double>(total_epochs);
    case AnnealKind::Cosine:
      return cosine_decay(epoch, total_epochs);
    case AnnealKind::Sigmoid:
      return sigmoid_decay(epoch, total_epochs, schedule.lower_logit,
                           schedule.upper_logit);
    case AnnealKind::SigmoidCosine:
      return sigmoid_cosine_decay(epoch, total_epochs, schedule.lower_logit,
                                  schedule.upper_logit);
    case AnnealKind::Exponential:
      check_epoch_range(epoch, total_epochs);
      return exponential_decay(static_cast<double>(epoch), schedule.beta);
  }
  throw std::invalid_argument("unknown anneal kind");
}

double alpha_at_epoch(double alpha0, const AnnealSchedule& schedule, int epoch,
                      int total_epochs, std::optional<int> zero_from) {
  if (alpha0 < 0.0 || alpha0 > 1.0) {
    throw std::invalid_argument("alpha0 must be in [0, 1], got " +
                                std::to_string(alpha0));
  }
  if (zero_from.has_value() && epoch >= *zero_from) {
    return 0.0;
  }
  return alpha0 * anneal_scale(schedule, epoch, total_epochs);
}

double lr_at_epoch(const LrSchedule& schedule, int epoch) {
  if (!(schedule.max_lr > 0.0)) {
    throw std::invalid_argument("max_lr must be > 0");
  }
  if (schedule.warmup_epochs < 0 || schedule.total_epochs < 1 ||
      schedule.warmup_epochs > schedule.total_epochs) {
    throw std::invalid_argument("invalid warmup/total epoch combination");
  }
  if (epoch < 0 || epoch > schedule.total_epochs) {
    throw std::invalid_argument("epoch " + std::to_string(epoch) +
                                " outside [0, total_epochs]");
  }
  if (schedule.warmup_epochs > 0 && epoch <= schedule.warmup_epochs) {
    return schedule.max_lr * static_cast<double>(epoch) /
           static_cast<double>(schedule.warmup_epochs);
  }
  const int span = schedule.total_epochs - schedule.warmup_epochs;
  if (span == 0) {
    return schedule.max_lr;
  }
  const double ratio =
      static_cast<double>(epoch - schedule.warmup_epochs) / static_cast<double>(span);
  return schedule.max_lr * (1.0 + std::cos(M_PI * ratio)) / 2.0;
}

}  // namespace sparsetrain
