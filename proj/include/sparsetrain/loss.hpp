#pragma once

#include <cmath>
#include <concepts>
#include <span>
#include <stdexcept>
#include <vector>

namespace sparsetrain {

// Label-smoothed cross entropy. The target distribution mixes the one-hot
// label with uniform mass: q_k = (1-smoothing)*[k==target] + smoothing/K.
// smoothing = 0 is plain cross entropy.
template <std::floating_point T>
double smoothed_cross_entropy(std::span<const T> logits, int target,
                              double smoothing) {
  const std::size_t k = logits.size();
  if (k == 0 || target < 0 || static_cast<std::size_t>(target) >= k) {
    throw std::invalid_argument("smoothed_cross_entropy: target out of range");
  }
  if (smoothing < 0.0 || smoothing >= 1.0) {
    throw std::invalid_argument("smoothed_cross_entropy: smoothing outside [0, 1)");
  }
  double max_logit = static_cast<double>(logits[0]);
  for (const T v : logits) max_logit = std::max(max_logit, static_cast<double>(v));
  double sum_exp = 0.0;
  for (const T v : logits) sum_exp += std::exp(static_cast<double>(v) - max_logit);
  const double log_z = max_logit + std::log(sum_exp);
  const double uniform = smoothing / static_cast<double>(k);
  double loss = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double q = uniform + (static_cast<int>(i) == target ? 1.0 - smoothing : 0.0);
    loss -= q * (static_cast<double>(logits[i]) - log_z);
  }
  return loss;
}

// Mean smoothed cross entropy over a batch of row-major logits, plus the
// gradient (softmax - target distribution) / batch, written into grad_out.
template <std::floating_point T>
double smoothed_ce_batch(std::span<const T> logits, std::span<const int> labels,
                         int num_classes, double smoothing, std::span<T> grad_out) {
  const std::size_t batch = labels.size();
  const std::size_t k = static_cast<std::size_t>(num_classes);
  if (batch == 0 || logits.size() != batch * k || grad_out.size() != logits.size()) {
    throw std::invalid_argument("smoothed_ce_batch: shape mismatch");
  }
  const double uniform = smoothing / static_cast<double>(k);
  const double inv_batch = 1.0 / static_cast<double>(batch);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const T* row = logits.data() + b * k;
    const int target = labels[b];
    if (target < 0 || static_cast<std::size_t>(target) >= k) {
      throw std::invalid_argument("smoothed_ce_batch: label out of range");
    }
    double max_logit = static_cast<double>(row[0]);
    for (std::size_t i = 0; i < k; ++i) {
      max_logit = std::max(max_logit, static_cast<double>(row[i]));
    }
    double sum_exp = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      sum_exp += std::exp(static_cast<double>(row[i]) - max_logit);
    }
    const double log_z = max_logit + std::log(sum_exp);
    T* grow = grad_out.data() + b * k;
    for (std::size_t i = 0; i < k; ++i) {
      const double logp = static_cast<double>(row[i]) - log_z;
      const double q =
          uniform + (static_cast<int>(i) == target ? 1.0 - smoothing : 0.0);
      total -= q * logp;
      grow[i] = static_cast<T>((std::exp(logp) - q) * inv_batch);
    }
  }
  return total * inv_batch;
}

}  // namespace sparsetrain
