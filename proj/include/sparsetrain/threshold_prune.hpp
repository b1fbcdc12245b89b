#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace sparsetrain {

// Overflow-safe logistic function; g(s) in the threshold parameterization.
inline double logistic(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// d/ds logistic(s)
inline double logistic_grad(double s) {
  const double g = logistic(s);
  return g * (1.0 - g);
}

// sign with sign(0) = 0
template <std::floating_point T>
inline T signum(T x) {
  return static_cast<T>((x > T{0}) - (x < T{0}));
}

// Output of the soft-threshold masking step for one layer.
//
// sparse_weights[i] = sign(w_i) * max(|w_i| - g(s), 0)
// active_mask[i]    = 1 iff |w_i| - g(s) > 0 (boundary |w| == g(s) is masked)
template <std::floating_point T>
struct PruneForwardResult {
  std::vector<T> sparse_weights;
  std::vector<std::uint8_t> active_mask;
  double threshold = 0.0;  // g(s)
  double active_fraction = 0.0;
  std::size_t active_count = 0;
};

enum class SupersetMode { AllWeights, TopKFraction };

// Which entries receive weight gradients in the backward pass. AllWeights is
// the dense-gradient mode; TopKFraction restricts gradients to the
// keep_fraction largest-magnitude entries (a superset of the active set
// whenever keep_fraction >= active_fraction).
struct BackwardSupersetSpec {
  SupersetMode mode = SupersetMode::AllWeights;
  double keep_fraction = 1.0;
};

template <std::floating_point T>
PruneForwardResult<T> prune_forward(std::span<const T> weights, double s) {
  if (!std::isfinite(s)) {
    throw std::domain_error("prune_forward: threshold parameter s is not finite");
  }
  PruneForwardResult<T> result;
  result.threshold = logistic(s);
  result.sparse_weights.resize(weights.size());
  result.active_mask.resize(weights.size());
  std::size_t active = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const T w = weights[i];
    if (!std::isfinite(w)) {
      throw std::domain_error("prune_forward: weight entry " + std::to_string(i) +
                              " is not finite");
    }
    const double shifted = std::abs(static_cast<double>(w)) - result.threshold;
    // A margin that underflows to zero in the working precision counts as masked.
    const T value = shifted > 0.0 ? signum(w) * static_cast<T>(shifted) : T{0};
    if (value != T{0}) {
      result.sparse_weights[i] = value;
      result.active_mask[i] = 1;
      ++active;
    } else {
      result.sparse_weights[i] = T{0};
      result.active_mask[i] = 0;
    }
  }
  result.active_count = active;
  result.active_fraction =
      weights.empty() ? 0.0
                      : static_cast<double>(active) / static_cast<double>(weights.size());
  return result;
}

// Indices of the ceil(keep_fraction * n) largest-magnitude entries.
// Ties break toward the lower index so the selection is deterministic.
template <std::floating_point T>
std::vector<std::size_t> topk_superset(std::span<const T> weights, double keep_fraction) {
  if (weights.empty()) {
    throw std::invalid_argument("topk_superset: empty tensor");
  }
  if (!(keep_fraction > 0.0) || keep_fraction > 1.0) {
    throw std::invalid_argument("topk_superset: keep_fraction must be in (0, 1]");
  }
  const std::size_t n = weights.size();
  const std::size_t k = static_cast<std::size_t>(
      std::ceil(keep_fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto larger = [&](std::size_t a, std::size_t b) {
    const double ma = std::abs(static_cast<double>(weights[a]));
    const double mb = std::abs(static_cast<double>(weights[b]));
    if (ma != mb) return ma > mb;
    return a < b;
  };
  std::nth_element(order.begin(), order.begin() + (k - 1), order.end(), larger);
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

// Membership mask for the backward superset; all ones in AllWeights mode.
template <std::floating_point T>
std::vector<std::uint8_t> superset_mask(std::span<const T> weights,
                                        const BackwardSupersetSpec& spec) {
  std::vector<std::uint8_t> mask(weights.size(), 1);
  if (spec.mode == SupersetMode::TopKFraction) {
    std::fill(mask.begin(), mask.end(), 0);
    for (std::size_t i : topk_superset(weights, spec.keep_fraction)) {
      mask[i] = 1;
    }
  }
  return mask;
}

// Proxy gradient for the weights: pass-through on active entries, alpha on
// masked entries inside the superset, zero outside the superset.
template <std::floating_point T>
std::vector<T> prune_backward_weights(std::span<const T> upstream,
                                      const PruneForwardResult<T>& fwd, double alpha,
                                      const BackwardSupersetSpec& superset,
                                      std::span<const T> weights) {
  if (upstream.size() != fwd.active_mask.size() || weights.size() != upstream.size()) {
    throw std::invalid_argument("prune_backward_weights: shape mismatch");
  }
  if (alpha < 0.0 || alpha > 1.0) {
    throw std::invalid_argument("prune_backward_weights: alpha must be in [0, 1]");
  }
  const std::vector<std::uint8_t> in_superset = superset_mask(weights, superset);
  std::vector<T> grad(upstream.size());
  for (std::size_t i = 0; i < upstream.size(); ++i) {
    if (!in_superset[i]) {
      grad[i] = T{0};
    } else if (fwd.active_mask[i]) {
      grad[i] = upstream[i];
    } else {
      grad[i] = static_cast<T>(alpha * static_cast<double>(upstream[i]));
    }
  }
  return grad;
}

// Scalar gradient for the threshold parameter s:
//   -g'(s) * sum_i upstream_i * sign(w_i) * (1 if active else alpha)
// restricted to superset members. Accumulated in double in index order.
template <std::floating_point T>
double prune_backward_threshold(std::span<const T> upstream,
                                const PruneForwardResult<T>& fwd, double alpha, double s,
                                std::span<const T> weights,
                                const BackwardSupersetSpec& superset = {}) {
  if (upstream.size() != fwd.active_mask.size() || weights.size() != upstream.size()) {
    throw std::invalid_argument("prune_backward_threshold: shape mismatch");
  }
  if (alpha < 0.0 || alpha > 1.0) {
    throw std::invalid_argument("prune_backward_threshold: alpha must be in [0, 1]");
  }
  const std::vector<std::uint8_t> in_superset = superset_mask(weights, superset);
  double inner = 0.0;
  for (std::size_t i = 0; i < upstream.size(); ++i) {
    if (!in_superset[i]) continue;
    const double proxy = fwd.active_mask[i] ? 1.0 : alpha;
    inner += static_cast<double>(upstream[i]) *
             static_cast<double>(signum(weights[i])) * proxy;
  }
  return -logistic_grad(s) * inner;
}

}  // namespace sparsetrain
