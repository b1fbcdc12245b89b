#pragma once

#include <concepts>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparsetrain/rng.hpp"
#include "sparsetrain/threshold_prune.hpp"

namespace sparsetrain {

enum class LayerKind { Affine, Conv2d };

struct LayerSpec {
  LayerKind kind = LayerKind::Affine;
  int out_features = 0;  // affine
  int out_channels = 0;  // conv
  int kernel_h = 0;
  int kernel_w = 0;
  bool relu = false;
  bool dense_exempt = false;
};

struct ModelSpec {
  std::vector<int> input_shape;  // {features} or {channels, height, width}
  std::vector<LayerSpec> layers;
  double s0 = -5.0;
};

// One affine or 2-D convolution (stride 1, valid padding) layer with a single
// learnable threshold parameter. Dense-exempt layers skip pruning entirely.
template <std::floating_point T>
struct LayerT {
  LayerKind kind = LayerKind::Affine;
  int in_features = 0, out_features = 0;        // affine
  int in_channels = 0, out_channels = 0;        // conv
  int kernel_h = 0, kernel_w = 0;
  int in_h = 0, in_w = 0, out_h = 0, out_w = 0; // conv spatial dims
  bool relu = false;
  bool dense_exempt = false;

  std::vector<T> weights;  // affine: out*in; conv: oc*ic*kh*kw
  std::vector<T> bias;     // out / oc
  T s = T{-5};
  std::optional<PruneForwardResult<T>> last_forward;

  std::size_t weight_count() const { return weights.size(); }
  std::size_t in_dim() const {
    return kind == LayerKind::Affine
               ? static_cast<std::size_t>(in_features)
               : static_cast<std::size_t>(in_channels) * in_h * in_w;
  }
  std::size_t out_dim() const {
    return kind == LayerKind::Affine
               ? static_cast<std::size_t>(out_features)
               : static_cast<std::size_t>(out_channels) * out_h * out_w;
  }
};

template <std::floating_point T>
struct ModelT {
  std::vector<LayerT<T>> layers;
  std::vector<int> input_shape;

  std::size_t input_dim() const {
    std::size_t d = 1;
    for (int s : input_shape) d *= static_cast<std::size_t>(s);
    return d;
  }
  std::size_t output_dim() const {
    return layers.empty() ? 0 : layers.back().out_dim();
  }
};

using Layer = LayerT<float>;
using Model = ModelT<float>;

// Activations cached by forward for the matching backward call.
template <std::floating_point T>
struct ForwardCacheT {
  double alpha = 0.0;
  int batch_size = 0;
  std::vector<std::vector<T>> inputs;   // input to each layer
  std::vector<std::vector<T>> preacts;  // pre-activation outputs
};

using ForwardCache = ForwardCacheT<float>;

template <std::floating_point T>
struct LayerGradientsT {
  std::vector<T> weights;
  std::vector<T> bias;
  T s = T{0};
};

template <std::floating_point T>
struct GradientsT {
  std::vector<LayerGradientsT<T>> layers;
};

using Gradients = GradientsT<float>;

struct LayerSparsity {
  int layer = 0;
  double zero_fraction = 0.0;
  std::size_t param_count = 0;
};

struct SparsityReport {
  std::vector<LayerSparsity> per_layer;
  double global_sparsity = 0.0;           // over prunable layers only
  double global_including_exempt = 0.0;   // dense-exempt folded into the denominator
};

// ---------------------------------------------------------------------------

// Kaiming-uniform fan-in init for weights, zero biases, s0 threshold.
template <std::floating_point T>
ModelT<T> build_model(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.input_shape.empty() ||
      (spec.input_shape.size() != 1 && spec.input_shape.size() != 3)) {
    throw std::invalid_argument("model input_shape must be {features} or {c, h, w}");
  }
  ModelT<T> model;
  model.input_shape = spec.input_shape;
  Rng rng(mix_seed(seed, 0x696e6974));  // "init"

  int cur_c = spec.input_shape.size() == 3 ? spec.input_shape[0] : spec.input_shape[0];
  int cur_h = spec.input_shape.size() == 3 ? spec.input_shape[1] : 1;
  int cur_w = spec.input_shape.size() == 3 ? spec.input_shape[2] : 1;

  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& ls = spec.layers[li];
    LayerT<T> layer;
    layer.kind = ls.kind;
    layer.relu = ls.relu;
    layer.dense_exempt = ls.dense_exempt;
    layer.s = static_cast<T>(spec.s0);
    std::size_t fan_in = 0;
    if (ls.kind == LayerKind::Affine) {
      layer.in_features = cur_c * cur_h * cur_w;
      layer.out_features = ls.out_features;
      if (layer.in_features <= 0 || layer.out_features <= 0) {
        throw std::invalid_argument("layer " + std::to_string(li) +
                                    ": invalid affine dimensions");
      }
      layer.weights.resize(static_cast<std::size_t>(layer.out_features) *
                           layer.in_features);
      layer.bias.assign(static_cast<std::size_t>(layer.out_features), T{0});
      fan_in = static_cast<std::size_t>(layer.in_features);
      cur_c = layer.out_features;
      cur_h = 1;
      cur_w = 1;
    } else {
      layer.in_channels = cur_c;
      layer.out_channels = ls.out_channels;
      layer.kernel_h = ls.kernel_h;
      layer.kernel_w = ls.kernel_w;
      layer.in_h = cur_h;
      layer.in_w = cur_w;
      layer.out_h = cur_h - ls.kernel_h + 1;
      layer.out_w = cur_w - ls.kernel_w + 1;
      if (layer.out_channels <= 0 || layer.kernel_h <= 0 || layer.kernel_w <= 0 ||
          layer.out_h <= 0 || layer.out_w <= 0) {
        throw std::invalid_argument("layer " + std::to_string(li) +
                                    ": invalid conv dimensions");
      }
      layer.weights.resize(static_cast<std::size_t>(layer.out_channels) *
                           layer.in_channels * layer.kernel_h * layer.kernel_w);
      layer.bias.assign(static_cast<std::size_t>(layer.out_channels), T{0});
      fan_in = static_cast<std::size_t>(layer.in_channels) * layer.kernel_h *
               layer.kernel_w;
      cur_c = layer.out_channels;
      cur_h = layer.out_h;
      cur_w = layer.out_w;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (T& w : layer.weights) {
      w = static_cast<T>(rng.uniform(-bound, bound));
    }
    model.layers.push_back(std::move(layer));
  }
  return model;
}

namespace detail {

// Effective weights for the forward pass: pruned unless dense-exempt.
// Caches the prune result on the layer.
template <std::floating_point T>
const std::vector<T>& effective_weights(LayerT<T>& layer) {
  if (layer.dense_exempt) {
    layer.last_forward.reset();
    return layer.weights;
  }
  layer.last_forward = prune_forward<T>(layer.weights, static_cast<double>(layer.s));
  return layer.last_forward->sparse_weights;
}

template <std::floating_point T>
void affine_forward(const LayerT<T>& layer, const std::vector<T>& w,
                    std::span<const T> x, int batch, std::vector<T>& y) {
  const std::size_t in = layer.in_features;
  const std::size_t out = layer.out_features;
  y.assign(static_cast<std::size_t>(batch) * out, T{0});
  for (int b = 0; b < batch; ++b) {
    const T* xb = x.data() + static_cast<std::size_t>(b) * in;
    T* yb = y.data() + static_cast<std::size_t>(b) * out;
    for (std::size_t o = 0; o < out; ++o) {
      double acc = static_cast<double>(layer.bias[o]);
      const T* wrow = w.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        acc += static_cast<double>(wrow[i]) * static_cast<double>(xb[i]);
      }
      yb[o] = static_cast<T>(acc);
    }
  }
}

template <std::floating_point T>
void conv_forward(const LayerT<T>& layer, const std::vector<T>& w, std::span<const T> x,
                  int batch, std::vector<T>& y) {
  const int ic = layer.in_channels, oc = layer.out_channels;
  const int ih = layer.in_h, iw = layer.in_w;
  const int oh = layer.out_h, ow = layer.out_w;
  const int kh = layer.kernel_h, kw = layer.kernel_w;
  y.assign(static_cast<std::size_t>(batch) * oc * oh * ow, T{0});
  for (int b = 0; b < batch; ++b) {
    const T* xb = x.data() + static_cast<std::size_t>(b) * ic * ih * iw;
    T* yb = y.data() + static_cast<std::size_t>(b) * oc * oh * ow;
    for (int o = 0; o < oc; ++o) {
      for (int r = 0; r < oh; ++r) {
        for (int c = 0; c < ow; ++c) {
          double acc = static_cast<double>(layer.bias[o]);
          for (int i = 0; i < ic; ++i) {
            for (int u = 0; u < kh; ++u) {
              for (int v = 0; v < kw; ++v) {
                const T xv = xb[(static_cast<std::size_t>(i) * ih + (r + u)) * iw +
                                (c + v)];
                const T wv = w[((static_cast<std::size_t>(o) * ic + i) * kh + u) * kw + v];
                acc += static_cast<double>(xv) * static_cast<double>(wv);
              }
            }
          }
          yb[(static_cast<std::size_t>(o) * oh + r) * ow + c] = static_cast<T>(acc);
        }
      }
    }
  }
}

}  // namespace detail

// Runs the batch through every layer using pruned weights; masks are cached
// per layer and activations in `cache` for the matching backward. `alpha`
// does not affect forward values; it is recorded for the backward pass.
template <std::floating_point T>
std::vector<T> forward(ModelT<T>& model, std::span<const T> batch, int batch_size,
                       double alpha, ForwardCacheT<T>* cache = nullptr) {
  if (batch_size <= 0 ||
      batch.size() != static_cast<std::size_t>(batch_size) * model.input_dim()) {
    throw std::invalid_argument("forward: batch shape does not match model input");
  }
  if (cache) {
    cache->alpha = alpha;
    cache->batch_size = batch_size;
    cache->inputs.assign(model.layers.size(), {});
    cache->preacts.assign(model.layers.size(), {});
  }
  std::vector<T> x(batch.begin(), batch.end());
  std::vector<T> y;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    LayerT<T>& layer = model.layers[li];
    if (x.size() != static_cast<std::size_t>(batch_size) * layer.in_dim()) {
      throw std::invalid_argument("forward: layer " + std::to_string(li) +
                                  " input shape mismatch");
    }
    const std::vector<T>& w = detail::effective_weights(layer);
    if (layer.kind == LayerKind::Affine) {
      detail::affine_forward(layer, w, std::span<const T>(x), batch_size, y);
    } else {
      detail::conv_forward(layer, w, std::span<const T>(x), batch_size, y);
    }
    if (cache) {
      cache->inputs[li] = std::move(x);
      cache->preacts[li] = y;
    }
    if (layer.relu) {
      for (T& v : y) v = v > T{0} ? v : T{0};
    }
    x = std::move(y);
  }
  return x;
}

// Reverse pass: input gradients use the sparse weights; parameter gradients
// go through the proxy rule. Returns gradients for weights, biases, and the
// per-layer threshold parameters.
template <std::floating_point T>
GradientsT<T> backward(ModelT<T>& model, const ForwardCacheT<T>& cache,
                       std::span<const T> logit_grad,
                       const BackwardSupersetSpec& superset) {
  if (cache.inputs.size() != model.layers.size() || cache.batch_size <= 0) {
    throw std::invalid_argument("backward: forward cache missing or stale");
  }
  const int batch = cache.batch_size;
  if (logit_grad.size() != static_cast<std::size_t>(batch) * model.output_dim()) {
    throw std::invalid_argument("backward: logit gradient shape mismatch");
  }
  GradientsT<T> grads;
  grads.layers.resize(model.layers.size());

  std::vector<T> d_out(logit_grad.begin(), logit_grad.end());
  for (std::size_t li = model.layers.size(); li-- > 0;) {
    LayerT<T>& layer = model.layers[li];
    LayerGradientsT<T>& lg = grads.layers[li];
    const std::vector<T>& x = cache.inputs[li];
    const std::vector<T>& pre = cache.preacts[li];
    if (layer.relu) {
      for (std::size_t i = 0; i < d_out.size(); ++i) {
        if (!(pre[i] > T{0})) d_out[i] = T{0};
      }
    }

    const std::vector<T>& w_sparse =
        layer.dense_exempt ? layer.weights : layer.last_forward->sparse_weights;
    std::vector<double> ghat(layer.weight_count(), 0.0);  // dL/d(pruned weights)
    lg.bias.assign(layer.bias.size(), T{0});
    std::vector<T> d_in;
    const bool need_d_in = li > 0;

    if (layer.kind == LayerKind::Affine) {
      const std::size_t in = layer.in_features, out = layer.out_features;
      std::vector<double> bias_acc(out, 0.0);
      if (need_d_in) d_in.assign(static_cast<std::size_t>(batch) * in, T{0});
      for (int b = 0; b < batch; ++b) {
        const T* xb = x.data() + static_cast<std::size_t>(b) * in;
        const T* db = d_out.data() + static_cast<std::size_t>(b) * out;
        for (std::size_t o = 0; o < out; ++o) {
          const double d = static_cast<double>(db[o]);
          if (d == 0.0) continue;
          bias_acc[o] += d;
          double* grow = ghat.data() + o * in;
          for (std::size_t i = 0; i < in; ++i) {
            grow[i] += d * static_cast<double>(xb[i]);
          }
        }
      }
      if (need_d_in) {
        for (int b = 0; b < batch; ++b) {
          const T* db = d_out.data() + static_cast<std::size_t>(b) * out;
          T* ib = d_in.data() + static_cast<std::size_t>(b) * in;
          for (std::size_t i = 0; i < in; ++i) {
            double acc = 0.0;
            for (std::size_t o = 0; o < out; ++o) {
              acc += static_cast<double>(db[o]) * static_cast<double>(w_sparse[o * in + i]);
            }
            ib[i] = static_cast<T>(acc);
          }
        }
      }
      for (std::size_t o = 0; o < out; ++o) lg.bias[o] = static_cast<T>(bias_acc[o]);
    } else {
      const int ic = layer.in_channels, oc = layer.out_channels;
      const int ih = layer.in_h, iw = layer.in_w;
      const int oh = layer.out_h, ow = layer.out_w;
      const int kh = layer.kernel_h, kw = layer.kernel_w;
      std::vector<double> bias_acc(oc, 0.0);
      std::vector<double> din_acc;
      if (need_d_in) din_acc.assign(static_cast<std::size_t>(batch) * ic * ih * iw, 0.0);
      for (int b = 0; b < batch; ++b) {
        const T* xb = x.data() + static_cast<std::size_t>(b) * ic * ih * iw;
        const T* db = d_out.data() + static_cast<std::size_t>(b) * oc * oh * ow;
        double* ib = need_d_in ? din_acc.data() + static_cast<std::size_t>(b) * ic * ih * iw
                               : nullptr;
        for (int o = 0; o < oc; ++o) {
          for (int r = 0; r < oh; ++r) {
            for (int c = 0; c < ow; ++c) {
              const double d =
                  static_cast<double>(db[(static_cast<std::size_t>(o) * oh + r) * ow + c]);
              if (d == 0.0) continue;
              bias_acc[o] += d;
              for (int i = 0; i < ic; ++i) {
                for (int u = 0; u < kh; ++u) {
                  for (int v = 0; v < kw; ++v) {
                    const std::size_t xi =
                        (static_cast<std::size_t>(i) * ih + (r + u)) * iw + (c + v);
                    const std::size_t wi =
                        ((static_cast<std::size_t>(o) * ic + i) * kh + u) * kw + v;
                    ghat[wi] += d * static_cast<double>(xb[xi]);
                    if (ib) {
                      ib[xi] += d * static_cast<double>(w_sparse[wi]);
                    }
                  }
                }
              }
            }
          }
        }
      }
      for (int o = 0; o < oc; ++o) lg.bias[o] = static_cast<T>(bias_acc[o]);
      if (need_d_in) {
        d_in.resize(din_acc.size());
        for (std::size_t i = 0; i < din_acc.size(); ++i) {
          d_in[i] = static_cast<T>(din_acc[i]);
        }
      }
    }

    std::vector<T> ghat_t(ghat.size());
    for (std::size_t i = 0; i < ghat.size(); ++i) ghat_t[i] = static_cast<T>(ghat[i]);
    if (layer.dense_exempt) {
      lg.weights = std::move(ghat_t);
      lg.s = T{0};
    } else {
      const PruneForwardResult<T>& fwd = *layer.last_forward;
      const std::vector<std::uint8_t> in_superset =
          superset_mask<T>(layer.weights, superset);
      lg.weights.resize(ghat_t.size());
      for (std::size_t i = 0; i < ghat_t.size(); ++i) {
        if (!in_superset[i]) {
          lg.weights[i] = T{0};
        } else if (fwd.active_mask[i]) {
          lg.weights[i] = ghat_t[i];
        } else {
          lg.weights[i] = static_cast<T>(cache.alpha * static_cast<double>(ghat_t[i]));
        }
      }
      double inner = 0.0;
      for (std::size_t i = 0; i < ghat_t.size(); ++i) {
        if (!in_superset[i]) continue;
        const double proxy = fwd.active_mask[i] ? 1.0 : cache.alpha;
        inner += static_cast<double>(ghat_t[i]) *
                 static_cast<double>(signum(layer.weights[i])) * proxy;
      }
      lg.s = static_cast<T>(-logistic_grad(static_cast<double>(layer.s)) * inner);
    }
    d_out = std::move(d_in);
  }
  return grads;
}

// Zero-fraction accounting per layer and globally. Uses the cached forward
// mask when present, otherwise recomputes from the current weights and s.
template <std::floating_point T>
SparsityReport sparsity_report(const ModelT<T>& model) {
  SparsityReport report;
  std::size_t prunable_zeros = 0, prunable_params = 0, total_params = 0;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const LayerT<T>& layer = model.layers[li];
    LayerSparsity ls;
    ls.layer = static_cast<int>(li);
    ls.param_count = layer.weight_count();
    total_params += ls.param_count;
    if (layer.dense_exempt) {
      ls.zero_fraction = 0.0;
    } else {
      std::size_t active;
      if (layer.last_forward.has_value()) {
        active = layer.last_forward->active_count;
      } else {
        active = prune_forward<T>(layer.weights, static_cast<double>(layer.s))
                     .active_count;
      }
      const std::size_t zeros = ls.param_count - active;
      ls.zero_fraction = ls.param_count == 0
                             ? 0.0
                             : static_cast<double>(zeros) /
                                   static_cast<double>(ls.param_count);
      prunable_zeros += zeros;
      prunable_params += ls.param_count;
    }
    report.per_layer.push_back(ls);
  }
  report.global_sparsity =
      prunable_params == 0
          ? 0.0
          : static_cast<double>(prunable_zeros) / static_cast<double>(prunable_params);
  report.global_including_exempt =
      total_params == 0
          ? 0.0
          : static_cast<double>(prunable_zeros) / static_cast<double>(total_params);
  return report;
}

}  // namespace sparsetrain
