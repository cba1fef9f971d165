#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "audiolrp/model.hpp"

namespace audiolrp {

/// What one layer saw during a forward pass.
template <typename T>
struct LayerRecord {
  Tensor<T> input;
  Tensor<T> output;
  std::vector<std::uint32_t> argmax;  // max-pool: flat input index per output
  std::vector<T> mask;                // dropout: per-element multiplier
};

template <typename T>
struct ActivationTrace {
  std::uint64_t model_hash = 0;
  std::vector<LayerRecord<T>> layers;

  const Tensor<T>& input() const { return layers.front().input; }
  const Tensor<T>& logits() const { return layers.back().output; }
};

struct ForwardOptions {
  bool record_trace = false;
  bool train_mode = false;
  std::mt19937_64* rng = nullptr;  // required when train_mode uses dropout
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;
  std::optional<ActivationTrace<T>> trace;
};

template <typename T>
ForwardResult<T> forward(const Model<T>& model, const Tensor<T>& input,
                         const ForwardOptions& options = {});

/// Convenience: logits only, inference mode.
template <typename T>
Tensor<T> predict_logits(const Model<T>& model, const Tensor<T>& input) {
  return forward(model, input).logits;
}

template <typename T>
std::size_t argmax(const Tensor<T>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

template <typename T>
struct Gradients {
  std::vector<LayerParams<T>> params;  // mirrors Model::params()
  Tensor<T> input;                     // d loss / d input

  /// Zero gradients shaped like the model's parameters.
  static Gradients zeros_like(const Model<T>& model);
  void accumulate(const Gradients& other);
  void scale(T factor);
};

/// Backpropagates `logit_grad` through the recorded trace.
template <typename T>
Gradients<T> backward(const Model<T>& model, const ActivationTrace<T>& trace,
                      const Tensor<T>& logit_grad);

template <typename T>
struct LossResult {
  T loss;
  Tensor<T> logit_grad;
};

/// Log-sum-exp stabilised softmax cross-entropy; grad = softmax - onehot.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::size_t label);

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

}  // namespace audiolrp
