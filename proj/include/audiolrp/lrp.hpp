#pragma once

#include <cstdint>
#include <filesystem>
#include <type_traits>
#include <vector>

#include "audiolrp/nn.hpp"

namespace audiolrp {

/// Absorb: biases sit in the denominator and their share of relevance is
/// dropped. Distribute: the bias share is spread evenly over the neuron's
/// inputs, so relevance is conserved even with biases.
enum class BiasMode { Absorb, Distribute };

/// TargetLogit: the target neuron starts with its pre-softmax logit.
/// Unit: it starts with 1.
enum class InitMode { TargetLogit, Unit };

struct LrpConfig {
  double epsilon = 1e-6;
  BiasMode bias = BiasMode::Absorb;
  InitMode init = InitMode::TargetLogit;

  void validate() const;
};

struct LrpDiagnostics {
  /// Output neurons whose denominator was exactly zero (epsilon = 0); their
  /// relevance is routed as zero.
  std::size_t zero_denominators = 0;
};

template <typename T>
struct RelevanceMap {
  Tensor<T> relevance;  // shaped like the explained input
  std::size_t target = 0;
  double epsilon = 0.0;
  std::uint64_t model_hash = 0;
};

template <typename T>
Tensor<T> init_output_relevance(const Tensor<T>& logits, std::size_t target,
                                InitMode mode = InitMode::TargetLogit);

/// Epsilon-stabilised z-rule for a dense layer with weight (out, in):
/// R_i = sum_j x_i w_ji / (z_j + eps sign(z_j)) R_j.
template <typename T>
Tensor<T> lrp_dense(const Tensor<T>& x, const Tensor<T>& weight,
                    const std::type_identity_t<Tensor<T>>* bias,
                    const Tensor<T>& upstream,
                    const LrpConfig& cfg, LrpDiagnostics* diag = nullptr);

/// The same rule with every output position of a 1-D or 2-D convolution
/// treated as a dense neuron over its receptive field. `z` may supply the
/// layer's 64-bit pre-activations when they are already known.
template <typename T>
Tensor<T> lrp_conv(const LayerSpec& layer, const Tensor<T>& x,
                   const Tensor<T>& weight,
                   const std::type_identity_t<Tensor<T>>* bias,
                   const Tensor<T>& upstream, const LrpConfig& cfg,
                   LrpDiagnostics* diag = nullptr, const TensorD* z = nullptr);

/// Winner-take-all: each pooled relevance goes to its recorded argmax input.
template <typename T>
Tensor<T> lrp_maxpool(const std::vector<std::uint32_t>& argmax,
                      const Tensor<T>& upstream, const Shape& input_shape);

/// Identity for ReLU, inverse reshape for Flatten.
template <typename T>
Tensor<T> lrp_passthrough(const Tensor<T>& upstream, const Shape& input_shape);

/// Propagates relevance from the target output back to the input through
/// every layer of the trace. When `per_layer` is given it receives the
/// relevance at each layer's input (index i = input of layer i).
template <typename T>
RelevanceMap<T> explain(const Model<T>& model, const ActivationTrace<T>& trace,
                        std::size_t target, const LrpConfig& cfg = {},
                        LrpDiagnostics* diag = nullptr,
                        std::vector<Tensor<T>>* per_layer = nullptr);

/// Tensor blob file plus a "<path>.meta" text sidecar (target, epsilon,
/// model hash).
void save_relevance(const std::filesystem::path& path, const RelevanceMap<float>& map);
RelevanceMap<float> load_relevance(const std::filesystem::path& path);

}  // namespace audiolrp
