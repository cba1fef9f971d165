#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "audiolrp/tensor.hpp"

namespace audiolrp {

enum class LayerKind {
  Conv1D,
  Conv2D,
  MaxPool1D,
  MaxPool2D,
  Dense,
  ReLU,
  Flatten,
  Dropout,
};

std::string to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::size_t kernel = 1;  // square for 2-D layers
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t out = 0;  // output channels (conv) or units (dense)
  double dropout_p = 0.0;
  bool bias = true;

  static LayerSpec conv1d(std::size_t out, std::size_t kernel,
                          std::size_t stride = 1, std::size_t padding = 0,
                          bool bias = true);
  static LayerSpec conv2d(std::size_t out, std::size_t kernel,
                          std::size_t stride = 1, std::size_t padding = 0,
                          bool bias = true);
  static LayerSpec maxpool1d(std::size_t kernel, std::size_t stride);
  static LayerSpec maxpool2d(std::size_t kernel, std::size_t stride);
  static LayerSpec dense(std::size_t out, bool bias = true);
  static LayerSpec relu();
  static LayerSpec flatten();
  static LayerSpec dropout(double p);

  bool has_params() const {
    return kind == LayerKind::Conv1D || kind == LayerKind::Conv2D ||
           kind == LayerKind::Dense;
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Ordered layer list with a fixed input shape. Shapes are propagated at
/// construction, so a layer that does not chain is rejected by add().
class ModelSpec {
 public:
  ModelSpec(Shape input_shape, std::size_t classes);

  ModelSpec& add(const LayerSpec& layer);

  const Shape& input_shape() const { return input_shape_; }
  std::size_t classes() const { return classes_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t size() const { return layers_.size(); }

  const Shape& layer_input_shape(std::size_t i) const { return shapes_.at(i); }
  const Shape& layer_output_shape(std::size_t i) const {
    return shapes_.at(i + 1);
  }
  const Shape& output_shape() const { return shapes_.back(); }

  /// Conv, pooling and dense layers; activations and reshapes are not counted.
  std::size_t structural_depth() const;

  /// Throws unless the final output is a vector of `classes` logits.
  void check_complete() const;

  /// Canonical text form; parse_descriptor() inverts it.
  std::string descriptor() const;
  static ModelSpec parse_descriptor(const std::string& text);

  /// 64-bit FNV-1a of the descriptor.
  std::uint64_t hash() const;

  friend bool operator==(const ModelSpec& a, const ModelSpec& b) {
    return a.input_shape_ == b.input_shape_ && a.classes_ == b.classes_ &&
           a.layers_ == b.layers_;
  }

 private:
  Shape input_shape_;
  std::size_t classes_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_;  // shapes_[i] is the input of layer i
};

/// Output shape of `layer` for the given input, or ShapeError.
Shape infer_output_shape(const LayerSpec& layer, const Shape& input);

template <typename T>
struct LayerParams {
  Tensor<T> weight;  // (out, in, k) / (out, in, k, k) / (out, in)
  Tensor<T> bias;    // (out); empty when the layer has no bias
};

/// Architecture plus learned parameters.
template <typename T>
class Model {
 public:
  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  std::vector<LayerParams<T>>& params() { return params_; }
  const std::vector<LayerParams<T>>& params() const { return params_; }
  LayerParams<T>& params(std::size_t layer) { return params_.at(layer); }
  const LayerParams<T>& params(std::size_t layer) const {
    return params_.at(layer);
  }

  std::size_t parameter_count() const;

  /// Kaiming-uniform fan-in weights, zero biases.
  void init_kaiming(std::uint64_t seed);

  template <typename U>
  Model<U> cast() const {
    Model<U> out(spec_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (!params_[i].weight.empty())
        out.params(i).weight = params_[i].weight.template cast<U>();
      if (!params_[i].bias.empty())
        out.params(i).bias = params_[i].bias.template cast<U>();
    }
    return out;
  }

 private:
  ModelSpec spec_;
  std::vector<LayerParams<T>> params_;
};

/// Visits every parameter tensor in a fixed order with its checkpoint name.
template <typename T, typename Fn>
void for_each_parameter(Model<T>& model, Fn&& fn) {
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    auto& p = model.params(i);
    if (!p.weight.empty()) fn("layer" + std::to_string(i) + ".weight", p.weight);
    if (!p.bias.empty()) fn("layer" + std::to_string(i) + ".bias", p.bias);
  }
}

template <typename T, typename Fn>
void for_each_parameter(const Model<T>& model, Fn&& fn) {
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const auto& p = model.params(i);
    if (!p.weight.empty()) fn("layer" + std::to_string(i) + ".weight", p.weight);
    if (!p.bias.empty()) fn("layer" + std::to_string(i) + ".bias", p.bias);
  }
}

extern template class Model<float>;
extern template class Model<double>;

}  // namespace audiolrp
