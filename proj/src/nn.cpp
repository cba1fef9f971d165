#include "audiolrp/nn.hpp"

#include <cmath>
#include <limits>

#include "kernels.hpp"

namespace audiolrp {

namespace {

template <typename T>
void require_finite(const Tensor<T>& t, std::size_t layer, const char* what) {
  if (!t.all_finite()) {
    throw NumericError(std::string("non-finite values in ") + what +
                       " of layer " + std::to_string(layer));
  }
}

template <typename T>
const Tensor<T>* bias_of(const LayerParams<T>& p) {
  return p.bias.empty() ? nullptr : &p.bias;
}

template <typename T>
Tensor<T>* bias_of(LayerParams<T>& p) {
  return p.bias.empty() ? nullptr : &p.bias;
}

}  // namespace

template <typename T>
ForwardResult<T> forward(const Model<T>& model, const Tensor<T>& input,
                         const ForwardOptions& options) {
  const ModelSpec& spec = model.spec();
  if (input.shape() != spec.input_shape()) {
    throw ShapeError("input shape " + shape_string(input.shape()) +
                     " does not match model input " +
                     shape_string(spec.input_shape()));
  }

  ForwardResult<T> result;
  if (options.record_trace) {
    result.trace.emplace();
    result.trace->model_hash = spec.hash();
    result.trace->layers.resize(spec.size());
  }

  Tensor<T> x = input;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const LayerSpec& l = spec.layers()[i];
    const LayerParams<T>& p = model.params(i);
    std::vector<std::uint32_t> argmax;
    std::vector<T> mask;
    Tensor<T> y;
    switch (l.kind) {
      case LayerKind::Conv1D:
        y = kernels::conv1d_forward(x, p.weight, bias_of(p), l);
        break;
      case LayerKind::Conv2D:
        y = kernels::conv2d_forward(x, p.weight, bias_of(p), l);
        break;
      case LayerKind::Dense:
        y = kernels::dense_forward(x, p.weight, bias_of(p));
        break;
      case LayerKind::MaxPool1D:
        y = kernels::maxpool1d_forward(x, l, argmax);
        break;
      case LayerKind::MaxPool2D:
        y = kernels::maxpool2d_forward(x, l, argmax);
        break;
      case LayerKind::ReLU:
        y = x;
        for (auto& v : y.data()) v = v > T{0} ? v : T{0};
        break;
      case LayerKind::Flatten:
        y = x.reshaped({x.size()});
        break;
      case LayerKind::Dropout:
        y = x;
        if (options.train_mode && l.dropout_p > 0.0) {
          if (!options.rng) throw ConfigError("dropout in train mode needs an rng");
          std::bernoulli_distribution keep(1.0 - l.dropout_p);
          const T scale = static_cast<T>(1.0 / (1.0 - l.dropout_p));
          mask.resize(y.size());
          for (std::size_t k = 0; k < y.size(); ++k) {
            mask[k] = keep(*options.rng) ? scale : T{0};
            y[k] *= mask[k];
          }
        }
        break;
    }
    require_finite(y, i, "output");
    if (result.trace) {
      auto& rec = result.trace->layers[i];
      rec.input = std::move(x);
      rec.output = y;
      rec.argmax = std::move(argmax);
      rec.mask = std::move(mask);
    }
    x = std::move(y);
  }
  result.logits = std::move(x);
  return result;
}

template <typename T>
Gradients<T> Gradients<T>::zeros_like(const Model<T>& model) {
  Gradients g;
  g.params.resize(model.params().size());
  for (std::size_t i = 0; i < g.params.size(); ++i) {
    const auto& p = model.params(i);
    if (!p.weight.empty()) g.params[i].weight = Tensor<T>(p.weight.shape());
    if (!p.bias.empty()) g.params[i].bias = Tensor<T>(p.bias.shape());
  }
  return g;
}

template <typename T>
void Gradients<T>::accumulate(const Gradients& other) {
  if (other.params.size() != params.size())
    throw ShapeError("gradient sets have different layer counts");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto add = [](Tensor<T>& dst, const Tensor<T>& src) {
      if (src.empty()) return;
      if (dst.shape() != src.shape()) throw ShapeError("gradient shape mismatch");
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    };
    add(params[i].weight, other.params[i].weight);
    add(params[i].bias, other.params[i].bias);
  }
}

template <typename T>
void Gradients<T>::scale(T factor) {
  for (auto& p : params) {
    for (auto& v : p.weight.data()) v *= factor;
    for (auto& v : p.bias.data()) v *= factor;
  }
}

template <typename T>
Gradients<T> backward(const Model<T>& model, const ActivationTrace<T>& trace,
                      const Tensor<T>& logit_grad) {
  const ModelSpec& spec = model.spec();
  if (trace.layers.size() != spec.size() || trace.model_hash != spec.hash()) {
    throw ShapeError("activation trace was not produced by this model");
  }
  if (logit_grad.shape() != spec.output_shape()) {
    throw ShapeError("logit gradient shape " + shape_string(logit_grad.shape()) +
                     " does not match model output " +
                     shape_string(spec.output_shape()));
  }

  Gradients<T> grads = Gradients<T>::zeros_like(model);
  Tensor<T> g = logit_grad;
  for (std::size_t i = spec.size(); i-- > 0;) {
    const LayerSpec& l = spec.layers()[i];
    const LayerRecord<T>& rec = trace.layers[i];
    const LayerParams<T>& p = model.params(i);
    const Shape& in_shape = spec.layer_input_shape(i);
    switch (l.kind) {
      case LayerKind::Conv1D:
        kernels::conv1d_backward_params(g, rec.input, l, grads.params[i].weight,
                                        bias_of(grads.params[i]));
        g = kernels::conv1d_backward_input(g, p.weight, l, in_shape);
        break;
      case LayerKind::Conv2D:
        kernels::conv2d_backward_params(g, rec.input, l, grads.params[i].weight,
                                        bias_of(grads.params[i]));
        g = kernels::conv2d_backward_input(g, p.weight, l, in_shape);
        break;
      case LayerKind::Dense:
        kernels::dense_backward_params(g, rec.input, grads.params[i].weight,
                                       bias_of(grads.params[i]));
        g = kernels::dense_backward_input(g, p.weight);
        break;
      case LayerKind::MaxPool1D:
      case LayerKind::MaxPool2D:
        if (rec.argmax.size() != g.size())
          throw ShapeError("trace is missing the max-pool argmax map");
        g = kernels::scatter_to_argmax(g, rec.argmax, in_shape);
        break;
      case LayerKind::ReLU:
        for (std::size_t k = 0; k < g.size(); ++k)
          if (!(rec.input[k] > T{0})) g[k] = T{0};
        break;
      case LayerKind::Flatten:
        g = g.reshaped(in_shape);
        break;
      case LayerKind::Dropout:
        if (!rec.mask.empty())
          for (std::size_t k = 0; k < g.size(); ++k) g[k] *= rec.mask[k];
        break;
    }
    require_finite(g, i, "gradient");
  }
  grads.input = std::move(g);
  return grads;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  T mx = -std::numeric_limits<T>::infinity();
  for (T v : logits.data()) mx = std::max(mx, v);
  Tensor<T> out(logits.shape());
  T total{0};
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - mx);
    total += out[k];
  }
  for (auto& v : out.data()) v /= total;
  return out;
}

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::size_t label) {
  if (logits.rank() != 1) throw ShapeError("logits must be a vector");
  if (label >= logits.size()) {
    throw ConfigError("label " + std::to_string(label) + " out of range for " +
                      std::to_string(logits.size()) + " classes");
  }
  T mx = -std::numeric_limits<T>::infinity();
  for (T v : logits.data()) mx = std::max(mx, v);
  T total{0};
  for (T v : logits.data()) total += std::exp(v - mx);
  const T lse = mx + std::log(total);
  LossResult<T> r{lse - logits[label], softmax(logits)};
  r.logit_grad[label] -= T{1};
  if (r.loss < T{0}) r.loss = T{0};
  if (!std::isfinite(r.loss)) throw NumericError("non-finite loss");
  return r;
}

#define AUDIOLRP_INSTANTIATE(T)                                               \
  template ForwardResult<T> forward(const Model<T>&, const Tensor<T>&,       \
                                    const ForwardOptions&);                  \
  template struct Gradients<T>;                                              \
  template Gradients<T> backward(const Model<T>&, const ActivationTrace<T>&, \
                                 const Tensor<T>&);                          \
  template Tensor<T> softmax(const Tensor<T>&);                              \
  template LossResult<T> softmax_cross_entropy(const Tensor<T>&, std::size_t);

AUDIOLRP_INSTANTIATE(float)
AUDIOLRP_INSTANTIATE(double)

#undef AUDIOLRP_INSTANTIATE

}  // namespace audiolrp
