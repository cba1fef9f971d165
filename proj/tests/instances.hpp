#pragma once

// Random small models, one per layer kind, for gradient and relevance checks.

#include <random>
#include <string>
#include <vector>

#include "audiolrp/nn.hpp"

namespace instances {

using namespace audiolrp;

struct Instance {
  std::string kind;
  Model<double> model;
  TensorD input;
  std::size_t label;
};

inline ModelSpec small_spec(LayerKind kind, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> coin(0, 1);
  switch (kind) {
    case LayerKind::Conv1D: {
      const std::size_t stride = 1 + coin(rng);
      return ModelSpec({7, 2}, 3)
          .add(LayerSpec::conv1d(3, 3, stride, coin(rng)))
          .add(LayerSpec::flatten())
          .add(LayerSpec::dense(3));
    }
    case LayerKind::Conv2D: {
      const std::size_t stride = 1 + coin(rng);
      return ModelSpec({5, 5, 2}, 3)
          .add(LayerSpec::conv2d(2, 3, stride, 1))
          .add(LayerSpec::flatten())
          .add(LayerSpec::dense(3));
    }
    case LayerKind::MaxPool1D:
      return ModelSpec({8, 2}, 3)
          .add(LayerSpec::conv1d(2, 3, 1, 1))
          .add(LayerSpec::maxpool1d(2 + coin(rng), 2))
          .add(LayerSpec::flatten())
          .add(LayerSpec::dense(3));
    case LayerKind::MaxPool2D:
      return ModelSpec({7, 7, 1}, 3)
          .add(LayerSpec::conv2d(2, 3, 1, 1))
          .add(LayerSpec::maxpool2d(3, 2))
          .add(LayerSpec::flatten())
          .add(LayerSpec::dense(3));
    case LayerKind::Dense:
      return ModelSpec({5}, 3).add(LayerSpec::dense(4)).add(LayerSpec::dense(3));
    case LayerKind::ReLU:
      return ModelSpec({6}, 3)
          .add(LayerSpec::dense(5))
          .add(LayerSpec::relu())
          .add(LayerSpec::dense(3));
    case LayerKind::Flatten:
      return ModelSpec({3, 4}, 3).add(LayerSpec::flatten()).add(LayerSpec::dense(3));
    case LayerKind::Dropout:
      return ModelSpec({6}, 3).add(LayerSpec::dropout(0.5)).add(LayerSpec::dense(3));
  }
  throw std::logic_error("unreachable");
}

/// True when every ReLU input and every max-pool window is at least `margin`
/// away from a kink, so central differences of width < margin are smooth.
inline bool away_from_kinks(const Model<double>& model, const TensorD& input,
                            double margin) {
  auto fr = forward(model, input, {.record_trace = true});
  const auto& layers = model.spec().layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& rec = fr.trace->layers[i];
    if (layers[i].kind == LayerKind::ReLU) {
      for (double v : rec.input.data())
        if (std::abs(v) < margin) return false;
    }
    if (layers[i].kind == LayerKind::MaxPool1D || layers[i].kind == LayerKind::MaxPool2D) {
      // every non-winning element of a window must trail the winner by margin
      const auto& in = rec.input;
      const auto& spec = layers[i];
      const Shape& s = in.shape();
      const std::size_t C = s.back();
      if (spec.kind == LayerKind::MaxPool1D) {
        for (std::size_t t = 0; t < rec.output.dim(0); ++t)
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t k = 0; k < spec.kernel; ++k) {
              const std::size_t idx = (t * spec.stride + k) * C + c;
              if (idx != rec.argmax[t * C + c] &&
                  rec.output[t * C + c] - in[idx] < margin)
                return false;
            }
      } else {
        const std::size_t W = s[1];
        for (std::size_t oy = 0; oy < rec.output.dim(0); ++oy)
          for (std::size_t ox = 0; ox < rec.output.dim(1); ++ox)
            for (std::size_t c = 0; c < C; ++c) {
              const std::size_t o = (oy * rec.output.dim(1) + ox) * C + c;
              for (std::size_t u = 0; u < spec.kernel; ++u)
                for (std::size_t v = 0; v < spec.kernel; ++v) {
                  const std::size_t idx =
                      ((oy * spec.stride + u) * W + ox * spec.stride + v) * C + c;
                  if (idx != rec.argmax[o] && rec.output[o] - in[idx] < margin)
                    return false;
                }
            }
      }
    }
  }
  return true;
}

inline Instance random_instance(LayerKind kind, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    Model<double> model(small_spec(kind, rng));
    model.init_kaiming(rng());
    for (auto& p : model.params())
      for (auto& b : p.bias.data()) b = 0.3 * u(rng);
    TensorD input(model.spec().input_shape());
    for (auto& v : input.data()) v = u(rng);
    const std::size_t label = rng() % model.spec().classes();
    if (away_from_kinks(model, input, 1e-3))
      return {to_string(kind), std::move(model), std::move(input), label};
  }
}

/// Parameter gradients in parameter order, then the input gradient, matching
/// the layout of oracle::finite_difference_gradients.
inline std::vector<double> flatten_gradients(const Gradients<double>& g) {
  std::vector<double> out;
  for (const auto& p : g.params) {
    out.insert(out.end(), p.weight.data().begin(), p.weight.data().end());
    out.insert(out.end(), p.bias.data().begin(), p.bias.data().end());
  }
  out.insert(out.end(), g.input.data().begin(), g.input.data().end());
  return out;
}

inline const std::vector<LayerKind>& all_kinds() {
  static const std::vector<LayerKind> kinds = {
      LayerKind::Conv1D,    LayerKind::Conv2D, LayerKind::MaxPool1D,
      LayerKind::MaxPool2D, LayerKind::Dense,  LayerKind::ReLU,
      LayerKind::Flatten,   LayerKind::Dropout};
  return kinds;
}

}  // namespace instances
