#include "audiolrp/lrp.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "audiolrp/io.hpp"
#include "kernels.hpp"

namespace audiolrp {

void LrpConfig::validate() const {
  if (!(epsilon >= 0.0)) throw ConfigError("LRP epsilon must be >= 0");
}

template <typename T>
Tensor<T> init_output_relevance(const Tensor<T>& logits, std::size_t target, InitMode mode) {
  if (logits.rank() != 1) throw ShapeError("logits must be a vector");
  if (target >= logits.size())
    throw ConfigError("target class " + std::to_string(target) + " out of range for " +
                      std::to_string(logits.size()) + " classes");
  Tensor<T> r(logits.shape());
  r[target] = mode == InitMode::TargetLogit ? logits[target] : T{1};
  return r;
}

namespace {

/// s_j = R_j / (z_j + eps sign(z_j)); zero where the stabilised denominator
/// vanishes.
TensorD stabilised_ratio(const TensorD& z, const TensorD& upstream, const LrpConfig& cfg,
                         LrpDiagnostics* diag) {
  TensorD s(z.shape());
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double denom = z[j] + (z[j] >= 0.0 ? cfg.epsilon : -cfg.epsilon);
    if (denom == 0.0) {
      if (diag) ++diag->zero_denominators;
      continue;
    }
    s[j] = upstream[j] / denom;
  }
  return s;
}

template <typename T>
void check_upstream(const Tensor<T>& upstream, const Shape& expected, const char* what) {
  if (upstream.shape() != expected)
    throw ShapeError(std::string(what) + ": upstream relevance shape " +
                     shape_string(upstream.shape()) + " does not match layer output " +
                     shape_string(expected));
}

}  // namespace

template <typename T>
Tensor<T> lrp_dense(const Tensor<T>& x, const Tensor<T>& w,
                    const std::type_identity_t<Tensor<T>>* bias,
                    const Tensor<T>& upstream, const LrpConfig& cfg, LrpDiagnostics* diag) {
  if (w.rank() != 2 || x.rank() != 1 || w.dim(1) != x.size())
    throw ShapeError("lrp_dense: input " + shape_string(x.shape()) + " does not fit weight " +
                     shape_string(w.shape()));
  const std::size_t O = w.dim(0), N = w.dim(1);
  check_upstream(upstream, Shape{O}, "lrp_dense");
  if (bias && bias->shape() != Shape{O}) throw ShapeError("lrp_dense: bias shape mismatch");

  TensorD z({O});
  for (std::size_t o = 0; o < O; ++o) {
    const T* row = &w[o * N];
    double acc = bias ? static_cast<double>((*bias)[o]) : 0.0;
    for (std::size_t n = 0; n < N; ++n) acc += static_cast<double>(row[n]) * static_cast<double>(x[n]);
    z[o] = acc;
  }
  const TensorD s = stabilised_ratio(z, upstream.template cast<double>(), cfg, diag);

  std::vector<double> c(N, 0.0);
  double bias_share = 0.0;
  for (std::size_t o = 0; o < O; ++o) {
    if (s[o] == 0.0) continue;
    const T* row = &w[o * N];
    for (std::size_t n = 0; n < N; ++n) c[n] += static_cast<double>(row[n]) * s[o];
    if (bias && cfg.bias == BiasMode::Distribute)
      bias_share += static_cast<double>((*bias)[o]) * s[o] / static_cast<double>(N);
  }
  Tensor<T> r(x.shape());
  for (std::size_t n = 0; n < N; ++n)
    r[n] = static_cast<T>(static_cast<double>(x[n]) * c[n] + bias_share);
  return r;
}

template <typename T>
Tensor<T> lrp_conv(const LayerSpec& layer, const Tensor<T>& x, const Tensor<T>& w,
                   const std::type_identity_t<Tensor<T>>* bias, const Tensor<T>& upstream,
                   const LrpConfig& cfg, LrpDiagnostics* diag, const TensorD* z_known) {
  const bool is1d = layer.kind == LayerKind::Conv1D;
  if (!is1d && layer.kind != LayerKind::Conv2D)
    throw ConfigError("lrp_conv called on a " + to_string(layer.kind) + " layer");
  const Shape out_shape = infer_output_shape(layer, x.shape());
  check_upstream(upstream, out_shape, "lrp_conv");
  const std::size_t channels = is1d ? x.dim(1) : x.dim(2);
  const Shape expected_w = is1d ? Shape{layer.out, channels, layer.kernel}
                                : Shape{layer.out, channels, layer.kernel, layer.kernel};
  if (w.shape() != expected_w) throw ShapeError("lrp_conv: weight shape mismatch");

  auto fwd = [&](const TensorD& in, const TensorD& wt, const TensorD* b) {
    return is1d ? kernels::conv1d_forward(in, wt, b, layer)
                : kernels::conv2d_forward(in, wt, b, layer);
  };
  auto back = [&](const TensorD& dy, const TensorD& wt) {
    return is1d ? kernels::conv1d_backward_input(dy, wt, layer, x.shape())
                : kernels::conv2d_backward_input(dy, wt, layer, x.shape());
  };

  const TensorD xd = x.template cast<double>();
  const TensorD wd = w.template cast<double>();
  TensorD bd;
  if (bias) bd = bias->template cast<double>();
  if (z_known && z_known->shape() != out_shape) throw ShapeError("lrp_conv: pre-activation shape mismatch");
  const TensorD z = z_known ? *z_known : fwd(xd, wd, bias ? &bd : nullptr);
  const TensorD s = stabilised_ratio(z, upstream.template cast<double>(), cfg, diag);
  const TensorD c = back(s, wd);

  Tensor<T> r(x.shape());
  if (bias && cfg.bias == BiasMode::Distribute) {
    // fan-in of each output neuron counts only in-range taps
    const TensorD ones_w(wd.shape(), 1.0);
    const TensorD fan_in = fwd(TensorD(x.shape(), 1.0), ones_w, nullptr);
    TensorD share(z.shape());
    for (std::size_t j = 0; j < share.size(); ++j)
      share[j] = bd[j % layer.out] * s[j] / fan_in[j];
    const TensorD spread = back(share, ones_w);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = static_cast<T>(xd[i] * c[i] + spread[i]);
  } else {
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = static_cast<T>(xd[i] * c[i]);
  }
  return r;
}

template <typename T>
Tensor<T> lrp_maxpool(const std::vector<std::uint32_t>& argmax, const Tensor<T>& upstream,
                      const Shape& input_shape) {
  if (argmax.empty()) throw ShapeError("lrp_maxpool: trace is missing the argmax map");
  if (argmax.size() != upstream.size())
    throw ShapeError("lrp_maxpool: argmax map does not match upstream relevance");
  const std::size_t n = shape_size(input_shape);
  for (auto idx : argmax)
    if (idx >= n) throw ShapeError("lrp_maxpool: argmax index out of range");
  return kernels::scatter_to_argmax(upstream, argmax, input_shape);
}

template <typename T>
Tensor<T> lrp_passthrough(const Tensor<T>& upstream, const Shape& input_shape) {
  return upstream.reshaped(input_shape);
}

template <typename T>
RelevanceMap<T> explain(const Model<T>& model, const ActivationTrace<T>& trace,
                        std::size_t target, const LrpConfig& cfg, LrpDiagnostics* diag,
                        std::vector<Tensor<T>>* per_layer) {
  cfg.validate();
  const ModelSpec& spec = model.spec();
  if (trace.layers.size() != spec.size() || trace.model_hash != spec.hash())
    throw ShapeError("activation trace was not produced by this model");

  Tensor<T> r = init_output_relevance(trace.logits(), target, cfg.init);
  if (per_layer) per_layer->assign(spec.size() + 1, Tensor<T>());
  if (per_layer) (*per_layer)[spec.size()] = r;

  for (std::size_t i = spec.size(); i-- > 0;) {
    const LayerSpec& l = spec.layers()[i];
    const LayerRecord<T>& rec = trace.layers[i];
    const LayerParams<T>& p = model.params(i);
    const Tensor<T>* bias = p.bias.empty() ? nullptr : &p.bias;
    const Shape& in_shape = spec.layer_input_shape(i);
    switch (l.kind) {
      case LayerKind::Dense:
        r = lrp_dense(rec.input, p.weight, bias, r, cfg, diag);
        break;
      case LayerKind::Conv1D:
      case LayerKind::Conv2D:
        // a 64-bit trace already holds the exact pre-activations
        if constexpr (std::is_same_v<T, double>)
          r = lrp_conv(l, rec.input, p.weight, bias, r, cfg, diag, rec.output.empty() ? nullptr : &rec.output);
        else
          r = lrp_conv(l, rec.input, p.weight, bias, r, cfg, diag);
        break;
      case LayerKind::MaxPool1D:
      case LayerKind::MaxPool2D:
        r = lrp_maxpool(rec.argmax, r, in_shape);
        break;
      case LayerKind::Dropout:
        if (!rec.mask.empty())
          throw ConfigError("cannot explain a trace recorded with dropout active");
        [[fallthrough]];
      case LayerKind::ReLU:
      case LayerKind::Flatten:
        r = lrp_passthrough(r, in_shape);
        break;
    }
    if (!r.all_finite())
      throw NumericError("non-finite relevance at layer " + std::to_string(i));
    if (per_layer) (*per_layer)[i] = r;
  }
  return RelevanceMap<T>{std::move(r), target, cfg.epsilon, spec.hash()};
}

void save_relevance(const std::filesystem::path& path, const RelevanceMap<float>& map) {
  save_tensors(path, {{"relevance", map.relevance}});
  std::ostringstream meta;
  char eps[32];
  std::snprintf(eps, sizeof eps, "%.17g", map.epsilon);
  meta << "target=" << map.target << "\nepsilon=" << eps << "\nmodel_hash=" << std::hex
       << map.model_hash << "\n";
  auto meta_path = path;
  meta_path += ".meta";
  write_file_atomic(meta_path, meta.str());
}

RelevanceMap<float> load_relevance(const std::filesystem::path& path) {
  auto tensors = load_tensors(path);
  if (tensors.size() != 1 || tensors[0].name != "relevance")
    throw FormatError(path.string() + ": not a relevance file");
  RelevanceMap<float> map;
  map.relevance = tensors[0].as<float>();
  auto meta_path = path;
  meta_path += ".meta";
  std::istringstream meta(read_file(meta_path));
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "target") map.target = std::stoul(value);
    else if (key == "epsilon") map.epsilon = std::stod(value);
    else if (key == "model_hash") map.model_hash = std::stoull(value, nullptr, 16);
  }
  return map;
}

#define AUDIOLRP_INSTANTIATE(T)                                                              \
  template Tensor<T> init_output_relevance(const Tensor<T>&, std::size_t, InitMode);        \
  template Tensor<T> lrp_dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,        \
                               const Tensor<T>&, const LrpConfig&, LrpDiagnostics*);        \
  template Tensor<T> lrp_conv(const LayerSpec&, const Tensor<T>&, const Tensor<T>&,         \
                              const Tensor<T>*, const Tensor<T>&, const LrpConfig&,         \
                              LrpDiagnostics*, const TensorD*);                             \
  template Tensor<T> lrp_maxpool(const std::vector<std::uint32_t>&, const Tensor<T>&,       \
                                 const Shape&);                                             \
  template Tensor<T> lrp_passthrough(const Tensor<T>&, const Shape&);                       \
  template RelevanceMap<T> explain(const Model<T>&, const ActivationTrace<T>&, std::size_t, \
                                   const LrpConfig&, LrpDiagnostics*,                       \
                                   std::vector<Tensor<T>>*);

AUDIOLRP_INSTANTIATE(float)
AUDIOLRP_INSTANTIATE(double)

#undef AUDIOLRP_INSTANTIATE

}  // namespace audiolrp
