#include "audiolrp/model.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

namespace audiolrp {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv1D: return "conv1d";
    case LayerKind::Conv2D: return "conv2d";
    case LayerKind::MaxPool1D: return "maxpool1d";
    case LayerKind::MaxPool2D: return "maxpool2d";
    case LayerKind::Dense: return "dense";
    case LayerKind::ReLU: return "relu";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dropout: return "dropout";
  }
  return "unknown";
}

namespace {

LayerKind parse_kind(const std::string& name) {
  for (auto k : {LayerKind::Conv1D, LayerKind::Conv2D, LayerKind::MaxPool1D,
                 LayerKind::MaxPool2D, LayerKind::Dense, LayerKind::ReLU,
                 LayerKind::Flatten, LayerKind::Dropout}) {
    if (to_string(k) == name) return k;
  }
  throw FormatError("unknown layer kind '" + name + "' in descriptor");
}

std::size_t parse_size(const std::string& s) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("bad integer '" + s + "' in descriptor");
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) parts.push_back(cur);
  return parts;
}

void check_window(const LayerSpec& l) {
  if (l.kernel < 1) throw ShapeError(to_string(l.kind) + ": kernel must be >= 1");
  if (l.stride < 1) throw ShapeError(to_string(l.kind) + ": stride must be >= 1");
}

std::size_t window_out(std::size_t in, const LayerSpec& l, const char* what) {
  const std::size_t padded = in + 2 * l.padding;
  if (padded < l.kernel) {
    throw ShapeError(std::string(what) + ": kernel " + std::to_string(l.kernel) +
                     " exceeds padded extent " + std::to_string(padded));
  }
  return (padded - l.kernel) / l.stride + 1;
}

}  // namespace

LayerSpec LayerSpec::conv1d(std::size_t out, std::size_t kernel,
                            std::size_t stride, std::size_t padding, bool bias) {
  return {LayerKind::Conv1D, kernel, stride, padding, out, 0.0, bias};
}
LayerSpec LayerSpec::conv2d(std::size_t out, std::size_t kernel,
                            std::size_t stride, std::size_t padding, bool bias) {
  return {LayerKind::Conv2D, kernel, stride, padding, out, 0.0, bias};
}
LayerSpec LayerSpec::maxpool1d(std::size_t kernel, std::size_t stride) {
  return {LayerKind::MaxPool1D, kernel, stride, 0, 0, 0.0, false};
}
LayerSpec LayerSpec::maxpool2d(std::size_t kernel, std::size_t stride) {
  return {LayerKind::MaxPool2D, kernel, stride, 0, 0, 0.0, false};
}
LayerSpec LayerSpec::dense(std::size_t out, bool bias) {
  return {LayerKind::Dense, 1, 1, 0, out, 0.0, bias};
}
LayerSpec LayerSpec::relu() { return {LayerKind::ReLU, 1, 1, 0, 0, 0.0, false}; }
LayerSpec LayerSpec::flatten() {
  return {LayerKind::Flatten, 1, 1, 0, 0, 0.0, false};
}
LayerSpec LayerSpec::dropout(double p) {
  return {LayerKind::Dropout, 1, 1, 0, 0, p, false};
}

Shape infer_output_shape(const LayerSpec& l, const Shape& in) {
  switch (l.kind) {
    case LayerKind::Conv1D:
      check_window(l);
      if (l.out < 1) throw ShapeError("conv1d: output channels must be >= 1");
      if (in.size() != 2) throw ShapeError("conv1d expects (length, channels), got " + shape_string(in));
      return {window_out(in[0], l, "conv1d"), l.out};
    case LayerKind::Conv2D:
      check_window(l);
      if (l.out < 1) throw ShapeError("conv2d: output channels must be >= 1");
      if (in.size() != 3) throw ShapeError("conv2d expects (height, width, channels), got " + shape_string(in));
      return {window_out(in[0], l, "conv2d"), window_out(in[1], l, "conv2d"), l.out};
    case LayerKind::MaxPool1D:
      check_window(l);
      if (in.size() != 2) throw ShapeError("maxpool1d expects (length, channels), got " + shape_string(in));
      return {window_out(in[0], l, "maxpool1d"), in[1]};
    case LayerKind::MaxPool2D:
      check_window(l);
      if (in.size() != 3) throw ShapeError("maxpool2d expects (height, width, channels), got " + shape_string(in));
      return {window_out(in[0], l, "maxpool2d"), window_out(in[1], l, "maxpool2d"), in[2]};
    case LayerKind::Dense:
      if (l.out < 1) throw ShapeError("dense: units must be >= 1");
      if (in.size() != 1) throw ShapeError("dense expects a flat vector, got " + shape_string(in) + " (insert flatten)");
      return {l.out};
    case LayerKind::ReLU:
      return in;
    case LayerKind::Flatten:
      return {shape_size(in)};
    case LayerKind::Dropout:
      if (!(l.dropout_p >= 0.0 && l.dropout_p < 1.0))
        throw ShapeError("dropout probability must lie in [0, 1)");
      return in;
  }
  throw ShapeError("unknown layer kind");
}

ModelSpec::ModelSpec(Shape input_shape, std::size_t classes)
    : input_shape_(std::move(input_shape)), classes_(classes) {
  if (input_shape_.empty()) throw ShapeError("model input shape is empty");
  for (auto e : input_shape_)
    if (e == 0) throw ShapeError("model input extents must be positive");
  if (classes_ < 1) throw ShapeError("class count must be >= 1");
  shapes_.push_back(input_shape_);
}

ModelSpec& ModelSpec::add(const LayerSpec& layer) {
  Shape out = infer_output_shape(layer, shapes_.back());
  layers_.push_back(layer);
  shapes_.push_back(std::move(out));
  return *this;
}

std::size_t ModelSpec::structural_depth() const {
  std::size_t n = 0;
  for (const auto& l : layers_) {
    if (l.has_params() || l.kind == LayerKind::MaxPool1D ||
        l.kind == LayerKind::MaxPool2D)
      ++n;
  }
  return n;
}

void ModelSpec::check_complete() const {
  if (output_shape() != Shape{classes_}) {
    throw ShapeError("model output " + shape_string(output_shape()) +
                     " does not match class count " + std::to_string(classes_));
  }
}

std::string ModelSpec::descriptor() const {
  std::ostringstream os;
  os << "in=";
  for (std::size_t i = 0; i < input_shape_.size(); ++i) {
    if (i) os << 'x';
    os << input_shape_[i];
  }
  os << ";classes=" << classes_;
  for (const auto& l : layers_) {
    os << ';' << to_string(l.kind);
    switch (l.kind) {
      case LayerKind::Conv1D:
      case LayerKind::Conv2D:
        os << ":k=" << l.kernel << ",s=" << l.stride << ",p=" << l.padding
           << ",o=" << l.out << ",b=" << (l.bias ? 1 : 0);
        break;
      case LayerKind::MaxPool1D:
      case LayerKind::MaxPool2D:
        os << ":k=" << l.kernel << ",s=" << l.stride;
        break;
      case LayerKind::Dense:
        os << ":o=" << l.out << ",b=" << (l.bias ? 1 : 0);
        break;
      case LayerKind::Dropout: {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", l.dropout_p);
        os << ":p=" << buf;
        break;
      }
      case LayerKind::ReLU:
      case LayerKind::Flatten:
        break;
    }
  }
  return os.str();
}

ModelSpec ModelSpec::parse_descriptor(const std::string& text) {
  auto items = split(text, ';');
  if (items.size() < 2 || items[0].rfind("in=", 0) != 0 ||
      items[1].rfind("classes=", 0) != 0) {
    throw FormatError("malformed architecture descriptor");
  }
  Shape in;
  for (const auto& e : split(items[0].substr(3), 'x')) in.push_back(parse_size(e));
  ModelSpec spec(in, parse_size(items[1].substr(8)));
  for (std::size_t i = 2; i < items.size(); ++i) {
    const auto colon = items[i].find(':');
    LayerSpec l;
    l.kind = parse_kind(items[i].substr(0, colon));
    l.bias = l.has_params();
    if (colon != std::string::npos) {
      for (const auto& kv : split(items[i].substr(colon + 1), ',')) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw FormatError("malformed layer field '" + kv + "'");
        const auto key = kv.substr(0, eq);
        const auto val = kv.substr(eq + 1);
        if (key == "k") l.kernel = parse_size(val);
        else if (key == "s") l.stride = parse_size(val);
        else if (key == "p" && l.kind == LayerKind::Dropout) l.dropout_p = std::stod(val);
        else if (key == "p") l.padding = parse_size(val);
        else if (key == "o") l.out = parse_size(val);
        else if (key == "b") l.bias = parse_size(val) != 0;
        else throw FormatError("unknown layer field '" + key + "'");
      }
    }
    spec.add(l);
  }
  return spec;
}

std::uint64_t ModelSpec::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : descriptor()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename T>
Model<T>::Model(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.check_complete();
  params_.resize(spec_.size());
  for (std::size_t i = 0; i < spec_.size(); ++i) {
    const auto& l = spec_.layers()[i];
    const auto& in = spec_.layer_input_shape(i);
    switch (l.kind) {
      case LayerKind::Conv1D:
        params_[i].weight = Tensor<T>({l.out, in[1], l.kernel});
        break;
      case LayerKind::Conv2D:
        params_[i].weight = Tensor<T>({l.out, in[2], l.kernel, l.kernel});
        break;
      case LayerKind::Dense:
        params_[i].weight = Tensor<T>({l.out, in[0]});
        break;
      default:
        continue;
    }
    if (l.bias) params_[i].bias = Tensor<T>({l.out});
  }
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.weight.size() + p.bias.size();
  return n;
}

template <typename T>
void Model<T>::init_kaiming(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& p : params_) {
    if (p.weight.empty()) continue;
    const std::size_t fan_in = p.weight.size() / p.weight.dim(0);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& w : p.weight.data()) w = static_cast<T>(dist(rng));
    p.bias.fill(T{0});
  }
}

template class Model<float>;
template class Model<double>;

}  // namespace audiolrp
