#include "audiolrp/presets.hpp"

#include <algorithm>
#include <cmath>

namespace audiolrp {

namespace {

std::size_t scaled(std::size_t width, double scale) {
  if (!(scale > 0.0)) throw ConfigError("width scale must be > 0");
  return std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(static_cast<double>(width) * scale)));
}

void check_classes(std::size_t classes) {
  if (classes != 10 && classes != 2)
    throw ConfigError("preset models support 10 or 2 classes, got " +
                      std::to_string(classes));
}

}  // namespace

ModelSpec build_audionet(std::size_t classes, const PresetOptions& o) {
  check_classes(classes);
  ModelSpec spec({8000, 1}, classes);
  bool first = true;
  for (std::size_t width : {100, 64, 128, 128, 128, 128}) {
    const bool bias = first ? (o.bias && o.first_layer_bias) : o.bias;
    first = false;
    spec.add(LayerSpec::conv1d(scaled(width, o.width_scale), 3, 1, 1, bias))
        .add(LayerSpec::relu())
        .add(LayerSpec::maxpool1d(2, 2));
  }
  spec.add(LayerSpec::flatten())
      .add(LayerSpec::dense(scaled(1024, o.width_scale), o.bias))
      .add(LayerSpec::relu())
      .add(LayerSpec::dense(scaled(512, o.width_scale), o.bias))
      .add(LayerSpec::relu())
      .add(LayerSpec::dense(classes, o.bias));
  return spec;
}

ModelSpec build_alexnet_variant(std::size_t classes, const PresetOptions& o) {
  check_classes(classes);
  const double s = o.width_scale;
  ModelSpec spec({227, 227, 1}, classes);
  spec.add(LayerSpec::conv2d(scaled(96, s), 11, 4, 0, o.bias && o.first_layer_bias))
      .add(LayerSpec::relu())
      .add(LayerSpec::maxpool2d(3, 2))
      .add(LayerSpec::conv2d(scaled(256, s), 5, 1, 2, o.bias))
      .add(LayerSpec::relu())
      .add(LayerSpec::maxpool2d(3, 2))
      .add(LayerSpec::conv2d(scaled(384, s), 3, 1, 1, o.bias))
      .add(LayerSpec::relu())
      .add(LayerSpec::conv2d(scaled(384, s), 3, 1, 1, o.bias))
      .add(LayerSpec::relu())
      .add(LayerSpec::conv2d(scaled(256, s), 3, 1, 1, o.bias))
      .add(LayerSpec::relu())
      .add(LayerSpec::maxpool2d(3, 2))
      .add(LayerSpec::flatten())
      .add(LayerSpec::dense(scaled(1024, s), o.bias))
      .add(LayerSpec::relu())
      .add(LayerSpec::dropout(o.dropout))
      .add(LayerSpec::dense(scaled(1024, s), o.bias))
      .add(LayerSpec::relu())
      .add(LayerSpec::dropout(o.dropout))
      .add(LayerSpec::dense(classes, o.bias));
  return spec;
}

}  // namespace audiolrp
