#pragma once

#include "audiolrp/model.hpp"

namespace audiolrp {

struct PresetOptions {
  /// Multiplies every conv channel count and hidden dense width (rounded,
  /// at least 1). Topology is unchanged.
  double width_scale = 1.0;
  bool bias = true;
  /// Overrides `bias` for the first weight layer only.
  bool first_layer_bias = true;
  double dropout = 0.5;  // hidden dense layers of the AlexNet variant
};

/// Raw-waveform network: six (conv3, relu, maxpool2) blocks on an (8000, 1)
/// input, then FC-1024, FC-512 and the class layer.
ModelSpec build_audionet(std::size_t classes, const PresetOptions& options = {});

/// Spectrogram network on (227, 227, 1): AlexNet conv stack without
/// normalization or grouping, FC-1024, FC-1024, class layer.
ModelSpec build_alexnet_variant(std::size_t classes,
                                const PresetOptions& options = {});

}  // namespace audiolrp
