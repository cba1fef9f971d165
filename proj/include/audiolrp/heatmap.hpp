#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "audiolrp/tensor.hpp"

namespace audiolrp {

struct Rgb {
  std::uint8_t r = 255, g = 255, b = 255;
  bool operator==(const Rgb&) const = default;
};

/// v in [-1, 1]: -1 pure blue, 0 white, +1 pure red.
Rgb diverging_color(double v);

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Rgb> pixels;  // row-major, top row first
  double max_abs = 0.0;     // relevance mapped to the colour endpoints

  Rgb at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  /// Binary P6 portable pixmap.
  std::string to_ppm() const;
  /// One line describing the colour scale.
  std::string legend() const;
};

/// Relevance matrix (bins, frames) as an image with low frequencies at the
/// bottom. Colours are normalised by max |R| of this map. With a base
/// spectrogram the colour is blended over its grayscale rendering in
/// proportion to |R|.
Image render_heatmap(const TensorD& relevance, const TensorD* base = nullptr);

/// Waveform drawn as vertical min/max strokes, one column per group of
/// samples, each stroke coloured by the group's strongest relevance.
Image render_waveform(std::span<const double> samples, std::span<const double> relevance,
                      std::size_t width = 1000, std::size_t height = 200);

void write_ppm(const std::filesystem::path& path, const Image& image);

}  // namespace audiolrp
