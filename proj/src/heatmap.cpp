#include "audiolrp/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "audiolrp/errors.hpp"
#include "audiolrp/io.hpp"

namespace audiolrp {

namespace {

std::uint8_t channel(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

double max_abs_of(std::span<const double> r) {
  double m = 0.0;
  for (double v : r) {
    if (!std::isfinite(v)) throw NumericError("relevance contains non-finite values");
    m = std::max(m, std::abs(v));
  }
  return m;
}

}  // namespace

Rgb diverging_color(double v) {
  v = std::clamp(v, -1.0, 1.0);
  if (v >= 0.0) {
    const auto c = channel(1.0 - v);
    return {255, c, c};
  }
  const auto c = channel(1.0 + v);
  return {c, c, 255};
}

std::string Image::to_ppm() const {
  std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.reserve(out.size() + pixels.size() * 3);
  for (const Rgb& p : pixels) {
    out.push_back(static_cast<char>(p.r));
    out.push_back(static_cast<char>(p.g));
    out.push_back(static_cast<char>(p.b));
  }
  return out;
}

std::string Image::legend() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "blue=%.6g white=0 red=%.6g (normalised by max |R|)", -max_abs,
                max_abs);
  return buf;
}

Image render_heatmap(const TensorD& relevance, const TensorD* base) {
  if (relevance.rank() != 2) throw ShapeError("heatmap expects a (bins, frames) relevance matrix");
  if (base && base->shape() != relevance.shape())
    throw ShapeError("underlay shape does not match the relevance map");
  const std::size_t rows = relevance.dim(0), cols = relevance.dim(1);
  Image img;
  img.width = cols;
  img.height = rows;
  img.max_abs = max_abs_of(relevance.data());
  img.pixels.resize(rows * cols);

  double lo = 0.0, hi = 0.0;
  if (base) {
    lo = hi = (*base)[0];
    for (double v : base->data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  for (std::size_t f = 0; f < rows; ++f)
    for (std::size_t t = 0; t < cols; ++t) {
      const double r = relevance[f * cols + t];
      const double v = img.max_abs > 0.0 ? r / img.max_abs : 0.0;
      Rgb c = diverging_color(v);
      if (base) {
        const double g = hi > lo ? ((*base)[f * cols + t] - lo) / (hi - lo) : 0.0;
        const double a = std::abs(v);
        auto mix = [&](std::uint8_t col) { return channel(a * col / 255.0 + (1.0 - a) * g); };
        c = {mix(c.r), mix(c.g), mix(c.b)};
      }
      img.pixels[(rows - 1 - f) * cols + t] = c;
    }
  return img;
}

Image render_waveform(std::span<const double> samples, std::span<const double> relevance,
                      std::size_t width, std::size_t height) {
  if (samples.size() != relevance.size())
    throw ShapeError("waveform and relevance lengths differ");
  if (samples.empty() || width == 0 || height < 2) throw ShapeError("empty waveform rendering");
  width = std::min(width, samples.size());
  Image img;
  img.width = width;
  img.height = height;
  img.max_abs = max_abs_of(relevance);
  img.pixels.assign(width * height, Rgb{});

  double peak = 0.0;
  for (double v : samples) peak = std::max(peak, std::abs(v));
  const double half = static_cast<double>(height - 1) / 2.0;
  auto row_of = [&](double v) {
    const double y = half - (peak > 0.0 ? v / peak : 0.0) * half;
    return static_cast<std::size_t>(std::clamp(std::lround(y), 0L, static_cast<long>(height - 1)));
  };
  const Rgb axis{200, 200, 200};
  for (std::size_t x = 0; x < width; ++x) img.pixels[row_of(0.0) * width + x] = axis;

  for (std::size_t x = 0; x < width; ++x) {
    const std::size_t a = x * samples.size() / width;
    const std::size_t b = std::max(a + 1, (x + 1) * samples.size() / width);
    double lo = samples[a], hi = samples[a], strongest = relevance[a];
    for (std::size_t i = a; i < b; ++i) {
      lo = std::min(lo, samples[i]);
      hi = std::max(hi, samples[i]);
      if (std::abs(relevance[i]) > std::abs(strongest)) strongest = relevance[i];
    }
    const double v = img.max_abs > 0.0 ? strongest / img.max_abs : 0.0;
    // neutral strokes stay visible as dark gray
    const Rgb c = v == 0.0 ? Rgb{90, 90, 90} : diverging_color(v);
    for (std::size_t y = row_of(hi); y <= row_of(lo); ++y) img.pixels[y * width + x] = c;
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  write_file_atomic(path, image.to_ppm());
}

}  // namespace audiolrp
