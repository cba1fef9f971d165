#include "audiolrp/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <mutex>
#include <numbers>

#include "audiolrp/io.hpp"

namespace audiolrp {

// ---- WAV ---------------------------------------------------------------------

namespace {

std::uint32_t le32(const std::string& b, std::size_t at) {
  std::uint32_t v;
  std::memcpy(&v, b.data() + at, 4);
  return v;
}

std::uint16_t le16(const std::string& b, std::size_t at) {
  std::uint16_t v;
  std::memcpy(&v, b.data() + at, 2);
  return v;
}

}  // namespace

Waveform decode_wav(const std::string& b) {
  if (b.size() < 12 || b.compare(0, 4, "RIFF") != 0 || b.compare(8, 4, "WAVE") != 0)
    throw FormatError("not a RIFF/WAVE file");
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= b.size()) {
    const std::string id = b.substr(pos, 4);
    const std::uint32_t size = le32(b, pos + 4);
    const std::size_t body = pos + 8;
    if (size > b.size() - body)
      throw FormatError("WAV chunk '" + id + "' declares " + std::to_string(size) +
                        " bytes but only " + std::to_string(b.size() - body) + " remain");
    if (id == "fmt ") {
      if (size < 16) throw FormatError("WAV fmt chunk too short");
      const std::uint16_t format = le16(b, body);
      channels = le16(b, body + 2);
      rate = le32(b, body + 4);
      bits = le16(b, body + 14);
      if (format != 1) throw FormatError("unsupported WAV encoding (only PCM is accepted)");
      if (channels != 1)
        throw FormatError("unsupported channel count " + std::to_string(channels) + " (mono only)");
      if (bits != 16)
        throw FormatError("unsupported sample width " + std::to_string(bits) + " bits (PCM16 only)");
      if (rate != kSourceRate && rate != kModelRate)
        throw FormatError("unsupported sample rate " + std::to_string(rate));
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError("WAV data chunk precedes fmt chunk");
      if (size % 2 != 0) throw FormatError("WAV data chunk has a partial sample");
      if (size == 0) throw FormatError("WAV file contains no samples");
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        std::int16_t s;
        std::memcpy(&s, b.data() + body + 2 * i, 2);
        w.samples[i] = static_cast<double>(s) / 32768.0;
      }
      return w;
    }
    pos = body + size + (size & 1u);
  }
  throw FormatError("WAV file has no data chunk");
}

Waveform read_wav(const std::filesystem::path& path) {
  try {
    return decode_wav(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string encode_wav(const Waveform& w) {
  BlobWriter out;
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.raw("RIFF");
  out.u32(36 + data_bytes);
  out.raw("WAVEfmt ");
  out.u32(16);
  std::string fmt(4, '\0');
  const std::uint16_t pcm = 1, mono = 1, align = 2, bits = 16;
  std::memcpy(fmt.data(), &pcm, 2);
  std::memcpy(fmt.data() + 2, &mono, 2);
  out.raw(fmt);
  out.u32(static_cast<std::uint32_t>(w.sample_rate));
  out.u32(static_cast<std::uint32_t>(w.sample_rate) * 2);
  std::string tail(4, '\0');
  std::memcpy(tail.data(), &align, 2);
  std::memcpy(tail.data() + 2, &bits, 2);
  out.raw(tail);
  out.raw("data");
  out.u32(data_bytes);
  std::string pcm_bytes(data_bytes, '\0');
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    const double scaled = std::round(w.samples[i] * 32768.0);
    const auto s = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    std::memcpy(pcm_bytes.data() + 2 * i, &s, 2);
  }
  out.raw(pcm_bytes);
  return out.bytes();
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  write_file_atomic(path, encode_wav(w));
}

// ---- resampling ----------------------------------------------------------------

const std::vector<double>& decimation_filter() {
  static const std::vector<double> taps = [] {
    constexpr std::size_t n = 127;
    constexpr double cutoff = 0.9 * 4000.0 / kSourceRate;  // cycles per sample
    std::vector<double> h(n);
    const double mid = (n - 1) / 2.0;
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) - mid;
      const double sinc = t == 0.0 ? 2 * cutoff
                                   : std::sin(2 * std::numbers::pi * cutoff * t) /
                                         (std::numbers::pi * t);
      const double a = 2 * std::numbers::pi * static_cast<double>(i) / (n - 1);
      const double blackman = 0.42 - 0.5 * std::cos(a) + 0.08 * std::cos(2 * a);
      h[i] = sinc * blackman;
      sum += h[i];
    }
    for (auto& v : h) v /= sum;
    return h;
  }();
  return taps;
}

Waveform resample_to_8k(const Waveform& w) {
  if (w.sample_rate != kSourceRate)
    throw ConfigError("resample_to_8k expects 48 kHz input, got " +
                      std::to_string(w.sample_rate) + " Hz");
  if (w.samples.empty()) throw DataError("empty waveform");
  constexpr std::size_t factor = kSourceRate / kModelRate;
  const auto& h = decimation_filter();
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(h.size() / 2);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(w.samples.size());
  Waveform out;
  out.sample_rate = kModelRate;
  out.samples.resize((w.samples.size() + factor - 1) / factor);
  for (std::size_t m = 0; m < out.samples.size(); ++m) {
    const std::ptrdiff_t centre = static_cast<std::ptrdiff_t>(m * factor);
    double acc = 0;
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(h.size()); ++k) {
      const std::ptrdiff_t src = centre + k - half;
      if (src >= 0 && src < n) acc += h[static_cast<std::size_t>(k)] * w.samples[src];
    }
    out.samples[m] = acc;
  }
  return out;
}

// ---- padding -----------------------------------------------------------------

PaddedSignal pad_at(const Waveform& w, std::size_t offset) {
  if (w.sample_rate != kModelRate)
    throw ConfigError("padding expects 8 kHz input, got " + std::to_string(w.sample_rate) + " Hz");
  if (w.samples.empty()) throw DataError("empty waveform");
  if (w.samples.size() > kSignalLength)
    throw DataError("signal of " + std::to_string(w.samples.size()) +
                    " samples exceeds the 8000-sample input");
  if (offset > kSignalLength - w.samples.size())
    throw ConfigError("padding offset " + std::to_string(offset) + " out of range");
  PaddedSignal p;
  p.samples.assign(kSignalLength, 0.0);
  std::copy(w.samples.begin(), w.samples.end(), p.samples.begin() + static_cast<std::ptrdiff_t>(offset));
  p.offset = offset;
  p.length = w.samples.size();
  return p;
}

PaddedSignal pad_random(const Waveform& w, std::mt19937_64& rng) {
  if (w.samples.size() > kSignalLength)
    throw DataError("signal of " + std::to_string(w.samples.size()) +
                    " samples exceeds the 8000-sample input");
  std::uniform_int_distribution<std::size_t> dist(0, kSignalLength - w.samples.size());
  return pad_at(w, dist(rng));
}

// ---- STFT --------------------------------------------------------------------

const std::vector<double>& hann_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kSegment);
    for (std::size_t i = 0; i < kSegment; ++i)
      v[i] = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * static_cast<double>(i) / kSegment);
    return v;
  }();
  return w;
}

namespace {

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

class SegmentFft {
 public:
  static SegmentFft& instance() {
    static SegmentFft fft;
    return fft;
  }

  /// One-sided magnitudes of a real frame of length kSegment.
  void magnitudes(const double* frame, double* out) const {
    std::unique_ptr<double, FftwDeleter> in(
        static_cast<double*>(fftw_malloc(sizeof(double) * kSegment)));
    std::unique_ptr<fftw_complex, FftwDeleter> spec(
        static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * kFreqBins)));
    std::copy(frame, frame + kSegment, in.get());
    fftw_execute_dft_r2c(plan_, in.get(), spec.get());
    for (std::size_t k = 0; k < kFreqBins; ++k)
      out[k] = std::hypot(spec.get()[k][0], spec.get()[k][1]);
  }

 private:
  SegmentFft() {
    std::lock_guard lock(planner_mutex());
    std::unique_ptr<double, FftwDeleter> in(
        static_cast<double*>(fftw_malloc(sizeof(double) * kSegment)));
    std::unique_ptr<fftw_complex, FftwDeleter> out(
        static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * kFreqBins)));
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(kSegment), in.get(), out.get(),
                                 FFTW_ESTIMATE);
  }
  ~SegmentFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }

  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  fftw_plan plan_;
};

}  // namespace

Spectrogram stft_spectrogram(std::span<const double> signal) {
  if (signal.size() != kSignalLength)
    throw ShapeError("STFT expects 8000 samples, got " + std::to_string(signal.size()));
  const auto& window = hann_window();
  const auto& fft = SegmentFft::instance();
  constexpr std::ptrdiff_t half = kSegment / 2;
  Spectrogram s;
  s.values = TensorD({kFreqBins, kFrames});
  std::vector<double> frame(kSegment), mags(kFreqBins);
  for (std::size_t t = 0; t < kFrames; ++t) {
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t * kHop) - half;
    for (std::size_t n = 0; n < kSegment; ++n) {
      const std::ptrdiff_t src = start + static_cast<std::ptrdiff_t>(n);
      const double x = (src >= 0 && src < static_cast<std::ptrdiff_t>(kSignalLength))
                           ? signal[static_cast<std::size_t>(src)]
                           : 0.0;
      frame[n] = x * window[n];
    }
    fft.magnitudes(frame.data(), mags.data());
    for (std::size_t k = 0; k < kFreqBins; ++k) s.values.at(k, t) = mags[k];
  }
  return s;
}

Spectrogram stft_spectrogram(const PaddedSignal& p) { return stft_spectrogram(p.samples); }

Spectrogram to_decibels(const Spectrogram& s) {
  Spectrogram out = s;
  for (auto& v : out.values.data()) {
    if (v < 0) throw DataError("negative magnitude in spectrogram");
    v = 20.0 * std::log10(std::max(v, kDecibelFloor));
  }
  return out;
}

Spectrogram crop_227(const Spectrogram& s) {
  if (s.values.shape() != Shape{kFreqBins, kFrames})
    throw ShapeError("crop expects a 228x230 spectrogram, got " + shape_string(s.values.shape()));
  Spectrogram out = s;
  out.values = TensorD({kCropped, kCropped});
  for (std::size_t f = 0; f < kCropped; ++f)
    for (std::size_t t = 0; t < kCropped; ++t) out.values.at(f, t) = s.values.at(f, t);
  return out;
}

Spectrogram spectrogram_features(const PaddedSignal& p) {
  return to_decibels(crop_227(stft_spectrogram(p)));
}

// ---- mean normalisation ------------------------------------------------------

std::string to_string(FoldRole role) {
  switch (role) {
    case FoldRole::Train: return "train";
    case FoldRole::Validation: return "validation";
    case FoldRole::Test: return "test";
  }
  return "unknown";
}

TensorD fit_mean(std::span<const TaggedSpectrogram> training_set) {
  if (training_set.empty()) throw DataError("cannot fit a mean on an empty training set");
  const Shape shape = training_set.front().spectrogram->values.shape();
  std::vector<double> acc(shape_size(shape), 0.0);
  for (const auto& item : training_set) {
    if (item.role != FoldRole::Train)
      throw LeakageError("mean fitting received a " + to_string(item.role) +
                         " example; only training data may be used");
    const auto& v = item.spectrogram->values;
    if (v.shape() != shape) throw ShapeError("spectrogram shapes differ within the training set");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
  }
  for (auto& a : acc) a /= static_cast<double>(training_set.size());
  return TensorD(shape, std::move(acc));
}

double fit_scale(std::span<const TaggedSpectrogram> training_set, const TensorD& mean) {
  if (training_set.empty()) throw DataError("cannot fit a scale on an empty training set");
  double ss = 0.0;
  for (const auto& item : training_set) {
    if (item.role != FoldRole::Train)
      throw LeakageError("scale fitting received a " + to_string(item.role) +
                         " example; only training data may be used");
    const auto& v = item.spectrogram->values;
    if (v.shape() != mean.shape()) throw ShapeError("spectrogram shape does not match the mean");
    for (std::size_t i = 0; i < v.size(); ++i) ss += (v[i] - mean[i]) * (v[i] - mean[i]);
  }
  const double sd = std::sqrt(ss / static_cast<double>(training_set.size() * mean.size()));
  if (!(sd > 0.0) || !std::isfinite(sd)) throw NumericError("training features have zero spread");
  return sd;
}

Spectrogram apply_mean(const Spectrogram& s, const TensorD& mean) {
  if (s.values.shape() != mean.shape())
    throw ShapeError("mean shape " + shape_string(mean.shape()) + " does not match spectrogram " +
                     shape_string(s.values.shape()));
  Spectrogram out = s;
  for (std::size_t i = 0; i < mean.size(); ++i) out.values[i] -= mean[i];
  return out;
}

}  // namespace audiolrp
