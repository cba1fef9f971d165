#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "audiolrp/tensor.hpp"

namespace audiolrp {

inline constexpr int kSourceRate = 48000;
inline constexpr int kModelRate = 8000;
inline constexpr std::size_t kSignalLength = 8000;

inline constexpr std::size_t kSegment = 455;
inline constexpr std::size_t kOverlap = 420;
inline constexpr std::size_t kHop = kSegment - kOverlap;  // 35
inline constexpr std::size_t kFreqBins = kSegment / 2 + 1;  // 228
inline constexpr std::size_t kFrames = (kSignalLength + kHop - 1) / kHop + 1;  // 230
inline constexpr std::size_t kCropped = 227;
inline constexpr double kDecibelFloor = 1e-10;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSourceRate;
};

/// RIFF/WAVE, PCM 16-bit, mono; samples scaled by 1/32768.
Waveform read_wav(const std::filesystem::path& path);
Waveform decode_wav(const std::string& bytes);

/// PCM16 mono encoder (values clamped to [-1, 1)).
std::string encode_wav(const Waveform& w);
void write_wav(const std::filesystem::path& path, const Waveform& w);

/// 127-tap Blackman-windowed sinc low-pass (cutoff 3.6 kHz) followed by
/// 6:1 decimation. Output length is ceil(n / 6).
Waveform resample_to_8k(const Waveform& w);

/// Lowpass taps used by resample_to_8k; unit DC gain.
const std::vector<double>& decimation_filter();

struct PaddedSignal {
  std::vector<double> samples;  // exactly kSignalLength
  std::size_t offset = 0;       // start of the original signal
  std::size_t length = 0;       // original signal length
};

/// Places the signal at a uniformly drawn offset in [0, 8000 - n].
PaddedSignal pad_random(const Waveform& w, std::mt19937_64& rng);
PaddedSignal pad_at(const Waveform& w, std::size_t offset);

/// Frequency x time matrix with axis metadata.
struct Spectrogram {
  TensorD values;  // (bins, frames)
  double hz_per_bin = static_cast<double>(kModelRate) / kSegment;
  double seconds_per_frame = static_cast<double>(kHop) / kModelRate;

  std::size_t bins() const { return values.dim(0); }
  std::size_t frames() const { return values.dim(1); }
};

/// Periodic Hann window of length kSegment.
const std::vector<double>& hann_window();

/// Centered STFT (zero boundary extension), segment 455, hop 35, no frame
/// zero-padding; returns the 228 x 230 linear magnitude.
Spectrogram stft_spectrogram(const PaddedSignal& p);
Spectrogram stft_spectrogram(std::span<const double> signal);

/// 20 log10(max(m, 1e-10)).
Spectrogram to_decibels(const Spectrogram& s);

/// Drops the top frequency bin and the last three frames: 228x230 -> 227x227.
Spectrogram crop_227(const Spectrogram& s);

/// stft -> crop -> dB, the network's spectrogram input before mean removal.
Spectrogram spectrogram_features(const PaddedSignal& p);

/// Provenance tag carried by every preprocessed example.
enum class FoldRole { Train, Validation, Test };
std::string to_string(FoldRole role);

struct TaggedSpectrogram {
  const Spectrogram* spectrogram;
  FoldRole role;
};

/// Element-wise training-set mean. Fitting refuses anything not tagged Train.
TensorD fit_mean(std::span<const TaggedSpectrogram> training_set);
Spectrogram apply_mean(const Spectrogram& s, const TensorD& mean);

/// Root-mean-square of the mean-removed training features; one scalar used
/// to bring network inputs to unit spread. Same provenance rule as fit_mean.
double fit_scale(std::span<const TaggedSpectrogram> training_set, const TensorD& mean);

}  // namespace audiolrp
