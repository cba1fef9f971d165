#include <doctest.h>

#include <cstring>
#include <numbers>

#include "audiolrp/audio.hpp"
#include "oracles.hpp"

using namespace audiolrp;

namespace {

std::string wav_bytes(std::uint16_t channels, std::uint32_t rate,
                      const std::vector<std::int16_t>& samples,
                      std::uint32_t declared_data = 0) {
  auto put16 = [](std::string& s, std::uint16_t v) { s.append(reinterpret_cast<char*>(&v), 2); };
  auto put32 = [](std::string& s, std::uint32_t v) { s.append(reinterpret_cast<char*>(&v), 4); };
  const std::uint32_t data = static_cast<std::uint32_t>(samples.size() * 2);
  std::string b = "RIFF";
  put32(b, 36 + data);
  b += "WAVEfmt ";
  put32(b, 16);
  put16(b, 1);
  put16(b, channels);
  put32(b, rate);
  put32(b, rate * 2 * channels);
  put16(b, static_cast<std::uint16_t>(2 * channels));
  put16(b, 16);
  b += "data";
  put32(b, declared_data ? declared_data : data);
  b.append(reinterpret_cast<const char*>(samples.data()), data);
  return b;
}

Waveform sine(double freq, int rate, std::size_t n, double amp = 0.5) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = amp * std::sin(2 * std::numbers::pi * freq * static_cast<double>(i) / rate);
  return w;
}

double rms(const std::vector<double>& x, std::size_t skip = 0) {
  double s = 0;
  std::size_t n = 0;
  for (std::size_t i = skip; i + skip < x.size(); ++i, ++n) s += x[i] * x[i];
  return std::sqrt(s / static_cast<double>(n));
}

}  // namespace

TEST_CASE("read_wav scales PCM16 by 1/32768") {
  auto w = decode_wav(wav_bytes(1, 48000, {0, 16384, -32768}));
  CHECK(w.sample_rate == 48000);
  CHECK(w.samples == std::vector<double>{0.0, 0.5, -1.0});
}

TEST_CASE("read_wav rejects unsupported or malformed files") {
  CHECK_THROWS_AS(decode_wav(wav_bytes(2, 48000, {0, 0, 1, 1})), FormatError);
  CHECK_THROWS_AS(decode_wav(wav_bytes(1, 48000, {1, 2, 3}, 600)), FormatError);
  CHECK_THROWS_AS(decode_wav(wav_bytes(1, 44100, {1, 2, 3})), FormatError);
  CHECK_THROWS_AS(decode_wav("RIFF....WAVX"), FormatError);
  CHECK_THROWS_AS(decode_wav("RIF"), FormatError);
}

TEST_CASE("encode_wav round-trips through the decoder") {
  Waveform w{{0.0, 0.25, -0.5, 0.999}, 8000};
  auto back = decode_wav(encode_wav(w));
  CHECK(back.sample_rate == 8000);
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    CHECK(back.samples[i] == doctest::Approx(w.samples[i]).epsilon(1e-4));
}

TEST_CASE("resampling to 8 kHz") {
  SUBCASE("output length is ceil(n / 6)") {
    CHECK(resample_to_8k(Waveform{std::vector<double>(4800, 0.1), 48000}).samples.size() == 800);
    CHECK(resample_to_8k(Waveform{std::vector<double>(4801, 0.1), 48000}).samples.size() == 801);
  }
  SUBCASE("passband sine keeps frequency and amplitude") {
    auto out = resample_to_8k(sine(1000, 48000, 48000));
    const double amp = oracle::sine_amplitude(out.samples, 1000, 8000, 50);
    CHECK(amp == doctest::Approx(0.5).epsilon(0.01));
    CHECK(oracle::sine_amplitude(out.samples, 1100, 8000, 50) < 0.02);
  }
  SUBCASE("tones above the new Nyquist are suppressed") {
    auto in = sine(5000, 48000, 48000);
    auto out = resample_to_8k(in);
    CHECK(rms(out.samples, 50) < 0.05 * rms(in.samples));
  }
  SUBCASE("wrong input rate") {
    CHECK_THROWS_AS(resample_to_8k(Waveform{{0.1}, 8000}), ConfigError);
  }
  SUBCASE("filter has unit DC gain") {
    double sum = 0;
    for (double h : decimation_filter()) sum += h;
    CHECK(sum == doctest::Approx(1.0));
    CHECK(decimation_filter().size() == 127);
  }
}

TEST_CASE("random zero-padding") {
  std::mt19937_64 rng(1);
  SUBCASE("full-length signal is placed at offset 0") {
    Waveform w{std::vector<double>(8000, 0.25), 8000};
    auto p = pad_random(w, rng);
    CHECK(p.offset == 0);
    CHECK(p.samples == w.samples);
  }
  SUBCASE("same seed gives the same placement") {
    Waveform w{std::vector<double>(4000, 0.25), 8000};
    std::mt19937_64 a(42), b(42);
    auto pa = pad_random(w, a), pb = pad_random(w, b);
    CHECK(pa.offset == pb.offset);
    CHECK(pa.samples == pb.samples);
  }
  SUBCASE("padding region is exactly zero and the signal is intact") {
    Waveform w{std::vector<double>(3000, 0.0), 8000};
    for (std::size_t i = 0; i < 3000; ++i) w.samples[i] = 0.1 + 1e-4 * static_cast<double>(i);
    auto p = pad_random(w, rng);
    for (std::size_t i = 0; i < 8000; ++i) {
      if (i < p.offset || i >= p.offset + 3000) CHECK(p.samples[i] == 0.0);
      else CHECK(p.samples[i] == w.samples[i - p.offset]);
    }
  }
  SUBCASE("offsets are uniform (chi-square, 10 bins, alpha 0.01)") {
    Waveform w{std::vector<double>(4000, 0.25), 8000};
    std::array<int, 10> bins{};
    for (int i = 0; i < 10000; ++i) {
      const auto off = pad_random(w, rng).offset;
      CHECK(off <= 4000);
      bins[std::min<std::size_t>(off * 10 / 4001, 9)]++;
    }
    double chi2 = 0;
    for (int c : bins) chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
    CHECK(chi2 < 21.666);  // chi-square(9) critical value at 0.01
  }
  SUBCASE("overlong signals are rejected") {
    CHECK_THROWS_AS(pad_random(Waveform{std::vector<double>(8001, 0.1), 8000}, rng), DataError);
  }
}

TEST_CASE("STFT spectrogram") {
  SUBCASE("silence gives an all-zero 228x230 matrix") {
    auto s = stft_spectrogram(std::vector<double>(8000, 0.0));
    CHECK(s.values.shape() == Shape{228, 230});
    for (double v : s.values.data()) CHECK(v == 0.0);
  }
  SUBCASE("matches a naive windowed DFT per frame") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> x(8000);
    for (auto& v : x) v = u(rng);
    auto s = stft_spectrogram(x);
    CHECK(s.values.shape() == Shape{228, 230});
    const auto window = oracle::hann(455);
    double worst = 0;
    for (std::size_t t : {0, 1, 7, 114, 228, 229}) {
      std::vector<double> frame(455, 0.0);
      for (std::size_t n = 0; n < 455; ++n) {
        const long src = static_cast<long>(t * 35 + n) - 227;
        if (src >= 0 && src < 8000) frame[n] = x[static_cast<std::size_t>(src)];
      }
      const auto ref = oracle::windowed_dft_magnitudes(frame, window);
      for (std::size_t k = 0; k < 228; ++k)
        worst = std::max(worst, std::abs(ref[k] - s.values.at(k, t)));
    }
    CHECK(worst < 1e-6);
  }
  SUBCASE("1 kHz tone peaks at bin 57") {
    auto p = pad_at(sine(1000, 8000, 8000), 0);
    auto s = stft_spectrogram(p);
    for (std::size_t t = 0; t < s.frames(); ++t) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < s.bins(); ++k)
        if (s.values.at(k, t) > s.values.at(best, t)) best = k;
      CHECK(best == 57);
    }
  }
  SUBCASE("wrong length") {
    CHECK_THROWS_AS(stft_spectrogram(std::vector<double>(7999, 0.0)), ShapeError);
  }
}

TEST_CASE("decibel conversion") {
  Spectrogram s;
  s.values = TensorD({1, 4}, {1.0, 0.0, 10.0, 1e-12});
  auto db = to_decibels(s);
  CHECK(db.values[0] == 0.0);
  CHECK(db.values[1] == doctest::Approx(-200.0));
  CHECK(db.values[2] == doctest::Approx(20.0));
  CHECK(db.values[3] == doctest::Approx(-200.0));

  SUBCASE("strictly increasing above the floor") {
    Spectrogram ramp;
    ramp.values = TensorD({1, 200});
    for (std::size_t i = 0; i < 200; ++i) ramp.values[i] = 1e-9 * std::pow(1.2, static_cast<double>(i));
    auto r = to_decibels(ramp);
    for (std::size_t i = 1; i < 200; ++i) CHECK(r.values[i] > r.values[i - 1]);
  }
}

TEST_CASE("cropping to 227x227") {
  Spectrogram s;
  s.values = TensorD({228, 230});
  for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] = static_cast<double>(i);
  s.values.at(227, 10) = -1.0;
  s.values.at(5, 229) = -2.0;
  s.values.at(5, 226) = -3.0;
  auto c = crop_227(s);
  CHECK(c.values.shape() == Shape{227, 227});
  for (double v : c.values.data()) {
    CHECK(v != -1.0);
    CHECK(v != -2.0);
  }
  CHECK(c.values.at(5, 226) == -3.0);
  for (std::size_t f = 0; f < 227; ++f)
    for (std::size_t t = 0; t < 227; ++t) REQUIRE(c.values.at(f, t) == s.values.at(f, t));
  CHECK_THROWS_AS(crop_227(c), ShapeError);
}

TEST_CASE("training mean") {
  Spectrogram a, b;
  a.values = TensorD({227, 227});
  b.values = TensorD({227, 227});
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    a.values[i] = std::sin(static_cast<double>(i));
    b.values[i] = std::cos(static_cast<double>(i));
  }
  SUBCASE("single-element set centres to zero") {
    std::vector<TaggedSpectrogram> set{{&a, FoldRole::Train}};
    auto mean = fit_mean(set);
    for (double v : apply_mean(a, mean).values.data()) CHECK(v == 0.0);
  }
  SUBCASE("two-element mean") {
    std::vector<TaggedSpectrogram> set{{&a, FoldRole::Train}, {&b, FoldRole::Train}};
    auto mean = fit_mean(set);
    for (std::size_t i = 0; i < mean.size(); ++i)
      REQUIRE(mean[i] == doctest::Approx((a.values[i] + b.values[i]) / 2));
  }
  SUBCASE("fitting on held-out data is a leakage error") {
    std::vector<TaggedSpectrogram> set{{&a, FoldRole::Train}, {&b, FoldRole::Test}};
    CHECK_THROWS_AS(fit_mean(set), LeakageError);
    std::vector<TaggedSpectrogram> val{{&b, FoldRole::Validation}};
    CHECK_THROWS_AS(fit_mean(val), LeakageError);
  }
  SUBCASE("a training mean may be applied to other folds") {
    std::vector<TaggedSpectrogram> set{{&a, FoldRole::Train}};
    CHECK_NOTHROW(apply_mean(b, fit_mean(set)));
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(apply_mean(a, TensorD({3, 3})), ShapeError);
  }
}

TEST_CASE("preprocessing is deterministic for a fixed seed") {
  Waveform w = sine(440, 8000, 5000);
  std::mt19937_64 r1(9), r2(9);
  auto p1 = pad_random(w, r1), p2 = pad_random(w, r2);
  auto s1 = spectrogram_features(p1), s2 = spectrogram_features(p2);
  CHECK(p1.samples == p2.samples);
  CHECK(std::memcmp(s1.values.data().data(), s2.values.data().data(),
                    s1.values.size() * sizeof(double)) == 0);
  CHECK(s1.values.shape() == Shape{227, 227});
}
