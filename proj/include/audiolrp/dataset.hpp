#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "audiolrp/audio.hpp"

namespace audiolrp {

enum class Task { Digit, Gender };
enum class Gender { Male = 0, Female = 1 };

std::string to_string(Task task);
Task parse_task(const std::string& text);

/// One recording. Scanned records carry a path; generated ones carry the
/// 8 kHz buffer directly.
struct AudioRecord {
  std::filesystem::path path;
  std::optional<Waveform> buffer;
  int digit = 0;
  std::string speaker;
  Gender gender = Gender::Male;
  int take = 0;

  /// Class index for the task: the digit, or 0 = male / 1 = female.
  std::size_t label(Task task) const;

  /// The recording at 8 kHz (decoded and resampled when read from disk).
  Waveform load_8k() const;
};

inline constexpr const char* kMetadataFile = "audioMNIST_meta.txt";

/// Parses "<digit>_<speaker>_<take>.wav". Throws DataError naming the file.
AudioRecord parse_record_name(const std::filesystem::path& file);

/// Walks <root>/<speaker>/<digit>_<speaker>_<take>.wav. Gender comes from a
/// JSON metadata file mapping speaker id to an object with a "gender" field;
/// other fields are ignored.
std::vector<AudioRecord> scan_audiomnist(const std::filesystem::path& root,
                                         const std::string& metadata_file = kMetadataFile);

/// Throws DataError unless the records form the full corpus: 30000
/// recordings, 60 speakers, 50 takes per (speaker, digit).
void check_full_corpus(const std::vector<AudioRecord>& records);

/// Speaker-disjoint split plan. Rotation k tests on split k, validates on
/// split (k + 1) mod n and trains on the rest.
struct FoldPlan {
  Task task = Task::Digit;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::string>> splits;
  std::vector<std::string> male_subset;  // gender task only

  std::size_t size() const { return splits.size(); }
  std::optional<FoldRole> role(std::size_t rotation, const std::string& speaker) const;

  std::string serialize() const;
  static FoldPlan parse(const std::string& text);
};

/// Digit: 5 splits of equal speaker count (12 each for the full corpus).
/// Gender: all 12 female speakers plus 12 seeded male speakers, 4 splits of
/// 3 female + 3 male.
FoldPlan make_folds(const std::vector<AudioRecord>& records, Task task, std::uint64_t seed);

/// Records whose speaker has the given role in a rotation.
std::vector<const AudioRecord*> select_role(const std::vector<AudioRecord>& records,
                                            const FoldPlan& plan, std::size_t rotation,
                                            FoldRole role);

/// Desk-scale stand-in for the corpus. Gender-like data is a harmonic series
/// on a low (male) or high (female) fundamental. Digit-like data is a
/// speaker-pitched voiced carrier shared by all classes with a short burst
/// at a random position; the burst's tone and modulation rate encode the
/// class.
struct SynthConfig {
  std::size_t classes = 10;
  std::size_t per_class = 50;
  std::size_t speakers = 24;  // split evenly between genders
  double min_seconds = 0.35;
  double max_seconds = 0.75;
  double amplitude = 0.5;
  double noise = 0.05;  // std of additive white noise, relative to amplitude
  double male_f0 = 120.0;
  double female_f0 = 220.0;
  double f0_jitter = 0.10;  // relative half-width of the uniform f0 draw
  std::size_t harmonics = 6;
  double digit_base_hz = 250.0;
  double digit_step_hz = 180.0;
  double digit_burst_seconds = 0.35;
  double digit_carrier = 0.2;  // carrier peak relative to the burst peak
  double speaker_pitch_spread = 0.03;

  void validate() const;
};

std::vector<AudioRecord> synth_generate(const SynthConfig& config, std::uint64_t seed);

}  // namespace audiolrp
