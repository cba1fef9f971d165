#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "audiolrp/dataset.hpp"
#include "audiolrp/evaluation.hpp"
#include "audiolrp/lrp.hpp"
#include "audiolrp/presets.hpp"
#include "audiolrp/train.hpp"

namespace audiolrp {

inline constexpr const char* kDataEnv = "AUDIOLRP_DATA";

enum class ModelKind { AudioNet, AlexNet };
std::string to_string(ModelKind kind);

/// Everything a command needs. Built from a preset (selected by `preset`,
/// `model` and `task`) with the config file and overrides applied on top.
struct RunConfig {
  Task task = Task::Digit;
  ModelKind model = ModelKind::AudioNet;
  std::string preset = "desk";
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  unsigned workers = 0;

  bool synthetic = true;
  std::filesystem::path data_root;
  std::size_t rotation = 0;
  std::size_t max_examples = 0;  // cap on evaluated examples per split; 0 = all
  SynthConfig synth;

  PresetOptions arch;
  TrainConfig train;
  std::size_t eval_interval = 0;  // validation accuracy every N iterations; 0 = end only
  LrpConfig lrp;

  std::vector<StrategyKind> strategies{StrategyKind::Random, StrategyKind::Amplitude,
                                       StrategyKind::Relevance};
  std::vector<double> fractions{0.0, 0.01, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0};
  bool absolute_relevance = false;

  double male_factor = 1.5;
  double female_factor = 0.66;

  std::size_t explain_index = 0;
  std::filesystem::path explain_input;
  long explain_target = -1;  // -1 = predicted class
  bool underlay = false;
  std::size_t waveform_width = 1000;

  std::size_t classes() const { return task == Task::Digit ? 10 : 2; }

  /// Seed for one randomized stage, derived from the top-level seed.
  std::uint64_t stage_seed(std::string_view stage) const;

  /// Sorted key=value listing of every setting that affects results
  /// (excludes `out` and `workers`).
  std::string canonical() const;
  std::uint64_t hash() const;
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Parses "key = value" lines; '#' starts a comment and "[section]" prefixes
/// following keys with "section.". Unknown keys are rejected.
RunConfig parse_config(const std::string& text, const Overrides& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});

/// Every accepted key, for help output.
const std::vector<std::string>& config_keys();

}  // namespace audiolrp
