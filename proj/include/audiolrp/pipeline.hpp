#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "audiolrp/checkpoint.hpp"
#include "audiolrp/config.hpp"
#include "audiolrp/heatmap.hpp"

namespace audiolrp {

enum class Representation { Waveform, Spectrogram };

/// (8000, 1) inputs are waveforms, (227, 227, 1) spectrograms.
Representation representation_of(const ModelSpec& spec);
ModelSpec build_model(const RunConfig& cfg);

/// Fold-dependent spectrogram normalisation: (dB - mean) / scale.
struct FeatureNorm {
  TensorD mean;
  double scale = 1.0;
};

/// Network input for one placed signal.
Tensor<float> make_input(Representation rep, const PaddedSignal& signal, const FeatureNorm& norm);
Tensor<float> normalized_spectrogram(const TensorD& db_values, const FeatureNorm& norm);

/// Records plus the index lists of one rotation.
struct Dataset {
  std::vector<AudioRecord> records;
  std::optional<FoldPlan> plan;
  std::size_t rotation = 0;
  std::vector<std::size_t> train, validation, test;
};

/// Synthetic records or a scanned corpus, split by the seeded fold plan.
/// `data_seed` replaces the config seed for data generation and folds
/// (used when a checkpoint records the seed it was trained with).
Dataset load_dataset(const RunConfig& cfg, std::optional<std::uint64_t> data_seed = {},
                     std::optional<std::size_t> rotation = {});

/// Mean and scale over one seeded placement of every training record.
FeatureNorm fit_feature_norm(const Dataset& data, std::uint64_t seed);

/// Evaluation examples with one seeded placement per record (the placement
/// depends only on the seed and the record index). `cap` keeps the first
/// `cap` indices; 0 keeps all.
struct FixedSet {
  std::vector<Example<float>> examples;
  std::vector<std::size_t> records;
  std::vector<PaddedSignal> signals;
};
FixedSet make_fixed_set(const Dataset& data, const std::vector<std::size_t>& indices,
                        Representation rep, const FeatureNorm& norm, Task task,
                        std::uint64_t seed, std::size_t cap = 0);

struct TrainResult {
  Model<float> model;
  FeatureNorm norm;
  std::string log_csv;  // iteration,loss,learning_rate,val_accuracy
  double validation_accuracy = -1.0;
};

/// Seeded end-to-end training on data.train; validation accuracy is logged
/// every cfg.eval_interval iterations and at the end when data.validation
/// is non-empty.
TrainResult train_model(const RunConfig& cfg, const Dataset& data,
                        const std::function<void(const std::string&)>& progress = {});

/// Checkpoint extras written alongside the parameters.
struct RunInfo {
  FeatureNorm norm;
  std::uint64_t seed = 0;
  std::size_t rotation = 0;
};
void save_run(const std::filesystem::path& path, const Model<float>& model, const RunInfo& info);
RunInfo load_run_info(const Checkpoint<float>& ckpt);

/// Appends or replaces the MANIFEST entry for `artifact` in its directory.
void record_manifest(const std::filesystem::path& artifact, const std::string& command,
                     const RunConfig& cfg, std::uint64_t model_hash);

// Commands. Each writes its artifacts under cfg.out and returns a short
// human-readable summary.
std::string cmd_train(const RunConfig& cfg);
std::string cmd_evaluate(const RunConfig& cfg, const std::vector<std::filesystem::path>& checkpoints);
std::string cmd_explain(const RunConfig& cfg, const std::filesystem::path& checkpoint);
std::string cmd_perturb(const RunConfig& cfg, const std::filesystem::path& checkpoint);
std::string cmd_freqscale(const RunConfig& cfg, const std::filesystem::path& checkpoint);
std::string cmd_synth(const RunConfig& cfg);

}  // namespace audiolrp
