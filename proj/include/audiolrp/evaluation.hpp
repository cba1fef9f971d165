#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "audiolrp/lrp.hpp"
#include "audiolrp/train.hpp"

namespace audiolrp {

enum class StrategyKind { Random, Amplitude, Relevance };
std::string to_string(StrategyKind kind);
StrategyKind parse_strategy(const std::string& text);

struct SelectionStrategy {
  StrategyKind kind = StrategyKind::Random;
  std::uint64_t seed = 0;           // Random only
  bool absolute_relevance = false;  // Relevance: order by |R| instead of R
};

/// Indices (ascending) chosen for zeroing. Only non-zero samples are
/// eligible; the set size is round(fraction * eligible). Amplitude and
/// Relevance rank by |x| and R (descending, ties to the lower index), so
/// their sets are nested in the fraction.
template <typename T>
std::vector<std::size_t> select_indices(const SelectionStrategy& strategy,
                                        std::span<const T> signal,
                                        std::optional<std::span<const T>> relevance,
                                        double fraction);

template <typename T>
Tensor<T> zero_out(const Tensor<T>& signal, const std::vector<std::size_t>& indices);

struct CurvePoint {
  std::string strategy;
  double fraction = 0.0;
  double accuracy = 0.0;
  std::size_t n = 0;
};

struct PerturbationCurve {
  std::string task;
  double chance = 0.0;
  std::vector<CurvePoint> points;

  /// Header task,strategy,fraction,accuracy,n,chance.
  std::string to_csv() const;
  /// Key-value notes about how the curve was produced.
  std::string metadata() const;
  double accuracy(const std::string& strategy, double fraction) const;
};

/// One record per (example, strategy, fraction), JSON per line.
struct AuditLog {
  std::vector<std::string> lines;
  std::string text() const;
};

struct SweepOptions {
  std::string task = "digit";
  std::size_t classes = 10;
  LrpConfig lrp;
  unsigned workers = 0;
  AuditLog* audit = nullptr;
};

/// For every example: predict, explain the predicted class once on the
/// clean input, then for every (strategy, fraction) zero the selected
/// samples and check the prediction against the ground truth. Random
/// selections are redrawn per fraction from a seed derived from the
/// strategy seed, example index and fraction.
template <typename T>
PerturbationCurve perturbation_sweep(const Model<T>& model, std::span<const Example<T>> fold,
                                     const std::vector<SelectionStrategy>& strategies,
                                     const std::vector<double>& fractions,
                                     const SweepOptions& options = {});

/// Row f of the output is the linear interpolation of source row f / factor.
/// Source positions past the last row take the matrix minimum.
TensorD scale_frequency_axis(const TensorD& spectrogram, double factor);

struct AccuracyReport {
  std::size_t correct = 0;
  std::size_t n = 0;
  double accuracy() const { return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0; }
};

template <typename T>
std::size_t predict_class(const Model<T>& model, const Tensor<T>& input);

template <typename T>
AccuracyReport evaluate_accuracy(const Model<T>& model, std::span<const Example<T>> fold,
                                 unsigned workers = 0);

struct FoldSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1); 0 for one fold
  std::size_t folds = 0;
};

FoldSummary summarize_folds(std::span<const double> accuracies);

}  // namespace audiolrp
