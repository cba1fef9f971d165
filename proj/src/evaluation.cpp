#include "audiolrp/evaluation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "audiolrp/errors.hpp"
#include "audiolrp/seed.hpp"

namespace audiolrp {

std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::Random: return "random";
    case StrategyKind::Amplitude: return "amplitude";
    case StrategyKind::Relevance: return "lrp";
  }
  return "?";
}

StrategyKind parse_strategy(const std::string& text) {
  if (text == "random") return StrategyKind::Random;
  if (text == "amplitude") return StrategyKind::Amplitude;
  if (text == "lrp" || text == "relevance") return StrategyKind::Relevance;
  throw ConfigError("unknown strategy '" + text + "' (expected random, amplitude or lrp)");
}

template <typename T>
std::vector<std::size_t> select_indices(const SelectionStrategy& strategy,
                                        std::span<const T> signal,
                                        std::optional<std::span<const T>> relevance,
                                        double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw ConfigError("fraction must lie in [0, 1]");
  const bool wants_relevance = strategy.kind == StrategyKind::Relevance;
  if (wants_relevance && !relevance) throw ConfigError("relevance strategy needs a relevance map");
  if (!wants_relevance && relevance)
    throw ConfigError(to_string(strategy.kind) + " strategy does not take a relevance map");
  if (relevance && relevance->size() != signal.size())
    throw ShapeError("relevance map size does not match the signal");

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < signal.size(); ++i)
    if (signal[i] != T{0}) eligible.push_back(i);
  const auto count = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(eligible.size())));
  if (count == 0) return {};

  switch (strategy.kind) {
    case StrategyKind::Random: {
      // partial Fisher-Yates on raw engine output
      std::mt19937_64 rng(strategy.seed);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + rng() % (eligible.size() - i);
        std::swap(eligible[i], eligible[j]);
      }
      break;
    }
    case StrategyKind::Amplitude:
      std::stable_sort(eligible.begin(), eligible.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(signal[a]) > std::abs(signal[b]);
      });
      break;
    case StrategyKind::Relevance: {
      const auto r = *relevance;
      const bool abs = strategy.absolute_relevance;
      std::stable_sort(eligible.begin(), eligible.end(), [&](std::size_t a, std::size_t b) {
        return abs ? std::abs(r[a]) > std::abs(r[b]) : r[a] > r[b];
      });
      break;
    }
  }
  eligible.resize(count);
  std::sort(eligible.begin(), eligible.end());
  return eligible;
}

template <typename T>
Tensor<T> zero_out(const Tensor<T>& signal, const std::vector<std::size_t>& indices) {
  Tensor<T> out = signal;
  for (auto i : indices) {
    if (i >= out.size())
      throw ShapeError("zero_out: index " + std::to_string(i) + " out of range for " +
                       std::to_string(out.size()) + " samples");
    out[i] = T{0};
  }
  return out;
}

namespace {

std::string format_number(double v, const char* fmt) {
  char buf[48];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

std::string PerturbationCurve::to_csv() const {
  std::ostringstream out;
  out << "task,strategy,fraction,accuracy,n,chance\n";
  for (const auto& p : points)
    out << task << ',' << p.strategy << ',' << format_number(p.fraction, "%.6g") << ','
        << format_number(p.accuracy, "%.6f") << ',' << p.n << ','
        << format_number(chance, "%.6f") << '\n';
  return out.str();
}

std::string PerturbationCurve::metadata() const {
  return "task=" + task + "\nchance=" + format_number(chance, "%.6f") +
         "\nrandom_selection=resampled per fraction\neligible=non-zero samples\n"
         "relevance_target=clean prediction\n";
}

double PerturbationCurve::accuracy(const std::string& strategy, double fraction) const {
  for (const auto& p : points)
    if (p.strategy == strategy && p.fraction == fraction) return p.accuracy;
  throw ConfigError("curve has no point for " + strategy + " at fraction " +
                    format_number(fraction, "%g"));
}

std::string AuditLog::text() const {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

template <typename T>
std::size_t predict_class(const Model<T>& model, const Tensor<T>& input) {
  return argmax(predict_logits(model, input));
}

template <typename T>
PerturbationCurve perturbation_sweep(const Model<T>& model, std::span<const Example<T>> fold,
                                     const std::vector<SelectionStrategy>& strategies,
                                     const std::vector<double>& fractions,
                                     const SweepOptions& options) {
  if (fold.empty()) throw DataError("perturbation sweep on an empty fold");
  if (strategies.empty() || fractions.empty())
    throw ConfigError("perturbation sweep needs at least one strategy and one fraction");
  for (double f : fractions)
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("fraction must lie in [0, 1]");
  options.lrp.validate();

  const std::size_t S = strategies.size(), F = fractions.size();
  struct Outcome {
    bool correct = false;
    std::size_t selected = 0;
    std::size_t predicted = 0;
  };
  std::vector<std::vector<Outcome>> outcomes(fold.size(), std::vector<Outcome>(S * F));
  std::vector<std::size_t> eligible(fold.size(), 0), clean_pred(fold.size(), 0);

  parallel_for(fold.size(), options.workers, [&](std::size_t e) {
    const Example<T>& ex = fold[e];
    const std::size_t pred = predict_class(model, ex.input);
    clean_pred[e] = pred;
    eligible[e] = static_cast<std::size_t>(
        std::count_if(ex.input.data().begin(), ex.input.data().end(), [](T v) { return v != T{0}; }));

    std::optional<Tensor<T>> relevance;
    for (std::size_t s = 0; s < S; ++s) {
      std::optional<std::span<const T>> rel;
      if (strategies[s].kind == StrategyKind::Relevance) {
        if (!relevance) {
          ForwardOptions fo;
          fo.record_trace = true;
          auto res = forward(model, ex.input, fo);
          relevance = explain(model, *res.trace, pred, options.lrp).relevance;
        }
        rel = std::span<const T>(relevance->data());
      }
      for (std::size_t f = 0; f < F; ++f) {
        SelectionStrategy strat = strategies[s];
        if (strat.kind == StrategyKind::Random)
          strat.seed = mix_seed(strat.seed, mix_seed(e, std::bit_cast<std::uint64_t>(fractions[f])));
        const auto idx = select_indices<T>(strat, ex.input.data(), rel, fractions[f]);
        const std::size_t p = idx.empty() ? pred : predict_class(model, zero_out(ex.input, idx));
        outcomes[e][s * F + f] = Outcome{p == ex.label, idx.size(), p};
      }
    }
  });

  PerturbationCurve curve;
  curve.task = options.task;
  curve.chance = options.classes ? 1.0 / static_cast<double>(options.classes) : 0.0;
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t f = 0; f < F; ++f) {
      std::size_t correct = 0;
      for (std::size_t e = 0; e < fold.size(); ++e) correct += outcomes[e][s * F + f].correct;
      curve.points.push_back(CurvePoint{to_string(strategies[s].kind), fractions[f],
                                        static_cast<double>(correct) / static_cast<double>(fold.size()),
                                        fold.size()});
    }

  if (options.audit) {
    for (std::size_t e = 0; e < fold.size(); ++e)
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t f = 0; f < F; ++f) {
          const Outcome& o = outcomes[e][s * F + f];
          nlohmann::ordered_json rec;
          rec["example"] = e;
          rec["strategy"] = to_string(strategies[s].kind);
          rec["fraction"] = fractions[f];
          rec["eligible"] = eligible[e];
          rec["selected"] = o.selected;
          rec["label"] = fold[e].label;
          rec["clean_prediction"] = clean_pred[e];
          rec["prediction"] = o.predicted;
          options.audit->lines.push_back(rec.dump());
        }
  }
  return curve;
}

TensorD scale_frequency_axis(const TensorD& spectrogram, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor))
    throw ConfigError("frequency scale factor must be positive");
  if (spectrogram.rank() != 2) throw ShapeError("frequency scaling expects a (bins, frames) matrix");
  const std::size_t rows = spectrogram.dim(0), cols = spectrogram.dim(1);
  double floor_value = spectrogram[0];
  for (double v : spectrogram.data()) floor_value = std::min(floor_value, v);

  TensorD out(spectrogram.shape());
  const double last = static_cast<double>(rows - 1);
  for (std::size_t f = 0; f < rows; ++f) {
    const double src = static_cast<double>(f) / factor;
    double* dst = &out[f * cols];
    if (src > last) {
      std::fill(dst, dst + cols, floor_value);
      continue;
    }
    const auto lo = static_cast<std::size_t>(src);
    const std::size_t hi = std::min(lo + 1, rows - 1);
    const double w = src - static_cast<double>(lo);
    const double* a = &spectrogram[lo * cols];
    const double* b = &spectrogram[hi * cols];
    for (std::size_t t = 0; t < cols; ++t) dst[t] = w == 0.0 ? a[t] : a[t] + w * (b[t] - a[t]);
  }
  return out;
}

template <typename T>
AccuracyReport evaluate_accuracy(const Model<T>& model, std::span<const Example<T>> fold,
                                 unsigned workers) {
  if (fold.empty()) throw DataError("accuracy of an empty fold");
  std::vector<char> hit(fold.size(), 0);
  parallel_for(fold.size(), workers, [&](std::size_t i) {
    hit[i] = predict_class(model, fold[i].input) == fold[i].label;
  });
  AccuracyReport r;
  r.n = fold.size();
  r.correct = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), 1));
  return r;
}

FoldSummary summarize_folds(std::span<const double> accuracies) {
  FoldSummary s;
  s.folds = accuracies.size();
  if (accuracies.empty()) return s;
  s.mean = std::accumulate(accuracies.begin(), accuracies.end(), 0.0) /
           static_cast<double>(accuracies.size());
  if (accuracies.size() > 1) {
    double ss = 0.0;
    for (double a : accuracies) ss += (a - s.mean) * (a - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(accuracies.size() - 1));
  }
  return s;
}

#define AUDIOLRP_INSTANTIATE(T)                                                               \
  template std::vector<std::size_t> select_indices(const SelectionStrategy&,                 \
                                                   std::span<const T>,                       \
                                                   std::optional<std::span<const T>>, double); \
  template Tensor<T> zero_out(const Tensor<T>&, const std::vector<std::size_t>&);            \
  template std::size_t predict_class(const Model<T>&, const Tensor<T>&);                     \
  template PerturbationCurve perturbation_sweep(const Model<T>&, std::span<const Example<T>>, \
                                                const std::vector<SelectionStrategy>&,       \
                                                const std::vector<double>&,                  \
                                                const SweepOptions&);                        \
  template AccuracyReport evaluate_accuracy(const Model<T>&, std::span<const Example<T>>,    \
                                            unsigned);

AUDIOLRP_INSTANTIATE(float)
AUDIOLRP_INSTANTIATE(double)

#undef AUDIOLRP_INSTANTIATE

}  // namespace audiolrp
