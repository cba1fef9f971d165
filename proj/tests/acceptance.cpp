// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: audiolrp_acceptance <path to audiolrp binary> [criterion numbers...]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "audiolrp/io.hpp"
#include "audiolrp/pipeline.hpp"
#include "audiolrp/seed.hpp"
#include "instances.hpp"
#include "oracles.hpp"

using namespace audiolrp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string f(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("audiolrp_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

template <typename T>
double total(const Tensor<T>& t) {
  double s = 0;
  for (T v : t.data()) s += static_cast<double>(v);
  return s;
}

// 1 ---------------------------------------------------------------------

Outcome conservation() {
  const auto t0 = Clock::now();
  PresetOptions opts;
  opts.bias = false;
  opts.first_layer_bias = false;
  Model<double> m64(build_audionet(10, opts));
  m64.init_kaiming(101);
  const Model<float> m32 = m64.cast<float>();
  LrpConfig exact;
  exact.epsilon = 0.0;

  std::vector<TensorD> inputs;
  std::vector<std::size_t> targets;
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int n = 0; n < 100; ++n) {
    TensorD x({kSignalLength, 1});
    for (auto& v : x.data()) v = u(rng);
    inputs.push_back(std::move(x));
    targets.push_back(rng() % 10);
  }
  std::vector<double> err32(inputs.size()), err64(inputs.size());
  parallel_for(inputs.size(), 0, [&](std::size_t n) {
    const std::size_t target = targets[n];
    auto fr64 = forward(m64, inputs[n], {.record_trace = true});
    const double logit64 = fr64.logits[target];
    const auto r64 = explain(m64, *fr64.trace, target, exact);
    err64[n] = std::abs(total(r64.relevance) - logit64) / std::abs(logit64);

    auto fr32 = forward(m32, inputs[n].cast<float>(), {.record_trace = true});
    const double logit32 = fr32.logits[target];
    const auto r32 = explain(m32, *fr32.trace, target, exact);
    err32[n] = std::abs(total(r32.relevance) - logit32) / std::abs(logit32);
  });
  const double worst32 = *std::max_element(err32.begin(), err32.end());
  const double worst64 = *std::max_element(err64.begin(), err64.end());
  const double secs = seconds_since(t0);
  return {worst32 < 1e-4 && worst64 < 1e-6 && secs < 60,
          "worst relative error 32-bit " + f("%.2e", worst32) + ", 64-bit " + f("%.2e", worst64) +
              ", " + f("%.1f", secs) + " s"};
}

// 2 ---------------------------------------------------------------------

Outcome gradients() {
  const auto t0 = Clock::now();
  std::size_t count = 0;
  double worst = 0;
  std::string worst_kind;
  for (auto kind : instances::all_kinds()) {
    for (std::uint64_t seed = 0; seed < 7; ++seed) {
      auto inst = instances::random_instance(kind, 50000 + seed);
      auto fr = forward(inst.model, inst.input, {.record_trace = true});
      auto loss = softmax_cross_entropy(fr.logits, inst.label);
      auto grads = backward(inst.model, *fr.trace, loss.logit_grad);
      auto fd = oracle::finite_difference_gradients(inst.model, inst.input, inst.label);
      const double e = oracle::rel_error(instances::flatten_gradients(grads), fd.numeric);
      if (e > worst) worst = e, worst_kind = inst.kind;
      ++count;
    }
  }
  const double secs = seconds_since(t0);
  return {count >= 50 && worst < 1e-6 && secs < 60,
          std::to_string(count) + " instances, worst relative error " + f("%.2e", worst) + " (" +
              worst_kind + "), " + f("%.1f", secs) + " s"};
}

// 3 ---------------------------------------------------------------------

Outcome stft() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> u(-1, 1);
  const auto window = oracle::hann(455);
  bool shapes = true;
  double worst = 0;
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<double> x(kSignalLength);
    for (auto& v : x) v = u(rng);
    const auto s = stft_spectrogram(x);
    shapes &= s.values.shape() == Shape{228, 230};
    for (std::size_t t = 0; t < 230; t += 13) {
      std::vector<double> frame(455, 0.0);
      for (std::size_t n = 0; n < 455; ++n) {
        const long src = static_cast<long>(t * 35 + n) - 227;
        if (src >= 0 && src < 8000) frame[n] = x[static_cast<std::size_t>(src)];
      }
      const auto ref = oracle::windowed_dft_magnitudes(frame, window);
      for (std::size_t k = 0; k < 228; ++k) worst = std::max(worst, std::abs(ref[k] - s.values.at(k, t)));
    }
  }
  std::vector<double> tone(kSignalLength);
  for (std::size_t i = 0; i < tone.size(); ++i)
    tone[i] = std::sin(2.0 * std::numbers::pi * 1000.0 * static_cast<double>(i) / 8000.0);
  const auto s = stft_spectrogram(tone);
  bool peak57 = true;
  for (std::size_t t = 0; t < s.frames(); ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < s.bins(); ++k)
      if (s.values.at(k, t) > s.values.at(best, t)) best = k;
    peak57 &= best == 57;
  }
  return {shapes && worst < 1e-6 && peak57,
          std::string("shape ") + (shapes ? "228x230" : "wrong") + ", oracle max abs error " +
              f("%.2e", worst) + ", 1 kHz peak at bin 57 in every frame: " + (peak57 ? "yes" : "no")};
}

// 5, 6, 7, 4 share one trained digit model ---------------------------------

struct DigitRun {
  RunConfig cfg;
  Dataset data;
  TrainResult result{Model<float>(build_audionet(10)), {}, {}, -1.0};
  FixedSet test;
  double seconds = 0;
  double accuracy = 0;
};

DigitRun& digit_run() {
  static DigitRun run = [] {
    DigitRun r;
    r.cfg = parse_config("task = digit\nmodel = audionet\nseed = 2024\n");
    SynthConfig train_cfg = r.cfg.synth;
    train_cfg.per_class = 50;
    SynthConfig test_cfg = r.cfg.synth;
    test_cfg.per_class = 10;
    const auto t0 = Clock::now();
    r.data.records = synth_generate(train_cfg, r.cfg.stage_seed("synth.train"));
    for (std::size_t i = 0; i < r.data.records.size(); ++i) r.data.train.push_back(i);
    for (auto& rec : synth_generate(test_cfg, r.cfg.stage_seed("synth.test"))) {
      r.data.test.push_back(r.data.records.size());
      r.data.records.push_back(std::move(rec));
    }
    r.result = train_model(r.cfg, r.data);
    r.test = make_fixed_set(r.data, r.data.test, Representation::Waveform, {}, Task::Digit,
                            r.cfg.stage_seed("test"));
    r.seconds = seconds_since(t0);
    r.accuracy = evaluate_accuracy<float>(r.result.model, r.test.examples).accuracy();
    return r;
  }();
  return run;
}

Outcome learnability() {
  const DigitRun& r = digit_run();
  return {r.data.train.size() == 500 && r.test.examples.size() == 100 && r.accuracy >= 0.90 &&
              r.seconds < 600,
          std::to_string(r.data.train.size()) + " train / " + std::to_string(r.test.examples.size()) +
              " test, accuracy " + f("%.1f", 100 * r.accuracy) + "% after " +
              std::to_string(r.cfg.train.iterations) + " iterations, " + f("%.0f", r.seconds) +
              " s on this machine"};
}

const PerturbationCurve& digit_curve() {
  static const PerturbationCurve curve = [] {
    const DigitRun& r = digit_run();
    std::vector<SelectionStrategy> strategies{{StrategyKind::Random, r.cfg.stage_seed("perturb.random")},
                                              {StrategyKind::Amplitude},
                                              {StrategyKind::Relevance}};
    SweepOptions opt;
    opt.task = "digit";
    opt.classes = 10;
    opt.lrp = r.cfg.lrp;
    return perturbation_sweep<float>(r.result.model, r.test.examples, strategies,
                                     {0.0, 0.01, 0.05, 0.1, 1.0}, opt);
  }();
  return curve;
}

Outcome perturbation_order() {
  const auto& c = digit_curve();
  auto mean = [&](const std::string& k) {
    return (c.accuracy(k, 0.01) + c.accuracy(k, 0.05) + c.accuracy(k, 0.1)) / 3.0;
  };
  const double rnd = mean("random"), amp = mean("amplitude"), lrp = mean("lrp");
  return {lrp <= rnd - 0.05 && lrp <= amp,
          "mean accuracy over 1/5/10%: random " + f("%.3f", rnd) + ", amplitude " + f("%.3f", amp) +
              ", relevance " + f("%.3f", lrp)};
}

Outcome boundaries() {
  const DigitRun& r = digit_run();
  const auto& c = digit_curve();
  bool zero_exact = true;
  double worst_full = 0;
  for (const char* k : {"random", "amplitude", "lrp"}) {
    zero_exact &= c.accuracy(k, 0.0) == r.accuracy;
    worst_full = std::max(worst_full, std::abs(c.accuracy(k, 1.0) - c.chance));
  }
  return {zero_exact && worst_full <= 0.05,
          std::string("fraction 0 equals clean accuracy bit-exactly: ") + (zero_exact ? "yes" : "no") +
              ", fraction 1 off chance by at most " + f("%.3f", worst_full)};
}

Outcome zero_embedding() {
  const DigitRun& r = digit_run();
  const Model<float>& model = r.result.model;
  if (model.params().front().bias.size() != 0 && total(model.params().front().bias) != 0.0)
    return {false, "first layer carries a bias"};
  std::size_t checked = 0, nonzero = 0, padded = 0;
  for (std::size_t k = 0; k < 10; ++k) {
    const PaddedSignal& sig = r.test.signals[k];
    auto fr = forward(model, r.test.examples[k].input, {.record_trace = true});
    const auto map = explain(model, *fr.trace, argmax(fr.logits), r.cfg.lrp);
    for (std::size_t i = 0; i < kSignalLength; ++i) {
      if (i >= sig.offset && i < sig.offset + sig.length) continue;
      ++padded;
      if (map.relevance[i] != 0.0f) ++nonzero;
    }
    ++checked;
  }
  return {padded > 0 && nonzero == 0,
          std::to_string(checked) + " padded inputs, " + std::to_string(padded) + " padded samples, " +
              std::to_string(nonzero) + " with non-zero relevance"};
}

// 8 ---------------------------------------------------------------------

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_file(p));
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

Outcome gender_flip() {
  const fs::path dir = scratch("gender");
  const RunConfig cfg =
      parse_config("task = gender\nmodel = alexnet\nseed = 7\nout = " + dir.string() + "\n");
  const auto t0 = Clock::now();
  cmd_train(cfg);
  cmd_freqscale(cfg, dir / "model.ckpt");
  const auto rows = read_csv(dir / "freqscale.csv");
  if (rows.size() != 5) return {false, "freqscale.csv has " + std::to_string(rows.size()) + " lines"};
  const double clean = std::stod(rows[1][3]), flipped = std::stod(rows[4][3]);
  return {flipped < 0.5,
          "clean accuracy " + f("%.3f", clean) + ", both classes rescaled (1.5 / 0.66) " +
              f("%.3f", flipped) + " on " + rows[4][4] + " test examples, " +
              f("%.0f", seconds_since(t0)) + " s"};
}

// 9 ---------------------------------------------------------------------

Outcome determinism(const std::string& cli) {
  const fs::path root = scratch("determinism");
  const std::string common =
      " --seed 99 --set train.iterations=40 --set data.max_examples=20"
      " --set perturb.fractions=0,0.05,0.2,1";
  for (const char* run : {"a", "b"}) {
    const std::string out = (root / run).string();
    // the second run uses another thread count
    const std::string workers = std::string(run) == "a" ? " --workers 1" : " --workers 3";
    for (const char* cmd : {"train", "explain", "perturb"}) {
      const std::string line = "\"" + cli + "\" " + cmd + common + workers + " --out \"" + out +
                               "\" > \"" + out + "_" + cmd + ".log\" 2>&1";
      fs::create_directories(root / run);
      if (std::system(line.c_str()) != 0) return {false, std::string(cmd) + " failed: " + line};
    }
  }
  std::size_t same = 0;
  std::string differing;
  for (const char* file : {"model.ckpt", "train_log.csv", "relevance.bin", "heatmap.ppm",
                           "perturbation.csv", "perturbation_audit.jsonl", "MANIFEST"}) {
    if (read_file(root / "a" / file) == read_file(root / "b" / file)) ++same;
    else differing += std::string(" ") + file;
  }
  return {differing.empty(), std::to_string(same) + "/7 artifacts byte-identical across two runs" +
                                 (differing.empty() ? "" : "; differing:" + differing)};
}

// 10 --------------------------------------------------------------------

std::vector<AudioRecord> corpus_speakers() {
  // 60 speakers with 12 female, as in the full corpus; one record each suffices
  std::vector<AudioRecord> recs;
  for (int s = 1; s <= 60; ++s) {
    AudioRecord r;
    r.speaker = (s < 10 ? "0" : "") + std::to_string(s);
    r.gender = s % 5 == 0 ? Gender::Female : Gender::Male;
    recs.push_back(r);
  }
  return recs;
}

Outcome fold_integrity() {
  const auto recs = corpus_speakers();
  std::set<std::string> all, female;
  for (const auto& r : recs) {
    all.insert(r.speaker);
    if (r.gender == Gender::Female) female.insert(r.speaker);
  }
  std::size_t plans = 0;
  std::string problem;
  for (std::uint64_t seed = 0; seed < 10000 && problem.empty(); ++seed) {
    const std::uint64_t s = mix_seed(seed, "acceptance");
    const FoldPlan digit = make_folds(recs, Task::Digit, s);
    std::set<std::string> seen;
    if (digit.size() != 5) problem = "digit plan without 5 splits";
    for (const auto& split : digit.splits) {
      if (split.size() != 12) problem = "digit split of size " + std::to_string(split.size());
      for (const auto& spk : split)
        if (!all.count(spk) || !seen.insert(spk).second) problem = "digit speaker repeated or unknown";
    }
    if (seen != all) problem = "digit plan does not cover all speakers";

    const FoldPlan gender = make_folds(recs, Task::Gender, s);
    seen.clear();
    if (gender.size() != 4) problem = "gender plan without 4 splits";
    for (const auto& split : gender.splits) {
      std::size_t f = 0, m = 0;
      for (const auto& spk : split) {
        if (!all.count(spk) || !seen.insert(spk).second) problem = "gender speaker repeated or unknown";
        (female.count(spk) ? f : m) += 1;
      }
      if (f != 3 || m != 3) problem = "gender split is not 3F+3M";
    }
    for (const auto& spk : female)
      if (!seen.count(spk)) problem = "female speaker missing from the gender plan";

    // every rotation: train, validation and test are pairwise disjoint
    for (const FoldPlan* plan : {&digit, &gender})
      for (std::size_t rot = 0; rot < plan->size(); ++rot) {
        std::map<FoldRole, std::set<std::string>> by_role;
        for (const auto& spk : all) {
          const auto role = plan->role(rot, spk);
          if (role) by_role[*role].insert(spk);
        }
        std::size_t sum = 0;
        std::set<std::string> uni;
        for (const auto& [role, set] : by_role) {
          sum += set.size();
          uni.insert(set.begin(), set.end());
        }
        if (sum != uni.size()) problem = "rotation roles overlap";
        if (by_role[FoldRole::Test].empty() || by_role[FoldRole::Train].empty())
          problem = "rotation without train or test speakers";
      }
    plans += 2;
  }
  return {problem.empty(), std::to_string(plans) + " plans checked" +
                               (problem.empty() ? ", all speaker-disjoint" : "; " + problem)};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: audiolrp_acceptance <audiolrp binary> [criteria...]\n";
    return 2;
  }
  const std::string cli = argv[1];
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"LRP conservation", conservation},
      {"gradient oracle", gradients},
      {"STFT shape and oracle", stft},
      {"zero-embedding relevance", zero_embedding},
      {"desk-scale learnability", learnability},
      {"perturbation ordering", perturbation_order},
      {"boundary exactness", boundaries},
      {"gender flip", gender_flip},
      {"pipeline determinism", [&] { return determinism(cli); }},
      {"fold integrity", fold_integrity},
  };
  // the trained digit model is shared by 4-7; run 5 first so its timing is its own
  const std::vector<int> order{1, 2, 3, 5, 6, 7, 4, 8, 9, 10};
  std::map<int, std::string> lines;
  int failures = 0;
  for (int n : order) {
    if (!only.empty() && !only.count(n)) continue;
    const auto& [name, run] = criteria[static_cast<std::size_t>(n - 1)];
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << name << "): " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
