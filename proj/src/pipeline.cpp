#include "audiolrp/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "audiolrp/checkpoint.hpp"
#include "audiolrp/errors.hpp"
#include "audiolrp/io.hpp"
#include "audiolrp/seed.hpp"

namespace audiolrp {

namespace fs = std::filesystem;

Representation representation_of(const ModelSpec& spec) {
  const Shape& in = spec.input_shape();
  if (in == Shape{kSignalLength, 1}) return Representation::Waveform;
  if (in == Shape{kCropped, kCropped, 1}) return Representation::Spectrogram;
  throw ConfigError("model input " + shape_string(in) +
                    " is neither a waveform (8000x1) nor a spectrogram (227x227x1)");
}

ModelSpec build_model(const RunConfig& cfg) {
  return cfg.model == ModelKind::AudioNet ? build_audionet(cfg.classes(), cfg.arch)
                                          : build_alexnet_variant(cfg.classes(), cfg.arch);
}

Tensor<float> normalized_spectrogram(const TensorD& db, const FeatureNorm& norm) {
  if (db.shape() != norm.mean.shape())
    throw ShapeError("spectrogram " + shape_string(db.shape()) + " does not match the fitted mean");
  Tensor<float> t({kCropped, kCropped, 1});
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<float>((db[i] - norm.mean[i]) / norm.scale);
  return t;
}

Tensor<float> make_input(Representation rep, const PaddedSignal& signal, const FeatureNorm& norm) {
  if (rep == Representation::Spectrogram)
    return normalized_spectrogram(spectrogram_features(signal).values, norm);
  Tensor<float> t({kSignalLength, 1});
  for (std::size_t i = 0; i < kSignalLength; ++i) t[i] = static_cast<float>(signal.samples[i]);
  return t;
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt(double v, const char* f = "%.6f") {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

PaddedSignal place(const AudioRecord& rec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return pad_random(rec.load_8k(), rng);
}

/// Placement used for every fixed evaluation view of a record.
std::uint64_t placement_seed(std::uint64_t stage, std::size_t record) { return mix_seed(stage, record); }

}  // namespace

Dataset load_dataset(const RunConfig& cfg, std::optional<std::uint64_t> data_seed,
                     std::optional<std::size_t> rotation) {
  const std::uint64_t s = data_seed.value_or(cfg.seed);
  Dataset d;
  if (cfg.synthetic) {
    SynthConfig sc = cfg.synth;
    sc.classes = cfg.classes();
    d.records = synth_generate(sc, mix_seed(s, "synth"));
  } else {
    d.records = scan_audiomnist(cfg.data_root);
  }
  d.plan = make_folds(d.records, cfg.task, mix_seed(s, "folds"));
  d.rotation = rotation.value_or(cfg.rotation);
  if (d.rotation >= d.plan->size())
    throw ConfigError("data.rotation " + std::to_string(d.rotation) + " out of range for " +
                      std::to_string(d.plan->size()) + " folds");
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto role = d.plan->role(d.rotation, d.records[i].speaker);
    if (!role) continue;
    (*role == FoldRole::Train ? d.train : *role == FoldRole::Validation ? d.validation : d.test)
        .push_back(i);
  }
  if (d.train.empty() || d.test.empty()) throw DataError("fold rotation left an empty split");
  return d;
}

FeatureNorm fit_feature_norm(const Dataset& data, std::uint64_t seed) {
  if (data.train.empty()) throw DataError("no training records to fit the normalisation");
  // two streaming passes in chunks keep memory bounded on the full corpus
  constexpr std::size_t kChunk = 128;
  const std::size_t n = data.train.size();
  auto chunk_specs = [&](std::size_t begin, std::size_t end) {
    std::vector<Spectrogram> specs(end - begin);
    parallel_for(end - begin, 0, [&](std::size_t k) {
      const std::size_t rec = data.train[begin + k];
      specs[k] = spectrogram_features(place(data.records[rec], placement_seed(seed, rec)));
    });
    return specs;
  };
  auto tags = [](const std::vector<Spectrogram>& specs) {
    std::vector<TaggedSpectrogram> t;
    for (const auto& s : specs) t.push_back({&s, FoldRole::Train});
    return t;
  };
  FeatureNorm norm;
  TensorD sum({kCropped, kCropped});
  for (std::size_t b = 0; b < n; b += kChunk) {
    const std::size_t e = std::min(n, b + kChunk);
    const auto specs = chunk_specs(b, e);
    const TensorD m = fit_mean(tags(specs));
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += m[i] * static_cast<double>(e - b);
  }
  for (auto& v : sum.data()) v /= static_cast<double>(n);
  norm.mean = sum;
  double ss = 0.0;
  for (std::size_t b = 0; b < n; b += kChunk) {
    const std::size_t e = std::min(n, b + kChunk);
    const auto specs = chunk_specs(b, e);
    const double sd = fit_scale(tags(specs), norm.mean);
    ss += sd * sd * static_cast<double>(e - b);
  }
  norm.scale = std::sqrt(ss / static_cast<double>(n));
  return norm;
}

FixedSet make_fixed_set(const Dataset& data, const std::vector<std::size_t>& indices,
                        Representation rep, const FeatureNorm& norm, Task task,
                        std::uint64_t seed, std::size_t cap) {
  std::vector<std::size_t> chosen = indices;
  if (cap && cap < chosen.size()) {
    std::mt19937_64 rng(mix_seed(seed, "subset"));
    for (std::size_t i = chosen.size(); i > 1; --i) std::swap(chosen[i - 1], chosen[rng() % i]);
    chosen.resize(cap);
    std::sort(chosen.begin(), chosen.end());
  }
  FixedSet set;
  set.records = chosen;
  set.examples.resize(chosen.size());
  set.signals.resize(chosen.size());
  parallel_for(chosen.size(), 0, [&](std::size_t k) {
    const AudioRecord& rec = data.records[chosen[k]];
    set.signals[k] = place(rec, placement_seed(seed, chosen[k]));
    set.examples[k] = Example<float>{make_input(rep, set.signals[k], norm), rec.label(task)};
  });
  return set;
}

TrainResult train_model(const RunConfig& cfg, const Dataset& data,
                        const std::function<void(const std::string&)>& progress) {
  const ModelSpec spec = build_model(cfg);
  const Representation rep = representation_of(spec);
  if (data.train.empty()) throw DataError("no training records");

  TrainResult result{Model<float>(spec), {}, {}, -1.0};
  if (rep == Representation::Spectrogram) result.norm = fit_feature_norm(data, cfg.stage_seed("norm"));
  result.model.init_kaiming(cfg.stage_seed("init"));

  FixedSet val;
  if (!data.validation.empty())
    val = make_fixed_set(data, data.validation, rep, result.norm, cfg.task,
                         cfg.stage_seed("validation"), cfg.max_examples);

  TrainConfig tc = cfg.train;
  tc.seed = cfg.stage_seed("train");
  Trainer<float> trainer(result.model, tc, cfg.workers);
  const ExampleSource<float> source = [&](std::size_t i, std::uint64_t draw) {
    const AudioRecord& rec = data.records[data.train[i]];
    return Example<float>{make_input(rep, place(rec, draw), result.norm), rec.label(cfg.task)};
  };

  std::ostringstream log;
  log << "iteration,loss,learning_rate,val_accuracy\n";
  trainer.run(data.train.size(), source, [&](const IterationStats& st) {
    if (!std::isfinite(st.loss))
      throw NumericError("training loss became non-finite at iteration " + std::to_string(st.iteration));
    const std::size_t it = st.iteration + 1;
    std::string val_text;
    const bool last = it == tc.iterations;
    if (!val.examples.empty() && (last || (cfg.eval_interval && it % cfg.eval_interval == 0))) {
      result.validation_accuracy =
          evaluate_accuracy<float>(result.model, val.examples, cfg.workers).accuracy();
      val_text = fmt(result.validation_accuracy);
    }
    log << it << ',' << fmt(st.loss) << ',' << fmt(st.learning_rate, "%.6g") << ',' << val_text << '\n';
    if (progress && (it % 10 == 0 || last))
      progress("iteration " + std::to_string(it) + " loss " + fmt(st.loss, "%.4f") +
               (val_text.empty() ? "" : " val " + val_text));
    return true;
  });
  result.log_csv = log.str();
  return result;
}

void save_run(const fs::path& path, const Model<float>& model, const RunInfo& info) {
  std::vector<NamedTensor> extras;
  if (!info.norm.mean.empty()) {
    extras.push_back({"preprocess.mean", info.norm.mean});
    extras.push_back({"preprocess.scale", TensorD::vector({info.norm.scale})});
  }
  extras.push_back({"run.seed", TensorD::vector({static_cast<double>(info.seed >> 32),
                                                 static_cast<double>(info.seed & 0xffffffffULL)})});
  extras.push_back({"fold.rotation", TensorD::vector({static_cast<double>(info.rotation)})});
  save_checkpoint(path, model, extras);
}

RunInfo load_run_info(const Checkpoint<float>& ckpt) {
  RunInfo info;
  if (const auto* m = ckpt.extra("preprocess.mean")) info.norm.mean = m->as<double>();
  if (const auto* s = ckpt.extra("preprocess.scale")) info.norm.scale = s->as<double>()[0];
  const auto* seed = ckpt.extra("run.seed");
  const auto* rot = ckpt.extra("fold.rotation");
  if (!seed || !rot) throw FormatError("checkpoint lacks run metadata (run.seed, fold.rotation)");
  const auto& sv = seed->as<double>();
  info.seed = (static_cast<std::uint64_t>(sv[0]) << 32) | static_cast<std::uint64_t>(sv[1]);
  info.rotation = static_cast<std::size_t>(rot->as<double>()[0]);
  return info;
}

void record_manifest(const fs::path& artifact, const std::string& command, const RunConfig& cfg,
                     std::uint64_t model_hash) {
  const fs::path manifest = artifact.parent_path() / "MANIFEST";
  const std::string name = artifact.filename().string();
  std::vector<std::string> lines;
  if (fs::exists(manifest)) {
    std::istringstream in(read_file(manifest));
    std::string line;
    while (std::getline(in, line))
      if (!line.empty() && line.rfind(name + " ", 0) != 0) lines.push_back(line);
  }
  lines.push_back(name + " command=" + command + " config_hash=" + hex64(cfg.hash()) +
                  " model_hash=" + hex64(model_hash) + " seed=" + std::to_string(cfg.seed));
  std::sort(lines.begin(), lines.end());
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_file_atomic(manifest, text);
}

namespace {

struct OpenRun {
  Checkpoint<float> ckpt;
  RunInfo info;
  Representation rep;
  Dataset data;
};

OpenRun open_run(const RunConfig& cfg, const fs::path& checkpoint) {
  if (!fs::exists(checkpoint)) throw DataError("checkpoint " + checkpoint.string() + " not found");
  auto ckpt = load_checkpoint<float>(checkpoint);
  if (ckpt.model.spec().classes() != cfg.classes())
    throw ConfigError("checkpoint has " + std::to_string(ckpt.model.spec().classes()) +
                      " classes but the " + to_string(cfg.task) + " task needs " +
                      std::to_string(cfg.classes()));
  RunInfo info = load_run_info(ckpt);
  const Representation rep = representation_of(ckpt.model.spec());
  const Representation wanted =
      cfg.model == ModelKind::AudioNet ? Representation::Waveform : Representation::Spectrogram;
  if (rep != wanted)
    throw ConfigError(std::string("representation mismatch: config model ") + to_string(cfg.model) +
                      " but the checkpoint takes " +
                      (rep == Representation::Waveform ? "waveforms" : "spectrograms"));
  if (rep == Representation::Spectrogram && info.norm.mean.empty())
    throw FormatError("spectrogram checkpoint lacks its preprocessing mean");
  // data and folds follow the seed the model was trained with
  Dataset data = load_dataset(cfg, info.seed, info.rotation);
  return OpenRun{std::move(ckpt), std::move(info), rep, std::move(data)};
}

fs::path out_file(const RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out);
  return cfg.out / name;
}

}  // namespace

std::string cmd_train(const RunConfig& cfg) {
  const Dataset data = load_dataset(cfg);
  TrainResult r = train_model(cfg, data);
  const auto ckpt = out_file(cfg, "model.ckpt");
  save_run(ckpt, r.model, RunInfo{r.norm, cfg.seed, data.rotation});
  const auto log = out_file(cfg, "train_log.csv");
  write_file_atomic(log, r.log_csv);
  const auto folds = out_file(cfg, "folds.txt");
  write_file_atomic(folds, data.plan->serialize());
  const std::uint64_t mh = r.model.spec().hash();
  for (const auto& p : {ckpt, log, folds}) record_manifest(p, "train", cfg, mh);
  return "trained " + std::to_string(cfg.train.iterations) + " iterations on " +
         std::to_string(data.train.size()) + " records; validation accuracy " +
         (r.validation_accuracy < 0 ? std::string("n/a") : fmt(r.validation_accuracy, "%.4f"));
}

std::string cmd_evaluate(const RunConfig& cfg, const std::vector<fs::path>& checkpoints) {
  if (checkpoints.empty()) throw ConfigError("evaluate needs at least one checkpoint");
  std::ostringstream csv;
  csv << "task,checkpoint,rotation,accuracy,n\n";
  std::vector<double> accs;
  std::uint64_t mh = 0;
  for (const auto& path : checkpoints) {
    const OpenRun run = open_run(cfg, path);
    mh = run.ckpt.model.spec().hash();
    const FixedSet test = make_fixed_set(run.data, run.data.test, run.rep, run.info.norm, cfg.task,
                                         cfg.stage_seed("test"), cfg.max_examples);
    const auto rep = evaluate_accuracy<float>(run.ckpt.model, test.examples, cfg.workers);
    accs.push_back(rep.accuracy());
    csv << to_string(cfg.task) << ',' << path.filename().string() << ',' << run.info.rotation << ','
        << fmt(rep.accuracy()) << ',' << rep.n << '\n';
  }
  const FoldSummary s = summarize_folds(accs);
  const auto file = out_file(cfg, "accuracy.csv");
  write_file_atomic(file, csv.str());
  const auto summary = out_file(cfg, "accuracy_summary.csv");
  write_file_atomic(summary, "task,folds,mean,stddev\n" + to_string(cfg.task) + "," +
                                 std::to_string(s.folds) + "," + fmt(s.mean) + "," + fmt(s.stddev) + "\n");
  record_manifest(file, "evaluate", cfg, mh);
  record_manifest(summary, "evaluate", cfg, mh);
  return "accuracy " + fmt(s.mean * 100, "%.2f") + "% +- " + fmt(s.stddev * 100, "%.2f") + "% over " +
         std::to_string(s.folds) + " checkpoint(s)";
}

std::string cmd_explain(const RunConfig& cfg, const fs::path& checkpoint) {
  const OpenRun run = open_run(cfg, checkpoint);
  const Model<float>& model = run.ckpt.model;

  PaddedSignal signal;
  std::string source;
  if (!cfg.explain_input.empty()) {
    Waveform w = read_wav(cfg.explain_input);
    if (w.sample_rate != kModelRate) w = resample_to_8k(w);
    std::mt19937_64 rng(cfg.stage_seed("explain"));
    signal = pad_random(w, rng);
    source = cfg.explain_input.string();
  } else {
    if (cfg.explain_index >= run.data.test.size())
      throw ConfigError("explain.index " + std::to_string(cfg.explain_index) + " out of range for " +
                        std::to_string(run.data.test.size()) + " test records");
    const std::size_t rec = run.data.test[cfg.explain_index];
    signal = place(run.data.records[rec], placement_seed(cfg.stage_seed("test"), rec));
    source = "test record " + std::to_string(cfg.explain_index);
  }

  const Tensor<float> input = make_input(run.rep, signal, run.info.norm);
  ForwardOptions fo;
  fo.record_trace = true;
  const auto fr = forward(model, input, fo);
  const std::size_t predicted = argmax(fr.logits);
  if (cfg.explain_target >= static_cast<long>(cfg.classes()))
    throw ConfigError("explain.target out of range");
  const std::size_t target =
      cfg.explain_target < 0 ? predicted : static_cast<std::size_t>(cfg.explain_target);
  const RelevanceMap<float> map = explain(model, *fr.trace, target, cfg.lrp);

  const auto rel_path = out_file(cfg, "relevance.bin");
  save_relevance(rel_path, map);
  const TensorD rel = map.relevance.cast<double>();
  Image img;
  if (run.rep == Representation::Waveform) {
    img = render_waveform(signal.samples, rel.data(), cfg.waveform_width);
  } else {
    const TensorD base = spectrogram_features(signal).values;
    img = render_heatmap(rel.reshaped({kCropped, kCropped}), cfg.underlay ? &base : nullptr);
  }
  const auto img_path = out_file(cfg, "heatmap.ppm");
  write_ppm(img_path, img);
  const std::uint64_t mh = model.spec().hash();
  record_manifest(rel_path, "explain", cfg, mh);
  record_manifest(img_path, "explain", cfg, mh);
  return "explained " + source + ": predicted " + std::to_string(predicted) + ", target " +
         std::to_string(target) + ", sum of relevance " + fmt(rel.sum(), "%.6g") + "; " + img.legend();
}

std::string cmd_perturb(const RunConfig& cfg, const fs::path& checkpoint) {
  const OpenRun run = open_run(cfg, checkpoint);
  const FixedSet test = make_fixed_set(run.data, run.data.test, run.rep, run.info.norm, cfg.task,
                                       cfg.stage_seed("test"), cfg.max_examples);
  std::vector<SelectionStrategy> strategies;
  for (auto k : cfg.strategies)
    strategies.push_back({k, cfg.stage_seed("perturb.random"), cfg.absolute_relevance});
  AuditLog audit;
  SweepOptions opt;
  opt.task = to_string(cfg.task);
  opt.classes = cfg.classes();
  opt.lrp = cfg.lrp;
  opt.workers = cfg.workers;
  opt.audit = &audit;
  const PerturbationCurve curve =
      perturbation_sweep<float>(run.ckpt.model, test.examples, strategies, cfg.fractions, opt);

  const auto csv = out_file(cfg, "perturbation.csv");
  write_file_atomic(csv, curve.to_csv());
  const auto meta = out_file(cfg, "perturbation.meta");
  write_file_atomic(meta, curve.metadata());
  const auto log = out_file(cfg, "perturbation_audit.jsonl");
  write_file_atomic(log, audit.text());
  const std::uint64_t mh = run.ckpt.model.spec().hash();
  for (const auto& p : {csv, meta, log}) record_manifest(p, "perturb", cfg, mh);
  return std::to_string(curve.points.size()) + " curve points over " +
         std::to_string(test.examples.size()) + " test examples";
}

std::string cmd_freqscale(const RunConfig& cfg, const fs::path& checkpoint) {
  const OpenRun run = open_run(cfg, checkpoint);
  if (run.rep != Representation::Spectrogram)
    throw ConfigError("frequency scaling needs a spectrogram model");
  if (cfg.task != Task::Gender) throw ConfigError("frequency scaling applies to the gender task");
  const FixedSet test = make_fixed_set(run.data, run.data.test, run.rep, run.info.norm, cfg.task,
                                       cfg.stage_seed("test"), cfg.max_examples);
  std::vector<TensorD> db(test.signals.size());
  parallel_for(db.size(), cfg.workers,
               [&](std::size_t k) { db[k] = spectrogram_features(test.signals[k]).values; });

  const std::vector<std::pair<double, double>> rows{{1.0, 1.0},
                                                    {cfg.male_factor, 1.0},
                                                    {1.0, cfg.female_factor},
                                                    {cfg.male_factor, cfg.female_factor}};
  std::ostringstream csv;
  csv << "task,male_factor,female_factor,accuracy,n\n";
  double flipped = 0.0;
  for (const auto& [mf, ff] : rows) {
    std::vector<char> hit(db.size(), 0);
    parallel_for(db.size(), cfg.workers, [&](std::size_t k) {
      const auto& ex = test.examples[k];
      const double factor = ex.label == static_cast<std::size_t>(Gender::Male) ? mf : ff;
      const TensorD& values = db[k];
      const auto input = normalized_spectrogram(factor == 1.0 ? values : scale_frequency_axis(values, factor),
                                                run.info.norm);
      hit[k] = predict_class(run.ckpt.model, input) == ex.label;
    });
    const double acc = static_cast<double>(std::count(hit.begin(), hit.end(), 1)) /
                       static_cast<double>(hit.size());
    flipped = acc;
    csv << to_string(cfg.task) << ',' << fmt(mf, "%.6g") << ',' << fmt(ff, "%.6g") << ',' << fmt(acc)
        << ',' << hit.size() << '\n';
  }
  const auto file = out_file(cfg, "freqscale.csv");
  write_file_atomic(file, csv.str());
  record_manifest(file, "freqscale", cfg, run.ckpt.model.spec().hash());
  return "accuracy with both classes rescaled: " + fmt(flipped * 100, "%.2f") + "%";
}

std::string cmd_synth(const RunConfig& cfg) {
  if (!cfg.synthetic) throw ConfigError("synth needs data.source = synthetic");
  SynthConfig sc = cfg.synth;
  sc.classes = cfg.classes();
  const auto records = synth_generate(sc, mix_seed(cfg.seed, "synth"));
  const fs::path root = cfg.out / "synth";
  nlohmann::ordered_json meta;
  std::map<std::string, Gender> genders;
  for (const auto& r : records) {
    genders[r.speaker] = r.gender;
    const std::string name = std::to_string(r.digit) + "_" + r.speaker + "_" + std::to_string(r.take) + ".wav";
    write_wav(root / r.speaker / name, *r.buffer);
  }
  for (const auto& [spk, g] : genders) meta[spk] = {{"gender", g == Gender::Male ? "male" : "female"}};
  const fs::path meta_path = root / kMetadataFile;
  write_file_atomic(meta_path, meta.dump(2) + "\n");
  record_manifest(meta_path, "synth", cfg, 0);
  return "wrote " + std::to_string(records.size()) + " recordings from " +
         std::to_string(genders.size()) + " speakers to " + root.string();
}

}  // namespace audiolrp
