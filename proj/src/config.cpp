#include "audiolrp/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

#include "audiolrp/errors.hpp"
#include "audiolrp/io.hpp"
#include "audiolrp/seed.hpp"

namespace audiolrp {

std::string to_string(ModelKind kind) { return kind == ModelKind::AudioNet ? "audionet" : "alexnet"; }

namespace {

std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto num = [](auto member) {
      return [member](RunConfig& c, const std::string& k, const std::string& v) {
        c.*member = to_double(k, v);
      };
    };
    auto count = [](auto member) {
      return [member](RunConfig& c, const std::string& k, const std::string& v) {
        c.*member = static_cast<std::remove_reference_t<decltype(c.*member)>>(to_u64(k, v));
      };
    };
    t["task"] = [](RunConfig& c, const std::string&, const std::string& v) { c.task = parse_task(v); };
    t["model"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      if (v == "audionet") c.model = ModelKind::AudioNet;
      else if (v == "alexnet" || v == "alexnet-variant") c.model = ModelKind::AlexNet;
      else throw ConfigError(k + ": unknown model '" + v + "' (expected audionet or alexnet)");
    };
    t["preset"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      if (v != "desk" && v != "paper") throw ConfigError(k + ": expected desk or paper");
      c.preset = v;
    };
    t["seed"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); };
    t["out"] = [](RunConfig& c, const std::string&, const std::string& v) { c.out = v; };
    t["workers"] = count(&RunConfig::workers);

    t["data.source"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      if (v == "synthetic") c.synthetic = true;
      else if (v == "corpus") c.synthetic = false;
      else throw ConfigError(k + ": expected synthetic or corpus");
    };
    t["data.root"] = [](RunConfig& c, const std::string&, const std::string& v) { c.data_root = v; };
    t["data.rotation"] = count(&RunConfig::rotation);
    t["data.max_examples"] = count(&RunConfig::max_examples);

    auto synth_num = [](double SynthConfig::*m) {
      return [m](RunConfig& c, const std::string& k, const std::string& v) { c.synth.*m = to_double(k, v); };
    };
    auto synth_count = [](std::size_t SynthConfig::*m) {
      return [m](RunConfig& c, const std::string& k, const std::string& v) { c.synth.*m = to_u64(k, v); };
    };
    t["synth.per_class"] = synth_count(&SynthConfig::per_class);
    t["synth.speakers"] = synth_count(&SynthConfig::speakers);
    t["synth.harmonics"] = synth_count(&SynthConfig::harmonics);
    t["synth.noise"] = synth_num(&SynthConfig::noise);
    t["synth.amplitude"] = synth_num(&SynthConfig::amplitude);
    t["synth.min_seconds"] = synth_num(&SynthConfig::min_seconds);
    t["synth.max_seconds"] = synth_num(&SynthConfig::max_seconds);
    t["synth.male_f0"] = synth_num(&SynthConfig::male_f0);
    t["synth.female_f0"] = synth_num(&SynthConfig::female_f0);
    t["synth.f0_jitter"] = synth_num(&SynthConfig::f0_jitter);
    t["synth.digit_base_hz"] = synth_num(&SynthConfig::digit_base_hz);
    t["synth.digit_step_hz"] = synth_num(&SynthConfig::digit_step_hz);
    t["synth.burst_seconds"] = synth_num(&SynthConfig::digit_burst_seconds);
    t["synth.carrier"] = synth_num(&SynthConfig::digit_carrier);
    t["synth.pitch_spread"] = synth_num(&SynthConfig::speaker_pitch_spread);

    t["model.width_scale"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.arch.width_scale = to_double(k, v);
    };
    t["model.bias"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.arch.bias = to_bool(k, v);
    };
    t["model.first_layer_bias"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.arch.first_layer_bias = to_bool(k, v);
    };
    t["model.dropout"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.arch.dropout = to_double(k, v);
    };

    auto train_num = [](double TrainConfig::*m) {
      return [m](RunConfig& c, const std::string& k, const std::string& v) { c.train.*m = to_double(k, v); };
    };
    auto train_count = [](std::size_t TrainConfig::*m) {
      return [m](RunConfig& c, const std::string& k, const std::string& v) { c.train.*m = to_u64(k, v); };
    };
    t["train.learning_rate"] = train_num(&TrainConfig::learning_rate);
    t["train.momentum"] = train_num(&TrainConfig::momentum);
    t["train.clip"] = train_num(&TrainConfig::clip);
    t["train.batch_size"] = train_count(&TrainConfig::batch_size);
    t["train.iterations"] = train_count(&TrainConfig::iterations);
    t["train.halving_interval"] = train_count(&TrainConfig::halving_interval);
    t["train.eval_interval"] = count(&RunConfig::eval_interval);

    t["lrp.epsilon"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.lrp.epsilon = to_double(k, v);
    };
    t["lrp.bias"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      if (v == "absorb") c.lrp.bias = BiasMode::Absorb;
      else if (v == "distribute") c.lrp.bias = BiasMode::Distribute;
      else throw ConfigError(k + ": expected absorb or distribute");
    };
    t["lrp.init"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      if (v == "logit") c.lrp.init = InitMode::TargetLogit;
      else if (v == "unit") c.lrp.init = InitMode::Unit;
      else throw ConfigError(k + ": expected logit or unit");
    };

    t["perturb.strategies"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.strategies.clear();
      for (const auto& s : to_list(v)) c.strategies.push_back(parse_strategy(s));
      if (c.strategies.empty()) throw ConfigError(k + ": empty list");
    };
    t["perturb.fractions"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.fractions.clear();
      for (const auto& s : to_list(v)) c.fractions.push_back(to_double(k, s));
      if (c.fractions.empty()) throw ConfigError(k + ": empty list");
    };
    t["perturb.absolute"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.absolute_relevance = to_bool(k, v);
    };

    t["freqscale.male_factor"] = num(&RunConfig::male_factor);
    t["freqscale.female_factor"] = num(&RunConfig::female_factor);

    t["explain.index"] = count(&RunConfig::explain_index);
    t["explain.input"] = [](RunConfig& c, const std::string&, const std::string& v) { c.explain_input = v; };
    t["explain.target"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.explain_target = v == "predicted" ? -1 : static_cast<long>(to_u64(k, v));
    };
    t["heatmap.underlay"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.underlay = to_bool(k, v);
    };
    t["heatmap.width"] = count(&RunConfig::waveform_width);
    return t;
  }();
  return table;
}

/// Training recipes. Desk presets keep the topology and shrink width and
/// iteration counts so a run finishes in minutes on one core.
void apply_preset(RunConfig& c) {
  TrainConfig& t = c.train;
  t = TrainConfig{};
  c.arch = PresetOptions{};
  c.synth = SynthConfig{};
  c.synth.classes = c.classes();
  if (c.preset == "paper") {
    c.synthetic = false;
    t.batch_size = 100;
    t.momentum = 0.9;
    t.clip = 5.0;
    if (c.model == ModelKind::AlexNet) {
      t.learning_rate = 0.001;
      t.iterations = 10000;
      t.halving_interval = 2500;
    } else {
      t.learning_rate = 0.0001;
      t.iterations = c.task == Task::Digit ? 50000 : 10000;
      t.halving_interval = c.task == Task::Digit ? 10000 : 5000;
    }
    return;
  }
  c.synthetic = true;
  c.arch.width_scale = 0.25;
  c.arch.first_layer_bias = false;
  c.synth.per_class = c.task == Task::Digit ? 60 : 100;
  if (c.model == ModelKind::AudioNet) {
    t.learning_rate = 0.01;
    t.batch_size = 32;
    t.iterations = 200;
    t.halving_interval = 100;
  } else {
    t.learning_rate = 0.003;
    t.batch_size = 16;
    t.iterations = 300;
    t.halving_interval = 200;
  }
}

}  // namespace

std::uint64_t RunConfig::stage_seed(std::string_view stage) const { return mix_seed(seed, stage); }

std::string RunConfig::canonical() const {
  std::map<std::string, std::string> kv;
  kv["task"] = to_string(task);
  kv["model"] = to_string(model);
  kv["preset"] = preset;
  kv["seed"] = std::to_string(seed);
  kv["data.source"] = synthetic ? "synthetic" : "corpus";
  kv["data.root"] = synthetic ? "" : data_root.string();
  kv["data.rotation"] = std::to_string(rotation);
  kv["data.max_examples"] = std::to_string(max_examples);
  if (synthetic) {
    kv["synth.per_class"] = std::to_string(synth.per_class);
    kv["synth.speakers"] = std::to_string(synth.speakers);
    kv["synth.harmonics"] = std::to_string(synth.harmonics);
    kv["synth.noise"] = fmt_double(synth.noise);
    kv["synth.amplitude"] = fmt_double(synth.amplitude);
    kv["synth.min_seconds"] = fmt_double(synth.min_seconds);
    kv["synth.max_seconds"] = fmt_double(synth.max_seconds);
    kv["synth.male_f0"] = fmt_double(synth.male_f0);
    kv["synth.female_f0"] = fmt_double(synth.female_f0);
    kv["synth.f0_jitter"] = fmt_double(synth.f0_jitter);
    kv["synth.digit_base_hz"] = fmt_double(synth.digit_base_hz);
    kv["synth.digit_step_hz"] = fmt_double(synth.digit_step_hz);
    kv["synth.burst_seconds"] = fmt_double(synth.digit_burst_seconds);
    kv["synth.carrier"] = fmt_double(synth.digit_carrier);
    kv["synth.pitch_spread"] = fmt_double(synth.speaker_pitch_spread);
  }
  kv["model.width_scale"] = fmt_double(arch.width_scale);
  kv["model.bias"] = arch.bias ? "true" : "false";
  kv["model.first_layer_bias"] = arch.first_layer_bias ? "true" : "false";
  kv["model.dropout"] = fmt_double(arch.dropout);
  kv["train.learning_rate"] = fmt_double(train.learning_rate);
  kv["train.momentum"] = fmt_double(train.momentum);
  kv["train.clip"] = fmt_double(train.clip);
  kv["train.batch_size"] = std::to_string(train.batch_size);
  kv["train.iterations"] = std::to_string(train.iterations);
  kv["train.halving_interval"] = std::to_string(train.halving_interval);
  kv["train.eval_interval"] = std::to_string(eval_interval);
  kv["lrp.epsilon"] = fmt_double(lrp.epsilon);
  kv["lrp.bias"] = lrp.bias == BiasMode::Absorb ? "absorb" : "distribute";
  kv["lrp.init"] = lrp.init == InitMode::TargetLogit ? "logit" : "unit";
  std::string s, f;
  for (auto k : strategies) s += (s.empty() ? "" : ",") + to_string(k);
  for (double x : fractions) f += (f.empty() ? "" : ",") + fmt_double(x);
  kv["perturb.strategies"] = s;
  kv["perturb.fractions"] = f;
  kv["perturb.absolute"] = absolute_relevance ? "true" : "false";
  kv["freqscale.male_factor"] = fmt_double(male_factor);
  kv["freqscale.female_factor"] = fmt_double(female_factor);
  kv["explain.index"] = std::to_string(explain_index);
  kv["explain.input"] = explain_input.string();
  kv["explain.target"] = std::to_string(explain_target);
  kv["heatmap.underlay"] = underlay ? "true" : "false";
  kv["heatmap.width"] = std::to_string(waveform_width);
  std::string out_text;
  for (const auto& [k, v] : kv) out_text += k + "=" + v + "\n";
  return out_text;
}

std::uint64_t RunConfig::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

RunConfig parse_config(const std::string& text, const Overrides& overrides) {
  Overrides entries;
  std::istringstream in(text);
  std::string raw, section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": bad section");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(std::string_view(line).substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    entries.emplace_back(key, trim(std::string_view(line).substr(eq + 1)));
  }
  entries.insert(entries.end(), overrides.begin(), overrides.end());

  const auto& table = setters();
  for (const auto& [k, v] : entries)
    if (!table.count(k)) throw ConfigError("unknown config key '" + k + "'");

  // preset selection first, then everything else on top of the preset
  RunConfig c;
  for (const auto& [k, v] : entries)
    if (k == "preset" || k == "model" || k == "task") table.at(k)(c, k, v);
  apply_preset(c);
  for (const auto& [k, v] : entries)
    if (k != "preset" && k != "model" && k != "task") table.at(k)(c, k, v);

  c.synth.classes = c.classes();
  if (!c.synthetic && c.data_root.empty()) {
    if (const char* env = std::getenv(kDataEnv)) c.data_root = env;
    else throw ConfigError("corpus data needs data.root or the " + std::string(kDataEnv) + " variable");
  }
  c.train.seed = c.stage_seed("train");
  c.train.validate();
  c.lrp.validate();
  if (c.synthetic) c.synth.validate();
  if (!(c.arch.width_scale > 0.0)) throw ConfigError("model.width_scale must be positive");
  if (!(c.arch.dropout >= 0.0 && c.arch.dropout < 1.0)) throw ConfigError("model.dropout must be in [0, 1)");
  for (double f : c.fractions)
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("perturb.fractions must lie in [0, 1]");
  if (!(c.male_factor > 0.0) || !(c.female_factor > 0.0))
    throw ConfigError("frequency scale factors must be positive");
  return c;
}

RunConfig load_config(const std::filesystem::path& path, const Overrides& overrides) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file " + path.string() + " not found");
  return parse_config(read_file(path), overrides);
}

}  // namespace audiolrp
