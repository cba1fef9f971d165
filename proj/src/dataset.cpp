#include "audiolrp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "audiolrp/errors.hpp"
#include "audiolrp/io.hpp"
#include "audiolrp/seed.hpp"

namespace audiolrp {

namespace fs = std::filesystem;

std::string to_string(Task task) { return task == Task::Digit ? "digit" : "gender"; }

Task parse_task(const std::string& text) {
  if (text == "digit") return Task::Digit;
  if (text == "gender") return Task::Gender;
  throw ConfigError("unknown task '" + text + "' (expected digit or gender)");
}

std::size_t AudioRecord::label(Task task) const {
  return task == Task::Digit ? static_cast<std::size_t>(digit)
                             : static_cast<std::size_t>(gender);
}

Waveform AudioRecord::load_8k() const {
  if (buffer) {
    if (buffer->sample_rate != kModelRate)
      throw DataError("in-memory record for speaker " + speaker + " is not at 8 kHz");
    return *buffer;
  }
  Waveform w = read_wav(path);
  return w.sample_rate == kModelRate ? w : resample_to_8k(w);
}

namespace {

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

/// Fisher-Yates on raw engine output so the order does not depend on the
/// standard library's distribution implementations.
template <typename V>
void seeded_shuffle(V& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string join_list(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

}  // namespace

AudioRecord parse_record_name(const fs::path& file) {
  const std::string name = file.filename().string();
  auto bad = [&](const std::string& why) {
    return DataError("unexpected file name '" + file.string() + "': " + why +
                     " (expected <digit>_<speaker>_<take>.wav)");
  };
  if (file.extension() != ".wav") throw bad("not a .wav file");
  const std::string stem = file.stem().string();
  const auto a = stem.find('_');
  const auto b = a == std::string::npos ? a : stem.find('_', a + 1);
  if (b == std::string::npos || stem.find('_', b + 1) != std::string::npos)
    throw bad("wrong number of fields");
  AudioRecord r;
  r.path = file;
  r.speaker = stem.substr(a + 1, b - a - 1);
  if (!parse_int(std::string_view(stem).substr(0, a), r.digit) || r.digit < 0 || r.digit > 9)
    throw bad("digit must be 0-9");
  if (r.speaker.empty()) throw bad("empty speaker id");
  if (!parse_int(std::string_view(stem).substr(b + 1), r.take) || r.take < 0)
    throw bad("take must be a non-negative integer");
  return r;
}

std::vector<AudioRecord> scan_audiomnist(const fs::path& root, const std::string& metadata_file) {
  if (!fs::is_directory(root)) throw DataError("data root " + root.string() + " is not a directory");
  std::map<std::string, Gender> genders;
  const fs::path meta_path = root / metadata_file;
  if (!fs::exists(meta_path))
    throw DataError("metadata file " + meta_path.string() + " not found");
  try {
    const auto meta = nlohmann::json::parse(read_file(meta_path));
    for (const auto& [speaker, fields] : meta.items()) {
      if (!fields.is_object() || !fields.contains("gender"))
        throw DataError(meta_path.string() + ": speaker " + speaker + " has no gender field");
      std::string g = fields.at("gender").get<std::string>();
      std::transform(g.begin(), g.end(), g.begin(), [](unsigned char c) { return std::tolower(c); });
      if (g == "male") genders[speaker] = Gender::Male;
      else if (g == "female") genders[speaker] = Gender::Female;
      else throw DataError(meta_path.string() + ": speaker " + speaker + " has gender '" + g + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  }

  std::vector<AudioRecord> records;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && entry.path().extension() == ".wav") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      AudioRecord r = parse_record_name(f);
      if (r.speaker != dir.filename().string())
        throw DataError(f.string() + ": speaker id does not match directory " +
                        dir.filename().string());
      const auto g = genders.find(r.speaker);
      if (g == genders.end())
        throw DataError("speaker " + r.speaker + " is missing from " + meta_path.string());
      r.gender = g->second;
      records.push_back(std::move(r));
    }
  }
  if (records.empty()) throw DataError("no recordings found under " + root.string());
  return records;
}

void check_full_corpus(const std::vector<AudioRecord>& records) {
  std::map<std::pair<std::string, int>, int> takes;
  std::set<std::string> speakers;
  for (const auto& r : records) {
    speakers.insert(r.speaker);
    ++takes[{r.speaker, r.digit}];
  }
  std::ostringstream msg;
  if (records.size() != 30000) msg << records.size() << " recordings (expected 30000); ";
  if (speakers.size() != 60) msg << speakers.size() << " speakers (expected 60); ";
  for (const auto& [key, n] : takes)
    if (n != 50) {
      msg << "speaker " << key.first << " digit " << key.second << " has " << n << " takes; ";
      break;
    }
  if (!msg.str().empty()) throw DataError("incomplete corpus: " + msg.str());
}

std::optional<FoldRole> FoldPlan::role(std::size_t rotation, const std::string& speaker) const {
  const std::size_t n = splits.size();
  if (rotation >= n)
    throw ConfigError("rotation " + std::to_string(rotation) + " out of range for " +
                      std::to_string(n) + " folds");
  for (std::size_t s = 0; s < n; ++s) {
    if (std::find(splits[s].begin(), splits[s].end(), speaker) == splits[s].end()) continue;
    if (s == rotation) return FoldRole::Test;
    if (s == (rotation + 1) % n) return FoldRole::Validation;
    return FoldRole::Train;
  }
  return std::nullopt;
}

std::string FoldPlan::serialize() const {
  std::ostringstream out;
  out << "task=" << to_string(task) << "\nseed=" << seed << "\nfolds=" << splits.size() << "\n";
  for (std::size_t s = 0; s < splits.size(); ++s)
    out << "split" << s << "=" << join_list(splits[s]) << "\n";
  if (task == Task::Gender) out << "male_subset=" << join_list(male_subset) << "\n";
  return out.str();
}

FoldPlan FoldPlan::parse(const std::string& text) {
  FoldPlan plan;
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("fold plan: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  try {
    plan.task = parse_task(kv.at("task"));
    plan.seed = std::stoull(kv.at("seed"));
    const std::size_t n = std::stoul(kv.at("folds"));
    for (std::size_t s = 0; s < n; ++s) plan.splits.push_back(split_list(kv.at("split" + std::to_string(s))));
    if (plan.task == Task::Gender) plan.male_subset = split_list(kv.at("male_subset"));
  } catch (const std::out_of_range&) {
    throw FormatError("fold plan: missing field");
  } catch (const std::invalid_argument&) {
    throw FormatError("fold plan: bad number");
  }
  return plan;
}

FoldPlan make_folds(const std::vector<AudioRecord>& records, Task task, std::uint64_t seed) {
  std::set<std::string> male_set, female_set;
  for (const auto& r : records) (r.gender == Gender::Male ? male_set : female_set).insert(r.speaker);
  for (const auto& s : male_set)
    if (female_set.count(s)) throw DataError("speaker " + s + " is labelled with both genders");

  FoldPlan plan;
  plan.task = task;
  plan.seed = seed;
  std::mt19937_64 rng(mix_seed(seed, "folds"));

  if (task == Task::Digit) {
    constexpr std::size_t kFolds = 5;
    std::vector<std::string> speakers(male_set.begin(), male_set.end());
    speakers.insert(speakers.end(), female_set.begin(), female_set.end());
    std::sort(speakers.begin(), speakers.end());
    if (speakers.size() < kFolds)
      throw DataError("digit task needs at least 5 speakers, found " + std::to_string(speakers.size()));
    seeded_shuffle(speakers, rng);
    plan.splits.resize(kFolds);
    for (std::size_t i = 0; i < speakers.size(); ++i) plan.splits[i % kFolds].push_back(speakers[i]);
  } else {
    constexpr std::size_t kFolds = 4, kPerGender = 12;
    if (female_set.size() < kPerGender || male_set.size() < kPerGender)
      throw DataError("gender task needs 12 female and 12 male speakers, found " +
                      std::to_string(female_set.size()) + " female and " +
                      std::to_string(male_set.size()) + " male");
    std::vector<std::string> females(female_set.begin(), female_set.end());
    std::vector<std::string> males(male_set.begin(), male_set.end());
    seeded_shuffle(females, rng);
    seeded_shuffle(males, rng);
    females.resize(kPerGender);
    males.resize(kPerGender);
    plan.male_subset = males;
    std::sort(plan.male_subset.begin(), plan.male_subset.end());
    plan.splits.resize(kFolds);
    for (std::size_t i = 0; i < kPerGender; ++i) {
      plan.splits[i % kFolds].push_back(females[i]);
      plan.splits[i % kFolds].push_back(males[i]);
    }
  }
  for (auto& s : plan.splits) std::sort(s.begin(), s.end());
  return plan;
}

std::vector<const AudioRecord*> select_role(const std::vector<AudioRecord>& records,
                                            const FoldPlan& plan, std::size_t rotation,
                                            FoldRole role) {
  std::vector<const AudioRecord*> out;
  for (const auto& r : records)
    if (plan.role(rotation, r.speaker) == role) out.push_back(&r);
  return out;
}

void SynthConfig::validate() const {
  if (classes != 2 && classes != 10) throw ConfigError("synthetic data supports 2 or 10 classes");
  if (per_class == 0) throw ConfigError("per_class must be positive");
  if (speakers < 2 || speakers % 2 != 0) throw ConfigError("speakers must be even and >= 2");
  if (!(min_seconds > 0.0 && min_seconds <= max_seconds &&
        max_seconds * kModelRate <= static_cast<double>(kSignalLength)))
    throw ConfigError("durations must satisfy 0 < min <= max <= 1 s");
  if (!(f0_jitter >= 0.0 && f0_jitter < 1.0)) throw ConfigError("f0_jitter must be in [0, 1)");
  if (harmonics == 0) throw ConfigError("harmonics must be positive");
  if (!(noise >= 0.0) || !(amplitude > 0.0)) throw ConfigError("bad noise or amplitude");
  if (!(digit_burst_seconds > 0.0 && digit_burst_seconds <= min_seconds))
    throw ConfigError("digit_burst_seconds must be in (0, min_seconds]");
  if (!(digit_carrier >= 0.0)) throw ConfigError("digit_carrier must be >= 0");
  const double top = digit_base_hz + digit_step_hz * 9.0;
  if (classes == 10 && !(top * (1.0 + speaker_pitch_spread) * 2.0 < kModelRate / 2.0))
    throw ConfigError("digit prototypes exceed the 4 kHz band");
}

namespace {

void add_harmonics(std::vector<double>& x, double f0, std::size_t harmonics, double gain,
                   std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  for (std::size_t h = 1; h <= harmonics; ++h) {
    const double f = f0 * static_cast<double>(h);
    if (f >= kModelRate / 2.0) break;
    const double phase = u(rng);
    const double w = 2.0 * std::numbers::pi * f / kModelRate;
    for (std::size_t t = 0; t < x.size(); ++t)
      x[t] += gain * std::sin(w * static_cast<double>(t) + phase) / static_cast<double>(h);
  }
}

void normalize_peak(std::vector<double>& x, double target) {
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : x) v *= target / peak;
}

}  // namespace

std::vector<AudioRecord> synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t half = cfg.speakers / 2;
  auto speaker_id = [](std::size_t s) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "s%02zu", s);
    return std::string(buf);
  };
  // speakers [0, half) are male, [half, speakers) female
  std::vector<double> pitch(cfg.speakers);
  {
    std::mt19937_64 rng(mix_seed(seed, "speakers"));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& p : pitch) p = 1.0 + cfg.speaker_pitch_spread * u(rng);
  }

  std::vector<AudioRecord> out;
  out.reserve(cfg.classes * cfg.per_class);
  const double rate = kModelRate;
  const double ramp = 0.02 * rate;
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    for (std::size_t i = 0; i < cfg.per_class; ++i) {
      std::mt19937_64 rng(mix_seed(seed, mix_seed(c, i)));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::normal_distribution<double> gauss(0.0, 1.0);

      AudioRecord r;
      std::size_t spk;
      if (cfg.classes == 2) {
        spk = (c == 0 ? 0 : half) + i % half;
        r.gender = c == 0 ? Gender::Male : Gender::Female;
        r.digit = static_cast<int>(i % 10);
      } else {
        spk = (i + c) % cfg.speakers;
        r.gender = spk < half ? Gender::Male : Gender::Female;
        r.digit = static_cast<int>(c);
      }
      r.speaker = speaker_id(spk);
      r.take = static_cast<int>(i);

      const auto n = static_cast<std::size_t>(
          std::lround((cfg.min_seconds + (cfg.max_seconds - cfg.min_seconds) * u(rng)) * rate));
      std::vector<double> x(n, 0.0);
      const double two_pi = 2.0 * std::numbers::pi;
      if (cfg.classes == 2) {
        const double base = c == 0 ? cfg.male_f0 : cfg.female_f0;
        add_harmonics(x, base * (1.0 + cfg.f0_jitter * (2.0 * u(rng) - 1.0)), cfg.harmonics, 1.0, rng);
      } else {
        // class-neutral voiced carrier plus a short class-specific burst
        const double f0 = (r.gender == Gender::Male ? cfg.male_f0 : cfg.female_f0) * pitch[spk];
        add_harmonics(x, f0, cfg.harmonics, 1.0, rng);
        normalize_peak(x, cfg.digit_carrier);
        const auto len = std::min(n, static_cast<std::size_t>(std::lround(cfg.digit_burst_seconds * rate)));
        const auto start = static_cast<std::size_t>(u(rng) * static_cast<double>(n - len));
        const double f = (cfg.digit_base_hz + cfg.digit_step_hz * static_cast<double>(c)) * pitch[spk];
        const double am = 20.0 + 10.0 * static_cast<double>(c);
        const double p1 = two_pi * u(rng), p2 = two_pi * u(rng);
        std::vector<double> burst(len);
        for (std::size_t t = 0; t < len; ++t) {
          const double s = static_cast<double>(t) / rate;
          const double win = 0.5 - 0.5 * std::cos(two_pi * static_cast<double>(t) / static_cast<double>(len));
          burst[t] = win * (0.75 + 0.25 * std::cos(two_pi * am * s)) *
                     (std::sin(two_pi * f * s + p1) + 0.4 * std::sin(two_pi * 2.0 * f * s + p2));
        }
        normalize_peak(burst, 1.0);
        for (std::size_t t = 0; t < len; ++t) x[start + t] += burst[t];
      }
      normalize_peak(x, 1.0);
      for (std::size_t t = 0; t < n; ++t) {
        const double d = static_cast<double>(std::min(t, n - 1 - t));
        const double env = d < ramp ? 0.5 - 0.5 * std::cos(std::numbers::pi * d / ramp) : 1.0;
        x[t] = cfg.amplitude * (env * x[t] + cfg.noise * gauss(rng));
        x[t] = std::clamp(x[t], -1.0, 1.0);
      }
      r.buffer = Waveform{std::move(x), kModelRate};
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace audiolrp
