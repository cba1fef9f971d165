#include <CLI11.hpp>

#include <iostream>

#include "audiolrp/errors.hpp"
#include "audiolrp/pipeline.hpp"

using namespace audiolrp;

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4, kOther = 1 };

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<unsigned> workers;
  std::vector<std::string> checkpoints;
  std::vector<std::string> sets;
};

RunConfig resolve(const Options& o) {
  Overrides ov;
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    ov.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (o.seed) ov.emplace_back("seed", std::to_string(*o.seed));
  if (!o.out.empty()) ov.emplace_back("out", o.out);
  if (o.workers) ov.emplace_back("workers", std::to_string(*o.workers));
  return o.config.empty() ? parse_config("", ov) : load_config(o.config, ov);
}

std::filesystem::path one_checkpoint(const Options& o, const RunConfig& cfg) {
  if (o.checkpoints.size() > 1) throw ConfigError("this command takes a single --checkpoint");
  return o.checkpoints.empty() ? cfg.out / "model.ckpt" : std::filesystem::path(o.checkpoints[0]);
}

std::string run(const std::string& command, const Options& o) {
  const RunConfig cfg = resolve(o);
  if (command == "train") return cmd_train(cfg);
  if (command == "synth") return cmd_synth(cfg);
  if (command == "evaluate") {
    std::vector<std::filesystem::path> paths(o.checkpoints.begin(), o.checkpoints.end());
    if (paths.empty()) paths.push_back(cfg.out / "model.ckpt");
    return cmd_evaluate(cfg, paths);
  }
  const auto ckpt = one_checkpoint(o, cfg);
  if (command == "explain") return cmd_explain(cfg, ckpt);
  if (command == "perturb") return cmd_perturb(cfg, ckpt);
  return cmd_freqscale(cfg, ckpt);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio classification with layer-wise relevance propagation"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"train", "train a model and write model.ckpt, train_log.csv, folds.txt"},
      {"evaluate", "test accuracy of one or more checkpoints"},
      {"explain", "relevance map and heatmap.ppm for one input"},
      {"perturb", "accuracy under random, amplitude and relevance-guided zeroing"},
      {"freqscale", "accuracy of a spectrogram gender model under frequency rescaling"},
      {"synth", "write the synthetic corpus as WAV files"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config,-c", o.config, "key = value config file");
    sub->add_option("--seed", o.seed, "top-level seed");
    sub->add_option("--out,-o", o.out, "output directory");
    sub->add_option("--workers,-j", o.workers, "worker threads (0 = all cores)");
    sub->add_option("--set", o.sets, "override a config key, key=value")->take_all();
    if (name != "train" && name != "synth")
      sub->add_option("--checkpoint", o.checkpoints, "checkpoint (default OUT/model.ckpt)");
  }
  app.footer("Config keys: " + [] {
    std::string s;
    for (const auto& k : config_keys()) s += (s.empty() ? "" : ", ") + k;
    return s;
  }());
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    std::cout << run(command, o) << '\n';
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
}
