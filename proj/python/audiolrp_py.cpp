#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "audiolrp/errors.hpp"
#include "audiolrp/pipeline.hpp"

namespace py = pybind11;
using namespace audiolrp;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const Array& a) {
  return std::vector<double>(a.data(), a.data() + a.size());
}

TensorD to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return TensorD(shape, to_vector(a));
}

template <typename T>
Array to_array(const Tensor<T>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  double* dst = out.mutable_data();
  for (std::size_t i = 0; i < t.size(); ++i) dst[i] = static_cast<double>(t[i]);
  return out;
}

Array to_array(const std::vector<double>& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

PaddedSignal padded(const Array& samples) {
  if (samples.ndim() != 1 || static_cast<std::size_t>(samples.size()) != kSignalLength)
    throw ShapeError("expected 8000 samples");
  PaddedSignal p;
  p.samples = to_vector(samples);
  p.length = kSignalLength;
  return p;
}

Overrides to_overrides(const std::map<std::string, std::string>& m) {
  return Overrides(m.begin(), m.end());
}

/// A trained checkpoint with its preprocessing.
class Classifier {
 public:
  explicit Classifier(const std::filesystem::path& path)
      : ckpt_(load_checkpoint<float>(path)),
        info_(load_run_info(ckpt_)),
        rep_(representation_of(ckpt_.model.spec())) {}

  std::size_t classes() const { return ckpt_.model.spec().classes(); }
  std::string descriptor() const { return ckpt_.model.spec().descriptor(); }
  bool spectrogram() const { return rep_ == Representation::Spectrogram; }

  Array logits(const Array& samples) const {
    return to_array(predict_logits(ckpt_.model, input(samples)));
  }

  Array relevance(const Array& samples, std::optional<std::size_t> target, double epsilon) const {
    const auto x = input(samples);
    auto fr = forward(ckpt_.model, x, {.record_trace = true});
    LrpConfig cfg;
    cfg.epsilon = epsilon;
    const auto map = explain(ckpt_.model, *fr.trace, target.value_or(argmax(fr.logits)), cfg);
    if (spectrogram()) return to_array(map.relevance.reshaped({kCropped, kCropped}));
    return to_array(map.relevance.reshaped({kSignalLength}));
  }

 private:
  Tensor<float> input(const Array& samples) const {
    return make_input(rep_, padded(samples), info_.norm);
  }

  Checkpoint<float> ckpt_;
  RunInfo info_;
  Representation rep_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Audio classification and layer-wise relevance propagation";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  static py::exception<ConfigError> config_error(m, "ConfigError", error.ptr());
  static py::exception<DataError> data_error(m, "DataError", error.ptr());
  static py::exception<NumericError> numeric_error(m, "NumericError", error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const DataError& e) {
      py::set_error(data_error, e.what());
    } catch (const NumericError& e) {
      py::set_error(numeric_error, e.what());
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  m.attr("SIGNAL_LENGTH") = kSignalLength;
  m.attr("SAMPLE_RATE") = kModelRate;

  m.def(
      "read_wav",
      [](const std::filesystem::path& path) {
        const Waveform w = read_wav(path);
        return py::make_tuple(to_array(w.samples), w.sample_rate);
      },
      py::arg("path"), "Samples scaled to [-1, 1) and the sample rate.");
  m.def(
      "resample_to_8k",
      [](const Array& samples, int rate) {
        Waveform w;
        w.samples = to_vector(samples);
        w.sample_rate = rate;
        return to_array(resample_to_8k(w).samples);
      },
      py::arg("samples"), py::arg("rate"));
  m.def(
      "stft",
      [](const Array& samples) { return to_array(stft_spectrogram(padded(samples)).values); },
      py::arg("samples"), "Magnitude spectrogram (228 bins, 230 frames) of 8000 samples.");
  m.def(
      "spectrogram",
      [](const Array& samples) { return to_array(spectrogram_features(padded(samples)).values); },
      py::arg("samples"), "Cropped 227x227 dB spectrogram of 8000 samples.");
  m.def(
      "scale_frequency_axis",
      [](const Array& spec, double factor) { return to_array(scale_frequency_axis(to_tensor(spec), factor)); },
      py::arg("spectrogram"), py::arg("factor"));

  m.def(
      "select_indices",
      [](const std::string& strategy, const Array& signal, std::optional<Array> relevance,
         double fraction, std::uint64_t seed, bool absolute) {
        const auto x = to_vector(signal);
        std::vector<double> r;
        std::optional<std::span<const double>> rel;
        if (relevance) {
          r = to_vector(*relevance);
          rel = std::span<const double>(r);
        }
        return select_indices<double>({parse_strategy(strategy), seed, absolute}, x, rel, fraction);
      },
      py::arg("strategy"), py::arg("signal"), py::arg("relevance") = py::none(),
      py::arg("fraction"), py::arg("seed") = 0, py::arg("absolute") = false,
      "Indices of the samples a perturbation strategy would zero, ascending.");

  m.def(
      "render_heatmap",
      [](const Array& relevance) { return py::bytes(render_heatmap(to_tensor(relevance)).to_ppm()); },
      py::arg("relevance"), "Binary PPM of a 2-D relevance map.");
  m.def(
      "render_waveform",
      [](const Array& samples, const Array& relevance, std::size_t width, std::size_t height) {
        const auto x = to_vector(samples), r = to_vector(relevance);
        return py::bytes(render_waveform(x, r, width, height).to_ppm());
      },
      py::arg("samples"), py::arg("relevance"), py::arg("width") = 1000, py::arg("height") = 200);

  m.def(
      "config_hash",
      [](const std::string& text, const std::map<std::string, std::string>& overrides) {
        return parse_config(text, to_overrides(overrides)).hash();
      },
      py::arg("text"), py::arg("overrides") = std::map<std::string, std::string>{});

  m.def(
      "run",
      [](const std::string& command, const std::string& config_text,
         const std::map<std::string, std::string>& overrides,
         const std::vector<std::filesystem::path>& checkpoints) {
        const RunConfig cfg = parse_config(config_text, to_overrides(overrides));
        py::gil_scoped_release release;
        auto one = [&] {
          if (checkpoints.size() > 1) throw ConfigError(command + " takes a single checkpoint");
          return checkpoints.empty() ? cfg.out / "model.ckpt" : checkpoints.front();
        };
        if (command == "train") return cmd_train(cfg);
        if (command == "synth") return cmd_synth(cfg);
        if (command == "evaluate")
          return cmd_evaluate(cfg, checkpoints.empty() ? std::vector{cfg.out / "model.ckpt"} : checkpoints);
        if (command == "explain") return cmd_explain(cfg, one());
        if (command == "perturb") return cmd_perturb(cfg, one());
        if (command == "freqscale") return cmd_freqscale(cfg, one());
        throw ConfigError("unknown command '" + command + "'");
      },
      py::arg("command"), py::arg("config") = "",
      py::arg("overrides") = std::map<std::string, std::string>{},
      py::arg("checkpoints") = std::vector<std::filesystem::path>{},
      "Runs one CLI command in-process and returns its summary line.");

  py::class_<Classifier>(m, "Classifier")
      .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
      .def_property_readonly("classes", &Classifier::classes)
      .def_property_readonly("descriptor", &Classifier::descriptor)
      .def_property_readonly("spectrogram", &Classifier::spectrogram)
      .def("logits", &Classifier::logits, py::arg("samples"))
      .def("relevance", &Classifier::relevance, py::arg("samples"), py::arg("target") = py::none(),
           py::arg("epsilon") = 1e-6);
}
