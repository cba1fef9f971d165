#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "audiolrp/checkpoint.hpp"
#include "audiolrp/presets.hpp"
#include "audiolrp/train.hpp"
#include "instances.hpp"
#include "oracles.hpp"

using namespace audiolrp;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "audiolrp_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("dense forward on a hand-computed example") {
  Model<float> m(ModelSpec({2}, 1).add(LayerSpec::dense(1)));
  m.params(0).weight = TensorF({1, 2}, {1.f, 2.f});
  m.params(0).bias = TensorF::vector({0.5f});
  const auto logits = predict_logits(m, TensorF::vector({1.f, 1.f}));
  CHECK(logits.shape() == Shape{1});
  CHECK(logits[0] == doctest::Approx(3.5));
}

TEST_CASE("conv1d with same padding sums each window") {
  ModelSpec spec({5, 1}, 5);
  spec.add(LayerSpec::conv1d(1, 3, 1, 1, false)).add(LayerSpec::flatten());
  Model<double> m(spec);
  m.params(0).weight.fill(1.0);
  const auto out = predict_logits(m, TensorD({5, 1}, {1, 2, 3, 4, 5}));
  CHECK(out.storage() == std::vector<double>{3, 6, 9, 12, 9});
}

TEST_CASE("forward rejects inputs of the wrong shape") {
  Model<float> m(ModelSpec({4}, 2).add(LayerSpec::dense(2)));
  CHECK_THROWS_AS(forward(m, TensorF({5})), ShapeError);
}

TEST_CASE("forward flags non-finite activations") {
  Model<float> m(ModelSpec({2}, 1).add(LayerSpec::dense(1)));
  m.params(0).weight = TensorF({1, 2}, {1.f, 1.f});
  CHECK_THROWS_AS(forward(m, TensorF({2}, {std::numeric_limits<float>::infinity(), 0.f})),
                  NumericError);
}

TEST_CASE("shape chaining errors surface at construction") {
  ModelSpec spec({10, 1}, 2);
  CHECK_THROWS_AS(spec.add(LayerSpec::dense(2)), ShapeError);
  CHECK_THROWS_AS(spec.add(LayerSpec::conv1d(2, 3, 0)), ShapeError);
  CHECK_THROWS_AS(spec.add(LayerSpec::conv2d(2, 3)), ShapeError);
  CHECK_THROWS_AS(Model<float>(ModelSpec({10, 1}, 2)), ShapeError);
}

TEST_CASE("backward on scalar dense layer") {
  Model<double> m(ModelSpec({1}, 1).add(LayerSpec::dense(1)));
  m.params(0).weight = TensorD({1, 1}, {2.0});
  auto fr = forward(m, TensorD::vector({3.0}), {.record_trace = true});
  auto g = backward(m, *fr.trace, TensorD::vector({1.0}));
  CHECK(g.params[0].weight[0] == 3.0);
  CHECK(g.params[0].bias[0] == 1.0);
  CHECK(g.params[0].weight.shape() == m.params(0).weight.shape());
}

TEST_CASE("relu gates the upstream gradient") {
  Model<double> m(ModelSpec({2}, 2).add(LayerSpec::relu()));
  auto fr = forward(m, TensorD::vector({-1.0, 2.0}), {.record_trace = true});
  auto g = backward(m, *fr.trace, TensorD::vector({5.0, 5.0}));
  CHECK(g.input.storage() == std::vector<double>{0.0, 5.0});
}

TEST_CASE("backward rejects a trace from another model") {
  Model<double> a(ModelSpec({2}, 2).add(LayerSpec::dense(2)));
  Model<double> b(ModelSpec({2}, 2).add(LayerSpec::relu()));
  auto fr = forward(a, TensorD({2}, 1.0), {.record_trace = true});
  CHECK_THROWS_AS(backward(b, *fr.trace, TensorD({2}, 1.0)), ShapeError);
  CHECK_THROWS_AS(backward(a, *fr.trace, TensorD({3}, 1.0)), ShapeError);
}

TEST_CASE("analytic gradients match central differences for every layer kind") {
  for (auto kind : instances::all_kinds()) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      auto inst = instances::random_instance(kind, 1000 + seed);
      auto fr = forward(inst.model, inst.input, {.record_trace = true});
      auto loss = softmax_cross_entropy(fr.logits, inst.label);
      auto grads = backward(inst.model, *fr.trace, loss.logit_grad);
      auto fd = oracle::finite_difference_gradients(inst.model, inst.input, inst.label);
      CAPTURE(inst.kind);
      CHECK(oracle::rel_error(instances::flatten_gradients(grads), fd.numeric) < 1e-6);
    }
  }
}

TEST_CASE("max-pool argmax map reproduces the pooled output as a gather") {
  for (auto kind : {LayerKind::MaxPool1D, LayerKind::MaxPool2D}) {
    auto inst = instances::random_instance(kind, 77);
    auto fr = forward(inst.model, inst.input, {.record_trace = true});
    const auto& rec = fr.trace->layers[1];
    REQUIRE(rec.argmax.size() == rec.output.size());
    for (std::size_t i = 0; i < rec.output.size(); ++i)
      CHECK(rec.input[rec.argmax[i]] == rec.output[i]);
  }
}

TEST_CASE("max-pool ties resolve to the lowest index") {
  Model<double> m(ModelSpec({2, 1}, 1).add(LayerSpec::maxpool1d(2, 2)).add(LayerSpec::flatten()));
  auto fr = forward(m, TensorD({2, 1}, {4.0, 4.0}), {.record_trace = true});
  CHECK(fr.trace->layers[0].argmax == std::vector<std::uint32_t>{0});
}

TEST_CASE("softmax cross-entropy") {
  SUBCASE("symmetric two-class") {
    auto r = softmax_cross_entropy(TensorD::vector({0.0, 0.0}), 0);
    CHECK(r.loss == doctest::Approx(std::log(2.0)));
    CHECK(r.logit_grad[0] == doctest::Approx(-0.5));
    CHECK(r.logit_grad[1] == doctest::Approx(0.5));
  }
  SUBCASE("saturated logits stay finite") {
    auto r = softmax_cross_entropy(TensorF::vector({1000.f, 0.f}), 0);
    CHECK(r.loss == doctest::Approx(0.0));
    CHECK(std::isfinite(r.logit_grad[1]));
  }
  SUBCASE("label out of range") {
    CHECK_THROWS_AS(softmax_cross_entropy(TensorD::vector({0.0, 0.0}), 2), ConfigError);
  }
  SUBCASE("gradient matches finite differences") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0, 2);
    for (int trial = 0; trial < 20; ++trial) {
      TensorD logits({6});
      for (auto& v : logits.data()) v = n(rng);
      const std::size_t label = rng() % 6;
      auto r = softmax_cross_entropy(logits, label);
      CHECK(r.loss >= 0.0);
      std::vector<double> numeric;
      for (std::size_t k = 0; k < 6; ++k) {
        auto up = logits, down = logits;
        up[k] += 1e-6;
        down[k] -= 1e-6;
        numeric.push_back((softmax_cross_entropy(up, label).loss -
                           softmax_cross_entropy(down, label).loss) / 2e-6);
      }
      CHECK(oracle::rel_error(r.logit_grad.storage(), numeric) < 1e-6);
    }
  }
}

TEST_CASE("sgd step") {
  SUBCASE("learning rate halves on schedule") {
    TrainConfig c;
    c.learning_rate = 0.001;
    c.halving_interval = 2500;
    CHECK(c.learning_rate_at(2499) == 0.001);
    CHECK(c.learning_rate_at(2500) == 0.0005);
    CHECK(c.learning_rate_at(5000) == 0.00025);
  }
  Model<double> m(ModelSpec({1}, 1).add(LayerSpec::dense(1, false)));
  m.params(0).weight[0] = 1.0;
  auto g = Gradients<double>::zeros_like(m);
  SUBCASE("plain step without momentum") {
    TrainConfig c;
    c.learning_rate = 0.1;
    c.momentum = 0.0;
    g.params[0].weight[0] = 0.5;
    SgdState<double> s;
    sgd_step(m, g, c, s, 0);
    CHECK(m.params(0).weight[0] == doctest::Approx(0.95));
  }
  SUBCASE("gradient clipped to magnitude 5") {
    TrainConfig c;
    c.learning_rate = 1.0;
    c.momentum = 0.0;
    c.clip = 5.0;
    g.params[0].weight[0] = 10.0;
    SgdState<double> s;
    sgd_step(m, g, c, s, 0);
    CHECK(m.params(0).weight[0] == doctest::Approx(1.0 - 5.0));
  }
  SUBCASE("momentum accumulates velocity") {
    TrainConfig c;
    c.learning_rate = 0.1;
    c.momentum = 0.9;
    g.params[0].weight[0] = 1.0;
    SgdState<double> s;
    sgd_step(m, g, c, s, 0);  // v = -0.1
    sgd_step(m, g, c, s, 1);  // v = -0.19
    CHECK(m.params(0).weight[0] == doctest::Approx(1.0 - 0.1 - 0.19));
  }
  SUBCASE("invalid configs") {
    TrainConfig c;
    c.momentum = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.learning_rate = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("mismatched gradient shapes") {
    Model<double> other(ModelSpec({2}, 1).add(LayerSpec::dense(1, false)));
    auto bad = Gradients<double>::zeros_like(other);
    SgdState<double> s;
    CHECK_THROWS_AS(sgd_step(m, bad, TrainConfig{}, s, 0), ShapeError);
  }
}

TEST_CASE("AudioNet preset") {
  auto spec = build_audionet(10);
  CHECK(spec.structural_depth() == 15);
  CHECK(spec.layers().back().kind == LayerKind::Dense);
  CHECK(spec.layers().back().out == 10);
  std::size_t flatten_index = 0;
  for (std::size_t i = 0; i < spec.size(); ++i)
    if (spec.layers()[i].kind == LayerKind::Flatten) flatten_index = i;
  CHECK(spec.layer_input_shape(flatten_index) == Shape{125, 128});
  CHECK(spec.layer_output_shape(flatten_index) == Shape{16000});
  CHECK(build_audionet(2).layers().back().out == 2);

  Model<float> m(build_audionet(10, {.width_scale = 0.25}));
  m.init_kaiming(1);
  CHECK(predict_logits(m, TensorF({8000, 1}, 0.1f)).shape() == Shape{10});
  CHECK_THROWS_AS(build_audionet(3), ConfigError);
}

TEST_CASE("AlexNet variant preset") {
  auto spec = build_alexnet_variant(2);
  CHECK(spec.layers().back().out == 2);
  std::size_t flatten_index = 0;
  for (std::size_t i = 0; i < spec.size(); ++i)
    if (spec.layers()[i].kind == LayerKind::Flatten) flatten_index = i;
  CHECK(spec.layer_input_shape(flatten_index) == Shape{6, 6, 256});
  CHECK(spec.layer_output_shape(flatten_index) == Shape{9216});
  CHECK(spec.layer_output_shape(flatten_index + 1) == Shape{1024});
  CHECK(spec.input_shape() == Shape{227, 227, 1});
  std::size_t dropouts = 0;
  for (const auto& l : spec.layers()) {
    if (l.kind == LayerKind::Dropout) ++dropouts;
  }
  CHECK(dropouts == 2);
  CHECK(build_alexnet_variant(10).layers().back().out == 10);
}

TEST_CASE("architecture descriptors round-trip") {
  for (const auto& spec : {build_audionet(10), build_alexnet_variant(2, {.width_scale = 0.1}),
                           build_audionet(2, {.width_scale = 0.25, .first_layer_bias = false})}) {
    CHECK(ModelSpec::parse_descriptor(spec.descriptor()) == spec);
  }
}

TEST_CASE("checkpoint save and load") {
  const auto path = temp_path("audionet.ckpt");
  Model<float> m(build_audionet(10, {.width_scale = 0.25}));
  m.init_kaiming(9);
  for (auto& p : m.params())
    for (auto& b : p.bias.data()) b = 0.01f;
  save_checkpoint(path, m, {{"preprocess.mean", TensorF({2, 2}, 1.5f)}});

  SUBCASE("round trip is bit-identical") {
    auto loaded = load_checkpoint<float>(path);
    CHECK(loaded.model.spec() == m.spec());
    for (std::size_t i = 0; i < m.params().size(); ++i) {
      CHECK(loaded.model.params(i).weight == m.params(i).weight);
      CHECK(loaded.model.params(i).bias == m.params(i).bias);
    }
    REQUIRE(loaded.extra("preprocess.mean"));
    CHECK(loaded.extra("preprocess.mean")->as<float>()[3] == 1.5f);
  }
  SUBCASE("wrong class count is an architecture mismatch") {
    CHECK_THROWS_AS(load_checkpoint<float>(path, build_audionet(2, {.width_scale = 0.25})),
                    ArchitectureMismatch);
  }
  SUBCASE("truncated file is rejected") {
    auto bytes = read_file(path);
    const auto cut = temp_path("truncated.ckpt");
    std::ofstream(cut, std::ios::binary).write(bytes.data(),
                                               static_cast<std::streamsize>(bytes.size() / 2));
    CHECK_THROWS_AS(load_checkpoint<float>(cut), FormatError);
  }
  SUBCASE("dtype mismatch is rejected") {
    CHECK_THROWS_AS(load_checkpoint<double>(path), FormatError);
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  auto run = [] {
    Model<float> m(ModelSpec({4}, 2).add(LayerSpec::dense(8)).add(LayerSpec::relu())
                       .add(LayerSpec::dropout(0.3)).add(LayerSpec::dense(2)));
    m.init_kaiming(3);
    TrainConfig c;
    c.learning_rate = 0.05;
    c.batch_size = 16;
    c.iterations = 30;
    c.seed = 11;
    Trainer<float> t(m, c, 3);
    t.run(40, [](std::size_t i, std::uint64_t seed) {
      std::mt19937_64 rng(seed);
      std::normal_distribution<float> n(0.f, 0.3f);
      const std::size_t label = i % 2;
      TensorF x({4});
      for (auto& v : x.data()) v = n(rng) + (label ? 1.f : -1.f);
      return Example<float>{x, label};
    });
    return m;
  };
  auto a = run(), b = run();
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    CHECK(a.params(i).weight == b.params(i).weight);
    CHECK(a.params(i).bias == b.params(i).bias);
  }
}
