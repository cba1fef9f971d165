#include "audiolrp/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "audiolrp/seed.hpp"

namespace audiolrp {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw ConfigError("momentum must lie in [0, 1)");
  if (!(clip > 0.0)) throw ConfigError("gradient clip must be > 0");
  if (halving_interval == 0) throw ConfigError("halving interval must be > 0");
  if (batch_size == 0) throw ConfigError("batch size must be > 0");
}

double TrainConfig::learning_rate_at(std::size_t iteration) const {
  return learning_rate *
         std::pow(0.5, static_cast<double>(iteration / halving_interval));
}

template <typename T>
double gradient_norm(const Gradients<T>& grads) {
  double sq = 0.0;
  for (const auto& p : grads.params) {
    for (T v : p.weight.data()) sq += static_cast<double>(v) * v;
    for (T v : p.bias.data()) sq += static_cast<double>(v) * v;
  }
  return std::sqrt(sq);
}

template <typename T>
double sgd_step(Model<T>& model, const Gradients<T>& grads,
                const TrainConfig& config, SgdState<T>& state,
                std::size_t iteration) {
  auto& params = model.params();
  if (grads.params.size() != params.size())
    throw ShapeError("gradient layer count does not match model");
  if (state.velocity.empty()) {
    state.velocity.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].weight.empty())
        state.velocity[i].weight = Tensor<T>(params[i].weight.shape());
      if (!params[i].bias.empty())
        state.velocity[i].bias = Tensor<T>(params[i].bias.shape());
    }
  }

  const double norm = gradient_norm(grads);
  const double clip_scale = norm > config.clip ? config.clip / norm : 1.0;
  const T step = static_cast<T>(config.learning_rate_at(iteration) * clip_scale);
  const T mu = static_cast<T>(config.momentum);

  auto update = [&](Tensor<T>& p, const Tensor<T>& g, Tensor<T>& v) {
    if (p.empty()) return;
    if (p.shape() != g.shape() || p.shape() != v.shape())
      throw ShapeError("parameter/gradient shape mismatch " +
                       shape_string(p.shape()) + " vs " + shape_string(g.shape()));
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = mu * v[k] - step * g[k];
      p[k] += v[k];
    }
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    update(params[i].weight, grads.params[i].weight, state.velocity[i].weight);
    update(params[i].bias, grads.params[i].bias, state.velocity[i].bias);
  }
  return norm;
}

void parallel_for(std::size_t n, unsigned workers,
                  const std::function<void(std::size_t)>& fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (error) std::rethrow_exception(error);
}

namespace {
constexpr std::size_t kChunks = 8;
}  // namespace

template <typename T>
Trainer<T>::Trainer(Model<T>& model, TrainConfig config, unsigned workers)
    : model_(model), config_(config), workers_(workers) {
  config_.validate();
}

template <typename T>
IterationStats Trainer<T>::step(const std::vector<Example<T>>& batch) {
  if (batch.empty()) throw ConfigError("empty training batch");
  const std::size_t chunks = std::min(kChunks, batch.size());
  std::vector<Gradients<T>> partial(chunks);
  std::vector<double> losses(chunks, 0.0);
  std::vector<std::mt19937_64> rngs;
  for (std::size_t c = 0; c < chunks; ++c)
    rngs.emplace_back(mix_seed(config_.seed, mix_seed(iteration_, c)));

  parallel_for(chunks, workers_, [&](std::size_t c) {
    partial[c] = Gradients<T>::zeros_like(model_);
    for (std::size_t k = c; k < batch.size(); k += chunks) {
      ForwardOptions opts{true, true, &rngs[c]};
      auto fr = forward(model_, batch[k].input, opts);
      auto loss = softmax_cross_entropy(fr.logits, batch[k].label);
      losses[c] += static_cast<double>(loss.loss);
      partial[c].accumulate(backward(model_, *fr.trace, loss.logit_grad));
    }
  });

  Gradients<T>& total = partial[0];
  double loss = losses[0];
  for (std::size_t c = 1; c < chunks; ++c) {
    total.accumulate(partial[c]);
    loss += losses[c];
  }
  total.scale(static_cast<T>(1.0 / static_cast<double>(batch.size())));
  IterationStats stats{iteration_, loss / static_cast<double>(batch.size()),
                       config_.learning_rate_at(iteration_)};
  sgd_step(model_, total, config_, state_, iteration_);
  ++iteration_;
  return stats;
}

template <typename T>
void Trainer<T>::run(std::size_t example_count, const ExampleSource<T>& source,
                     const std::function<bool(const IterationStats&)>& on_iteration) {
  if (example_count == 0) throw DataError("no training examples");
  std::mt19937_64 order_rng(mix_seed(config_.seed, 0xB47C4ULL));
  std::vector<std::size_t> order(example_count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), order_rng);
  std::size_t cursor = 0;
  std::uint64_t draw = 0;

  while (iteration_ < config_.iterations) {
    const std::size_t bs = std::min(config_.batch_size, example_count);
    std::vector<std::size_t> indices;
    std::vector<std::uint64_t> seeds;
    for (std::size_t k = 0; k < bs; ++k) {
      if (cursor == example_count) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      indices.push_back(order[cursor++]);
      seeds.push_back(mix_seed(config_.seed, ++draw));
    }
    std::vector<Example<T>> batch(bs);
    parallel_for(bs, workers_,
                 [&](std::size_t k) { batch[k] = source(indices[k], seeds[k]); });
    const auto stats = step(batch);
    if (on_iteration && !on_iteration(stats)) break;
  }
}

template double gradient_norm(const Gradients<float>&);
template double gradient_norm(const Gradients<double>&);
template double sgd_step(Model<float>&, const Gradients<float>&,
                         const TrainConfig&, SgdState<float>&, std::size_t);
template double sgd_step(Model<double>&, const Gradients<double>&,
                         const TrainConfig&, SgdState<double>&, std::size_t);
template class Trainer<float>;
template class Trainer<double>;

}  // namespace audiolrp
