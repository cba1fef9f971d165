#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "audiolrp/nn.hpp"

namespace audiolrp {

struct TrainConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  double clip = 5.0;  // global L2 norm bound on the batch gradient
  std::size_t batch_size = 100;
  std::size_t iterations = 10000;
  std::size_t halving_interval = 2500;
  std::uint64_t seed = 0;

  void validate() const;

  /// lr0 * 0.5^floor(iteration / halving_interval)
  double learning_rate_at(std::size_t iteration) const;
};

template <typename T>
struct SgdState {
  std::vector<LayerParams<T>> velocity;  // zero-initialised on first step
};

/// One momentum step: v <- mu v - lr(it) clip(g); p <- p + v.
/// Returns the gradient norm before clipping.
template <typename T>
double sgd_step(Model<T>& model, const Gradients<T>& grads,
                const TrainConfig& config, SgdState<T>& state,
                std::size_t iteration);

/// L2 norm over all parameter gradients.
template <typename T>
double gradient_norm(const Gradients<T>& grads);

/// A training example already shaped for the model input.
template <typename T>
struct Example {
  Tensor<T> input;
  std::size_t label = 0;
};

struct IterationStats {
  std::size_t iteration = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
};

/// Produces the input for training example `index` on a given draw. Called
/// from worker threads; must be a pure function of its arguments.
template <typename T>
using ExampleSource =
    std::function<Example<T>(std::size_t index, std::uint64_t draw_seed)>;

/// Mini-batch SGD. Batches are drawn by a seeded shuffle; per-example
/// gradients are reduced over a fixed chunk partition, so the trajectory is
/// independent of the worker count.
template <typename T>
class Trainer {
 public:
  Trainer(Model<T>& model, TrainConfig config, unsigned workers = 0);

  /// Runs config.iterations steps. `on_iteration` (optional) is called after
  /// each step; returning false stops training early.
  void run(std::size_t example_count, const ExampleSource<T>& source,
           const std::function<bool(const IterationStats&)>& on_iteration = {});

  /// Single step on an explicit batch.
  IterationStats step(const std::vector<Example<T>>& batch);

  std::size_t iteration() const { return iteration_; }

 private:
  Model<T>& model_;
  TrainConfig config_;
  unsigned workers_;
  SgdState<T> state_;
  std::size_t iteration_ = 0;
};

/// Runs fn(i) for i in [0, n) on up to `workers` threads (0 = hardware).
void parallel_for(std::size_t n, unsigned workers,
                  const std::function<void(std::size_t)>& fn);

}  // namespace audiolrp
