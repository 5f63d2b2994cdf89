#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mssp/model.hpp"
#include "mssp/sampling.hpp"

namespace mssp {

struct AdamConfig {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig hyper;
  std::uint64_t t = 0;
  ParamMap<T> m;  // first moments, learnable roster only
  ParamMap<T> v;  // second moments
};

template <typename T>
AdamState<T> make_adam_state(const ModelParams<T>& params, const AdamConfig& hyper = {});

/// One bias-corrected Adam update, in place on `params` and `state`:
///   m ← β1·m + (1−β1)·g,  v ← β2·v + (1−β2)·g²,
///   θ ← θ − lr · (m / (1−β1ᵗ)) / (sqrt(v / (1−β2ᵗ)) + ε).
/// BN running statistics are skipped; `grads` must carry exactly the learnable roster.
template <typename T>
void adam_step(ModelParams<T>& params, const ParamMap<T>& grads, AdamState<T>& state);

struct TrainConfig {
  std::size_t steps = 3000;
  std::size_t batch = 8;
  double lr = 0.005;
  std::uint64_t seed = 0;
};

struct TrainResult {
  ModelParams<float> params;
  std::vector<double> losses;  // one per step
};

/// Called after every step with (1-based step, loss).
using StepCallback = std::function<void(std::size_t, double)>;

/// forward(train) → softmax cross-entropy → backward → Adam, `steps` times.
/// Mini-batches walk a reshuffled permutation of the dataset each epoch
/// ("shuffle" substream of `config.seed`).
TrainResult train_loop(ModelParams<float> params, const ModelConfig& model, const PatchBatch& dataset,
                       const TrainConfig& config, const StepCallback& on_step = {});

/// Mean cross-entropy and pixel accuracy of eval-mode predictions.
struct BatchScore {
  double loss = 0.0;
  double accuracy = 0.0;
};
BatchScore score_batch(const ModelParams<float>& params, const ModelConfig& model, const PatchBatch& data);

}  // namespace mssp
