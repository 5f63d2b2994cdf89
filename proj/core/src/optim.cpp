#include "mssp/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mssp/rng.hpp"

namespace mssp {

template <typename T>
AdamState<T> make_adam_state(const ModelParams<T>& params, const AdamConfig& hyper) {
  AdamState<T> s;
  s.hyper = hyper;
  for (const auto& [name, t] : params) {
    if (!is_learnable(name)) continue;
    s.m.insert(name, Tensor<T>(t.dims()));
    s.v.insert(name, Tensor<T>(t.dims()));
  }
  return s;
}

template <typename T>
void adam_step(ModelParams<T>& params, const ParamMap<T>& grads, AdamState<T>& state) {
  std::size_t learnable = 0;
  for (const auto& [name, t] : params) {
    if (!is_learnable(name)) continue;
    ++learnable;
    const Tensor<T>* g = grads.find(name);
    const Tensor<T>* m = state.m.find(name);
    if (!g) throw ShapeError("adam_step: no gradient for '" + name + "'");
    if (!m) throw ShapeError("adam_step: no optimizer state for '" + name + "'");
    if (g->dims() != t.dims() || m->dims() != t.dims() || state.v.get(name).dims() != t.dims()) {
      throw ShapeError("adam_step: dims mismatch for '" + name + "'");
    }
  }
  if (grads.size() != learnable || state.m.size() != learnable || state.v.size() != learnable) {
    throw ShapeError("adam_step: gradient roster does not mirror the learnable parameters");
  }

  const AdamConfig& h = state.hyper;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (auto& [name, theta] : params) {
    if (!is_learnable(name)) continue;
    const Tensor<T>& g = grads.get(name);
    Tensor<T>& m = state.m.get(name);
    Tensor<T>& v = state.v.get(name);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i];
      const double mi = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
      const double vi = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      theta[i] = static_cast<T>(theta[i] - h.lr * (mi / c1) / (std::sqrt(vi / c2) + h.epsilon));
    }
  }
}

template AdamState<float> make_adam_state(const ModelParams<float>&, const AdamConfig&);
template AdamState<double> make_adam_state(const ModelParams<double>&, const AdamConfig&);
template void adam_step(ModelParams<float>&, const ParamMap<float>&, AdamState<float>&);
template void adam_step(ModelParams<double>&, const ParamMap<double>&, AdamState<double>&);

TrainResult train_loop(ModelParams<float> params, const ModelConfig& model, const PatchBatch& dataset,
                       const TrainConfig& config, const StepCallback& on_step) {
  if (dataset.size() == 0) throw ConfigError("train_loop: empty dataset");
  if (config.batch == 0) throw ConfigError("train_loop: batch size must be >= 1");
  if (!(config.lr > 0.0)) throw ConfigError("train_loop: learning rate must be > 0");
  validate_roster(params, model);

  TrainResult result;
  result.losses.reserve(config.steps);
  AdamState<float> state = make_adam_state(params, AdamConfig{.lr = config.lr});
  Rng shuffle = make_rng(config.seed, "shuffle");

  std::vector<std::size_t> order(dataset.size());
  std::size_t cursor = order.size();
  std::vector<std::size_t> picked(config.batch);
  for (std::size_t step = 1; step <= config.steps; ++step) {
    for (std::size_t& p : picked) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), shuffle);
        cursor = 0;
      }
      p = order[cursor++];
    }
    const PatchBatch batch = select_patches(dataset, picked);
    auto fwd = forward(params, model, batch.inputs, layers::Mode::train);
    auto xent = layers::softmax_xent(fwd.logits, batch.labels);
    if (!std::isfinite(xent.loss)) {
      throw NumericalError("non-finite training loss at step " + std::to_string(step));
    }
    const ParamMap<float> grads = backward(params, model, fwd.trace, xent.d_logits);
    adam_step(params, grads, state);
    commit_running_stats(params, fwd.running_updates);
    result.losses.push_back(xent.loss);
    if (on_step) on_step(step, xent.loss);
  }
  result.params = std::move(params);
  return result;
}

BatchScore score_batch(const ModelParams<float>& params, const ModelConfig& model, const PatchBatch& data) {
  if (data.size() == 0) throw ConfigError("score_batch: empty batch");
  constexpr std::size_t kChunk = 16;
  BatchScore score;
  double correct = 0.0, pixels = 0.0;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    std::vector<std::size_t> idx(std::min(kChunk, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const PatchBatch chunk = select_patches(data, idx);
    const auto fwd = forward(params, model, chunk.inputs, layers::Mode::eval);
    const auto xent = layers::softmax_xent(fwd.logits, chunk.labels);
    const double n = static_cast<double>(chunk.labels.size());
    score.loss += xent.loss * n;
    for (std::size_t p = 0; p < chunk.labels.size(); ++p) {
      const bool changed = fwd.logits[2 * p + 1] >= fwd.logits[2 * p];
      correct += (changed ? 1.0f : 0.0f) == chunk.labels[p];
    }
    pixels += n;
  }
  score.loss /= pixels;
  score.accuracy = correct / pixels;
  return score;
}

}  // namespace mssp
