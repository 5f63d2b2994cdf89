#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mssp/layers.hpp"
#include "mssp/tensor.hpp"

namespace mssp {

inline constexpr std::size_t kPatchSize = 32;
inline constexpr std::size_t kInputChannels = 3;
inline constexpr std::size_t kClasses = 2;
/// Pooling scales of the parallel spatial-pooling branches, in concat order.
inline constexpr std::array<std::size_t, 4> kBranchScales{2, 4, 8, 16};

/// Insertion-ordered map of named tensors. Used for model parameters,
/// gradients and optimizer moments so all of them share one roster order.
template <typename T>
class ParamMap {
 public:
  using Entry = std::pair<std::string, Tensor<T>>;

  void insert(std::string name, Tensor<T> value);
  bool contains(std::string_view name) const { return find(name) != nullptr; }
  const Tensor<T>* find(std::string_view name) const;
  Tensor<T>* find(std::string_view name);
  const Tensor<T>& get(std::string_view name) const;
  Tensor<T>& get(std::string_view name);

  std::size_t size() const noexcept { return entries_.size(); }
  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  template <typename U>
  ParamMap<U> cast() const {
    ParamMap<U> out;
    for (const auto& [name, t] : entries_) out.insert(name, t.template cast<U>());
    return out;
  }

  friend bool operator==(const ParamMap& a, const ParamMap& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<Entry> entries_;
};

extern template class ParamMap<float>;
extern template class ParamMap<double>;

template <typename T>
using ModelParams = ParamMap<T>;

/// BN running statistics are buffers, not learnable parameters.
bool is_learnable(std::string_view name);

enum class SpPool { avg, max };

struct ModelConfig {
  SpPool sp_pool = SpPool::avg;
  // Adds BN between each 3×3 convolution and its ReLU. Off by default: only
  // the input BN is part of the reference topology.
  bool conv_bn = false;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;
};

SpPool parse_sp_pool(std::string_view text);
std::string_view to_string(SpPool pool);

struct RosterEntry {
  std::string name;
  Dims dims;
};

/// The closed, ordered list of tensors a model with this config carries.
std::vector<RosterEntry> model_roster(const ModelConfig& config = {});
std::size_t learnable_parameter_count(const ModelConfig& config = {});

/// He-normal weights (std = sqrt(2 / fan_in)), zero biases, BN gamma 1,
/// beta 0, running mean 0, running var 1. Deterministic under `seed`.
ModelParams<float> init_params(std::uint64_t seed, const ModelConfig& config = {});

/// Throws ShapeError unless `params` holds exactly the roster of `config`.
template <typename T>
void validate_roster(const ModelParams<T>& params, const ModelConfig& config);

template <typename T>
struct ConvUnitTrace {
  Tensor<T> output;                                  // after the optional BN and ReLU
  std::optional<layers::BatchNormCache<T>> bn;
};

template <typename T>
struct BranchTrace {
  std::size_t scale = 0;
  Tensor<T> pooled;                                  // SP-s
  std::optional<layers::MaxPoolCache> pool_cache;    // only for max pooling
  ConvUnitTrace<T> conv;                             // Conv-1.i (+ReLU)
  Tensor<T> upsampled;                               // DeConv.i
};

/// Every intermediate activation of one forward pass, kept for backprop.
template <typename T>
struct ForwardTrace {
  layers::Mode mode = layers::Mode::eval;
  Tensor<T> input;
  layers::BatchNormCache<T> bn_in;
  Tensor<T> bn_in_output;
  std::array<ConvUnitTrace<T>, 3> trunk;             // Conv-3.1 .. Conv-3.3
  Tensor<T> pooled;                                  // MP-2
  layers::MaxPoolCache pool_cache;
  std::array<BranchTrace<T>, 4> branches;
  Tensor<T> concat;
  ConvUnitTrace<T> fuse;                             // Conv-3.4
  Tensor<T> head;                                    // Conv-1.5
  Tensor<T> logits;                                  // DeConv.5

  /// Per-sample dims of each architecture row, in architecture-table order,
  /// labelled "Input", "Conv-3.1", ..., "DeConv.5".
  std::vector<std::pair<std::string, Dims>> table_rows() const;
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;  // N×32×32×2
  ForwardTrace<T> trace;
  // New running statistics for every BN layer (train mode only). Parameters
  // are never mutated by forward; the caller decides whether to commit these.
  ParamMap<T> running_updates;
};

template <typename T>
ForwardResult<T> forward(const ModelParams<T>& params, const ModelConfig& config,
                         const Tensor<T>& batch, layers::Mode mode);

/// Gradients for every learnable parameter, in roster order.
template <typename T>
ParamMap<T> backward(const ModelParams<T>& params, const ModelConfig& config,
                     const ForwardTrace<T>& trace, const Tensor<T>& d_logits);

/// Writes `updates` (from ForwardResult::running_updates) into `params`.
template <typename T>
void commit_running_stats(ModelParams<T>& params, const ParamMap<T>& updates);

}  // namespace mssp
