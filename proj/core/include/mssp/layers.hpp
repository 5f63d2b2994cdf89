#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "mssp/tensor.hpp"

// Every layer MSSP-Net uses, as explicit forward/backward pairs. All functions
// are pure: caches are returned to the caller, nothing is kept between calls.
// Activations may be rank 3 (H×W×C) or rank 4 (N×H×W×C); outputs keep the
// input's rank.
namespace mssp::layers {

enum class Mode { train, eval };

/// Gradient w.r.t. a layer's input plus one entry per learnable parameter
/// ("weight", "bias", "gamma", "beta"), each with that parameter's dims.
template <typename T>
struct LayerGrads {
  Tensor<T> d_input;
  std::map<std::string, Tensor<T>> d_params;
};

// Convolution with a k×k×Cin×Cout kernel and per-output-channel bias.
// Output extent: (H + 2·padding − k) / stride + 1, which must divide exactly.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                         std::size_t stride, std::size_t padding);
template <typename T>
LayerGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                              const Tensor<T>& d_output, std::size_t stride, std::size_t padding);

template <typename T>
struct RunningStats {
  Tensor<T> mean;  // per channel
  Tensor<T> var;   // per channel, biased (population) variance
};

template <typename T>
struct BatchNormCache {
  Mode mode = Mode::train;
  Tensor<T> normalized;    // (x − μ) / sqrt(σ² + ε), same dims as the input
  std::vector<T> inv_std;  // per channel
  Tensor<T> gamma;
};

template <typename T>
struct BatchNormResult {
  Tensor<T> output;
  RunningStats<T> running;  // updated by EMA in train mode, unchanged in eval mode
  BatchNormCache<T> cache;
};

/// Per-channel batch normalization. Running statistics follow
/// r ← (1 − momentum)·r + momentum·batch_stat.
template <typename T>
BatchNormResult<T> batchnorm_forward(const Tensor<T>& input, const Tensor<T>& gamma,
                                     const Tensor<T>& beta, const RunningStats<T>& running,
                                     Mode mode, T momentum, T epsilon);
template <typename T>
LayerGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const Tensor<T>& d_output);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input);
/// `input` may be either the pre-activation or the ReLU output: both are
/// positive at exactly the same positions.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& d_output);

struct MaxPoolCache {
  Dims input_dims;
  std::vector<std::size_t> argmax;  // flat input offset of each output cell's winner
};

template <typename T>
struct MaxPoolResult {
  Tensor<T> output;
  MaxPoolCache cache;
};

/// Non-overlapping max pooling (stride must equal k). Ties resolve to the
/// first position in row-major window order.
template <typename T>
MaxPoolResult<T> maxpool_forward(const Tensor<T>& input, std::size_t k, std::size_t stride);
template <typename T>
Tensor<T> maxpool_backward(const MaxPoolCache& cache, const Tensor<T>& d_output);

template <typename T>
Tensor<T> avgpool_forward(const Tensor<T>& input, std::size_t k);
template <typename T>
Tensor<T> avgpool_backward(const Tensor<T>& d_output, std::size_t k);

// Transposed convolution with kernel size equal to the stride: each input
// pixel scatters into its own disjoint stride×stride output block.
template <typename T>
Tensor<T> deconv2d_forward(const Tensor<T>& input, const Tensor<T>& weights,
                           const Tensor<T>& bias, std::size_t stride);
template <typename T>
LayerGrads<T> deconv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                const Tensor<T>& d_output, std::size_t stride);

/// Stacks channels in argument order. All inputs must share N, H and W.
template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& inputs);
/// Inverse of concat_channels: slices `d_output` into consecutive channel groups.
template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& d_output,
                                      const std::vector<std::size_t>& channels);

template <typename T>
struct XentResult {
  double loss = 0.0;
  Tensor<T> d_logits;
};

/// Mean per-pixel two-class cross-entropy. `labels` has the logits' dims
/// without the trailing channel axis and holds 0 or 1.
template <typename T>
XentResult<T> softmax_xent(const Tensor<T>& logits, const Tensor<T>& labels);

/// Probability of class 1 (changed) per pixel, dims of the logits minus the channel axis.
template <typename T>
Tensor<T> softmax_positive(const Tensor<T>& logits);

}  // namespace mssp::layers
