#include "mssp/layers.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>

namespace mssp::layers {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using ConstRowVecMap = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;

std::string mismatch(const char* op, const Dims& got, const Dims& want) {
  return std::string(op) + ": got " + dims_to_string(got) + ", expected " + dims_to_string(want);
}

template <typename T>
void require_vector(const Tensor<T>& v, std::size_t len, const char* op, const char* name) {
  if (v.rank() != 1 || v.dim(0) != len) {
    throw ShapeError(std::string(op) + ": " + name + " must be a vector of length " +
                     std::to_string(len) + ", got " + dims_to_string(v.dims()));
  }
}

struct ConvGeometry {
  Nhwc in;
  std::size_t k = 0, cout = 0, stride = 1, padding = 0, oh = 0, ow = 0;
  std::size_t patch() const { return k * k * in.c; }
  std::size_t rows() const { return in.n * oh * ow; }
  bool pointwise() const { return k == 1 && stride == 1 && padding == 0; }
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& weights, std::size_t stride,
                           std::size_t padding) {
  ConvGeometry g;
  g.in = as_nhwc(input, "conv2d");
  const Dims& wd = weights.dims();
  if (wd.size() != 4 || wd[0] != wd[1]) {
    throw ShapeError("conv2d: kernel must be k x k x Cin x Cout, got " + dims_to_string(wd));
  }
  if (wd[2] != g.in.c) {
    throw ShapeError("conv2d: input has " + std::to_string(g.in.c) + " channels, kernel expects " +
                     std::to_string(wd[2]));
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  g.k = wd[0];
  g.cout = wd[3];
  g.stride = stride;
  g.padding = padding;
  auto extent = [&](std::size_t x) {
    const std::size_t padded = x + 2 * padding;
    if (padded < g.k || (padded - g.k) % stride != 0) {
      throw ShapeError("conv2d: non-integer output extent for input extent " + std::to_string(x) +
                       ", k=" + std::to_string(g.k) + ", stride=" + std::to_string(stride) +
                       ", padding=" + std::to_string(padding));
    }
    return (padded - g.k) / stride + 1;
  };
  g.oh = extent(g.in.h);
  g.ow = extent(g.in.w);
  return g;
}

// Rows are output pixels (n, oy, ox); columns follow the kernel layout (ky, kx, c).
template <typename T>
RowMat<T> im2col(const Tensor<T>& input, const ConvGeometry& g) {
  RowMat<T> cols(g.rows(), g.patch());
  const T* src = input.raw();
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t n = 0; n < g.in.n; ++n) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        T* row = cols.data() + ((n * g.oh + oy) * g.ow + ox) * g.patch();
        for (std::size_t ky = 0; ky < g.k; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          for (std::size_t kx = 0; kx < g.k; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            T* dst = row + (ky * g.k + kx) * g.in.c;
            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.in.h) ||
                ix >= static_cast<std::ptrdiff_t>(g.in.w)) {
              std::fill(dst, dst + g.in.c, T{0});
            } else {
              const T* s = src + ((n * g.in.h + iy) * g.in.w + ix) * g.in.c;
              std::copy(s, s + g.in.c, dst);
            }
          }
        }
      }
    }
  }
  return cols;
}

template <typename T>
void col2im_add(const RowMat<T>& cols, const ConvGeometry& g, Tensor<T>& d_input) {
  T* dst = d_input.raw();
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t n = 0; n < g.in.n; ++n) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        const T* row = cols.data() + ((n * g.oh + oy) * g.ow + ox) * g.patch();
        for (std::size_t ky = 0; ky < g.k; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in.h)) continue;
          for (std::size_t kx = 0; kx < g.k; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in.w)) continue;
            const T* s = row + (ky * g.k + kx) * g.in.c;
            T* d = dst + ((n * g.in.h + iy) * g.in.w + ix) * g.in.c;
            for (std::size_t c = 0; c < g.in.c; ++c) d[c] += s[c];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                         std::size_t stride, std::size_t padding) {
  const ConvGeometry g = conv_geometry(input, weights, stride, padding);
  require_vector(bias, g.cout, "conv2d", "bias");

  Tensor<T> output(activation_dims(input.dims(), g.in.n, g.oh, g.ow, g.cout));
  MatMap<T> out(output.raw(), g.rows(), g.cout);
  ConstMatMap<T> w(weights.raw(), g.patch(), g.cout);
  if (g.pointwise()) {
    out.noalias() = ConstMatMap<T>(input.raw(), g.rows(), g.patch()) * w;
  } else {
    out.noalias() = im2col(input, g) * w;
  }
  out.rowwise() += ConstRowVecMap<T>(bias.raw(), g.cout);
  return output;
}

template <typename T>
LayerGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                              const Tensor<T>& d_output, std::size_t stride, std::size_t padding) {
  const ConvGeometry g = conv_geometry(input, weights, stride, padding);
  const Dims out_dims = activation_dims(input.dims(), g.in.n, g.oh, g.ow, g.cout);
  if (d_output.dims() != out_dims) {
    throw ShapeError(mismatch("conv2d_backward d_output", d_output.dims(), out_dims));
  }

  LayerGrads<T> grads;
  ConstMatMap<T> dout(d_output.raw(), g.rows(), g.cout);
  ConstMatMap<T> w(weights.raw(), g.patch(), g.cout);

  Tensor<T> d_weights(weights.dims());
  Tensor<T> d_bias(Dims{g.cout});
  for (std::size_t r = 0; r < g.rows(); ++r) {
    const T* row = d_output.raw() + r * g.cout;
    for (std::size_t o = 0; o < g.cout; ++o) d_bias[o] += row[o];
  }

  grads.d_input = Tensor<T>(input.dims());
  if (g.pointwise()) {
    ConstMatMap<T> cols(input.raw(), g.rows(), g.patch());
    MatMap<T>(d_weights.raw(), g.patch(), g.cout).noalias() = cols.transpose() * dout;
    MatMap<T>(grads.d_input.raw(), g.rows(), g.patch()).noalias() = dout * w.transpose();
  } else {
    const RowMat<T> cols = im2col(input, g);
    MatMap<T>(d_weights.raw(), g.patch(), g.cout).noalias() = cols.transpose() * dout;
    RowMat<T> d_cols(g.rows(), g.patch());
    d_cols.noalias() = dout * w.transpose();
    col2im_add(d_cols, g, grads.d_input);
  }
  grads.d_params.emplace("weight", std::move(d_weights));
  grads.d_params.emplace("bias", std::move(d_bias));
  return grads;
}

template <typename T>
BatchNormResult<T> batchnorm_forward(const Tensor<T>& input, const Tensor<T>& gamma,
                                     const Tensor<T>& beta, const RunningStats<T>& running,
                                     Mode mode, T momentum, T epsilon) {
  const Nhwc s = as_nhwc(input, "batchnorm");
  const std::size_t channels = s.c;
  require_vector(gamma, channels, "batchnorm", "gamma");
  require_vector(beta, channels, "batchnorm", "beta");
  require_vector(running.mean, channels, "batchnorm", "running mean");
  require_vector(running.var, channels, "batchnorm", "running var");
  if (!(epsilon > T{0})) throw ConfigError("batchnorm: epsilon must be > 0");
  const std::size_t count = s.pixels();
  if (mode == Mode::train && count < 2) {
    throw ShapeError("batchnorm: train mode needs at least 2 values per channel, got " +
                     std::to_string(count));
  }

  std::vector<T> mean(channels), var(channels);
  if (mode == Mode::train) {
    std::vector<double> sum(channels, 0.0), sq(channels, 0.0);
    const T* x = input.raw();
    for (std::size_t p = 0; p < count; ++p) {
      for (std::size_t c = 0; c < channels; ++c) sum[c] += x[p * channels + c];
    }
    for (std::size_t c = 0; c < channels; ++c) sum[c] /= static_cast<double>(count);
    for (std::size_t p = 0; p < count; ++p) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double d = x[p * channels + c] - sum[c];
        sq[c] += d * d;
      }
    }
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = static_cast<T>(sum[c]);
      var[c] = static_cast<T>(sq[c] / static_cast<double>(count));
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = running.mean[c];
      var[c] = running.var[c];
    }
  }

  BatchNormResult<T> r;
  r.cache.mode = mode;
  r.cache.gamma = gamma;
  r.cache.inv_std.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    r.cache.inv_std[c] = T{1} / std::sqrt(var[c] + epsilon);
  }
  r.cache.normalized = Tensor<T>(input.dims());
  r.output = Tensor<T>(input.dims());
  const T* x = input.raw();
  T* xn = r.cache.normalized.raw();
  T* y = r.output.raw();
  for (std::size_t p = 0; p < count; ++p) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t i = p * channels + c;
      xn[i] = (x[i] - mean[c]) * r.cache.inv_std[c];
      y[i] = gamma[c] * xn[i] + beta[c];
    }
  }

  r.running = running;
  if (mode == Mode::train) {
    for (std::size_t c = 0; c < channels; ++c) {
      r.running.mean[c] = (T{1} - momentum) * running.mean[c] + momentum * mean[c];
      r.running.var[c] = (T{1} - momentum) * running.var[c] + momentum * var[c];
    }
  }
  return r;
}

template <typename T>
LayerGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const Tensor<T>& d_output) {
  if (d_output.dims() != cache.normalized.dims()) {
    throw ShapeError(mismatch("batchnorm_backward d_output", d_output.dims(), cache.normalized.dims()));
  }
  const Nhwc s = as_nhwc(d_output, "batchnorm_backward");
  const std::size_t channels = s.c;
  const std::size_t count = s.pixels();

  std::vector<double> dgamma(channels, 0.0), dbeta(channels, 0.0);
  const T* dy = d_output.raw();
  const T* xn = cache.normalized.raw();
  for (std::size_t p = 0; p < count; ++p) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t i = p * channels + c;
      dgamma[c] += static_cast<double>(dy[i]) * xn[i];
      dbeta[c] += dy[i];
    }
  }

  LayerGrads<T> grads;
  grads.d_input = Tensor<T>(d_output.dims());
  T* dx = grads.d_input.raw();
  if (cache.mode == Mode::train) {
    const double m = static_cast<double>(count);
    for (std::size_t p = 0; p < count; ++p) {
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t i = p * channels + c;
        const double scale = static_cast<double>(cache.gamma[c]) * cache.inv_std[c] / m;
        dx[i] = static_cast<T>(scale * (m * dy[i] - dbeta[c] - xn[i] * dgamma[c]));
      }
    }
  } else {
    for (std::size_t p = 0; p < count; ++p) {
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t i = p * channels + c;
        dx[i] = dy[i] * cache.gamma[c] * cache.inv_std[c];
      }
    }
  }
  Tensor<T> g(Dims{channels}), b(Dims{channels});
  for (std::size_t c = 0; c < channels; ++c) {
    g[c] = static_cast<T>(dgamma[c]);
    b[c] = static_cast<T>(dbeta[c]);
  }
  grads.d_params.emplace("gamma", std::move(g));
  grads.d_params.emplace("beta", std::move(b));
  return grads;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out(input.dims());
  const T* x = input.raw();
  T* y = out.raw();
  for (std::size_t i = 0; i < input.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& d_output) {
  if (input.dims() != d_output.dims()) {
    throw ShapeError(mismatch("relu_backward d_output", d_output.dims(), input.dims()));
  }
  Tensor<T> dx(input.dims());
  const T* x = input.raw();
  const T* dy = d_output.raw();
  T* d = dx.raw();
  for (std::size_t i = 0; i < input.size(); ++i) d[i] = x[i] > T{0} ? dy[i] : T{0};
  return dx;
}

namespace {

Nhwc pooled_shape(const Nhwc& s, std::size_t k, const char* op) {
  if (k == 0) throw ShapeError(std::string(op) + ": window must be >= 1");
  if (s.h % k != 0 || s.w % k != 0) {
    throw ShapeError(std::string(op) + ": extent " + std::to_string(s.h) + "x" +
                     std::to_string(s.w) + " not divisible by window " + std::to_string(k));
  }
  return {s.n, s.h / k, s.w / k, s.c};
}

}  // namespace

template <typename T>
MaxPoolResult<T> maxpool_forward(const Tensor<T>& input, std::size_t k, std::size_t stride) {
  if (stride != k) {
    throw ShapeError("maxpool: stride " + std::to_string(stride) + " must equal window " +
                     std::to_string(k));
  }
  const Nhwc s = as_nhwc(input, "maxpool");
  const Nhwc o = pooled_shape(s, k, "maxpool");
  MaxPoolResult<T> r;
  r.output = Tensor<T>(activation_dims(input.dims(), o.n, o.h, o.w, o.c));
  r.cache.input_dims = input.dims();
  r.cache.argmax.resize(r.output.size());
  const T* x = input.raw();
  for (std::size_t n = 0; n < o.n; ++n) {
    for (std::size_t oy = 0; oy < o.h; ++oy) {
      for (std::size_t ox = 0; ox < o.w; ++ox) {
        for (std::size_t c = 0; c < o.c; ++c) {
          std::size_t best = ((n * s.h + oy * k) * s.w + ox * k) * s.c + c;
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::size_t i = ((n * s.h + oy * k + ky) * s.w + ox * k + kx) * s.c + c;
              if (x[i] > x[best]) best = i;
            }
          }
          const std::size_t oi = ((n * o.h + oy) * o.w + ox) * o.c + c;
          r.output[oi] = x[best];
          r.cache.argmax[oi] = best;
        }
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool_backward(const MaxPoolCache& cache, const Tensor<T>& d_output) {
  if (d_output.size() != cache.argmax.size()) {
    throw ShapeError("maxpool_backward: d_output " + dims_to_string(d_output.dims()) +
                     " does not match cached window count " + std::to_string(cache.argmax.size()));
  }
  Tensor<T> dx(cache.input_dims);
  for (std::size_t i = 0; i < d_output.size(); ++i) dx[cache.argmax[i]] += d_output[i];
  return dx;
}

template <typename T>
Tensor<T> avgpool_forward(const Tensor<T>& input, std::size_t k) {
  const Nhwc s = as_nhwc(input, "avgpool");
  const Nhwc o = pooled_shape(s, k, "avgpool");
  Tensor<T> out(activation_dims(input.dims(), o.n, o.h, o.w, o.c));
  const T* x = input.raw();
  T* y = out.raw();
  const T scale = T{1} / static_cast<T>(k * k);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t iy = 0; iy < s.h; ++iy) {
      for (std::size_t ix = 0; ix < s.w; ++ix) {
        const T* src = x + ((n * s.h + iy) * s.w + ix) * s.c;
        T* dst = y + ((n * o.h + iy / k) * o.w + ix / k) * o.c;
        for (std::size_t c = 0; c < s.c; ++c) dst[c] += src[c];
      }
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) y[i] *= scale;
  return out;
}

template <typename T>
Tensor<T> avgpool_backward(const Tensor<T>& d_output, std::size_t k) {
  if (k == 0) throw ShapeError("avgpool_backward: window must be >= 1");
  const Nhwc o = as_nhwc(d_output, "avgpool_backward");
  const Nhwc s{o.n, o.h * k, o.w * k, o.c};
  Tensor<T> dx(activation_dims(d_output.dims(), s.n, s.h, s.w, s.c));
  const T scale = T{1} / static_cast<T>(k * k);
  const T* dy = d_output.raw();
  T* d = dx.raw();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t iy = 0; iy < s.h; ++iy) {
      for (std::size_t ix = 0; ix < s.w; ++ix) {
        const T* src = dy + ((n * o.h + iy / k) * o.w + ix / k) * o.c;
        T* dst = d + ((n * s.h + iy) * s.w + ix) * s.c;
        for (std::size_t c = 0; c < s.c; ++c) dst[c] = src[c] * scale;
      }
    }
  }
  return dx;
}

namespace {

struct DeconvGeometry {
  Nhwc in;
  std::size_t k = 0, cout = 0;
  std::size_t block() const { return k * k * cout; }
};

template <typename T>
DeconvGeometry deconv_geometry(const Tensor<T>& input, const Tensor<T>& weights, std::size_t stride) {
  DeconvGeometry g;
  g.in = as_nhwc(input, "deconv2d");
  const Dims& wd = weights.dims();
  if (wd.size() != 4 || wd[0] != wd[1]) {
    throw ShapeError("deconv2d: kernel must be k x k x Cin x Cout, got " + dims_to_string(wd));
  }
  if (wd[0] != stride || stride == 0) {
    throw ShapeError("deconv2d: kernel size " + std::to_string(wd[0]) + " must equal stride " +
                     std::to_string(stride));
  }
  if (wd[2] != g.in.c) {
    throw ShapeError("deconv2d: input has " + std::to_string(g.in.c) + " channels, kernel expects " +
                     std::to_string(wd[2]));
  }
  g.k = stride;
  g.cout = wd[3];
  return g;
}

// Kernel (ky, kx, ci, co) rearranged to a Cin × (ky, kx, co) matrix.
template <typename T>
RowMat<T> deconv_kernel_matrix(const Tensor<T>& weights, const DeconvGeometry& g) {
  RowMat<T> m(g.in.c, g.block());
  for (std::size_t ky = 0; ky < g.k; ++ky) {
    for (std::size_t kx = 0; kx < g.k; ++kx) {
      for (std::size_t ci = 0; ci < g.in.c; ++ci) {
        const T* src = weights.raw() + ((ky * g.k + kx) * g.in.c + ci) * g.cout;
        T* dst = m.data() + ci * g.block() + (ky * g.k + kx) * g.cout;
        std::copy(src, src + g.cout, dst);
      }
    }
  }
  return m;
}

}  // namespace

template <typename T>
Tensor<T> deconv2d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                           std::size_t stride) {
  const DeconvGeometry g = deconv_geometry(input, weights, stride);
  require_vector(bias, g.cout, "deconv2d", "bias");
  const std::size_t pixels = g.in.pixels();
  RowMat<T> blocks(pixels, g.block());
  blocks.noalias() = ConstMatMap<T>(input.raw(), pixels, g.in.c) * deconv_kernel_matrix(weights, g);

  const std::size_t oh = g.in.h * g.k, ow = g.in.w * g.k;
  Tensor<T> output(activation_dims(input.dims(), g.in.n, oh, ow, g.cout));
  T* y = output.raw();
  for (std::size_t n = 0; n < g.in.n; ++n) {
    for (std::size_t h = 0; h < g.in.h; ++h) {
      for (std::size_t w = 0; w < g.in.w; ++w) {
        const T* src = blocks.data() + ((n * g.in.h + h) * g.in.w + w) * g.block();
        for (std::size_t ky = 0; ky < g.k; ++ky) {
          for (std::size_t kx = 0; kx < g.k; ++kx) {
            const T* s = src + (ky * g.k + kx) * g.cout;
            T* d = y + ((n * oh + h * g.k + ky) * ow + w * g.k + kx) * g.cout;
            for (std::size_t o = 0; o < g.cout; ++o) d[o] = s[o] + bias[o];
          }
        }
      }
    }
  }
  return output;
}

template <typename T>
LayerGrads<T> deconv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                const Tensor<T>& d_output, std::size_t stride) {
  const DeconvGeometry g = deconv_geometry(input, weights, stride);
  const std::size_t oh = g.in.h * g.k, ow = g.in.w * g.k;
  const Dims out_dims = activation_dims(input.dims(), g.in.n, oh, ow, g.cout);
  if (d_output.dims() != out_dims) {
    throw ShapeError(mismatch("deconv2d_backward d_output", d_output.dims(), out_dims));
  }
  const std::size_t pixels = g.in.pixels();

  // Gather each input pixel's output block into one row.
  RowMat<T> blocks(pixels, g.block());
  Tensor<T> d_bias(Dims{g.cout});
  const T* dy = d_output.raw();
  for (std::size_t n = 0; n < g.in.n; ++n) {
    for (std::size_t h = 0; h < g.in.h; ++h) {
      for (std::size_t w = 0; w < g.in.w; ++w) {
        T* dst = blocks.data() + ((n * g.in.h + h) * g.in.w + w) * g.block();
        for (std::size_t ky = 0; ky < g.k; ++ky) {
          for (std::size_t kx = 0; kx < g.k; ++kx) {
            const T* s = dy + ((n * oh + h * g.k + ky) * ow + w * g.k + kx) * g.cout;
            T* d = dst + (ky * g.k + kx) * g.cout;
            for (std::size_t o = 0; o < g.cout; ++o) {
              d[o] = s[o];
              d_bias[o] += s[o];
            }
          }
        }
      }
    }
  }

  ConstMatMap<T> x(input.raw(), pixels, g.in.c);
  RowMat<T> d_kernel(g.in.c, g.block());
  d_kernel.noalias() = x.transpose() * blocks;

  LayerGrads<T> grads;
  grads.d_input = Tensor<T>(input.dims());
  MatMap<T>(grads.d_input.raw(), pixels, g.in.c).noalias() =
      blocks * deconv_kernel_matrix(weights, g).transpose();

  Tensor<T> d_weights(weights.dims());
  for (std::size_t ky = 0; ky < g.k; ++ky) {
    for (std::size_t kx = 0; kx < g.k; ++kx) {
      for (std::size_t ci = 0; ci < g.in.c; ++ci) {
        const T* src = d_kernel.data() + ci * g.block() + (ky * g.k + kx) * g.cout;
        std::copy(src, src + g.cout, d_weights.raw() + ((ky * g.k + kx) * g.in.c + ci) * g.cout);
      }
    }
  }
  grads.d_params.emplace("weight", std::move(d_weights));
  grads.d_params.emplace("bias", std::move(d_bias));
  return grads;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& inputs) {
  if (inputs.empty()) throw ShapeError("concat_channels: no inputs");
  const Nhwc first = as_nhwc(*inputs.front(), "concat_channels");
  std::size_t total = 0;
  for (const Tensor<T>* t : inputs) {
    const Nhwc s = as_nhwc(*t, "concat_channels");
    if (t->rank() != inputs.front()->rank() || s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat_channels: spatial mismatch " + dims_to_string(t->dims()) + " vs " +
                       dims_to_string(inputs.front()->dims()));
    }
    total += s.c;
  }
  Tensor<T> out(activation_dims(inputs.front()->dims(), first.n, first.h, first.w, total));
  T* y = out.raw();
  std::size_t offset = 0;
  for (const Tensor<T>* t : inputs) {
    const std::size_t c = t->dims().back();
    const T* x = t->raw();
    for (std::size_t p = 0; p < first.pixels(); ++p) {
      std::copy(x + p * c, x + (p + 1) * c, y + p * total + offset);
    }
    offset += c;
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& d_output,
                                      const std::vector<std::size_t>& channels) {
  const Nhwc s = as_nhwc(d_output, "split_channels");
  std::size_t total = 0;
  for (std::size_t c : channels) total += c;
  if (total != s.c) {
    throw ShapeError("split_channels: groups sum to " + std::to_string(total) + " but tensor has " +
                     std::to_string(s.c) + " channels");
  }
  std::vector<Tensor<T>> parts;
  parts.reserve(channels.size());
  std::size_t offset = 0;
  const T* x = d_output.raw();
  for (std::size_t c : channels) {
    Tensor<T> part(activation_dims(d_output.dims(), s.n, s.h, s.w, c));
    T* y = part.raw();
    for (std::size_t p = 0; p < s.pixels(); ++p) {
      std::copy(x + p * s.c + offset, x + p * s.c + offset + c, y + p * c);
    }
    offset += c;
    parts.push_back(std::move(part));
  }
  return parts;
}

namespace {

template <typename T>
std::size_t check_two_class(const Tensor<T>& logits, const char* op) {
  if (logits.rank() < 2 || logits.dims().back() != 2) {
    throw ShapeError(std::string(op) + ": logits must end in a 2-channel axis, got " +
                     dims_to_string(logits.dims()));
  }
  return logits.size() / 2;
}

}  // namespace

template <typename T>
XentResult<T> softmax_xent(const Tensor<T>& logits, const Tensor<T>& labels) {
  const std::size_t pixels = check_two_class(logits, "softmax_xent");
  Dims label_dims(logits.dims().begin(), logits.dims().end() - 1);
  if (labels.dims() != label_dims) {
    throw ShapeError(mismatch("softmax_xent labels", labels.dims(), label_dims));
  }
  XentResult<T> r;
  r.d_logits = Tensor<T>(logits.dims());
  const T* z = logits.raw();
  T* dz = r.d_logits.raw();
  const double inv = 1.0 / static_cast<double>(pixels);
  double total = 0.0;
  for (std::size_t p = 0; p < pixels; ++p) {
    const T label = labels[p];
    if (label != T{0} && label != T{1}) {
      throw DomainError("softmax_xent: label " + std::to_string(static_cast<double>(label)) +
                        " at pixel " + std::to_string(p) + " is not 0 or 1");
    }
    const std::size_t target = label == T{1} ? 1 : 0;
    const double z0 = z[2 * p], z1 = z[2 * p + 1];
    const double m = std::max(z0, z1);
    const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
    const double lse = m + std::log(e0 + e1);
    total += lse - (target ? z1 : z0);
    const double p0 = e0 / (e0 + e1), p1 = e1 / (e0 + e1);
    dz[2 * p] = static_cast<T>((p0 - (target == 0 ? 1.0 : 0.0)) * inv);
    dz[2 * p + 1] = static_cast<T>((p1 - (target == 1 ? 1.0 : 0.0)) * inv);
  }
  r.loss = total * inv;
  return r;
}

template <typename T>
Tensor<T> softmax_positive(const Tensor<T>& logits) {
  const std::size_t pixels = check_two_class(logits, "softmax_positive");
  Tensor<T> prob(Dims(logits.dims().begin(), logits.dims().end() - 1));
  const T* z = logits.raw();
  for (std::size_t p = 0; p < pixels; ++p) {
    const double z0 = z[2 * p], z1 = z[2 * p + 1];
    const double m = std::max(z0, z1);
    const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
    prob[p] = static_cast<T>(e1 / (e0 + e1));
  }
  return prob;
}

#define MSSP_INSTANTIATE_LAYERS(T)                                                                \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                    std::size_t, std::size_t);                                    \
  template LayerGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                         std::size_t, std::size_t);                               \
  template BatchNormResult<T> batchnorm_forward(const Tensor<T>&, const Tensor<T>&,              \
                                                const Tensor<T>&, const RunningStats<T>&, Mode,  \
                                                T, T);                                            \
  template LayerGrads<T> batchnorm_backward(const BatchNormCache<T>&, const Tensor<T>&);         \
  template Tensor<T> relu_forward(const Tensor<T>&);                                              \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                          \
  template MaxPoolResult<T> maxpool_forward(const Tensor<T>&, std::size_t, std::size_t);         \
  template Tensor<T> maxpool_backward(const MaxPoolCache&, const Tensor<T>&);                    \
  template Tensor<T> avgpool_forward(const Tensor<T>&, std::size_t);                              \
  template Tensor<T> avgpool_backward(const Tensor<T>&, std::size_t);                             \
  template Tensor<T> deconv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                      std::size_t);                                               \
  template LayerGrads<T> deconv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                           std::size_t);                                          \
  template Tensor<T> concat_channels(const std::vector<const Tensor<T>*>&);                      \
  template std::vector<Tensor<T>> split_channels(const Tensor<T>&,                               \
                                                 const std::vector<std::size_t>&);               \
  template XentResult<T> softmax_xent(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> softmax_positive(const Tensor<T>&);

MSSP_INSTANTIATE_LAYERS(float)
MSSP_INSTANTIATE_LAYERS(double)

}  // namespace mssp::layers
