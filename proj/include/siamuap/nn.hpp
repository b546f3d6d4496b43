#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace siamuap::nn {

// Planar (C, H, W) feature volume.
template <typename T>
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> values;

  Tensor() = default;
  Tensor(int c, int h, int w, T fill = T{})
      : channels{c}, height{h}, width{w}, values(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  T& operator()(int c, int y, int x) { return values[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  const T& operator()(int c, int y, int x) const {
    return values[c * plane() + static_cast<std::size_t>(y) * width + x];
  }
  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

struct TensorDims {
  int channels = 0;
  int height = 0;
  int width = 0;
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

// Location of one parameter block inside a flat parameter vector.
struct ParamSlice {
  std::size_t offset = 0;
  std::size_t size = 0;
};

struct ConvShape {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  int out_extent(int n) const { return (n + 2 * pad - kernel) / stride + 1; }
  std::size_t patch_size() const { return static_cast<std::size_t>(in_channels) * kernel * kernel; }
};

// Fixed-lane reductions: the summation order depends only on the length, not
// on pointer alignment, so results are bitwise reproducible across buffers.
template <typename T>
T dot_lanes(const T* a, const T* b, std::size_t n) {
  constexpr std::size_t kLanes = 8;
  T lane[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) lane[j] += a[i + j] * b[i + j];
  }
  T tail{};
  for (; i < n; ++i) tail += a[i] * b[i];
  T s{};
  for (std::size_t j = 0; j < kLanes; ++j) s += lane[j];
  return s + tail;
}

template <typename T>
T sum_lanes(const T* a, std::size_t n) {
  constexpr std::size_t kLanes = 8;
  T lane[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) lane[j] += a[i + j];
  }
  T tail{};
  for (; i < n; ++i) tail += a[i];
  T s{};
  for (std::size_t j = 0; j < kLanes; ++j) s += lane[j];
  return s + tail;
}

template <typename T>
void im2col(const Tensor<T>& in, const ConvShape& s, std::vector<T>& cols) {
  const int oh = s.out_extent(in.height);
  const int ow = s.out_extent(in.width);
  const std::size_t n = static_cast<std::size_t>(oh) * ow;
  cols.resize(s.patch_size() * n);
  if (s.kernel == 1 && s.stride == 1 && s.pad == 0) {
    std::copy(in.values.begin(), in.values.end(), cols.begin());
    return;
  }
  std::size_t row = 0;
  for (int c = 0; c < s.in_channels; ++c) {
    for (int ky = 0; ky < s.kernel; ++ky) {
      for (int kx = 0; kx < s.kernel; ++kx, ++row) {
        T* dst = cols.data() + row * n;
        for (int oy = 0; oy < oh; ++oy) {
          T* line = dst + static_cast<std::size_t>(oy) * ow;
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= in.height) {
            std::fill(line, line + ow, T{});
            continue;
          }
          const T* src = &in(c, iy, 0);
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * s.stride - s.pad + kx;
            line[ox] = (ix < 0 || ix >= in.width) ? T{} : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const std::vector<T>& cols, const ConvShape& s, Tensor<T>& grad_in) {
  const int oh = s.out_extent(grad_in.height);
  const int ow = s.out_extent(grad_in.width);
  const std::size_t n = static_cast<std::size_t>(oh) * ow;
  std::size_t row = 0;
  for (int c = 0; c < s.in_channels; ++c) {
    for (int ky = 0; ky < s.kernel; ++ky) {
      for (int kx = 0; kx < s.kernel; ++kx, ++row) {
        const T* src = cols.data() + row * n;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= grad_in.height) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * s.stride - s.pad + kx;
            if (ix < 0 || ix >= grad_in.width) continue;
            grad_in(c, iy, ix) += src[static_cast<std::size_t>(oy) * ow + ox];
          }
        }
      }
    }
  }
}

// Dense 2-D convolution with bias; weights laid out (out, in, ky, kx).
struct Conv2d {
  ConvShape shape;
  ParamSlice weight;
  ParamSlice bias;

  template <typename T>
  void forward(std::span<const T> params, const Tensor<T>& in, Tensor<T>& out,
               std::vector<T>& cols) const {
    if (in.channels != shape.in_channels) {
      throw std::invalid_argument("Conv2d: input channel mismatch");
    }
    const int oh = shape.out_extent(in.height);
    const int ow = shape.out_extent(in.width);
    im2col(in, shape, cols);
    out = Tensor<T>(shape.out_channels, oh, ow);
    const auto n = static_cast<Eigen::Index>(oh) * ow;
    ConstMatrixMap<T> w(params.data() + weight.offset, shape.out_channels,
                        static_cast<Eigen::Index>(shape.patch_size()));
    ConstMatrixMap<T> x(cols.data(), static_cast<Eigen::Index>(shape.patch_size()), n);
    MatrixMap<T> y(out.values.data(), shape.out_channels, n);
    y.noalias() = w * x;
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(params.data() + bias.offset,
                                                             shape.out_channels);
    y.colwise() += b;
  }

  // grad_params may be empty (input gradient only); grad_in may be null.
  template <typename T>
  void backward(std::span<const T> params, const TensorDims& in, const std::vector<T>& cols,
                const Tensor<T>& grad_out, std::span<T> grad_params, Tensor<T>* grad_in) const {
    const auto n = static_cast<Eigen::Index>(grad_out.height) * grad_out.width;
    const auto k = static_cast<Eigen::Index>(shape.patch_size());
    ConstMatrixMap<T> gy(grad_out.values.data(), shape.out_channels, n);
    if (!grad_params.empty()) {
      ConstMatrixMap<T> x(cols.data(), k, n);
      MatrixMap<T> gw(grad_params.data() + weight.offset, shape.out_channels, k);
      gw.noalias() += gy * x.transpose();
      for (int o = 0; o < shape.out_channels; ++o) {
        grad_params[bias.offset + o] += sum_lanes(grad_out.values.data() + o * n, static_cast<std::size_t>(n));
      }
    }
    if (grad_in != nullptr) {
      ConstMatrixMap<T> w(params.data() + weight.offset, shape.out_channels, k);
      *grad_in = Tensor<T>(in.channels, in.height, in.width);
      if (shape.kernel == 1 && shape.stride == 1 && shape.pad == 0) {
        MatrixMap<T> gx(grad_in->values.data(), k, n);
        gx.noalias() = w.transpose() * gy;
        return;
      }
      thread_local std::vector<T> gcols;
      gcols.resize(static_cast<std::size_t>(k) * n);
      MatrixMap<T> gx(gcols.data(), k, n);
      gx.noalias() = w.transpose() * gy;
      col2im(gcols, shape, *grad_in);
    }
  }
};

// Rational ELU: identity for v > 0, v / (1 - v) otherwise; continuously
// differentiable.
template <typename T>
T elu(T v) {
  return v > T{0} ? v : v / (T{1} - v);
}

template <typename T>
T elu_grad_from_output(T out) {
  return out > T{0} ? T{1} : (T{1} + out) * (T{1} + out);
}

template <typename T>
T sigmoid(T v) {
  return T{1} / (T{1} + std::exp(-v));
}

// Depthwise valid cross-correlation: out[c] = kernel[c] slid over search[c].
template <typename T>
Tensor<T> correlate(const Tensor<T>& kernel, const Tensor<T>& search) {
  if (kernel.channels != search.channels) {
    throw std::invalid_argument("correlate: channel mismatch");
  }
  if (kernel.height > search.height || kernel.width > search.width) {
    throw std::invalid_argument("correlate: template larger than search");
  }
  const int oh = search.height - kernel.height + 1;
  const int ow = search.width - kernel.width + 1;
  Tensor<T> out(kernel.channels, oh, ow);
  for (int c = 0; c < kernel.channels; ++c) {
    for (int ky = 0; ky < kernel.height; ++ky) {
      for (int kx = 0; kx < kernel.width; ++kx) {
        const T kv = kernel(c, ky, kx);
        for (int y = 0; y < oh; ++y) {
          const T* src = &search(c, y + ky, kx);
          T* dst = &out(c, y, 0);
          for (int x = 0; x < ow; ++x) dst[x] += kv * src[x];
        }
      }
    }
  }
  return out;
}

template <typename T>
void correlate_backward(const Tensor<T>& kernel, const Tensor<T>& search, const Tensor<T>& grad_out,
                        Tensor<T>& grad_kernel, Tensor<T>& grad_search) {
  grad_kernel = Tensor<T>(kernel.channels, kernel.height, kernel.width);
  grad_search = Tensor<T>(search.channels, search.height, search.width);
  const int oh = grad_out.height;
  const int ow = grad_out.width;
  for (int c = 0; c < kernel.channels; ++c) {
    for (int ky = 0; ky < kernel.height; ++ky) {
      for (int kx = 0; kx < kernel.width; ++kx) {
        const T kv = kernel(c, ky, kx);
        T acc{};
        for (int y = 0; y < oh; ++y) {
          const T* g = &grad_out(c, y, 0);
          const T* src = &search(c, y + ky, kx);
          T* gs = &grad_search(c, y + ky, kx);
          for (int x = 0; x < ow; ++x) gs[x] += kv * g[x];
          acc += dot_lanes(g, src, static_cast<std::size_t>(ow));
        }
        grad_kernel(c, ky, kx) = acc;
      }
    }
  }
}

template <typename T>
Tensor<T> zero_pad(const Tensor<T>& in, int top, int left, int bottom, int right) {
  Tensor<T> out(in.channels, in.height + top + bottom, in.width + left + right);
  for (int c = 0; c < in.channels; ++c) {
    for (int y = 0; y < in.height; ++y) {
      for (int x = 0; x < in.width; ++x) out(c, y + top, x + left) = in(c, y, x);
    }
  }
  return out;
}

template <typename T>
Tensor<T> crop_pad_gradient(const Tensor<T>& grad_padded, int top, int left, int height, int width) {
  Tensor<T> out(grad_padded.channels, height, width);
  for (int c = 0; c < out.channels; ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) out(c, y, x) = grad_padded(c, y + top, x + left);
    }
  }
  return out;
}

// A run of convolutions, each optionally followed by ELU, with the
// activations needed for backpropagation.
struct ConvStage {
  Conv2d conv;
  bool activation = true;
};

template <typename T>
struct StackCache {
  std::vector<TensorDims> inputs;
  std::vector<std::vector<T>> cols;
  std::vector<Tensor<T>> outputs;
};

template <typename T>
Tensor<T> stack_forward(const std::vector<ConvStage>& stages, std::span<const T> params,
                        const Tensor<T>& in, StackCache<T>* cache) {
  if (cache != nullptr) {
    cache->inputs.assign(stages.size(), {});
    cache->cols.assign(stages.size(), {});
    cache->outputs.assign(stages.size(), {});
  }
  std::vector<T> scratch;
  const Tensor<T>* current = &in;
  Tensor<T> out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& stage = stages[i];
    std::vector<T>& cols = cache != nullptr ? cache->cols[i] : scratch;
    Tensor<T> next;
    stage.conv.forward(params, *current, next, cols);
    if (stage.activation) {
      for (auto& v : next.values) v = elu(v);
    }
    if (cache != nullptr) {
      cache->inputs[i] = {current->channels, current->height, current->width};
      cache->outputs[i] = std::move(next);
      current = &cache->outputs[i];
    } else {
      out = std::move(next);
      current = &out;
    }
  }
  return cache != nullptr ? *current : out;
}

// Returns the gradient with respect to the stack input.
template <typename T>
Tensor<T> stack_backward(const std::vector<ConvStage>& stages, std::span<const T> params,
                         const StackCache<T>& cache, Tensor<T> grad, std::span<T> grad_params,
                         bool need_input_grad = true) {
  for (std::size_t i = stages.size(); i-- > 0;) {
    const auto& stage = stages[i];
    if (stage.activation) {
      const auto& out = cache.outputs[i].values;
      for (std::size_t j = 0; j < grad.values.size(); ++j) grad.values[j] *= elu_grad_from_output(out[j]);
    }
    const bool want_input = need_input_grad || i > 0;
    Tensor<T> grad_in;
    stage.conv.backward(params, cache.inputs[i], cache.cols[i], grad, grad_params,
                        want_input ? &grad_in : nullptr);
    if (!want_input) return {};
    grad = std::move(grad_in);
  }
  return grad;
}

// Appends a convolution's parameters to a layout and returns it.
inline Conv2d make_conv(ConvShape shape, std::size_t& cursor) {
  Conv2d conv;
  conv.shape = shape;
  conv.weight = {cursor, static_cast<std::size_t>(shape.out_channels) * shape.patch_size()};
  cursor += conv.weight.size;
  conv.bias = {cursor, static_cast<std::size_t>(shape.out_channels)};
  cursor += conv.bias.size;
  return conv;
}

// He-normal weights, zero biases.
template <typename T>
void init_conv(const Conv2d& conv, std::span<T> params, std::mt19937_64& rng, double gain = 1.0) {
  const double fan_in = static_cast<double>(conv.shape.patch_size());
  std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / fan_in));
  for (std::size_t i = 0; i < conv.weight.size; ++i) {
    params[conv.weight.offset + i] = static_cast<T>(dist(rng));
  }
  for (std::size_t i = 0; i < conv.bias.size; ++i) params[conv.bias.offset + i] = T{};
}

}  // namespace siamuap::nn
