#pragma once

// Neural building blocks: 1-D convolution (cross-correlation, symmetric zero
// padding), max/avg pooling, layer norm, linear, ReLU and sigmoid.

#include <cstddef>

#include "lga/random.hpp"
#include "lga/tensor.hpp"

namespace lga::nn {

template <typename T>
struct Conv1dParams {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_size = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Tensor<T> weight;  // [out, in, k]
  Tensor<T> bias;    // [out]

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weight and bias.
  static Conv1dParams create(std::size_t in, std::size_t out, std::size_t kernel,
                             std::size_t stride, std::size_t padding, Rng& rng);
  /// Identity projection (kernel 1, weight = I, bias = 0). Requires in == out
  /// unless padding a centred kernel: the centre tap carries the identity.
  static Conv1dParams identity(std::size_t channels, std::size_t kernel = 1);
  static Conv1dParams zeros(std::size_t in, std::size_t out, std::size_t kernel,
                            std::size_t stride, std::size_t padding);

  void validate() const;
};

template <typename T>
struct LayerNormParams {
  std::size_t dim = 0;
  Tensor<T> gamma;  // [dim], initialised to 1
  Tensor<T> beta;   // [dim], initialised to 0
  double epsilon = 1e-5;

  static LayerNormParams create(std::size_t dim, double epsilon = 1e-5);
};

template <typename T>
struct LinearParams {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]

  static LinearParams create(std::size_t in, std::size_t out, Rng& rng);
  static LinearParams zeros(std::size_t in, std::size_t out);
};

/// floor((length + 2*padding - kernel) / stride) + 1; ShapeError when the
/// padded input is shorter than the kernel.
std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                               std::size_t padding);

/// x: [B, C_in, L] -> [B, C_out, L_out]. `bias` may be undefined.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding);
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Conv1dParams<T>& p);

/// Normalises over the last axis.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double epsilon);
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const LayerNormParams<T>& p);

/// Pooling over the last axis. Max-pool ties route the gradient to the
/// lowest index.
template <typename T>
Tensor<T> max_pool1d(const Tensor<T>& x, std::size_t kernel, std::size_t stride);
template <typename T>
Tensor<T> avg_pool1d(const Tensor<T>& x, std::size_t kernel, std::size_t stride);

/// x: [..., D_in] · W[D_in, D_out] + b.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const LinearParams<T>& p);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

}  // namespace lga::nn
