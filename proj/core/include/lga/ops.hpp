#pragma once

// Differentiable tensor primitives. Binary elementwise ops broadcast with
// numpy rules; every op records a backward closure when an input requires
// gradients.

#include <cstddef>
#include <vector>

#include "lga/tensor.hpp"

namespace lga {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> neg(const Tensor<T>& x);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T value);

/// Sum / mean over every element, producing a scalar of shape [].
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
template <typename T> Tensor<T> sum(const Tensor<T>& x, std::size_t axis, bool keepdim = false);
template <typename T> Tensor<T> mean(const Tensor<T>& x, std::size_t axis, bool keepdim = false);

/// Batched matrix product over the last two axes; leading axes broadcast.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Max-subtracted softmax along `axis`.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm);
template <typename T> Tensor<T> transpose(const Tensor<T>& x, std::size_t a, std::size_t b);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> broadcast_to(const Tensor<T>& x, const Shape& shape);

/// Half-open range [begin, end) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);

/// Zero padding along one axis.
template <typename T>
Tensor<T> pad(const Tensor<T>& x, std::size_t axis, std::size_t before, std::size_t after);

/// Sliding windows along `axis`: that extent L is replaced by (M, size) with
/// M = (L - size) / step + 1. Overlapping windows accumulate gradients.
template <typename T>
Tensor<T> unfold(const Tensor<T>& x, std::size_t axis, std::size_t size, std::size_t step);

/// out.flat[i] = x.flat[index[i]], reshaped to `shape`. Backward scatter-adds.
template <typename T>
Tensor<T> gather(const Tensor<T>& x, std::vector<std::size_t> index, Shape shape);

/// Resulting shape of broadcasting a against b; throws ShapeError.
Shape broadcast_shapes(const Shape& a, const Shape& b);

}  // namespace lga
