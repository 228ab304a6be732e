#pragma once

// Dense row-major tensor with a tape-free reverse-mode autodiff graph.
//
// Every op result keeps shared ownership of its inputs and a backward closure;
// calling backward() on a scalar walks the graph in reverse topological order.
// Two element types are instantiated: float for training, double for
// finite-difference checks.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lga {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when an op produces NaN or Inf. The message names the op.
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed binary input. offset() is the byte position where parsing failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset);
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled() noexcept;

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(std::span<const T>)> backward;
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data().size(); }

  std::span<const T> data() const;
  // In-place access for optimizers and initializers. Never recorded.
  std::span<T> mutable_data();
  T item() const;
  T at(const std::vector<std::size_t>& index) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad();

  /// Seeds d(this)/d(this) = 1 and propagates to every requires_grad leaf.
  void backward() const;

  /// Copy of the values with no graph attached.
  Tensor detach() const;

  const char* op() const;
  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

/// Gradient slot of an op input, allocated on first use. Empty when the input
/// does not take gradients.
template <typename T>
std::span<T> grad_slot(const std::shared_ptr<detail::Node<T>>& node);

/// Builds an op output. Verifies every value is finite, and records the
/// backward closure when grad mode is on and any input requires gradients.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      const std::vector<Tensor<T>>& inputs,
                      std::function<void(std::span<const T>)> backward);

/// Throws NonFiniteError naming `op` if any value is NaN or Inf.
template <typename T>
void check_finite(const char* op, std::span<const T> values);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace lga
