#pragma once

// Full ECG network: residual convolutional front-end, a stack of halving
// transformer blocks built around a configurable attention layer, and a
// mean-pooled linear multi-label head producing raw logits.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lga/attention.hpp"
#include "lga/nn.hpp"
#include "lga/serialize.hpp"
#include "lga/tensor.hpp"

namespace lga::model {

enum class Precision { kF32, kF64 };

std::string_view to_string(Precision p);
Precision parse_precision(std::string_view tag);

struct ResBlockSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 7;
  std::size_t pool_stride = 2;
};

struct BlockSpec {
  std::size_t stage = 1;  // 1-based
  attn::LgaConfig attention;
  std::size_t d_base = 32;

  /// Hidden width of the block MLP: d_base * 2 * stage.
  std::size_t mlp_hidden() const { return d_base * 2 * stage; }
};

struct ModelConfig {
  std::size_t leads = 12;
  std::size_t input_length = 4096;
  std::vector<std::size_t> frontend_channels{32, 64, 128, 128};
  std::size_t frontend_kernel = 7;
  std::size_t embed_dim = 128;
  std::size_t heads = 4;
  std::size_t stages = 4;
  std::size_t d_base = 32;
  std::size_t num_classes = 6;
  /// Per-stage attention settings; embed_dim and heads are taken from above.
  attn::LgaConfig attention;
  Precision precision = Precision::kF32;

  std::vector<ResBlockSpec> frontend_specs() const;
  std::vector<BlockSpec> block_specs() const;
  /// Sequence length entering the first transformer block.
  std::size_t embedded_length() const;
  void validate() const;

  /// Desk-scale model used by the learning acceptance run.
  static ModelConfig tiny();
  /// Smallest configuration that still exercises every path; gradient checks.
  static ModelConfig miniature();

  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct ResBlockWeights {
  nn::Conv1dParams<T> conv1, conv2;
  nn::Conv1dParams<T> skip;  // undefined weight when channels are unchanged
  bool has_skip() const { return skip.weight.defined(); }
};

template <typename T>
struct BlockWeights {
  nn::LayerNormParams<T> norm1, norm2;
  attn::LgaWeights<T> attention;
  nn::Conv1dParams<T> residual;     // 1x1 conv after max pooling
  nn::Conv1dParams<T> attn_reduce;  // VIT_LIKE only: 1x1 conv after pooling the attention output
  nn::LinearParams<T> mlp_in, mlp_out;
};

template <typename T>
struct ForwardTrace {
  /// Shape after the front-end, after every block, and of the logits.
  std::vector<Shape> shapes;
  attn::AttentionTrace<T> attention;
};

template <typename T>
Tensor<T> res_block(const Tensor<T>& x, const ResBlockSpec& spec, const ResBlockWeights<T>& w);

/// [B, C, N0] -> [B, N0 / 2^blocks, D].
template <typename T>
Tensor<T> front_end(const Tensor<T>& x, const std::vector<ResBlockSpec>& specs,
                    const std::vector<ResBlockWeights<T>>& weights);

/// [B, N, D] -> [B, N/2, D].
template <typename T>
Tensor<T> transformer_block(const Tensor<T>& x, const BlockSpec& spec, const BlockWeights<T>& w,
                            attn::AttentionTrace<T>* trace = nullptr);

template <typename T>
class LgaModel {
 public:
  LgaModel() = default;
  static LgaModel create(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  /// [B, C, N0] -> logits [B, K].
  Tensor<T> forward(const Tensor<T>& x, ForwardTrace<T>* trace = nullptr) const;

  /// Trainable tensors with stable hierarchical names.
  TensorList<T> parameters() const;

  std::vector<ResBlockWeights<T>>& frontend() { return frontend_; }
  std::vector<BlockWeights<T>>& blocks() { return blocks_; }
  nn::LinearParams<T>& head() { return head_; }

 private:
  ModelConfig config_;
  std::vector<ResBlockWeights<T>> frontend_;
  std::vector<BlockWeights<T>> blocks_;
  nn::LinearParams<T> head_;
};

template <typename T>
std::size_t count_parameters(const TensorList<T>& tensors) {
  return count_elements(tensors);
}

template <typename T>
std::size_t count_parameters(const LgaModel<T>& model) {
  return count_elements(model.parameters());
}

}  // namespace lga::model
