#pragma once

// Local-global attention: queries are convolutional embeddings averaged over
// overlapping windows, keys and values are convolutional embeddings of the
// whole sequence. With stride 2 each layer halves the sequence.
//
// The ablation variants and positional encodings share the same interface so
// a transformer block can swap them by configuration alone.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "lga/nn.hpp"
#include "lga/random.hpp"
#include "lga/tensor.hpp"

namespace lga::attn {

enum class Variant { kLga, kVitLike, kSwinLike, kGlobalQkv, kLocalQkv };
enum class PositionalEncoding { kNone, kSinusoidalApe, kLearnableApe, kRelative };

/// kHalving zero-pads the normalised sequence by (l - s) / 2 per side so the
/// window count is exactly N / s; kUnpadded uses floor((N - l) / s) + 1.
enum class WindowMode { kHalving, kUnpadded };

/// Tags as they appear in config files: "LGA", "VIT_LIKE", ...
std::string_view to_string(Variant v);
std::string_view to_string(PositionalEncoding pe);
std::string_view to_string(WindowMode m);
Variant parse_variant(std::string_view tag);
PositionalEncoding parse_positional_encoding(std::string_view tag);
WindowMode parse_window_mode(std::string_view tag);

inline constexpr Variant kAllVariants[] = {Variant::kVitLike, Variant::kSwinLike,
                                           Variant::kGlobalQkv, Variant::kLocalQkv, Variant::kLga};
inline constexpr PositionalEncoding kAllEncodings[] = {
    PositionalEncoding::kSinusoidalApe, PositionalEncoding::kLearnableApe,
    PositionalEncoding::kRelative, PositionalEncoding::kNone};

struct LgaConfig {
  std::size_t embed_dim = 128;
  std::size_t heads = 4;
  std::size_t window_len = 64;
  std::size_t stride = 2;
  std::size_t query_kernel = 3;
  std::size_t query_padding = 1;
  std::size_t kv_kernel = 3;
  Variant variant = Variant::kLga;
  PositionalEncoding pos_encoding = PositionalEncoding::kNone;
  WindowMode window_mode = WindowMode::kHalving;
  /// Absolute-position table capacity (padded positions).
  std::size_t max_len = 4096;
  /// Relative offsets are clipped to [-max_relative, max_relative].
  std::size_t max_relative = 64;

  std::size_t head_dim() const { return embed_dim / heads; }
  /// Per-side zero padding applied before window extraction.
  std::size_t window_padding() const;
  /// Throws ConfigError naming the offending field.
  void validate() const;

  bool operator==(const LgaConfig&) const = default;
};

/// Window count for a sequence of length n. ShapeError if n < l when unpadded.
std::size_t window_count(std::size_t n, std::size_t window_len, std::size_t stride,
                         WindowMode mode);

/// Output length of attention_forward for an input of length n.
std::size_t output_length(std::size_t n, const LgaConfig& cfg);

template <typename T>
struct LgaWeights {
  nn::LayerNormParams<T> norm;  // used only by the standalone forward
  // Convolutional projections (LGA, GLOBAL_QKV, LOCAL_QKV).
  nn::Conv1dParams<T> conv_q, conv_k, conv_v;
  // Linear projections (VIT_LIKE, SWIN_LIKE).
  nn::LinearParams<T> lin_q, lin_k, lin_v;
  Tensor<T> learned_positions;  // [max_len, D] for LEARNABLE_APE
  Tensor<T> relative_bias;      // [H, 2*max_relative + 1] for RELATIVE

  /// Random init for the projections the variant uses; tables start at zero.
  static LgaWeights create(const LgaConfig& cfg, Rng& rng);
  /// Identity projections with zero bias; for oracle tests.
  static LgaWeights identity(const LgaConfig& cfg);

  /// Every trainable tensor of the active variant, in a stable order.
  std::vector<std::pair<std::string, Tensor<T>>> parameters(const LgaConfig& cfg) const;
};

/// Attention probabilities captured during a forward pass, one tensor per
/// attention call shaped [..., H, queries, keys].
template <typename T>
struct AttentionTrace {
  std::vector<Tensor<T>> weights;
};

/// Fixed sinusoidal table: row p = [sin(p w_0), cos(p w_0), sin(p w_1), ...],
/// w_i = 10000^(-2i/D).
template <typename T>
Tensor<T> sinusoidal_table(std::size_t positions, std::size_t dim);

enum class QueryPath { kFast, kReference };

/// Averaged windowed queries [B, M, D] from a normalised sequence [B, N, D].
/// kFast: shape-preserving conv then average pooling with kernel l, stride s.
/// kReference: each window is sliced (with a halo of the conv padding taken
/// from the sequence), convolved without padding and averaged explicitly.
template <typename T>
Tensor<T> local_queries(const Tensor<T>& x_norm, const LgaConfig& cfg, const LgaWeights<T>& w,
                        QueryPath path = QueryPath::kFast);

/// Sequence-wide keys and values, each [B, N, D].
template <typename T>
std::pair<Tensor<T>, Tensor<T>> global_kv(const Tensor<T>& x_norm, const LgaConfig& cfg,
                                          const LgaWeights<T>& w);

/// Multi-head scaled dot-product attention. q: [G..., Lq, D], k/v: [G..., Lk, D].
/// `bias`, if defined, is added to the scores and must broadcast to
/// [G..., H, Lq, Lk].
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               std::size_t heads, const Tensor<T>& bias = {},
                               AttentionTrace<T>* trace = nullptr);

/// Relative-position score bias [H, Lq, Lk] with offsets k_pos - q_pos.
template <typename T>
Tensor<T> relative_bias(const LgaWeights<T>& w, const LgaConfig& cfg,
                        const std::vector<std::ptrdiff_t>& query_pos,
                        const std::vector<std::ptrdiff_t>& key_pos);

/// Attention of the configured variant over an already normalised sequence.
/// Output is [B, N/2, D] in halving mode, except VIT_LIKE which keeps [B, N, D].
template <typename T>
Tensor<T> attention_forward_normalized(const Tensor<T>& x_norm, const LgaConfig& cfg,
                                       const LgaWeights<T>& w, AttentionTrace<T>* trace = nullptr);

/// Layer norm (with w.norm) followed by attention_forward_normalized.
template <typename T>
Tensor<T> attention_forward(const Tensor<T>& x, const LgaConfig& cfg, const LgaWeights<T>& w,
                            AttentionTrace<T>* trace = nullptr);

/// The local-global layer itself: attention_forward with the LGA variant.
template <typename T>
Tensor<T> lg_attention(const Tensor<T>& x, const LgaConfig& cfg, const LgaWeights<T>& w,
                       AttentionTrace<T>* trace = nullptr);

}  // namespace lga::attn
