#include "lga/attention.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "lga/ops.hpp"

namespace lga::attn {

namespace {

constexpr std::pair<Variant, std::string_view> kVariantTags[] = {
    {Variant::kLga, "LGA"},
    {Variant::kVitLike, "VIT_LIKE"},
    {Variant::kSwinLike, "SWIN_LIKE"},
    {Variant::kGlobalQkv, "GLOBAL_QKV"},
    {Variant::kLocalQkv, "LOCAL_QKV"},
};

constexpr std::pair<PositionalEncoding, std::string_view> kEncodingTags[] = {
    {PositionalEncoding::kNone, "NONE"},
    {PositionalEncoding::kSinusoidalApe, "SINUSOIDAL_APE"},
    {PositionalEncoding::kLearnableApe, "LEARNABLE_APE"},
    {PositionalEncoding::kRelative, "RELATIVE"},
};

constexpr std::pair<WindowMode, std::string_view> kModeTags[] = {
    {WindowMode::kHalving, "HALVING"},
    {WindowMode::kUnpadded, "UNPADDED"},
};

template <typename E, std::size_t N>
std::string_view tag_of(const std::pair<E, std::string_view> (&table)[N], E value) {
  for (const auto& [e, tag] : table)
    if (e == value) return tag;
  return "?";
}

template <typename E, std::size_t N>
E parse_tag(const std::pair<E, std::string_view> (&table)[N], std::string_view tag,
            const char* what) {
  for (const auto& [e, t] : table)
    if (t == tag) return e;
  std::string options;
  for (const auto& [e, t] : table) options += (options.empty() ? "" : ", ") + std::string(t);
  throw ConfigError("unknown " + std::string(what) + " tag '" + std::string(tag) +
                    "' (expected one of " + options + ")");
}

bool uses_conv_projections(Variant v) {
  return v == Variant::kLga || v == Variant::kGlobalQkv || v == Variant::kLocalQkv;
}

bool uses_windows(Variant v) { return v == Variant::kLga || v == Variant::kLocalQkv; }

void check_input(const Shape& s, const LgaConfig& cfg) {
  if (s.size() != 3 || s[2] != cfg.embed_dim) {
    throw ShapeError("attention expects [B, N, " + std::to_string(cfg.embed_dim) + "], got " +
                     shape_str(s));
  }
}

// Rows [first, first + count) of the absolute position table, or undefined
// when no absolute encoding is active.
template <typename T>
Tensor<T> position_rows(const LgaConfig& cfg, const LgaWeights<T>& w, std::size_t first,
                        std::size_t count) {
  const bool sinusoidal = cfg.pos_encoding == PositionalEncoding::kSinusoidalApe;
  if (!sinusoidal && cfg.pos_encoding != PositionalEncoding::kLearnableApe) return {};
  if (first + count > cfg.max_len) {
    throw ConfigError("positional encoding table holds " + std::to_string(cfg.max_len) +
                      " positions, sequence needs " + std::to_string(first + count));
  }
  if (sinusoidal) {
    return slice(sinusoidal_table<T>(first + count, cfg.embed_dim), 0, first, first + count);
  }
  return slice(w.learned_positions, 0, first, first + count);
}

// emb: [B, D, L] channel-first; positions first..first+L-1.
template <typename T>
Tensor<T> add_positions_cf(const Tensor<T>& emb, const LgaConfig& cfg, const LgaWeights<T>& w,
                           std::size_t first) {
  auto rows = position_rows(cfg, w, first, emb.dim(2));
  if (!rows.defined()) return emb;
  return add(emb, transpose(rows, 0, 1));
}

// emb: [B, L, D]; positions 0..L-1.
template <typename T>
Tensor<T> add_positions_tf(const Tensor<T>& emb, const LgaConfig& cfg, const LgaWeights<T>& w) {
  auto rows = position_rows(cfg, w, 0, emb.dim(1));
  if (!rows.defined()) return emb;
  return add(emb, rows);
}

template <typename T>
Tensor<T> to_channels_first(const Tensor<T>& x) {
  return transpose(x, 1, 2);
}

// Keys/values from a channel-first sequence, positions starting at `first`.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> project_kv(const Tensor<T>& xt, const LgaConfig& cfg,
                                           const LgaWeights<T>& w, std::size_t first) {
  auto k = add_positions_cf(nn::conv1d(xt, w.conv_k), cfg, w, first);
  auto v = add_positions_cf(nn::conv1d(xt, w.conv_v), cfg, w, first);
  return {transpose(k, 1, 2), transpose(v, 1, 2)};
}

std::vector<std::ptrdiff_t> iota_positions(std::size_t n, std::ptrdiff_t start = 0,
                                           std::ptrdiff_t step = 1) {
  std::vector<std::ptrdiff_t> pos(n);
  for (std::size_t i = 0; i < n; ++i) pos[i] = start + static_cast<std::ptrdiff_t>(i) * step;
  return pos;
}

template <typename T>
Tensor<T> maybe_relative(const LgaWeights<T>& w, const LgaConfig& cfg,
                         const std::vector<std::ptrdiff_t>& qpos,
                         const std::vector<std::ptrdiff_t>& kpos) {
  if (cfg.pos_encoding != PositionalEncoding::kRelative) return {};
  return relative_bias(w, cfg, qpos, kpos);
}

template <typename T>
Tensor<T> forward_lga(const Tensor<T>& x_norm, const LgaConfig& cfg, const LgaWeights<T>& w,
                      AttentionTrace<T>* trace) {
  const std::size_t n = x_norm.dim(1);
  auto q = local_queries(x_norm, cfg, w, QueryPath::kFast);
  const std::size_t pad = cfg.window_padding();
  auto [k, v] = project_kv(to_channels_first(x_norm), cfg, w, pad);
  // Query i covers padded positions [i*s, i*s + l); keys sit at j + pad.
  auto qpos = iota_positions(q.dim(1), static_cast<std::ptrdiff_t>((cfg.window_len - 1) / 2),
                             static_cast<std::ptrdiff_t>(cfg.stride));
  auto kpos = iota_positions(n, static_cast<std::ptrdiff_t>(pad));
  auto o = multi_head_attention(q, k, v, cfg.heads, maybe_relative(w, cfg, qpos, kpos), trace);
  return add(o, q);
}

template <typename T>
Tensor<T> forward_global_qkv(const Tensor<T>& x_norm, const LgaConfig& cfg,
                             const LgaWeights<T>& w, AttentionTrace<T>* trace) {
  const std::size_t n = x_norm.dim(1);
  auto xt = to_channels_first(x_norm);
  auto qc = add_positions_cf(nn::conv1d(xt, w.conv_q), cfg, w, 0);
  auto q = transpose(nn::avg_pool1d(qc, cfg.stride, cfg.stride), 1, 2);
  auto [k, v] = project_kv(xt, cfg, w, 0);
  auto qpos = iota_positions(q.dim(1), static_cast<std::ptrdiff_t>((cfg.stride - 1) / 2),
                             static_cast<std::ptrdiff_t>(cfg.stride));
  auto kpos = iota_positions(n);
  auto o = multi_head_attention(q, k, v, cfg.heads, maybe_relative(w, cfg, qpos, kpos), trace);
  return add(o, q);
}

template <typename T>
Tensor<T> forward_local_qkv(const Tensor<T>& x_norm, const LgaConfig& cfg,
                            const LgaWeights<T>& w, AttentionTrace<T>* trace) {
  const std::size_t batch = x_norm.dim(0);
  const std::size_t d = cfg.embed_dim;
  const std::size_t l = cfg.window_len;
  auto q = local_queries(x_norm, cfg, w, QueryPath::kFast);  // [B, M, D]
  const std::size_t m = q.dim(1);
  auto xt = to_channels_first(x_norm);
  const std::size_t pad = cfg.window_padding();
  auto xp = pad ? lga::pad(xt, 2, pad, pad) : xt;
  auto kc = add_positions_cf(nn::conv1d(xp, w.conv_k), cfg, w, 0);
  auto vc = add_positions_cf(nn::conv1d(xp, w.conv_v), cfg, w, 0);
  // [B, Np, D] -> [B, M, l, D]
  auto kw = unfold(transpose(kc, 1, 2), 1, l, cfg.stride);
  auto vw = unfold(transpose(vc, 1, 2), 1, l, cfg.stride);
  auto q4 = reshape(q, {batch, m, 1, d});
  auto qpos = std::vector<std::ptrdiff_t>{static_cast<std::ptrdiff_t>((l - 1) / 2)};
  auto kpos = iota_positions(l);
  auto o = multi_head_attention(q4, kw, vw, cfg.heads, maybe_relative(w, cfg, qpos, kpos), trace);
  return add(reshape(o, {batch, m, d}), q);
}

template <typename T>
std::array<Tensor<T>, 3> linear_qkv(const Tensor<T>& x_norm, const LgaConfig& cfg,
                                    const LgaWeights<T>& w) {
  return {add_positions_tf(nn::linear(x_norm, w.lin_q), cfg, w),
          add_positions_tf(nn::linear(x_norm, w.lin_k), cfg, w),
          add_positions_tf(nn::linear(x_norm, w.lin_v), cfg, w)};
}

template <typename T>
Tensor<T> forward_vit(const Tensor<T>& x_norm, const LgaConfig& cfg, const LgaWeights<T>& w,
                      AttentionTrace<T>* trace) {
  const std::size_t n = x_norm.dim(1);
  auto [q, k, v] = linear_qkv(x_norm, cfg, w);
  auto pos = iota_positions(n);
  auto o = multi_head_attention(q, k, v, cfg.heads, maybe_relative(w, cfg, pos, pos), trace);
  return add(o, q);
}

template <typename T>
Tensor<T> forward_swin(const Tensor<T>& x_norm, const LgaConfig& cfg, const LgaWeights<T>& w,
                       AttentionTrace<T>* trace) {
  const std::size_t batch = x_norm.dim(0), n = x_norm.dim(1), d = cfg.embed_dim;
  if (n < 2) throw ShapeError("SWIN_LIKE attention needs a sequence of length >= 2");
  const std::size_t win = std::min(cfg.window_len, n);
  if (n % win != 0) {
    throw ShapeError("SWIN_LIKE window " + std::to_string(win) + " does not tile length " +
                     std::to_string(n));
  }
  auto [q, k, v] = linear_qkv(x_norm, cfg, w);
  const Shape windowed{batch, n / win, win, d};
  auto pos = iota_positions(win);
  auto o = multi_head_attention(reshape(q, windowed), reshape(k, windowed), reshape(v, windowed),
                                cfg.heads, maybe_relative(w, cfg, pos, pos), trace);
  auto y = add(reshape(o, {batch, n, d}), q);
  // Inter-block pooling halves the sequence.
  return transpose(nn::avg_pool1d(to_channels_first(y), 2, 2), 1, 2);
}

}  // namespace

std::string_view to_string(Variant v) { return tag_of(kVariantTags, v); }
std::string_view to_string(PositionalEncoding pe) { return tag_of(kEncodingTags, pe); }
std::string_view to_string(WindowMode m) { return tag_of(kModeTags, m); }
Variant parse_variant(std::string_view tag) { return parse_tag(kVariantTags, tag, "variant"); }
PositionalEncoding parse_positional_encoding(std::string_view tag) {
  return parse_tag(kEncodingTags, tag, "positional encoding");
}
WindowMode parse_window_mode(std::string_view tag) {
  return parse_tag(kModeTags, tag, "window mode");
}

std::size_t LgaConfig::window_padding() const {
  if (window_mode == WindowMode::kUnpadded || window_len < stride) return 0;
  return (window_len - stride) / 2;
}

void LgaConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("attention." + field + ": " + why);
  };
  if (embed_dim == 0) fail("embed_dim", "must be positive");
  if (heads == 0) fail("heads", "must be positive");
  if (embed_dim % heads != 0) {
    fail("heads", std::to_string(heads) + " does not divide embed_dim " +
                      std::to_string(embed_dim));
  }
  if (stride == 0) fail("stride", "must be positive");
  if (window_len < stride) fail("window_len", "must be >= stride");
  if (window_mode == WindowMode::kHalving && (window_len - stride) % 2 != 0) {
    fail("window_len", "window_len - stride must be even in HALVING mode");
  }
  if (query_kernel == 0 || query_kernel % 2 == 0) fail("query_kernel", "must be odd");
  if (2 * query_padding + 1 != query_kernel) {
    fail("query_padding", "must be (query_kernel - 1) / 2 to preserve sequence length");
  }
  if (kv_kernel == 0 || kv_kernel % 2 == 0) fail("kv_kernel", "must be odd");
  if (max_len == 0) fail("max_len", "must be positive");
}

std::size_t window_count(std::size_t n, std::size_t window_len, std::size_t stride,
                         WindowMode mode) {
  if (stride == 0 || window_len == 0) throw ShapeError("window length and stride must be positive");
  if (mode == WindowMode::kUnpadded) {
    if (n < window_len) {
      throw ShapeError("sequence length " + std::to_string(n) + " shorter than window " +
                       std::to_string(window_len));
    }
    return (n - window_len) / stride + 1;
  }
  if (window_len < stride || (window_len - stride) % 2 != 0) {
    throw ShapeError("HALVING mode needs window_len - stride even and non-negative");
  }
  const std::size_t padded = n + (window_len - stride);
  if (padded < window_len) {
    throw ShapeError("sequence length " + std::to_string(n) + " shorter than stride " +
                     std::to_string(stride));
  }
  return (padded - window_len) / stride + 1;
}

std::size_t output_length(std::size_t n, const LgaConfig& cfg) {
  switch (cfg.variant) {
    case Variant::kLga:
    case Variant::kLocalQkv:
      return window_count(n, cfg.window_len, cfg.stride, cfg.window_mode);
    case Variant::kGlobalQkv:
      return window_count(n, cfg.stride, cfg.stride, WindowMode::kUnpadded);
    case Variant::kSwinLike:
      return n / 2;
    case Variant::kVitLike:
      return n;
  }
  return n;
}

template <typename T>
LgaWeights<T> LgaWeights<T>::create(const LgaConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.embed_dim;
  LgaWeights w;
  w.norm = nn::LayerNormParams<T>::create(d);
  if (uses_conv_projections(cfg.variant)) {
    w.conv_q = nn::Conv1dParams<T>::create(d, d, cfg.query_kernel, 1, cfg.query_padding, rng);
    w.conv_k = nn::Conv1dParams<T>::create(d, d, cfg.kv_kernel, 1, (cfg.kv_kernel - 1) / 2, rng);
    w.conv_v = nn::Conv1dParams<T>::create(d, d, cfg.kv_kernel, 1, (cfg.kv_kernel - 1) / 2, rng);
  } else {
    w.lin_q = nn::LinearParams<T>::create(d, d, rng);
    w.lin_k = nn::LinearParams<T>::create(d, d, rng);
    w.lin_v = nn::LinearParams<T>::create(d, d, rng);
  }
  if (cfg.pos_encoding == PositionalEncoding::kLearnableApe) {
    w.learned_positions = Tensor<T>::zeros({cfg.max_len, d}, true);
  }
  if (cfg.pos_encoding == PositionalEncoding::kRelative) {
    w.relative_bias = Tensor<T>::zeros({cfg.heads, 2 * cfg.max_relative + 1}, true);
  }
  return w;
}

template <typename T>
LgaWeights<T> LgaWeights<T>::identity(const LgaConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.embed_dim;
  LgaWeights w;
  w.norm = nn::LayerNormParams<T>::create(d);
  if (uses_conv_projections(cfg.variant)) {
    w.conv_q = nn::Conv1dParams<T>::identity(d, cfg.query_kernel);
    w.conv_k = nn::Conv1dParams<T>::identity(d, cfg.kv_kernel);
    w.conv_v = nn::Conv1dParams<T>::identity(d, cfg.kv_kernel);
  } else {
    for (auto* lin : {&w.lin_q, &w.lin_k, &w.lin_v}) {
      *lin = nn::LinearParams<T>::zeros(d, d);
      auto wd = lin->weight.mutable_data();
      for (std::size_t i = 0; i < d; ++i) wd[i * d + i] = T(1);
    }
  }
  if (cfg.pos_encoding == PositionalEncoding::kLearnableApe) {
    w.learned_positions = Tensor<T>::zeros({cfg.max_len, d}, true);
  }
  if (cfg.pos_encoding == PositionalEncoding::kRelative) {
    w.relative_bias = Tensor<T>::zeros({cfg.heads, 2 * cfg.max_relative + 1}, true);
  }
  return w;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> LgaWeights<T>::parameters(
    const LgaConfig& cfg) const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  if (uses_conv_projections(cfg.variant)) {
    out.emplace_back("conv_q.weight", conv_q.weight);
    out.emplace_back("conv_q.bias", conv_q.bias);
    out.emplace_back("conv_k.weight", conv_k.weight);
    out.emplace_back("conv_k.bias", conv_k.bias);
    out.emplace_back("conv_v.weight", conv_v.weight);
    out.emplace_back("conv_v.bias", conv_v.bias);
  } else {
    out.emplace_back("lin_q.weight", lin_q.weight);
    out.emplace_back("lin_q.bias", lin_q.bias);
    out.emplace_back("lin_k.weight", lin_k.weight);
    out.emplace_back("lin_k.bias", lin_k.bias);
    out.emplace_back("lin_v.weight", lin_v.weight);
    out.emplace_back("lin_v.bias", lin_v.bias);
  }
  if (cfg.pos_encoding == PositionalEncoding::kLearnableApe) {
    out.emplace_back("positions", learned_positions);
  }
  if (cfg.pos_encoding == PositionalEncoding::kRelative) {
    out.emplace_back("relative_bias", relative_bias);
  }
  return out;
}

template <typename T>
Tensor<T> sinusoidal_table(std::size_t positions, std::size_t dim) {
  std::vector<T> v(positions * dim);
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
      const double angle = static_cast<double>(p) * freq;
      v[p * dim + i] = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return Tensor<T>::from_data({positions, dim}, std::move(v));
}

template <typename T>
Tensor<T> local_queries(const Tensor<T>& x_norm, const LgaConfig& cfg, const LgaWeights<T>& w,
                        QueryPath path) {
  cfg.validate();
  check_input(x_norm.shape(), cfg);
  const std::size_t batch = x_norm.dim(0), n = x_norm.dim(1), d = cfg.embed_dim;
  const std::size_t l = cfg.window_len, s = cfg.stride;
  const std::size_t m = window_count(n, l, s, cfg.window_mode);
  const std::size_t pad = cfg.window_padding();
  auto xt = to_channels_first(x_norm);
  auto xp = pad ? lga::pad(xt, 2, pad, pad) : xt;

  if (path == QueryPath::kFast) {
    auto qc = add_positions_cf(nn::conv1d(xp, w.conv_q), cfg, w, 0);
    return transpose(nn::avg_pool1d(qc, l, s), 1, 2);
  }

  const std::size_t halo = w.conv_q.padding;
  auto xh = halo ? lga::pad(xp, 2, halo, halo) : xp;
  std::vector<Tensor<T>> queries;
  queries.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    auto window = slice(xh, 2, i * s, i * s + l + 2 * halo);
    auto conv = nn::conv1d(window, w.conv_q.weight, w.conv_q.bias, 1, 0);  // [B, D, l]
    conv = add_positions_cf(conv, cfg, w, i * s);
    queries.push_back(reshape(mean(conv, 2), {batch, 1, d}));
  }
  return concat(queries, 1);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> global_kv(const Tensor<T>& x_norm, const LgaConfig& cfg,
                                          const LgaWeights<T>& w) {
  cfg.validate();
  check_input(x_norm.shape(), cfg);
  const std::size_t first = uses_windows(cfg.variant) ? cfg.window_padding() : 0;
  return project_kv(to_channels_first(x_norm), cfg, w, first);
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               std::size_t heads, const Tensor<T>& bias,
                               AttentionTrace<T>* trace) {
  const Shape& qs = q.shape();
  const Shape& ks = k.shape();
  if (qs.size() < 2 || ks != v.shape() || ks.size() != qs.size() || ks.back() != qs.back() ||
      !std::equal(qs.begin(), qs.end() - 2, ks.begin())) {
    throw ShapeError("attention operands incompatible: q " + shape_str(qs) + ", k " +
                     shape_str(ks) + ", v " + shape_str(v.shape()));
  }
  const std::size_t d = qs.back();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("heads " + std::to_string(heads) + " does not divide " + std::to_string(d));
  }
  const std::size_t dh = d / heads;
  const std::size_t lq = qs[qs.size() - 2], lk = ks[ks.size() - 2];
  const Shape lead(qs.begin(), qs.end() - 2);
  const std::size_t g = shape_numel(lead);

  auto qh = permute(reshape(q, {g, lq, heads, dh}), {0, 2, 1, 3});  // [G,H,Lq,Dh]
  auto kh = permute(reshape(k, {g, lk, heads, dh}), {0, 2, 3, 1});  // [G,H,Dh,Lk]
  auto vh = permute(reshape(v, {g, lk, heads, dh}), {0, 2, 1, 3});  // [G,H,Lk,Dh]

  Tensor<T> scores;
  try {
    scores = scale(matmul(qh, kh), T(1) / std::sqrt(static_cast<T>(dh)));
    if (bias.defined()) {
      Shape full = lead;
      full.insert(full.end(), {heads, lq, lk});
      scores = reshape(add(reshape(scores, full), bias), {g, heads, lq, lk});
    }
  } catch (const NonFiniteError& e) {
    throw NonFiniteError(std::string("non-finite attention scores: ") + e.what());
  }
  auto probs = softmax(scores, 3);
  if (trace) {
    Shape full = lead;
    full.insert(full.end(), {heads, lq, lk});
    trace->weights.push_back(reshape(probs.detach(), full));
  }
  auto o = permute(matmul(probs, vh), {0, 2, 1, 3});  // [G,Lq,H,Dh]
  Shape out = lead;
  out.insert(out.end(), {lq, d});
  return reshape(o, out);
}

template <typename T>
Tensor<T> relative_bias(const LgaWeights<T>& w, const LgaConfig& cfg,
                        const std::vector<std::ptrdiff_t>& query_pos,
                        const std::vector<std::ptrdiff_t>& key_pos) {
  const std::size_t width = 2 * cfg.max_relative + 1;
  if (!w.relative_bias.defined() || w.relative_bias.shape() != Shape{cfg.heads, width}) {
    throw ConfigError("relative position table missing or mis-shaped");
  }
  const auto r = static_cast<std::ptrdiff_t>(cfg.max_relative);
  std::vector<std::size_t> index;
  index.reserve(cfg.heads * query_pos.size() * key_pos.size());
  for (std::size_t h = 0; h < cfg.heads; ++h)
    for (auto qp : query_pos)
      for (auto kp : key_pos) {
        const std::ptrdiff_t off = std::clamp<std::ptrdiff_t>(kp - qp, -r, r);
        index.push_back(h * width + static_cast<std::size_t>(off + r));
      }
  return gather(w.relative_bias, std::move(index), {cfg.heads, query_pos.size(), key_pos.size()});
}

template <typename T>
Tensor<T> attention_forward_normalized(const Tensor<T>& x_norm, const LgaConfig& cfg,
                                       const LgaWeights<T>& w, AttentionTrace<T>* trace) {
  cfg.validate();
  check_input(x_norm.shape(), cfg);
  switch (cfg.variant) {
    case Variant::kLga:
      return forward_lga(x_norm, cfg, w, trace);
    case Variant::kGlobalQkv:
      return forward_global_qkv(x_norm, cfg, w, trace);
    case Variant::kLocalQkv:
      return forward_local_qkv(x_norm, cfg, w, trace);
    case Variant::kVitLike:
      return forward_vit(x_norm, cfg, w, trace);
    case Variant::kSwinLike:
      return forward_swin(x_norm, cfg, w, trace);
  }
  throw ConfigError("unknown attention variant");
}

template <typename T>
Tensor<T> attention_forward(const Tensor<T>& x, const LgaConfig& cfg, const LgaWeights<T>& w,
                            AttentionTrace<T>* trace) {
  check_input(x.shape(), cfg);
  return attention_forward_normalized(nn::layer_norm(x, w.norm), cfg, w, trace);
}

template <typename T>
Tensor<T> lg_attention(const Tensor<T>& x, const LgaConfig& cfg, const LgaWeights<T>& w,
                       AttentionTrace<T>* trace) {
  if (cfg.variant != Variant::kLga) {
    throw ConfigError("lg_attention called with variant " + std::string(to_string(cfg.variant)));
  }
  return attention_forward(x, cfg, w, trace);
}

#define LGA_INSTANTIATE_ATTN(T)                                                                  \
  template struct LgaWeights<T>;                                                                \
  template Tensor<T> sinusoidal_table<T>(std::size_t, std::size_t);                             \
  template Tensor<T> local_queries(const Tensor<T>&, const LgaConfig&, const LgaWeights<T>&,     \
                                   QueryPath);                                                  \
  template std::pair<Tensor<T>, Tensor<T>> global_kv(const Tensor<T>&, const LgaConfig&,         \
                                                     const LgaWeights<T>&);                     \
  template Tensor<T> multi_head_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                          std::size_t, const Tensor<T>&, AttentionTrace<T>*);   \
  template Tensor<T> relative_bias(const LgaWeights<T>&, const LgaConfig&,                       \
                                   const std::vector<std::ptrdiff_t>&,                          \
                                   const std::vector<std::ptrdiff_t>&);                         \
  template Tensor<T> attention_forward_normalized(const Tensor<T>&, const LgaConfig&,            \
                                                  const LgaWeights<T>&, AttentionTrace<T>*);    \
  template Tensor<T> attention_forward(const Tensor<T>&, const LgaConfig&, const LgaWeights<T>&, \
                                       AttentionTrace<T>*);                                     \
  template Tensor<T> lg_attention(const Tensor<T>&, const LgaConfig&, const LgaWeights<T>&,      \
                                  AttentionTrace<T>*);

LGA_INSTANTIATE_ATTN(float)
LGA_INSTANTIATE_ATTN(double)

#undef LGA_INSTANTIATE_ATTN

}  // namespace lga::attn
