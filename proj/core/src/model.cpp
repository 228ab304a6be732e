#include "lga/model.hpp"

#include <string>

#include "lga/ops.hpp"
#include "lga/random.hpp"

namespace lga::model {

std::string_view to_string(Precision p) { return p == Precision::kF64 ? "f64" : "f32"; }

Precision parse_precision(std::string_view tag) {
  if (tag == "f32") return Precision::kF32;
  if (tag == "f64") return Precision::kF64;
  throw ConfigError("unknown precision '" + std::string(tag) + "' (expected f32 or f64)");
}

std::vector<ResBlockSpec> ModelConfig::frontend_specs() const {
  std::vector<ResBlockSpec> specs;
  std::size_t in = leads;
  for (auto out : frontend_channels) {
    specs.push_back({in, out, frontend_kernel, 2});
    in = out;
  }
  return specs;
}

std::vector<BlockSpec> ModelConfig::block_specs() const {
  std::vector<BlockSpec> specs;
  for (std::size_t i = 1; i <= stages; ++i) {
    attn::LgaConfig a = attention;
    a.embed_dim = embed_dim;
    a.heads = heads;
    specs.push_back({i, a, d_base});
  }
  return specs;
}

std::size_t ModelConfig::embedded_length() const {
  return input_length >> frontend_channels.size();
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("model." + field + ": " + why);
  };
  if (leads == 0) fail("leads", "must be positive");
  if (num_classes == 0) fail("num_classes", "must be positive");
  if (embed_dim == 0) fail("embed_dim", "must be positive");
  if (heads == 0 || embed_dim % heads != 0) fail("heads", "must divide embed_dim");
  if (d_base == 0) fail("d_base", "must be positive");
  if (frontend_kernel == 0 || frontend_kernel % 2 == 0) fail("frontend_kernel", "must be odd");
  if (frontend_channels.empty()) fail("frontend_channels", "needs at least one block");
  if (frontend_channels.back() != embed_dim) {
    fail("frontend_channels", "last entry must equal embed_dim");
  }
  for (auto c : frontend_channels)
    if (c == 0) fail("frontend_channels", "entries must be positive");
  const std::size_t reductions = frontend_channels.size() + stages;
  if (reductions >= 63 || input_length == 0 ||
      input_length % (std::size_t{1} << reductions) != 0) {
    fail("input_length", std::to_string(input_length) + " is not divisible by 2^" +
                             std::to_string(reductions));
  }
  if (attention.stride != 2) fail("attention.stride", "transformer blocks halve; stride must be 2");
  for (const auto& spec : block_specs()) spec.attention.validate();
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.leads = 12;
  c.input_length = 512;
  c.frontend_channels = {8, 16, 32, 64};
  c.embed_dim = 64;
  c.heads = 4;
  c.stages = 3;
  c.d_base = 16;
  c.attention.window_len = 16;
  c.attention.embed_dim = c.embed_dim;
  c.attention.heads = c.heads;
  return c;
}

ModelConfig ModelConfig::miniature() {
  ModelConfig c;
  c.leads = 2;
  c.input_length = 64;
  c.frontend_channels = {4, 4, 8, 8};
  c.embed_dim = 8;
  c.heads = 2;
  c.stages = 2;
  c.d_base = 2;
  c.num_classes = 3;
  c.attention.window_len = 4;
  c.attention.max_len = 64;
  c.attention.max_relative = 8;
  c.attention.embed_dim = c.embed_dim;
  c.attention.heads = c.heads;
  c.precision = Precision::kF64;
  return c;
}

template <typename T>
Tensor<T> res_block(const Tensor<T>& x, const ResBlockSpec& spec, const ResBlockWeights<T>& w) {
  auto h = nn::relu(nn::conv1d(x, w.conv1));
  h = nn::conv1d(h, w.conv2);
  auto skip = w.has_skip() ? nn::conv1d(x, w.skip) : x;
  return nn::max_pool1d(nn::relu(add(h, skip)), spec.pool_stride, spec.pool_stride);
}

template <typename T>
Tensor<T> front_end(const Tensor<T>& x, const std::vector<ResBlockSpec>& specs,
                    const std::vector<ResBlockWeights<T>>& weights) {
  if (specs.size() != weights.size()) throw UsageError("front-end spec/weight count mismatch");
  if (x.rank() != 3 || specs.empty() || x.dim(1) != specs.front().in_channels) {
    throw ShapeError("front-end expects [B, " +
                     std::to_string(specs.empty() ? 0 : specs.front().in_channels) +
                     ", N], got " + shape_str(x.shape()));
  }
  Tensor<T> h = x;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (h.dim(2) % specs[i].pool_stride != 0) {
      throw ConfigError("front-end block " + std::to_string(i) + ": length " +
                        std::to_string(h.dim(2)) + " not divisible by pool stride");
    }
    h = res_block(h, specs[i], weights[i]);
  }
  return transpose(h, 1, 2);
}

template <typename T>
Tensor<T> transformer_block(const Tensor<T>& x, const BlockSpec& spec, const BlockWeights<T>& w,
                            attn::AttentionTrace<T>* trace) {
  const auto& cfg = spec.attention;
  if (x.rank() != 3 || x.dim(2) != cfg.embed_dim) {
    throw ShapeError("transformer block expects [B, N, " + std::to_string(cfg.embed_dim) +
                     "], got " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(1);
  if (n % 2 != 0) {
    throw ShapeError("transformer block needs an even sequence length, got " + std::to_string(n));
  }
  auto xn = nn::layer_norm(x, w.norm1);
  auto y = attn::attention_forward_normalized(xn, cfg, w.attention, trace);
  if (cfg.variant == attn::Variant::kVitLike) {
    y = transpose(nn::conv1d(nn::max_pool1d(transpose(y, 1, 2), 2, 2), w.attn_reduce), 1, 2);
  }
  if (y.dim(1) != n / 2) {
    throw ShapeError("attention output length " + std::to_string(y.dim(1)) + " is not N/2 = " +
                     std::to_string(n / 2));
  }
  auto residual = transpose(nn::conv1d(nn::max_pool1d(transpose(xn, 1, 2), 2, 2), w.residual), 1, 2);
  auto z = add(y, residual);
  auto hidden = nn::relu(nn::linear(nn::layer_norm(z, w.norm2), w.mlp_in));
  return add(z, nn::linear(hidden, w.mlp_out));
}

template <typename T>
LgaModel<T> LgaModel<T>::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  LgaModel m;
  m.config_ = config;
  for (const auto& spec : config.frontend_specs()) {
    ResBlockWeights<T> w;
    const std::size_t pad = (spec.kernel - 1) / 2;
    w.conv1 = nn::Conv1dParams<T>::create(spec.in_channels, spec.out_channels, spec.kernel, 1,
                                          pad, rng);
    w.conv2 = nn::Conv1dParams<T>::create(spec.out_channels, spec.out_channels, spec.kernel, 1,
                                          pad, rng);
    if (spec.in_channels != spec.out_channels) {
      w.skip = nn::Conv1dParams<T>::create(spec.in_channels, spec.out_channels, 1, 1, 0, rng);
    }
    m.frontend_.push_back(std::move(w));
  }
  const std::size_t d = config.embed_dim;
  for (const auto& spec : config.block_specs()) {
    BlockWeights<T> w;
    w.norm1 = nn::LayerNormParams<T>::create(d);
    w.attention = attn::LgaWeights<T>::create(spec.attention, rng);
    w.residual = nn::Conv1dParams<T>::create(d, d, 1, 1, 0, rng);
    if (spec.attention.variant == attn::Variant::kVitLike) {
      w.attn_reduce = nn::Conv1dParams<T>::create(d, d, 1, 1, 0, rng);
    }
    w.norm2 = nn::LayerNormParams<T>::create(d);
    w.mlp_in = nn::LinearParams<T>::create(d, spec.mlp_hidden(), rng);
    w.mlp_out = nn::LinearParams<T>::create(spec.mlp_hidden(), d, rng);
    m.blocks_.push_back(std::move(w));
  }
  m.head_ = nn::LinearParams<T>::create(d, config.num_classes, rng);
  return m;
}

template <typename T>
Tensor<T> LgaModel<T>::forward(const Tensor<T>& x, ForwardTrace<T>* trace) const {
  if (x.rank() != 3 || x.dim(1) != config_.leads || x.dim(2) != config_.input_length) {
    throw ShapeError("model expects [B, " + std::to_string(config_.leads) + ", " +
                     std::to_string(config_.input_length) + "], got " + shape_str(x.shape()));
  }
  auto h = front_end(x, config_.frontend_specs(), frontend_);
  if (trace) trace->shapes.push_back(h.shape());
  const auto specs = config_.block_specs();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    h = transformer_block(h, specs[i], blocks_[i], trace ? &trace->attention : nullptr);
    if (trace) trace->shapes.push_back(h.shape());
  }
  auto logits = nn::linear(mean(h, 1), head_);
  if (trace) trace->shapes.push_back(logits.shape());
  return logits;
}

template <typename T>
TensorList<T> LgaModel<T>::parameters() const {
  TensorList<T> out;
  auto conv = [&](const std::string& prefix, const nn::Conv1dParams<T>& p) {
    out.push_back({prefix + ".weight", p.weight});
    out.push_back({prefix + ".bias", p.bias});
  };
  auto lin = [&](const std::string& prefix, const nn::LinearParams<T>& p) {
    out.push_back({prefix + ".weight", p.weight});
    out.push_back({prefix + ".bias", p.bias});
  };
  auto norm = [&](const std::string& prefix, const nn::LayerNormParams<T>& p) {
    out.push_back({prefix + ".gamma", p.gamma});
    out.push_back({prefix + ".beta", p.beta});
  };
  for (std::size_t i = 0; i < frontend_.size(); ++i) {
    const std::string prefix = "frontend." + std::to_string(i);
    conv(prefix + ".conv1", frontend_[i].conv1);
    conv(prefix + ".conv2", frontend_[i].conv2);
    if (frontend_[i].has_skip()) conv(prefix + ".skip", frontend_[i].skip);
  }
  const auto specs = config_.block_specs();
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string prefix = "blocks." + std::to_string(i);
    const auto& b = blocks_[i];
    norm(prefix + ".norm1", b.norm1);
    for (auto& [name, t] : b.attention.parameters(specs[i].attention)) {
      out.push_back({prefix + ".attn." + name, t});
    }
    conv(prefix + ".residual", b.residual);
    if (specs[i].attention.variant == attn::Variant::kVitLike) {
      conv(prefix + ".attn_reduce", b.attn_reduce);
    }
    norm(prefix + ".norm2", b.norm2);
    lin(prefix + ".mlp_in", b.mlp_in);
    lin(prefix + ".mlp_out", b.mlp_out);
  }
  lin("head", head_);
  return out;
}

#define LGA_INSTANTIATE_MODEL(T)                                                             \
  template Tensor<T> res_block(const Tensor<T>&, const ResBlockSpec&, const ResBlockWeights<T>&); \
  template Tensor<T> front_end(const Tensor<T>&, const std::vector<ResBlockSpec>&,           \
                               const std::vector<ResBlockWeights<T>>&);                     \
  template Tensor<T> transformer_block(const Tensor<T>&, const BlockSpec&,                   \
                                       const BlockWeights<T>&, attn::AttentionTrace<T>*);    \
  template class LgaModel<T>;

LGA_INSTANTIATE_MODEL(float)
LGA_INSTANTIATE_MODEL(double)

#undef LGA_INSTANTIATE_MODEL

}  // namespace lga::model
