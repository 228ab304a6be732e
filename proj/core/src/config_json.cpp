#include "lga/config_json.hpp"

#include <algorithm>

namespace lga {

StrictObject::StrictObject(const nlohmann::json& json, std::string path)
    : json_(json), path_(std::move(path)) {
  if (!json_.is_object()) throw ConfigError(path_ + ": expected an object");
}

const nlohmann::json* StrictObject::child(const char* key) {
  auto it = json_.find(key);
  if (it == json_.end()) return nullptr;
  seen_.push_back(key);
  if (!it->is_object()) throw ConfigError(field(key) + ": expected an object");
  return &*it;
}

std::string StrictObject::field(const std::string& key) const {
  return path_.empty() ? key : path_ + "." + key;
}

void StrictObject::finish() const {
  for (auto it = json_.begin(); it != json_.end(); ++it) {
    if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end()) {
      throw ConfigError(field(it.key()) + ": unknown key");
    }
  }
}

nlohmann::json to_json(const attn::LgaConfig& cfg) {
  return {
      {"variant", std::string(attn::to_string(cfg.variant))},
      {"pos_encoding", std::string(attn::to_string(cfg.pos_encoding))},
      {"window_mode", std::string(attn::to_string(cfg.window_mode))},
      {"window_len", cfg.window_len},
      {"stride", cfg.stride},
      {"query_kernel", cfg.query_kernel},
      {"query_padding", cfg.query_padding},
      {"kv_kernel", cfg.kv_kernel},
      {"max_len", cfg.max_len},
      {"max_relative", cfg.max_relative},
  };
}

attn::LgaConfig lga_config_from_json(const nlohmann::json& json, const std::string& path) {
  attn::LgaConfig cfg;
  StrictObject obj(json, path);
  std::string variant(attn::to_string(cfg.variant));
  std::string pe(attn::to_string(cfg.pos_encoding));
  std::string mode(attn::to_string(cfg.window_mode));
  obj.read("variant", variant);
  obj.read("pos_encoding", pe);
  obj.read("window_mode", mode);
  obj.read("window_len", cfg.window_len);
  obj.read("stride", cfg.stride);
  obj.read("query_kernel", cfg.query_kernel);
  bool has_padding = json.contains("query_padding");
  obj.read("query_padding", cfg.query_padding);
  if (!has_padding) cfg.query_padding = (cfg.query_kernel - 1) / 2;
  obj.read("kv_kernel", cfg.kv_kernel);
  obj.read("max_len", cfg.max_len);
  obj.read("max_relative", cfg.max_relative);
  obj.finish();
  try {
    cfg.variant = attn::parse_variant(variant);
    cfg.pos_encoding = attn::parse_positional_encoding(pe);
    cfg.window_mode = attn::parse_window_mode(mode);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return cfg;
}

nlohmann::json to_json(const model::ModelConfig& cfg) {
  return {
      {"leads", cfg.leads},
      {"input_length", cfg.input_length},
      {"frontend_channels", cfg.frontend_channels},
      {"frontend_kernel", cfg.frontend_kernel},
      {"embed_dim", cfg.embed_dim},
      {"heads", cfg.heads},
      {"stages", cfg.stages},
      {"d_base", cfg.d_base},
      {"num_classes", cfg.num_classes},
      {"precision", std::string(model::to_string(cfg.precision))},
      {"attention", to_json(cfg.attention)},
  };
}

model::ModelConfig model_config_from_json(const nlohmann::json& json, const std::string& path) {
  model::ModelConfig cfg;
  StrictObject obj(json, path);
  obj.read("leads", cfg.leads);
  obj.read("input_length", cfg.input_length);
  obj.read("frontend_channels", cfg.frontend_channels);
  obj.read("frontend_kernel", cfg.frontend_kernel);
  obj.read("embed_dim", cfg.embed_dim);
  obj.read("heads", cfg.heads);
  obj.read("stages", cfg.stages);
  obj.read("d_base", cfg.d_base);
  obj.read("num_classes", cfg.num_classes);
  std::string precision(model::to_string(cfg.precision));
  obj.read("precision", precision);
  if (const auto* a = obj.child("attention")) {
    cfg.attention = lga_config_from_json(*a, obj.field("attention"));
  }
  obj.finish();
  try {
    cfg.precision = model::parse_precision(precision);
  } catch (const ConfigError& e) {
    throw ConfigError(obj.field("precision") + ": " + e.what());
  }
  cfg.attention.embed_dim = cfg.embed_dim;
  cfg.attention.heads = cfg.heads;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return cfg;
}

}  // namespace lga
