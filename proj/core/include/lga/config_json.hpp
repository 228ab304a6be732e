#pragma once

// JSON (de)serialization of configuration types. Parsing is strict: unknown
// keys and mistyped values raise ConfigError naming the dotted field path.
// Missing keys keep their defaults.

#include <algorithm>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lga/attention.hpp"
#include "lga/model.hpp"
#include "lga/tensor.hpp"

namespace lga {

/// Reads fields from one JSON object and tracks which keys were consumed.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& json, std::string path);

  template <typename U>
  void read(const char* key, U& out) {
    auto it = json_.find(key);
    if (it == json_.end()) return;
    seen_.push_back(key);
    bool ok = true;
    if constexpr (std::is_same_v<U, bool>) {
      ok = it->is_boolean();
    } else if constexpr (std::is_integral_v<U>) {
      ok = it->is_number_integer() && (std::is_signed_v<U> || it->is_number_unsigned());
    } else if constexpr (std::is_floating_point_v<U>) {
      ok = it->is_number();
    } else if constexpr (std::is_same_v<U, std::vector<std::size_t>>) {
      ok = it->is_array() &&
           std::all_of(it->begin(), it->end(), [](const auto& e) { return e.is_number_unsigned(); });
    }
    if (ok) {
      try {
        out = it->template get<U>();
        return;
      } catch (const nlohmann::json::exception&) {
      }
    }
    throw ConfigError(field(key) + ": wrong type or range (got " + std::string(it->type_name()) +
                      " " + it->dump() + ")");
  }

  /// Returns the sub-object at key, or nullptr if absent.
  const nlohmann::json* child(const char* key);
  std::string field(const std::string& key) const;

  /// Throws if any key was never read.
  void finish() const;

 private:
  const nlohmann::json& json_;
  std::string path_;
  std::vector<std::string> seen_;
};

nlohmann::json to_json(const attn::LgaConfig& cfg);
/// embed_dim and heads are not read from JSON; callers set them.
attn::LgaConfig lga_config_from_json(const nlohmann::json& json, const std::string& path);

nlohmann::json to_json(const model::ModelConfig& cfg);
model::ModelConfig model_config_from_json(const nlohmann::json& json,
                                          const std::string& path = "model");

}  // namespace lga
