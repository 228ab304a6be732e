#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "lga/data.hpp"
#include "lga/model.hpp"
#include "lga/training.hpp"

namespace lga::cli {

/// Everything one training run needs. Serialized as JSON with the same field
/// names; parsing rejects unknown keys.
struct RunConfig {
  model::ModelConfig model;
  train::ScheduleSpec schedule;
  train::AdamWConfig optimizer;
  std::size_t batch_size = 16;
  std::size_t patience = 7;
  double threshold = 0.5;
  data::SplitSpec split;
  std::string dataset;  // LGAE file, split by patient into train/val/dev
  std::uint64_t seed = 0;

  train::TrainSpec train_spec() const;
  /// Throws ConfigError with a dotted field path.
  void validate() const;

  bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& json);

/// Relative dataset paths are resolved against the config file's directory.
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace lga::cli
