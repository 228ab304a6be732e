#include "run_config.hpp"

#include <fstream>

#include "lga/config_json.hpp"

namespace lga::cli {

train::TrainSpec RunConfig::train_spec() const {
  train::TrainSpec spec;
  spec.schedule = schedule;
  spec.optimizer = optimizer;
  spec.batch_size = batch_size;
  spec.patience = patience;
  spec.seed = seed;
  spec.threshold = threshold;
  return spec;
}

void RunConfig::validate() const {
  model.validate();
  train_spec().validate();
  split.validate();
}

nlohmann::json to_json(const RunConfig& cfg) {
  return {
      {"model", lga::to_json(cfg.model)},
      {"schedule",
       {{"lr_start", cfg.schedule.lr_start},
        {"lr_end", cfg.schedule.lr_end},
        {"epochs", cfg.schedule.epochs}}},
      {"optimizer",
       {{"beta1", cfg.optimizer.beta1},
        {"beta2", cfg.optimizer.beta2},
        {"epsilon", cfg.optimizer.epsilon},
        {"weight_decay", cfg.optimizer.weight_decay}}},
      {"train",
       {{"batch_size", cfg.batch_size},
        {"patience", cfg.patience},
        {"threshold", cfg.threshold}}},
      {"split",
       {{"train", cfg.split.train},
        {"val", cfg.split.val},
        {"dev", cfg.split.dev},
        {"seed", cfg.split.seed}}},
      {"data", {{"dataset", cfg.dataset}}},
      {"seed", cfg.seed},
  };
}

RunConfig run_config_from_json(const nlohmann::json& json) {
  RunConfig cfg;
  StrictObject root(json, "");
  if (const auto* m = root.child("model")) cfg.model = model_config_from_json(*m, "model");
  if (const auto* s = root.child("schedule")) {
    StrictObject o(*s, "schedule");
    o.read("lr_start", cfg.schedule.lr_start);
    o.read("lr_end", cfg.schedule.lr_end);
    o.read("epochs", cfg.schedule.epochs);
    o.finish();
  }
  if (const auto* s = root.child("optimizer")) {
    StrictObject o(*s, "optimizer");
    o.read("beta1", cfg.optimizer.beta1);
    o.read("beta2", cfg.optimizer.beta2);
    o.read("epsilon", cfg.optimizer.epsilon);
    o.read("weight_decay", cfg.optimizer.weight_decay);
    o.finish();
  }
  if (const auto* s = root.child("train")) {
    StrictObject o(*s, "train");
    o.read("batch_size", cfg.batch_size);
    o.read("patience", cfg.patience);
    o.read("threshold", cfg.threshold);
    o.finish();
  }
  if (const auto* s = root.child("split")) {
    StrictObject o(*s, "split");
    o.read("train", cfg.split.train);
    o.read("val", cfg.split.val);
    o.read("dev", cfg.split.dev);
    o.read("seed", cfg.split.seed);
    o.finish();
  }
  if (const auto* s = root.child("data")) {
    StrictObject o(*s, "data");
    o.read("dataset", cfg.dataset);
    o.finish();
  }
  root.read("seed", cfg.seed);
  root.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json json;
  try {
    json = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunConfig cfg = run_config_from_json(json);
  if (!cfg.dataset.empty() && std::filesystem::path(cfg.dataset).is_relative()) {
    cfg.dataset = (path.parent_path() / cfg.dataset).lexically_normal().string();
  }
  return cfg;
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(cfg).dump(2) << '\n';
}

}  // namespace lga::cli
