#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lga/attention.hpp"
#include "lga/config_json.hpp"
#include "lga/data.hpp"
#include "lga/gradcheck.hpp"
#include "lga/model.hpp"
#include "lga/parallel.hpp"
#include "lga/serialize.hpp"
#include "lga/training.hpp"
#include "run_config.hpp"

namespace lga::cli {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> class_names(std::size_t k) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < k; ++i) {
    names.push_back(k == std::size(data::kClassNames) ? data::kClassNames[i]
                                                      : "label_" + std::to_string(i));
  }
  return names;
}

data::Dataset load_dataset(const std::string& path) {
  if (path.empty()) throw ConfigError("data.dataset: no dataset given (set it or pass --data)");
  if (!fs::exists(path)) throw ConfigError("data.dataset: file not found: " + path);
  return data::read_dataset(fs::path(path));
}

void check_compatible(const data::Dataset& ds, const model::ModelConfig& m) {
  if (ds.leads != m.leads || ds.length != m.input_length || ds.classes != m.num_classes) {
    throw ConfigError("dataset is " + std::to_string(ds.leads) + " leads x " +
                      std::to_string(ds.length) + " samples, " + std::to_string(ds.classes) +
                      " classes; model expects " + std::to_string(m.leads) + " x " +
                      std::to_string(m.input_length) + ", " + std::to_string(m.num_classes));
  }
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void print_metrics(const train::MetricsReport& r, std::ostream& out) {
  const auto names = class_names(r.per_class.size());
  out << std::left << std::setw(12) << "Abnormality" << std::right;
  for (const char* h : {"tp", "fp", "fn", "tn"}) out << std::setw(7) << h;
  for (const char* h : {"Precision", "Recall", "F1", "Accuracy"}) out << std::setw(11) << h;
  out << '\n' << std::fixed << std::setprecision(3);
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    const auto& c = r.per_class[k];
    out << std::left << std::setw(12) << names[k] << std::right << std::setw(7) << c.tp
        << std::setw(7) << c.fp << std::setw(7) << c.fn << std::setw(7) << c.tn << std::setw(11)
        << c.precision << std::setw(11) << c.recall << std::setw(11) << c.f1 << std::setw(11)
        << c.accuracy << '\n';
  }
  out << std::left << std::setw(40) << "Macro" << std::right << std::setw(11) << r.precision
      << std::setw(11) << r.recall << std::setw(11) << r.f1 << std::setw(11) << r.accuracy
      << '\n';
  out << std::defaultfloat;
}

struct TrainOutcome {
  train::TrainResult result;
  train::Evaluation val, dev;
  bool has_dev = false;
};

template <typename T>
TrainOutcome train_and_save(const RunConfig& cfg, const data::Split& split, const fs::path& dir,
                            std::ostream& out) {
  fs::create_directories(dir);
  auto m = model::LgaModel<T>::create(cfg.model, cfg.seed);
  out << "model parameters: " << model::count_parameters(m) << '\n';
  TrainOutcome o;
  o.result = train::fit(m, split.train, split.val, cfg.train_spec(), [&](const train::EpochLog& r) {
    out << "epoch " << r.epoch << "  lr " << r.lr << "  train_loss " << r.train_loss
        << "  val_loss " << r.val_loss << "  macro_f1 " << r.macro_f1 << std::endl;
  });
  {
    std::ofstream log(dir / "train_log.csv");
    train::write_log_csv(o.result.log, log);
  }
  const fs::path weights = dir / "weights.lgaw";
  write_weights(m.parameters(), weights);
  write_json(lga::to_json(cfg.model), dir / "weights.json");
  save_run_config(cfg, dir / "effective_config.json");

  // Metrics come from the saved file so they describe exactly what was written.
  auto reloaded = model::LgaModel<T>::create(cfg.model, cfg.seed);
  assign_weights(reloaded.parameters(), read_weights(weights));
  const auto names = class_names(cfg.model.num_classes);
  o.val = train::evaluate(reloaded, split.val, cfg.threshold);
  write_json(to_json(o.val.metrics, names), dir / "metrics_val.json");
  if (!split.dev.empty()) {
    o.has_dev = true;
    o.dev = train::evaluate(reloaded, split.dev, cfg.threshold);
    write_json(to_json(o.dev.metrics, names), dir / "metrics_dev.json");
  }
  return o;
}

TrainOutcome train_any(const RunConfig& cfg, const data::Split& split, const fs::path& dir,
                       std::ostream& out) {
  return cfg.model.precision == model::Precision::kF64
             ? train_and_save<double>(cfg, split, dir, out)
             : train_and_save<float>(cfg, split, dir, out);
}

data::Split prepare_split(const RunConfig& cfg, const fs::path& dir) {
  auto ds = load_dataset(cfg.dataset);
  check_compatible(ds, cfg.model);
  auto split = data::split_by_patient(ds, cfg.split);
  if (split.train.empty() || split.val.empty()) {
    throw ConfigError("split: train and val subsets must both hold records (got " +
                      std::to_string(split.train.size()) + " and " +
                      std::to_string(split.val.size()) + ")");
  }
  fs::create_directories(dir);
  data::write_dataset(split.train, dir / "train.lgae");
  data::write_dataset(split.val, dir / "val.lgae");
  data::write_dataset(split.dev, dir / "dev.lgae");
  return split;
}

// Shared flags; unset optionals leave the config untouched.
struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string precision;
  std::string out;
  std::string data;
  std::optional<std::size_t> epochs;

  RunConfig resolve() const {
    RunConfig cfg = config.empty() ? RunConfig{} : load_run_config(config);
    if (seed) cfg.seed = *seed;
    if (!precision.empty()) cfg.model.precision = model::parse_precision(precision);
    if (!data.empty()) cfg.dataset = data;
    if (epochs) cfg.schedule.epochs = *epochs;
    cfg.validate();
    return cfg;
  }
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_training) {
  cmd->add_option("--config", f.config, "Run configuration (JSON)");
  cmd->add_option("--seed", f.seed, "Seed for initialisation and shuffling");
  cmd->add_option("--precision", f.precision, "Element type for training")
      ->check(CLI::IsMember({"f32", "f64"}));
  cmd->add_option("--out", f.out, "Output directory")->required();
  if (with_training) {
    cmd->add_option("--data", f.data, "LGAE dataset (overrides data.dataset)");
    cmd->add_option("--epochs", f.epochs, "Override schedule.epochs");
  }
}

// Ablation settings in the column order of the comparison tables.
struct Setting {
  std::string tag;    // directory / CSV key
  std::string title;  // table header
  RunConfig cfg;
};

std::vector<Setting> ablation_settings(const RunConfig& base, const std::string& axis,
                                       const std::vector<std::size_t>& windows) {
  std::vector<Setting> out;
  if (axis == "attention") {
    const char* titles[] = {"ViT-like", "Swin-like", "Global Q, K, V", "Local Q, K, V", "LGA"};
    std::size_t i = 0;
    for (auto v : attn::kAllVariants) {
      Setting s{std::string(attn::to_string(v)), titles[i++], base};
      s.cfg.model.attention.variant = v;
      out.push_back(std::move(s));
    }
  } else if (axis == "pe") {
    const char* titles[] = {"Sinusoidal APE", "Learnable APE", "RPE", "Without PE"};
    std::size_t i = 0;
    for (auto pe : attn::kAllEncodings) {
      Setting s{std::string(attn::to_string(pe)), titles[i++], base};
      s.cfg.model.attention.pos_encoding = pe;
      out.push_back(std::move(s));
    }
  } else {
    for (auto w : windows) {
      Setting s{"window_" + std::to_string(w), "w=" + std::to_string(w), base};
      s.cfg.model.attention.window_len = w;
      out.push_back(std::move(s));
    }
  }
  for (auto& s : out) s.cfg.validate();
  return out;
}

void write_ablation_table(const std::vector<Setting>& settings,
                          const std::vector<train::MetricsReport>& reports, std::ostream& out) {
  const auto names = class_names(reports.front().per_class.size());
  std::size_t width = 10;
  for (const auto& s : settings) width = std::max(width, s.title.size() + 2);
  const int w = static_cast<int>(width);
  out << std::left << std::setw(12) << "Abnormality" << std::right;
  for (const auto& s : settings) out << std::setw(w) << s.title;
  out << '\n' << std::fixed << std::setprecision(3);
  for (std::size_t k = 0; k < names.size(); ++k) {
    out << std::left << std::setw(12) << names[k] << std::right;
    for (const auto& r : reports) out << std::setw(w) << r.per_class[k].f1;
    out << '\n';
  }
  out << std::left << std::setw(12) << "Avg. F1" << std::right;
  for (const auto& r : reports) out << std::setw(w) << r.f1;
  out << '\n' << std::defaultfloat;
}

int cmd_synth(const data::SynthSpec& spec, const std::string& path, const std::string& labels_csv,
              std::ostream& out) {
  auto ds = data::synth_dataset(spec);
  data::write_dataset(ds, fs::path(path));
  if (!labels_csv.empty()) {
    std::ofstream csv(labels_csv);
    if (!csv) throw std::runtime_error("cannot write " + labels_csv);
    data::write_labels_csv(ds, csv);
  }
  out << "wrote " << ds.size() << " records (" << ds.leads << " leads x " << ds.length
      << " samples @ " << ds.sample_rate_hz << " Hz, " << ds.classes << " classes) to " << path
      << '\n';
  return kExitOk;
}

int cmd_train(const CommonFlags& flags, std::ostream& out) {
  RunConfig cfg = flags.resolve();
  if (!cfg.dataset.empty()) cfg.dataset = fs::absolute(cfg.dataset).lexically_normal().string();
  const fs::path dir = flags.out;
  auto split = prepare_split(cfg, dir);
  out << "split: " << split.train.size() << " train / " << split.val.size() << " val / "
      << split.dev.size() << " dev records\n";
  auto o = train_any(cfg, split, dir, out);
  out << "best epoch " << o.result.best_epoch
      << (o.result.stopped_early ? " (stopped early)" : "") << "\nvalidation metrics:\n";
  print_metrics(o.val.metrics, out);
  if (o.has_dev) {
    out << "dev metrics:\n";
    print_metrics(o.dev.metrics, out);
  }
  out << "artifacts written to " << dir.string() << '\n';
  return kExitOk;
}

template <typename T>
train::Evaluation eval_impl(const model::ModelConfig& mc, const std::string& weights,
                            const data::Dataset& ds, double threshold) {
  auto m = model::LgaModel<T>::create(mc, 0);
  assign_weights(m.parameters(), read_weights(fs::path(weights)));
  return train::evaluate(m, ds, threshold);
}

int cmd_eval(const std::string& weights, std::string model_config, const std::string& data_path,
             double threshold, const std::string& precision, const std::string& out_dir,
             bool json, std::ostream& out) {
  if (!fs::exists(weights)) throw ConfigError("--weights: file not found: " + weights);
  if (model_config.empty()) model_config = fs::path(weights).replace_extension(".json").string();
  auto mc = model_config_from_json(read_json(model_config), "model");
  if (!precision.empty()) mc.precision = model::parse_precision(precision);
  if (!(threshold > 0 && threshold < 1)) throw ConfigError("--threshold: must lie in (0, 1)");
  auto ds = load_dataset(data_path);
  if (ds.empty()) throw ConfigError("--data: dataset holds no records");
  check_compatible(ds, mc);
  auto ev = mc.precision == model::Precision::kF64 ? eval_impl<double>(mc, weights, ds, threshold)
                                                   : eval_impl<float>(mc, weights, ds, threshold);
  auto j = to_json(ev.metrics, class_names(mc.num_classes));
  j["loss"] = ev.loss;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_json(j, fs::path(out_dir) / "metrics.json");
  }
  if (json) {
    out << j.dump(2) << '\n';
  } else {
    out << "records " << ds.size() << ", loss " << ev.loss << ", threshold " << threshold << '\n';
    print_metrics(ev.metrics, out);
  }
  return kExitOk;
}

int cmd_ablate(const CommonFlags& flags, const std::string& axis,
               const std::vector<std::size_t>& windows, std::ostream& out) {
  RunConfig base = flags.resolve();
  if (!base.dataset.empty()) base.dataset = fs::absolute(base.dataset).lexically_normal().string();
  const fs::path dir = flags.out;
  auto settings = ablation_settings(base, axis, windows);
  auto split = prepare_split(base, dir);
  if (split.dev.empty()) throw ConfigError("split.dev: ablation scores the dev subset; it is empty");
  std::vector<train::MetricsReport> reports;
  for (const auto& s : settings) {
    out << "== " << s.title << " ==\n";
    std::ostringstream quiet;
    auto o = train_any(s.cfg, split, dir / s.tag, quiet);
    reports.push_back(o.dev.metrics);
    out << "dev macro F1 " << o.dev.metrics.f1 << " (best epoch " << o.result.best_epoch << ")\n";
  }
  const auto names = class_names(base.model.num_classes);
  std::ofstream csv(dir / ("ablation_" + axis + ".csv"));
  csv << "setting";
  for (const auto& n : names) csv << ",f1_" << n;
  csv << ",macro_f1,macro_precision,macro_recall,macro_accuracy\n";
  csv.precision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < settings.size(); ++i) {
    csv << settings[i].tag;
    for (const auto& c : reports[i].per_class) csv << ',' << c.f1;
    csv << ',' << reports[i].f1 << ',' << reports[i].precision << ',' << reports[i].recall << ','
        << reports[i].accuracy << '\n';
  }
  std::ofstream txt(dir / ("ablation_" + axis + ".txt"));
  write_ablation_table(settings, reports, txt);
  write_ablation_table(settings, reports, out);
  return kExitOk;
}

int cmd_gradcheck(const std::string& config, std::optional<std::size_t> max_coords,
                  std::uint64_t seed, std::ostream& out) {
  model::ModelConfig mc = model::ModelConfig::miniature();
  if (!config.empty()) mc = load_run_config(config).model;
  check::GradCheckOptions opts;
  opts.seed = seed;
  std::vector<check::GradCheckResult> results = check::check_ops(opts);
  for (auto& r : check::check_attention_variants(opts)) results.push_back(std::move(r));
  auto model_opts = opts;
  // Large models get a per-tensor sample; the miniature one is checked in full.
  const auto params = model::count_parameters(model::LgaModel<double>::create(mc, seed));
  model_opts.max_coords = max_coords ? *max_coords : (params > 20000 ? 24 : 0);
  results.push_back(check::check_model(mc, model_opts, "model"));
  check::write_report(results, out);
  std::size_t failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  out << (failed ? std::to_string(failed) + " check(s) FAILED" : "all checks passed") << '\n';
  return failed ? kExitRuntime : kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Local-global attention ECG classifier"};
  app.require_subcommand(1);
  std::optional<std::size_t> threads;
  app.add_option("--threads", threads, "Worker threads (default: LGA_THREADS or all cores)");

  data::SynthSpec synth;
  std::string synth_out, labels_csv;
  auto* s = app.add_subcommand("synth", "Generate a synthetic LGAE dataset");
  s->add_option("--n", synth.n, "Number of records")->required();
  s->add_option("--out", synth_out, "Output .lgae file")->required();
  s->add_option("--seed", synth.seed, "Generator seed");
  s->add_option("--leads", synth.leads, "Leads per record");
  s->add_option("--length", synth.length, "Samples per lead");
  s->add_option("--rate", synth.sample_rate_hz, "Sample rate in Hz");
  s->add_option("--classes", synth.classes, "Label count");
  s->add_option("--label-probability", synth.label_probability, "Per-class positive rate");
  s->add_flag("--single-label", synth.single_label, "Exactly one class per record");
  s->add_option("--labels-csv", labels_csv, "Also write a labels CSV");

  CommonFlags train_flags;
  auto* t = app.add_subcommand("train", "Train on a dataset split by patient");
  add_common(t, train_flags, true);

  std::string weights, model_config, eval_data, eval_precision, eval_out;
  double threshold = 0.5;
  bool eval_json = false;
  auto* e = app.add_subcommand("eval", "Evaluate saved weights on a dataset");
  e->add_option("--weights", weights, "LGAW weight file")->required();
  e->add_option("--model-config", model_config, "Model JSON (default: weights sidecar)");
  e->add_option("--data", eval_data, "LGAE dataset")->required();
  e->add_option("--threshold", threshold, "Decision threshold on sigmoid outputs");
  e->add_option("--precision", eval_precision, "Element type")->check(CLI::IsMember({"f32", "f64"}));
  e->add_option("--out", eval_out, "Directory for metrics.json");
  e->add_flag("--json", eval_json, "Print the metrics as JSON");

  CommonFlags ablate_flags;
  std::string axis;
  std::vector<std::size_t> windows{16, 32, 64, 128};
  auto* a = app.add_subcommand("ablate", "Train once per attention / encoding / window setting");
  add_common(a, ablate_flags, true);
  a->add_option("--axis", axis, "attention | pe | window")
      ->required()
      ->check(CLI::IsMember({"attention", "pe", "window"}));
  a->add_option("--windows", windows, "Window lengths for --axis window")->delimiter(',');

  std::string gc_config;
  std::optional<std::size_t> gc_coords;
  std::uint64_t gc_seed = 7;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  g->add_option("--config", gc_config, "Run configuration whose model is checked");
  g->add_option("--max-coords", gc_coords, "Coordinates probed per model tensor (0 = all)");
  g->add_option("--seed", gc_seed, "Seed for inputs and weights");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (threads) set_thread_count(*threads);
    if (s->parsed()) return cmd_synth(synth, synth_out, labels_csv, out);
    if (t->parsed()) return cmd_train(train_flags, out);
    if (e->parsed()) {
      return cmd_eval(weights, model_config, eval_data, threshold, eval_precision, eval_out,
                      eval_json, out);
    }
    if (a->parsed()) return cmd_ablate(ablate_flags, axis, windows, out);
    if (g->parsed()) return cmd_gradcheck(gc_config, gc_coords, gc_seed, out);
  } catch (const ConfigError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& ex) {
    err << "error: " << ex.what() << " (byte offset " << ex.offset() << ")\n";
    return kExitRuntime;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace lga::cli
