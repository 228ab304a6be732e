#pragma once

// Multi-label training: stable binary cross-entropy on logits, AdamW with
// decoupled weight decay, cosine-annealed learning rate, patience-based early
// stopping and per-class classification metrics.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include <nlohmann/json.hpp>

#include "lga/data.hpp"
#include "lga/model.hpp"
#include "lga/serialize.hpp"
#include "lga/tensor.hpp"

namespace lga::train {

/// Mean over all entries of softplus(z) - y*z. logits and labels share a shape.
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& labels);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;

  bool operator==(const AdamWConfig&) const = default;
};

template <typename T>
class AdamW {
 public:
  AdamW(TensorList<T> params, AdamWConfig config = {});

  /// Applies one update from the accumulated gradients. Parameters without a
  /// gradient still receive weight decay.
  void step(double lr);
  void zero_grad();

  std::uint64_t steps() const { return t_; }
  const AdamWConfig& config() const { return config_; }

 private:
  TensorList<T> params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

struct ScheduleSpec {
  double lr_start = 1e-4;
  double lr_end = 1e-5;
  std::size_t epochs = 50;

  void validate() const;
  bool operator==(const ScheduleSpec&) const = default;
};

/// lr_end + (lr_start - lr_end) * (1 + cos(pi * e / (T - 1))) / 2, written so
/// the endpoints are exact. T = 1 yields lr_start.
double cosine_lr(std::size_t epoch, const ScheduleSpec& spec);

/// Stops once `patience` consecutive epochs fail to strictly lower the best
/// validation loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience = 7) : patience_(patience) {}

  /// Records one epoch; returns true when it set a new best.
  bool observe(double val_loss);
  bool should_stop() const { return stale_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }
  std::size_t stale_epochs() const { return stale_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t stale_ = 0;
  double best_ = 0;
  bool seen_ = false;
};

struct ClassMetrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;  // macro
  std::size_t samples = 0;
  double threshold = 0.5;
};

/// Per-class confusion counts and scores for row-major [n, K] 0/1 matrices.
/// 0/0 precision, recall and F1 are 0.
MetricsReport compute_metrics(const std::vector<std::uint8_t>& predicted,
                              const std::vector<std::uint8_t>& truth, std::size_t classes);

nlohmann::json to_json(const MetricsReport& report,
                       const std::vector<std::string>& class_names = {});

struct Evaluation {
  MetricsReport metrics;
  double loss = 0;  // mean BCE
  std::vector<double> probabilities;  // [n, K]
};

/// Forward passes without graph recording; predictions are sigmoid >= threshold.
template <typename T>
Evaluation evaluate(const model::LgaModel<T>& model, const data::Dataset& ds,
                    double threshold = 0.5, std::size_t batch_size = 32);

struct TrainSpec {
  ScheduleSpec schedule;
  AdamWConfig optimizer;
  std::size_t batch_size = 16;
  std::size_t patience = 7;
  std::uint64_t seed = 0;  // epoch e shuffles with seed + e
  double threshold = 0.5;

  void validate() const;
  bool operator==(const TrainSpec&) const = default;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_loss = 0;
  double macro_f1 = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

/// Epoch loop: shuffle, batch, forward, loss, backward, AdamW at the epoch's
/// cosine lr, validate, early-stopping check. The best-epoch weights are
/// restored before returning. `on_epoch` (optional) sees every log row.
template <typename T>
TrainResult fit(model::LgaModel<T>& model, const data::Dataset& train_set,
                const data::Dataset& val_set, const TrainSpec& spec,
                const std::function<void(const EpochLog&)>& on_epoch = {});

/// epoch,lr,train_loss,val_loss,macro_f1 with round-trip precision.
void write_log_csv(const std::vector<EpochLog>& log, std::ostream& out);

}  // namespace lga::train
