#include "lga/training.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

namespace lga::train {

namespace {

// softplus(z) - y*z, evaluated without overflow for large |z|.
double bce_term(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double safe_ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

}  // namespace

template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& labels) {
  if (logits.shape() != labels.shape()) {
    throw ShapeError("bce_with_logits: logits " + shape_str(logits.shape()) + " vs labels " +
                     shape_str(labels.shape()));
  }
  const auto z = logits.data();
  const auto y = labels.data();
  if (z.empty()) throw ShapeError("bce_with_logits: empty input");
  double total = 0;
  for (std::size_t i = 0; i < z.size(); ++i) total += bce_term(z[i], y[i]);
  const double inv_n = 1.0 / static_cast<double>(z.size());
  auto zn = logits.node();
  auto yn = labels.node();
  return make_result<T>(
      "bce_with_logits", {}, {static_cast<T>(total * inv_n)}, {logits, labels},
      [zn, yn, inv_n](std::span<const T> g) {
        const double scale = static_cast<double>(g[0]) * inv_n;
        auto gz = grad_slot(zn);
        for (std::size_t i = 0; i < gz.size(); ++i) {
          gz[i] += static_cast<T>((sigmoid(zn->data[i]) - yn->data[i]) * scale);
        }
        auto gy = grad_slot(yn);
        for (std::size_t i = 0; i < gy.size(); ++i) {
          gy[i] += static_cast<T>(-static_cast<double>(zn->data[i]) * scale);
        }
      });
}

template <typename T>
AdamW<T>::AdamW(TensorList<T> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

template <typename T>
void AdamW<T>::step(double lr) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double decay = 1.0 - lr * config_.weight_decay;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<T> p = params_[i].tensor;
    auto w = p.mutable_data();
    const bool has_grad = p.has_grad();
    auto g = has_grad ? p.grad() : std::span<const T>{};
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = has_grad ? static_cast<double>(g[j]) : 0.0;
      m[j] = b1 * m[j] + (1 - b1) * gj;
      v[j] = b2 * v[j] + (1 - b2) * gj * gj;
      const double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.epsilon);
      w[j] = static_cast<T>(static_cast<double>(w[j]) * decay - lr * update);
    }
  }
}

template <typename T>
void AdamW<T>::zero_grad() {
  for (auto& p : params_) Tensor<T>(p.tensor).zero_grad();
}

void ScheduleSpec::validate() const {
  if (!(lr_end > 0) || !std::isfinite(lr_end)) throw ConfigError("schedule.lr_end: must be > 0");
  if (!(lr_start >= lr_end) || !std::isfinite(lr_start)) {
    throw ConfigError("schedule.lr_start: must be >= lr_end");
  }
  if (epochs == 0) throw ConfigError("schedule.epochs: must be positive");
}

double cosine_lr(std::size_t epoch, const ScheduleSpec& spec) {
  if (spec.epochs <= 1) return spec.lr_start;
  if (epoch >= spec.epochs) {
    throw UsageError("epoch " + std::to_string(epoch) + " outside schedule of " +
                     std::to_string(spec.epochs));
  }
  const double phase =
      std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(spec.epochs - 1);
  const double w = 0.5 * (1.0 + std::cos(phase));
  return spec.lr_start * w + spec.lr_end * (1.0 - w);
}

bool EarlyStopping::observe(double val_loss) {
  const std::size_t epoch = epoch_++;
  if (!seen_ || val_loss < best_) {
    seen_ = true;
    best_ = val_loss;
    best_epoch_ = epoch;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

MetricsReport compute_metrics(const std::vector<std::uint8_t>& predicted,
                              const std::vector<std::uint8_t>& truth, std::size_t classes) {
  if (classes == 0 || predicted.size() != truth.size() || truth.size() % classes != 0) {
    throw ShapeError("compute_metrics: prediction/label matrices disagree");
  }
  MetricsReport r;
  r.samples = truth.size() / classes;
  r.per_class.resize(classes);
  for (std::size_t i = 0; i < r.samples; ++i) {
    for (std::size_t k = 0; k < classes; ++k) {
      const bool p = predicted[i * classes + k] != 0;
      const bool t = truth[i * classes + k] != 0;
      auto& c = r.per_class[k];
      if (p && t) ++c.tp;
      else if (p) ++c.fp;
      else if (t) ++c.fn;
      else ++c.tn;
    }
  }
  for (auto& c : r.per_class) {
    c.accuracy = safe_ratio(double(c.tp + c.tn), double(r.samples));
    c.precision = safe_ratio(double(c.tp), double(c.tp + c.fp));
    c.recall = safe_ratio(double(c.tp), double(c.tp + c.fn));
    c.f1 = safe_ratio(2 * c.precision * c.recall, c.precision + c.recall);
    r.accuracy += c.accuracy;
    r.precision += c.precision;
    r.recall += c.recall;
    r.f1 += c.f1;
  }
  const double k = static_cast<double>(classes);
  r.accuracy /= k;
  r.precision /= k;
  r.recall /= k;
  r.f1 /= k;
  return r;
}

nlohmann::json to_json(const MetricsReport& report, const std::vector<std::string>& class_names) {
  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t k = 0; k < report.per_class.size(); ++k) {
    const auto& c = report.per_class[k];
    per_class.push_back({
        {"class", k < class_names.size() ? class_names[k] : "label_" + std::to_string(k)},
        {"tp", c.tp},
        {"fp", c.fp},
        {"fn", c.fn},
        {"tn", c.tn},
        {"accuracy", c.accuracy},
        {"precision", c.precision},
        {"recall", c.recall},
        {"f1", c.f1},
    });
  }
  return {
      {"samples", report.samples},
      {"threshold", report.threshold},
      {"macro",
       {{"accuracy", report.accuracy},
        {"precision", report.precision},
        {"recall", report.recall},
        {"f1", report.f1}}},
      {"per_class", per_class},
  };
}

template <typename T>
Evaluation evaluate(const model::LgaModel<T>& model, const data::Dataset& ds, double threshold,
                    std::size_t batch_size) {
  if (ds.empty()) throw UsageError("cannot evaluate an empty dataset");
  if (ds.classes != model.config().num_classes) {
    throw ShapeError("dataset has " + std::to_string(ds.classes) + " classes, model predicts " +
                     std::to_string(model.config().num_classes));
  }
  NoGradGuard no_grad;
  Evaluation ev;
  const std::size_t k = ds.classes;
  ev.probabilities.resize(ds.size() * k);
  std::vector<std::uint8_t> predicted(ds.size() * k), truth(ds.size() * k);
  double loss = 0;
  for (const auto& idx : data::batch_indices(ds.size(), batch_size, nullptr)) {
    auto batch = data::make_batch<T>(ds, idx);
    const auto out = model.forward(batch.signals);
    const auto logits = out.data();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      for (std::size_t c = 0; c < k; ++c) {
        const std::size_t at = idx[b] * k + c;
        const double z = logits[b * k + c];
        const double y = ds.records[idx[b]].labels[c];
        loss += bce_term(z, y);
        ev.probabilities[at] = sigmoid(z);
        predicted[at] = ev.probabilities[at] >= threshold ? 1 : 0;
        truth[at] = static_cast<std::uint8_t>(y);
      }
    }
  }
  ev.loss = loss / static_cast<double>(ds.size() * k);
  ev.metrics = compute_metrics(predicted, truth, k);
  ev.metrics.threshold = threshold;
  return ev;
}

void TrainSpec::validate() const {
  schedule.validate();
  if (batch_size == 0) throw ConfigError("train.batch_size: must be positive");
  if (patience == 0) throw ConfigError("train.patience: must be positive");
  if (!(threshold > 0 && threshold < 1)) throw ConfigError("train.threshold: must lie in (0, 1)");
  if (optimizer.beta1 < 0 || optimizer.beta1 >= 1 || optimizer.beta2 < 0 || optimizer.beta2 >= 1) {
    throw ConfigError("train.optimizer: betas must lie in [0, 1)");
  }
  if (!(optimizer.epsilon > 0)) throw ConfigError("train.optimizer.epsilon: must be > 0");
  if (optimizer.weight_decay < 0) throw ConfigError("train.optimizer.weight_decay: must be >= 0");
}

template <typename T>
TrainResult fit(model::LgaModel<T>& model, const data::Dataset& train_set,
                const data::Dataset& val_set, const TrainSpec& spec,
                const std::function<void(const EpochLog&)>& on_epoch) {
  spec.validate();
  if (train_set.empty()) throw UsageError("training set is empty");
  if (val_set.empty()) throw UsageError("validation set is empty");
  auto params = model.parameters();
  AdamW<T> opt(params, spec.optimizer);
  EarlyStopping stopper(spec.patience);
  std::vector<std::vector<T>> best;
  auto snapshot = [&] {
    best.clear();
    for (const auto& p : params) best.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  };
  snapshot();

  TrainResult result;
  for (std::size_t epoch = 0; epoch < spec.schedule.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, spec.schedule);
    const std::uint64_t shuffle_seed = spec.seed + epoch;
    double loss_sum = 0;
    for (const auto& idx : data::batch_indices(train_set.size(), spec.batch_size, &shuffle_seed)) {
      auto batch = data::make_batch<T>(train_set, idx);
      opt.zero_grad();
      auto loss = bce_with_logits(model.forward(batch.signals), batch.labels);
      loss.backward();
      opt.step(lr);
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(idx.size());
    }
    auto ev = evaluate(model, val_set, spec.threshold);
    EpochLog row{epoch, lr, loss_sum / static_cast<double>(train_set.size()), ev.loss,
                 ev.metrics.f1};
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
    if (stopper.observe(ev.loss)) snapshot();
    if (stopper.should_stop()) {
      result.stopped_early = true;
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = Tensor<T>(params[i].tensor).mutable_data();
    std::copy(best[i].begin(), best[i].end(), dst.begin());
  }
  opt.zero_grad();
  result.best_epoch = stopper.best_epoch();
  return result;
}

void write_log_csv(const std::vector<EpochLog>& log, std::ostream& out) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  out << "epoch,lr,train_loss,val_loss,macro_f1\n";
  for (const auto& r : log) {
    out << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.val_loss << ','
        << r.macro_f1 << '\n';
  }
  out.precision(old);
}

#define LGA_INSTANTIATE_TRAIN(T)                                                            \
  template Tensor<T> bce_with_logits(const Tensor<T>&, const Tensor<T>&);                   \
  template class AdamW<T>;                                                                  \
  template Evaluation evaluate(const model::LgaModel<T>&, const data::Dataset&, double,     \
                               std::size_t);                                                \
  template TrainResult fit(model::LgaModel<T>&, const data::Dataset&, const data::Dataset&, \
                           const TrainSpec&, const std::function<void(const EpochLog&)>&);

LGA_INSTANTIATE_TRAIN(float)
LGA_INSTANTIATE_TRAIN(double)

#undef LGA_INSTANTIATE_TRAIN

}  // namespace lga::train
