#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "lga/data.hpp"
#include "lga/model.hpp"
#include "lga/training.hpp"
#include "test_util.hpp"

using namespace lga;
using namespace lga::train;
using testutil::Td;

namespace {

model::ModelConfig small_model() {
  auto c = model::ModelConfig::miniature();
  c.leads = 2;
  c.input_length = 64;
  c.num_classes = 3;
  return c;
}

data::Dataset small_data(std::size_t n, std::uint64_t seed) {
  return data::synth_dataset({.n = n, .classes = 3, .seed = seed, .leads = 2, .length = 64,
                              .sample_rate_hz = 32, .label_probability = 0.4});
}

// Loss whose gradient with respect to p is exactly g.
void set_gradient(const Td& p, const std::vector<double>& g) {
  sum(mul(p, Td::from_data(p.shape(), g))).backward();
}

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

}  // namespace

// ---- loss ----------------------------------------------------------------------

TEST(Bce, ZeroLogitIsLogTwo) {
  auto z = Td::zeros({2, 3});
  auto y = Td::from_data({2, 3}, {0, 1, 0, 1, 1, 0});
  EXPECT_NEAR(bce_with_logits(z, y).item(), std::log(2.0), 1e-15);
}

TEST(Bce, LargeLogitsStayFinite) {
  auto y = Td::from_data({1, 2}, {1, 0});
  EXPECT_NEAR(bce_with_logits(Td::from_data({1, 2}, {50, -50}), y).item(), std::exp(-50.0), 1e-30);
  EXPECT_NEAR(bce_with_logits(Td::from_data({1, 2}, {-50, 50}), y).item(), 50.0, 1e-12);
  EXPECT_TRUE(std::isfinite(bce_with_logits(Td::from_data({1, 2}, {1e4, -1e4}), y).item()));
  auto zf = Tensor<float>::from_data({1, 1}, {-200.f});
  EXPECT_NEAR(bce_with_logits(zf, Tensor<float>::from_data({1, 1}, {1.f})).item(), 200.f, 1e-3);
}

TEST(Bce, MatchesProbabilityFormOracle) {
  const std::size_t n = 40;
  auto zv = testutil::uniform_values(n, 1, -8, 8);
  std::mt19937 gen(2);
  std::vector<double> yv(n);
  for (auto& y : yv) y = double(gen() % 2);
  long double oracle = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double p = 1.0L / (1.0L + std::exp(-(long double)zv[i]));
    oracle -= yv[i] * std::log(p) + (1 - yv[i]) * std::log(1 - p);
  }
  oracle /= n;
  auto z = Td::from_data({8, 5}, zv, true);
  auto loss = bce_with_logits(z, Td::from_data({8, 5}, yv));
  EXPECT_NEAR(loss.item(), double(oracle), 1e-10);
  loss.backward();
  for (std::size_t i = 0; i < n; ++i) {
    const double sig = 1 / (1 + std::exp(-zv[i]));
    EXPECT_NEAR(z.grad()[i], (sig - yv[i]) / double(n), 1e-15);
  }
}

TEST(Bce, ShapeMismatchIsRejected) {
  EXPECT_THROW(bce_with_logits(Td::zeros({2, 3}), Td::zeros({3, 2})), ShapeError);
}

// ---- optimiser -------------------------------------------------------------------

TEST(AdamW, FirstStepMovesByLearningRate) {
  auto p = Td::from_data({1}, {1.0}, true);
  AdamW<double> opt({{"p", p}}, {.weight_decay = 0});
  set_gradient(p, {0.37});
  opt.step(0.1);
  EXPECT_NEAR(p.item(), 0.9, 1e-7);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(AdamW, ZeroGradientWithoutDecayLeavesParameter) {
  auto p = Td::from_data({2}, {1.5, -2.0}, true);
  AdamW<double> opt({{"p", p}}, {.weight_decay = 0});
  set_gradient(p, {0, 0});
  opt.step(0.1);
  EXPECT_EQ(p.data()[0], 1.5);
  EXPECT_EQ(p.data()[1], -2.0);
}

TEST(AdamW, DecayIsDecoupled) {
  auto p = Td::from_data({1}, {2.0}, true);
  AdamW<double> opt({{"p", p}}, {.weight_decay = 0.01});
  set_gradient(p, {0});
  opt.step(0.1);
  EXPECT_NEAR(p.item(), 2.0 * (1 - 0.1 * 0.01), 1e-15);
  auto q = Td::from_data({1}, {2.0}, true);  // never receives a gradient
  AdamW<double> opt2({{"q", q}}, {.weight_decay = 0.01});
  opt2.step(0.1);
  EXPECT_NEAR(q.item(), 2.0 * (1 - 0.1 * 0.01), 1e-15);
}

TEST(AdamW, TenStepsMatchReferenceRecurrence) {
  const AdamWConfig cfg{0.8, 0.95, 1e-6, 0.05};
  auto p = Td::from_data({3}, {0.5, -1.0, 2.0}, true);
  AdamW<double> opt({{"p", p}}, cfg);
  std::vector<double> ref{0.5, -1.0, 2.0}, m(3, 0), v(3, 0);
  for (int t = 1; t <= 10; ++t) {
    const double lr = 0.01 * t;
    auto g = testutil::uniform_values(3, 100 + t);
    opt.zero_grad();
    set_gradient(p, g);
    opt.step(lr);
    for (int j = 0; j < 3; ++j) {
      m[j] = cfg.beta1 * m[j] + (1 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1 - cfg.beta2) * g[j] * g[j];
      const double mh = m[j] / (1 - std::pow(cfg.beta1, t));
      const double vh = v[j] / (1 - std::pow(cfg.beta2, t));
      ref[j] -= lr * cfg.weight_decay * ref[j];
      ref[j] -= lr * mh / (std::sqrt(vh) + cfg.epsilon);
    }
  }
  EXPECT_LE(testutil::max_abs_diff(p, ref), 1e-10);
}

// ---- schedule ---------------------------------------------------------------------

TEST(CosineLr, EndpointsAreExact) {
  ScheduleSpec s;
  EXPECT_EQ(cosine_lr(0, s), 1e-4);
  EXPECT_EQ(cosine_lr(s.epochs - 1, s), 1e-5);
  for (std::size_t T : {2, 3, 7, 100}) {
    ScheduleSpec t{3e-3, 2e-6, T};
    EXPECT_EQ(cosine_lr(0, t), 3e-3);
    EXPECT_EQ(cosine_lr(T - 1, t), 2e-6);
  }
}

TEST(CosineLr, MidpointAndClosedForm) {
  ScheduleSpec s{1e-4, 1e-5, 51};
  EXPECT_NEAR(cosine_lr(25, s), 5.5e-5, 1e-18);
  for (std::size_t e = 0; e < s.epochs; ++e) {
    const double expected =
        1e-5 + (1e-4 - 1e-5) * (1 + std::cos(std::numbers::pi * double(e) / 50.0)) / 2;
    EXPECT_NEAR(cosine_lr(e, s), expected, 1e-18);
    if (e > 0) EXPECT_LE(cosine_lr(e, s), cosine_lr(e - 1, s));
  }
}

TEST(CosineLr, DegenerateAndInvalidSchedules) {
  EXPECT_EQ(cosine_lr(0, {1e-3, 1e-4, 1}), 1e-3);
  EXPECT_THROW(cosine_lr(5, {1e-3, 1e-4, 5}), UsageError);
  EXPECT_THROW(ScheduleSpec({1e-5, 1e-4, 10}).validate(), ConfigError);
  EXPECT_THROW(ScheduleSpec({1e-4, 1e-5, 0}).validate(), ConfigError);
  EXPECT_THROW(ScheduleSpec({1e-4, 0.0, 3}).validate(), ConfigError);
}

// ---- early stopping -----------------------------------------------------------------

TEST(EarlyStopping, SevenFlatEpochsTrigger) {
  EarlyStopping es;
  EXPECT_TRUE(es.observe(1.0));
  for (int i = 0; i < 6; ++i) {
    EXPECT_FALSE(es.observe(1.0));  // equal is not an improvement
    EXPECT_FALSE(es.should_stop()) << i;
  }
  es.observe(1.5);
  EXPECT_TRUE(es.should_stop());
  EXPECT_EQ(es.best_epoch(), 0u);
  EXPECT_EQ(es.best_loss(), 1.0);
}

TEST(EarlyStopping, ImprovementResetsCounter) {
  EarlyStopping es;
  std::vector<double> history{5, 4, 4.5, 4.6, 4.7, 4.8, 4.9, 5.0, 3.9, 4, 4, 4, 4, 4, 4, 4, 4};
  std::size_t stop_at = 0;
  for (std::size_t e = 0; e < history.size(); ++e) {
    es.observe(history[e]);
    if (es.should_stop()) {
      stop_at = e;
      break;
    }
  }
  EXPECT_EQ(stop_at, 15u);
  EXPECT_EQ(es.best_epoch(), 8u);
}

TEST(EarlyStopping, MatchesReferenceOnRandomHistories) {
  std::mt19937 gen(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t patience = 1 + gen() % 8;
    EarlyStopping es(patience);
    double best = INFINITY;
    std::size_t stale = 0;
    for (int e = 0; e < 60; ++e) {
      const double loss = double(gen() % 20);
      const bool improved = loss < best;
      if (improved) {
        best = loss;
        stale = 0;
      } else {
        ++stale;
      }
      EXPECT_EQ(es.observe(loss), improved);
      EXPECT_EQ(es.should_stop(), stale >= patience);
      if (stale >= patience) break;
    }
  }
}

// ---- metrics -------------------------------------------------------------------

TEST(Metrics, WorkedSingleClass) {
  auto r = compute_metrics({1, 1}, {1, 0}, 1);
  ASSERT_EQ(r.per_class.size(), 1u);
  EXPECT_EQ(r.per_class[0].tp, 1u);
  EXPECT_EQ(r.per_class[0].fp, 1u);
  EXPECT_DOUBLE_EQ(r.per_class[0].precision, 0.5);
  EXPECT_DOUBLE_EQ(r.per_class[0].recall, 1.0);
  EXPECT_DOUBLE_EQ(r.per_class[0].f1, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.per_class[0].accuracy, 0.5);
}

TEST(Metrics, PerfectAndEmptyClasses) {
  std::vector<std::uint8_t> t{1, 0, 0, 1, 1, 0};
  auto r = compute_metrics(t, t, 3);
  EXPECT_EQ(r.per_class[2].tp, 0u);
  EXPECT_EQ(r.per_class[2].f1, 0.0);  // no positives at all: 0/0 scores are 0
  EXPECT_EQ(r.per_class[0].f1, 1.0);
  EXPECT_EQ(r.per_class[1].f1, 1.0);
  EXPECT_THROW(compute_metrics({1}, {1, 0}, 1), ShapeError);
}

TEST(Metrics, MatchesBruteForceConfusionCounts) {
  std::mt19937 gen(11);
  const std::size_t n = 1000, K = 6;
  std::vector<std::uint8_t> pred(n * K), truth(n * K);
  for (std::size_t i = 0; i < n * K; ++i) {
    truth[i] = gen() % 3 == 0;
    pred[i] = gen() % 4 == 0 ? !truth[i] : truth[i];
  }
  auto r = compute_metrics(pred, truth, K);
  EXPECT_EQ(r.samples, n);
  double macro = 0;
  for (std::size_t k = 0; k < K; ++k) {
    Counts c;
    for (std::size_t i = 0; i < n; ++i) {
      const bool p = pred[i * K + k], t = truth[i * K + k];
      c.tp += p && t;
      c.fp += p && !t;
      c.fn += !p && t;
      c.tn += !p && !t;
    }
    const auto& m = r.per_class[k];
    EXPECT_EQ(m.tp, c.tp);
    EXPECT_EQ(m.fp, c.fp);
    EXPECT_EQ(m.fn, c.fn);
    EXPECT_EQ(m.tn, c.tn);
    const double P = double(c.tp) / double(c.tp + c.fp), R = double(c.tp) / double(c.tp + c.fn);
    EXPECT_EQ(m.precision, P);
    EXPECT_EQ(m.recall, R);
    EXPECT_EQ(m.f1, 2 * P * R / (P + R));
    EXPECT_NEAR(m.f1, 2.0 * double(c.tp) / double(2 * c.tp + c.fp + c.fn), 1e-12);
    EXPECT_EQ(m.accuracy, double(c.tp + c.tn) / double(n));
    macro += m.f1;
  }
  EXPECT_NEAR(r.f1, macro / double(K), 1e-15);
}

TEST(Metrics, JsonReport) {
  auto r = compute_metrics({1, 0, 0, 1}, {1, 0, 1, 1}, 2);
  auto j = to_json(r, {"a", "b"});
  EXPECT_EQ(j["samples"], 2);
  ASSERT_EQ(j["per_class"].size(), 2u);
  EXPECT_EQ(j["per_class"][1]["class"], "b");
  EXPECT_EQ(j["per_class"][0]["tp"], 1);
  EXPECT_DOUBLE_EQ(j["macro"]["f1"].get<double>(), r.f1);
}

TEST(Evaluate, AgreesWithOracleOnModelOutputs) {
  auto ds = small_data(300, 3);
  auto m = model::LgaModel<double>::create(small_model(), 4);
  for (double threshold : {0.3, 0.5, 0.7}) {
    auto ev = evaluate(m, ds, threshold, 7);
    ASSERT_EQ(ev.probabilities.size(), 300u * 3);
    std::vector<std::uint8_t> pred, truth;
    double loss = 0;
    for (std::size_t i = 0; i < 300; ++i)
      for (std::size_t k = 0; k < 3; ++k) {
        const double p = ev.probabilities[i * 3 + k];
        const int y = ds.records[i].labels[k];
        pred.push_back(p >= threshold);
        truth.push_back(y);
        loss -= y ? std::log(p) : std::log(1 - p);
      }
    auto oracle = compute_metrics(pred, truth, 3);
    EXPECT_EQ(ev.metrics.f1, oracle.f1);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(ev.metrics.per_class[k].tp, oracle.per_class[k].tp);
    EXPECT_NEAR(ev.loss, loss / 900.0, 1e-9);
    EXPECT_EQ(ev.metrics.threshold, threshold);
  }
  data::Dataset empty = ds.subset({});
  EXPECT_THROW(evaluate(m, empty), UsageError);
}

TEST(Evaluate, ProbabilitiesMatchDirectForward) {
  auto ds = small_data(10, 5);
  auto m = model::LgaModel<double>::create(small_model(), 6);
  auto ev = evaluate(m, ds, 0.5, 4);
  auto batch = data::make_batch<double>(ds, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto logits = m.forward(batch.signals);
  for (std::size_t i = 0; i < logits.numel(); ++i)
    EXPECT_NEAR(ev.probabilities[i], 1 / (1 + std::exp(-logits.data()[i])), 1e-14);
}

// ---- training loop ---------------------------------------------------------------

TEST(Fit, OverfitsASingleBatch) {
  auto ds = small_data(8, 7);
  auto m = model::LgaModel<double>::create(small_model(), 8);
  AdamW<double> opt(m.parameters(), {.weight_decay = 0});
  auto batch = data::make_batch<double>(ds, {0, 1, 2, 3, 4, 5, 6, 7});
  std::vector<double> losses;
  for (int step = 0; step < 200; ++step) {
    opt.zero_grad();
    auto loss = bce_with_logits(m.forward(batch.signals), batch.labels);
    losses.push_back(loss.item());
    if (losses.back() < 0.01) break;
    loss.backward();
    opt.step(3e-3);
  }
  EXPECT_LT(losses.back(), 0.01) << "after " << losses.size() << " steps";
  for (std::size_t i = 1; i < std::min<std::size_t>(10, losses.size()); ++i)
    EXPECT_LT(losses[i], losses[i - 1]) << "step " << i;
}

TEST(Fit, LogFollowsScheduleAndRestoresBest) {
  auto split = data::split_by_patient(small_data(120, 9), {.train = 0.7, .val = 0.2, .dev = 0.1});
  auto m = model::LgaModel<double>::create(small_model(), 10);
  TrainSpec spec;
  spec.schedule = {5e-3, 1e-4, 6};
  spec.batch_size = 8;
  spec.seed = 3;
  std::vector<EpochLog> seen;
  auto res = fit(m, split.train, split.val, spec, [&](const EpochLog& e) { seen.push_back(e); });
  ASSERT_FALSE(res.log.empty());
  ASSERT_EQ(seen.size(), res.log.size());
  for (std::size_t e = 0; e < res.log.size(); ++e) {
    EXPECT_EQ(res.log[e].epoch, e);
    EXPECT_EQ(res.log[e].lr, cosine_lr(e, spec.schedule));
    EXPECT_TRUE(std::isfinite(res.log[e].train_loss));
  }
  double best = INFINITY;
  std::size_t best_epoch = 0;
  for (auto& e : res.log)
    if (e.val_loss < best) best = e.val_loss, best_epoch = e.epoch;
  EXPECT_EQ(res.best_epoch, best_epoch);
  auto ev = evaluate(m, split.val, spec.threshold, spec.batch_size);
  EXPECT_EQ(ev.loss, res.log[best_epoch].val_loss);
  EXPECT_EQ(ev.metrics.f1, res.log[best_epoch].macro_f1);
}

TEST(Fit, StopsEarlyWithSmallPatience) {
  auto split = data::split_by_patient(small_data(60, 11), {.train = 0.7, .val = 0.2, .dev = 0.1});
  auto m = model::LgaModel<double>::create(small_model(), 12);
  TrainSpec spec;
  spec.schedule = {1e-300, 1e-300, 20};  // updates vanish in rounding, so the loss is flat
  spec.patience = 2;
  auto res = fit(m, split.train, split.val, spec);
  EXPECT_TRUE(res.stopped_early);
  EXPECT_LE(res.log.size(), 4u);
}

TEST(Fit, SameSeedIsBitIdentical) {
  auto split = data::split_by_patient(small_data(60, 13), {.train = 0.7, .val = 0.2, .dev = 0.1});
  TrainSpec spec;
  spec.schedule = {3e-3, 1e-4, 3};
  spec.batch_size = 8;
  spec.seed = 21;
  auto run = [&] {
    auto m = model::LgaModel<double>::create(small_model(), 14);
    auto res = fit(m, split.train, split.val, spec);
    std::stringstream s;
    write_log_csv(res.log, s);
    write_weights(m.parameters(), s);
    return s.str();
  };
  EXPECT_EQ(run(), run());
}

TEST(Fit, RejectsBadSpecsAndEmptySets) {
  auto split = data::split_by_patient(small_data(20, 15), {.train = 0.5, .val = 0.5, .dev = 0.0});
  auto m = model::LgaModel<double>::create(small_model(), 16);
  TrainSpec spec;
  spec.batch_size = 0;
  EXPECT_THROW(fit(m, split.train, split.val, spec), ConfigError);
  spec = {};
  spec.threshold = 1.0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = {};
  EXPECT_THROW(fit(m, split.train, split.train.subset({}), spec), UsageError);
}

TEST(LogCsv, RoundTripPrecision) {
  std::vector<EpochLog> log{{0, 1e-4, 0.1 / 3, 2.0 / 7, 0.123456789012345678},
                            {1, 9.99e-5, 1e-20, 5, 1}};
  std::stringstream s;
  write_log_csv(log, s);
  std::string line;
  std::getline(s, line);
  EXPECT_EQ(line, "epoch,lr,train_loss,val_loss,macro_f1");
  for (const auto& e : log) {
    std::getline(s, line);
    std::stringstream row(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(row, cell, ',')) v.push_back(std::stod(cell));
    ASSERT_EQ(v.size(), 5u);
    EXPECT_EQ(v[0], double(e.epoch));
    EXPECT_EQ(v[1], e.lr);
    EXPECT_EQ(v[2], e.train_loss);
    EXPECT_EQ(v[3], e.val_loss);
    EXPECT_EQ(v[4], e.macro_f1);
  }
}
