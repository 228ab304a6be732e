#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "lga/config_json.hpp"
#include "lga/gradcheck.hpp"
#include "lga/model.hpp"
#include "lga/serialize.hpp"
#include "test_util.hpp"

using namespace lga;
using namespace lga::model;
using testutil::Td;

namespace {

template <typename T>
Tensor<T> random_input(const ModelConfig& c, std::size_t batch, std::uint64_t seed) {
  auto v = testutil::uniform_values(batch * c.leads * c.input_length, seed);
  return Tensor<T>::from_data({batch, c.leads, c.input_length}, std::vector<T>(v.begin(), v.end()));
}

// Parameter count written out from the architecture, independent of the
// model's own bookkeeping.
std::size_t expected_parameters(const ModelConfig& c) {
  std::size_t n = 0, in = c.leads;
  const std::size_t k = c.frontend_kernel, D = c.embed_dim;
  for (auto out : c.frontend_channels) {
    n += in * out * k + out + out * out * k + out;
    if (in != out) n += in * out + out;
    in = out;
  }
  const auto& a = c.attention;
  for (std::size_t stage = 1; stage <= c.stages; ++stage) {
    const std::size_t hidden = c.d_base * 2 * stage;
    n += 2 * D;  // norm1
    if (a.variant == attn::Variant::kVitLike || a.variant == attn::Variant::kSwinLike)
      n += 3 * (D * D + D);
    else
      n += D * D * a.query_kernel + D + 2 * (D * D * a.kv_kernel + D);
    if (a.pos_encoding == attn::PositionalEncoding::kLearnableApe) n += a.max_len * D;
    if (a.pos_encoding == attn::PositionalEncoding::kRelative) n += c.heads * (2 * a.max_relative + 1);
    n += D * D + D;  // residual 1x1
    if (a.variant == attn::Variant::kVitLike) n += D * D + D;
    n += 2 * D;  // norm2
    n += D * hidden + hidden + hidden * D + D;
  }
  return n + D * c.num_classes + c.num_classes;
}

double layer_norm_maxpool_oracle(const Td& x, std::size_t b, std::size_t i, std::size_t d) {
  const std::size_t D = x.dim(2);
  double best = -INFINITY;
  for (std::size_t t = 2 * i; t < 2 * i + 2; ++t) {
    double mu = 0, var = 0;
    for (std::size_t e = 0; e < D; ++e) mu += x.at({b, t, e});
    mu /= double(D);
    for (std::size_t e = 0; e < D; ++e) var += std::pow(x.at({b, t, e}) - mu, 2);
    var /= double(D);
    best = std::max(best, (x.at({b, t, d}) - mu) / std::sqrt(var + 1e-5));
  }
  return best;
}

}  // namespace

// ---- shapes -------------------------------------------------------------------

TEST(ModelShapes, DefaultConfigTracesHalvingPyramid) {
  ModelConfig c;
  ASSERT_NO_THROW(c.validate());
  auto m = LgaModel<float>::create(c, 1);
  ForwardTrace<float> trace;
  auto y = m.forward(random_input<float>(c, 1, 2), &trace);
  const std::vector<Shape> expected{{1, 256, 128}, {1, 128, 128}, {1, 64, 128},
                                    {1, 32, 128},  {1, 16, 128},  {1, 6}};
  EXPECT_EQ(trace.shapes, expected);
  EXPECT_EQ(y.shape(), (Shape{1, 6}));
  EXPECT_EQ(trace.attention.weights.size(), 4u);
  EXPECT_EQ(trace.attention.weights[0].shape(), (Shape{1, 4, 128, 256}));
}

TEST(ModelShapes, BlockHalvesSequence) {
  ModelConfig c;
  auto m = LgaModel<float>::create(c, 3);
  auto x = Tensor<float>::zeros({2, 256, 128});
  auto spec = c.block_specs()[0];
  EXPECT_EQ(transformer_block(x, spec, m.blocks()[0]).shape(), (Shape{2, 128, 128}));
  EXPECT_THROW(transformer_block(Tensor<float>::zeros({1, 7, 128}), spec, m.blocks()[0]),
               ShapeError);
}

TEST(ModelShapes, MlpWidthGrowsWithStage) {
  BlockSpec s;
  s.d_base = 32;
  s.stage = 3;
  EXPECT_EQ(s.mlp_hidden(), 192u);
  s.stage = 1;
  EXPECT_EQ(s.mlp_hidden(), 64u);
}

TEST(ModelShapes, EveryVariantKeepsTheShapeLaw) {
  for (auto v : attn::kAllVariants)
    for (auto pe : attn::kAllEncodings) {
      auto c = ModelConfig::miniature();
      c.attention.variant = v;
      c.attention.pos_encoding = pe;
      auto m = LgaModel<double>::create(c, 4);
      ForwardTrace<double> trace;
      m.forward(random_input<double>(c, 2, 5), &trace);
      const std::vector<Shape> expected{{2, 4, 8}, {2, 2, 8}, {2, 1, 8}, {2, 3}};
      EXPECT_EQ(trace.shapes, expected) << attn::to_string(v) << "/" << attn::to_string(pe);
    }
}

TEST(ModelShapes, RejectsWrongInput) {
  auto c = ModelConfig::miniature();
  auto m = LgaModel<double>::create(c, 1);
  EXPECT_THROW(m.forward(Td::zeros({1, 3, 64})), ShapeError);
  EXPECT_THROW(m.forward(Td::zeros({1, 2, 32})), ShapeError);
}

// ---- configuration -------------------------------------------------------------

TEST(ModelConfig, ValidationNamesField) {
  auto bad = [](auto mutate, const char* field) {
    auto c = ModelConfig::miniature();
    mutate(c);
    try {
      c.validate();
      ADD_FAILURE() << "accepted bad " << field;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  bad([](ModelConfig& c) { c.input_length = 48; }, "input_length");
  bad([](ModelConfig& c) { c.frontend_channels.back() = 5; }, "frontend_channels");
  bad([](ModelConfig& c) { c.heads = 3; }, "heads");
  bad([](ModelConfig& c) { c.frontend_kernel = 4; }, "frontend_kernel");
  bad([](ModelConfig& c) { c.attention.stride = 1; }, "stride");
  bad([](ModelConfig& c) { c.attention.window_len = 5; }, "window_len");
}

TEST(ModelConfig, JsonRoundTripAndStrictness) {
  auto c = ModelConfig::tiny();
  c.attention.variant = attn::Variant::kSwinLike;
  c.attention.pos_encoding = attn::PositionalEncoding::kRelative;
  EXPECT_EQ(model_config_from_json(to_json(c)), c);

  auto j = to_json(c);
  j["attention"]["windw_len"] = 3;
  EXPECT_THROW(model_config_from_json(j), ConfigError);
  j = to_json(c);
  j["embed_dim"] = -4;
  EXPECT_THROW(model_config_from_json(j), ConfigError);
  j = to_json(c);
  j["attention"]["variant"] = "TRANSFORMER";
  EXPECT_THROW(model_config_from_json(j), ConfigError);
}

// ---- functional properties ------------------------------------------------------

TEST(ModelBehaviour, BlockWithDeadPathsIsMaxPoolOfNorm) {
  auto c = ModelConfig::miniature();
  auto m = LgaModel<double>::create(c, 7);
  auto& b = m.blocks()[0];
  for (auto* p : {&b.attention.conv_q, &b.attention.conv_k, &b.attention.conv_v}) {
    for (auto* t : {&p->weight, &p->bias}) std::fill(t->mutable_data().begin(), t->mutable_data().end(), 0.0);
  }
  for (auto* t : {&b.mlp_out.weight, &b.mlp_out.bias})
    std::fill(t->mutable_data().begin(), t->mutable_data().end(), 0.0);
  b.residual = nn::Conv1dParams<double>::identity(c.embed_dim);
  auto x = testutil::random_tensor({2, 8, 8}, 8);
  auto y = transformer_block(x, c.block_specs()[0], b);
  ASSERT_EQ(y.shape(), (Shape{2, 4, 8}));
  for (std::size_t bi = 0; bi < 2; ++bi)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t d = 0; d < 8; ++d)
        EXPECT_NEAR(y.at({bi, i, d}), layer_norm_maxpool_oracle(x, bi, i, d), 1e-12);
}

TEST(ModelBehaviour, ZeroInputWithZeroBiasesGivesZeroLogits) {
  auto c = ModelConfig::miniature();
  c.attention.pos_encoding = attn::PositionalEncoding::kRelative;
  auto m = LgaModel<double>::create(c, 9);
  for (auto& [name, t] : m.parameters()) {
    const bool is_bias = name.ends_with(".bias") || name.ends_with(".beta");
    if (is_bias) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
  }
  auto y = m.forward(Td::zeros({3, 2, 64}));
  for (auto v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(ModelBehaviour, BatchRowsAreIndependent) {
  for (auto v : attn::kAllVariants) {
    auto c = ModelConfig::miniature();
    c.attention.variant = v;
    c.precision = Precision::kF32;
    auto m = LgaModel<float>::create(c, 10);
    auto x = random_input<float>(c, 4, 11);
    auto y = m.forward(x);
    const std::size_t row = c.leads * c.input_length;
    for (std::size_t b = 0; b < 4; ++b) {
      std::vector<float> one(x.data().begin() + b * row, x.data().begin() + (b + 1) * row);
      auto yb = m.forward(Tensor<float>::from_data({1, c.leads, c.input_length}, one));
      for (std::size_t k = 0; k < c.num_classes; ++k)
        EXPECT_NEAR(yb.data()[k], y.at({b, k}), 1e-6) << attn::to_string(v);
    }
  }
}

TEST(ModelBehaviour, SameSeedSameWeights) {
  auto c = ModelConfig::miniature();
  auto a = LgaModel<double>::create(c, 12).parameters();
  auto b = LgaModel<double>::create(c, 12).parameters();
  auto d = LgaModel<double>::create(c, 13).parameters();
  ASSERT_EQ(a.size(), b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(testutil::max_abs_diff(a[i].tensor, b[i].tensor), 0.0);
    differs |= testutil::max_abs_diff(a[i].tensor, d[i].tensor) > 0;
  }
  EXPECT_TRUE(differs);
}

// ---- parameter bookkeeping -----------------------------------------------------

TEST(Parameters, CountsSmallCases) {
  Rng rng(1);
  auto lin = nn::LinearParams<double>::create(2, 3, rng);
  TensorList<double> list{{"w", lin.weight}, {"b", lin.bias}};
  EXPECT_EQ(count_parameters(list), 9u);
  EXPECT_EQ(count_parameters(TensorList<double>{}), 0u);
}

TEST(Parameters, MatchClosedFormAcrossGrid) {
  for (auto v : attn::kAllVariants)
    for (auto pe : attn::kAllEncodings) {
      auto c = ModelConfig::miniature();
      c.attention.variant = v;
      c.attention.pos_encoding = pe;
      EXPECT_EQ(count_parameters(LgaModel<double>::create(c, 1)), expected_parameters(c))
          << attn::to_string(v) << "/" << attn::to_string(pe);
    }
  EXPECT_EQ(count_parameters(LgaModel<float>::create(ModelConfig::tiny(), 1)),
            expected_parameters(ModelConfig::tiny()));
}

TEST(Parameters, NamesAreUnique) {
  auto c = ModelConfig::miniature();
  c.attention.variant = attn::Variant::kVitLike;
  c.attention.pos_encoding = attn::PositionalEncoding::kLearnableApe;
  std::set<std::string> names;
  for (auto& p : LgaModel<double>::create(c, 1).parameters()) EXPECT_TRUE(names.insert(p.name).second) << p.name;
}

// ---- weight files --------------------------------------------------------------

TEST(WeightFile, RoundTripReproducesForward) {
  auto c = ModelConfig::tiny();
  c.input_length = 256;
  auto a = LgaModel<float>::create(c, 1);
  auto b = LgaModel<float>::create(c, 2);
  std::stringstream buf;
  write_weights(a.parameters(), buf);
  auto records = read_weights(buf);
  std::size_t stored = 0;
  for (auto& r : records) stored += r.values.size();
  EXPECT_EQ(stored, count_parameters(a));
  assign_weights(b.parameters(), records);
  auto x = random_input<float>(c, 2, 3);
  auto ya = a.forward(x), yb = b.forward(x);
  for (std::size_t i = 0; i < ya.numel(); ++i) EXPECT_EQ(ya.data()[i], yb.data()[i]);
}

TEST(WeightFile, FileRoundTripThroughDisk) {
  testutil::TempDir dir("weights");
  auto c = ModelConfig::miniature();
  auto a = LgaModel<double>::create(c, 1);
  write_weights(a.parameters(), dir / "w.lgaw");
  auto records = read_weights(dir / "w.lgaw");
  auto params = a.parameters();
  ASSERT_EQ(records.size(), params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    EXPECT_EQ(records[i].name, params[i].name);
    EXPECT_EQ(records[i].shape, params[i].tensor.shape());
    for (std::size_t j = 0; j < records[i].values.size(); ++j)
      EXPECT_EQ(records[i].values[j], float(params[i].tensor.data()[j]));
  }
}

TEST(WeightFile, CorruptionIsReported) {
  auto c = ModelConfig::miniature();
  auto a = LgaModel<double>::create(c, 1);
  std::stringstream buf;
  write_weights(a.parameters(), buf);
  const std::string good = buf.str();

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  std::stringstream s1(bad_magic);
  try {
    read_weights(s1);
    ADD_FAILURE() << "bad magic accepted";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }

  std::stringstream s2(good.substr(0, good.size() - 3));
  EXPECT_THROW(read_weights(s2), FormatError);

  std::stringstream s3(good);
  auto records = read_weights(s3);
  auto missing = records;
  missing.pop_back();
  EXPECT_THROW(assign_weights(a.parameters(), missing), UsageError);
  auto reshaped = records;
  reshaped[0].shape = {reshaped[0].values.size()};
  EXPECT_THROW(assign_weights(a.parameters(), reshaped), ShapeError);
  auto extra = records;
  extra.push_back({"stray", {1}, {0.f}});
  EXPECT_THROW(assign_weights(a.parameters(), extra), UsageError);
}

// ---- gradients -----------------------------------------------------------------

TEST(ModelGradients, MiniatureGridPassesFiniteDifferences) {
  check::GradCheckOptions opt;
  opt.max_coords = 40;
  for (auto v : attn::kAllVariants)
    for (auto pe : attn::kAllEncodings) {
      auto c = ModelConfig::miniature();
      c.attention.variant = v;
      c.attention.pos_encoding = pe;
      auto r = check::check_model(c, opt);
      EXPECT_TRUE(r.passed) << attn::to_string(v) << "/" << attn::to_string(pe)
                            << " max rel " << r.max_rel_error << " at " << r.worst_input;
    }
}

TEST(ModelGradients, SpotCheckAgainstHandRolledDifferences) {
  auto c = ModelConfig::miniature();
  c.attention.pos_encoding = attn::PositionalEncoding::kRelative;
  auto m = LgaModel<double>::create(c, 21);
  for (auto& [name, t] : m.parameters())
    if (name.ends_with("relative_bias")) {
      auto v = testutil::uniform_values(t.numel(), 22, -0.5, 0.5);
      std::copy(v.begin(), v.end(), t.mutable_data().begin());
    }
  auto x = random_input<double>(c, 2, 23);
  const auto r = testutil::uniform_values(2 * c.num_classes, 24);
  auto loss = [&] {
    auto y = m.forward(x);
    double s = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += y.data()[i] * r[i];
    return s;
  };
  auto y = m.forward(x);
  sum(mul(y, Td::from_data(y.shape(), r))).backward();

  std::mt19937 gen(25);
  auto params = m.parameters();
  std::vector<double> analytic, numeric;
  for (int probe = 0; probe < 60; ++probe) {
    auto& t = params[gen() % params.size()].tensor;
    const std::size_t i = gen() % t.numel();
    analytic.push_back(t.grad()[i]);
    const double orig = t.data()[i];
    NoGradGuard guard;
    t.mutable_data()[i] = orig + 1e-5;
    const double up = loss();
    t.mutable_data()[i] = orig - 1e-5;
    const double down = loss();
    t.mutable_data()[i] = orig;
    numeric.push_back((up - down) / 2e-5);
  }
  EXPECT_LE(testutil::max_rel_error(analytic, numeric), 1e-3);
}
