#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "lga/ops.hpp"
#include "lga/parallel.hpp"
#include "lga/tensor.hpp"
#include "test_util.hpp"

using namespace lga;
using testutil::Td;

TEST(Matmul, IdentityTimesColumn) {
  auto a = Td::from_data({2, 2}, {1, 0, 0, 1});
  auto b = Td::from_data({2, 1}, {3, 4});
  auto c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c.data()[0], 3);
  EXPECT_EQ(c.data()[1], 4);
}

TEST(Matmul, OneByOne) {
  auto c = matmul(Td::from_data({1, 1}, {2}), Td::from_data({1, 1}, {3}));
  EXPECT_EQ(c.item(), 6);
}

TEST(Matmul, MatchesTripleLoop) {
  auto a = testutil::random_tensor({4, 5}, 1);
  auto b = testutil::random_tensor({5, 3}, 2);
  std::vector<double> expect(12, 0.0);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 5; ++k) expect[i * 3 + j] += a.data()[i * 5 + k] * b.data()[k * 3 + j];
  EXPECT_LE(testutil::max_abs_diff(matmul(a, b), expect), 1e-12);
}

TEST(Matmul, BroadcastBatchMatchesLoop) {
  auto a = testutil::random_tensor({2, 1, 3, 4}, 3);
  auto b = testutil::random_tensor({3, 4, 2}, 4);
  auto c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 3, 3, 2}));
  for (int p = 0; p < 2; ++p)
    for (int q = 0; q < 3; ++q)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) {
          double s = 0;
          for (int k = 0; k < 4; ++k) s += a.at({std::size_t(p), 0, std::size_t(i), std::size_t(k)}) *
                                           b.at({std::size_t(q), std::size_t(k), std::size_t(j)});
          EXPECT_NEAR(c.at({std::size_t(p), std::size_t(q), std::size_t(i), std::size_t(j)}), s, 1e-12);
        }
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    matmul(Td::zeros({2, 3}), Td::zeros({4, 5}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4,5]"), std::string::npos) << msg;
  }
}

TEST(Softmax, UniformRow) {
  auto y = softmax(Td::from_data({3}, {0, 0, 0}), 0);
  for (double v : y.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitDoesNotOverflow) {
  auto y = softmax(Td::from_data({2}, {1000, 0}), 0);
  EXPECT_NEAR(y.data()[0], 1.0, 1e-12);
  EXPECT_NEAR(y.data()[1], 0.0, 1e-12);
}

TEST(Softmax, MatchesDirectFormula) {
  auto x = testutil::random_tensor({3, 7}, 5);
  auto y = softmax(x, 1);
  for (int r = 0; r < 3; ++r) {
    double z = 0, total = 0;
    for (int j = 0; j < 7; ++j) z += std::exp(x.data()[r * 7 + j]);
    for (int j = 0; j < 7; ++j) {
      EXPECT_NEAR(y.data()[r * 7 + j], std::exp(x.data()[r * 7 + j]) / z, 1e-15);
      total += y.data()[r * 7 + j];
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Softmax, InnerAxisRowsSumToOne) {
  auto y = softmax(testutil::random_tensor({2, 5, 3}, 6), 1);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 5; ++j) s += y.at({b, j, i});
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Backward, SumGivesOnes) {
  auto x = testutil::random_tensor({2, 3, 2}, 7, true);
  sum(x).backward();
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, HalfSquaredNormGivesInput) {
  auto x = Td::from_data({3}, {1, 2, 3}, true);
  scale(sum(mul(x, x)), 0.5).backward();
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{1, 2, 3}));
}

TEST(Backward, FanOutAccumulates) {
  auto x = Td::from_data({2}, {0.5, -1}, true);
  sum(add(x, x)).backward();
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 2.0);
}

TEST(Backward, DiamondVisitsSharedNodeOnce) {
  // y = (x*x) used by two branches; each op must contribute exactly once.
  auto x = Td::from_data({1}, {3}, true);
  auto sq = mul(x, x);
  sum(add(scale(sq, 2.0), sq)).backward();  // d/dx 3x^2 = 6x
  EXPECT_DOUBLE_EQ(x.grad()[0], 18.0);
}

TEST(Backward, DetachedTensorIsUsageError) {
  auto x = Td::from_data({1}, {1});
  EXPECT_THROW(sum(x).backward(), UsageError);
  auto y = Td::from_data({1}, {1}, true);
  EXPECT_THROW(sum(y).detach().backward(), UsageError);
}

TEST(Backward, NoGradGuardSkipsRecording) {
  auto x = Td::from_data({2}, {1, 2}, true);
  Td s;
  {
    NoGradGuard g;
    s = sum(x);
  }
  EXPECT_THROW(s.backward(), UsageError);
}

TEST(Tensor, NonFiniteIsReportedWithOpName) {
  auto x = Td::from_data({2}, {1e308, 1e308});
  try {
    add(x, x);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("add"), std::string::npos) << e.what();
  }
}

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Td::from_data({2, 2}, {1, 2, 3}), ShapeError);
}

TEST(Tensor, GradHasDataShape) {
  auto x = testutil::random_tensor({3, 4}, 8, true);
  sum(mul(x, x)).backward();
  EXPECT_EQ(x.grad().size(), x.numel());
}

TEST(Views, PermuteMatchesIndexMap) {
  auto x = testutil::random_tensor({2, 3, 4}, 9);
  auto y = permute(x, {2, 0, 1});
  ASSERT_EQ(y.shape(), (Shape{4, 2, 3}));
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(y.at({c, a, b}), x.at({a, b, c}));
}

TEST(Views, SliceConcatRoundTrip) {
  auto x = testutil::random_tensor({2, 5, 3}, 10);
  auto joined = concat<double>({slice(x, 1, 0, 2), slice(x, 1, 2, 5)}, 1);
  EXPECT_EQ(testutil::max_abs_diff(joined, x), 0.0);
}

TEST(Views, PadAddsZeros) {
  auto x = Td::from_data({1, 2}, {7, 8});
  auto y = pad(x, 1, 2, 1);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()),
            (std::vector<double>{0, 0, 7, 8, 0}));
}

TEST(Views, UnfoldWindows) {
  auto x = Td::from_data({5}, {0, 1, 2, 3, 4});
  auto y = unfold(x, 0, 3, 2);
  ASSERT_EQ(y.shape(), (Shape{2, 3}));
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()),
            (std::vector<double>{0, 1, 2, 2, 3, 4}));
}

TEST(Views, BroadcastAndReshape) {
  auto x = Td::from_data({3, 1}, {1, 2, 3});
  auto y = broadcast_to(x, {2, 3, 2});
  EXPECT_EQ(y.at({1, 2, 1}), 3);
  EXPECT_EQ(reshape(y, {12}).shape(), (Shape{12}));
  EXPECT_THROW(reshape(y, {5}), ShapeError);
}

TEST(Reductions, AxisSumAndMean) {
  auto x = Td::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  auto s = sum(x, 1);
  EXPECT_EQ(s.shape(), (Shape{2}));
  EXPECT_EQ(s.data()[0], 6);
  EXPECT_EQ(s.data()[1], 15);
  auto m = mean(x, 0, true);
  EXPECT_EQ(m.shape(), (Shape{1, 3}));
  EXPECT_EQ(m.data()[2], 4.5);
}

TEST(Broadcast, ElementwiseOps) {
  auto a = Td::from_data({2, 2}, {1, 2, 3, 4});
  auto b = Td::from_data({2}, {10, 20});
  auto c = sub(mul(a, b), a);
  EXPECT_EQ(std::vector<double>(c.data().begin(), c.data().end()),
            (std::vector<double>{9, 38, 27, 76}));
  EXPECT_THROW(add(a, Td::zeros({3})), ShapeError);
}

// Random inputs in [-1, 1]; every primitive's analytic gradient against an
// independent central-difference estimate.
TEST(GradientProperty, PrimitivesAgreeWithFiniteDifferences) {
  using F = std::function<Td(const Td&)>;
  struct Case {
    const char* name;
    Shape shape;
    F f;
  };
  auto other = testutil::random_tensor({3, 4}, 99);
  std::vector<Case> cases{
      {"add", {3, 4}, [&](const Td& x) { return add(x, other); }},
      {"sub", {3, 4}, [&](const Td& x) { return sub(other, x); }},
      {"mul", {3, 4}, [&](const Td& x) { return mul(x, x); }},
      {"scale", {3, 4}, [](const Td& x) { return scale(x, -2.5); }},
      {"add_scalar", {3, 4}, [](const Td& x) { return add_scalar(x, 0.3); }},
      {"sum_axis", {3, 4}, [](const Td& x) { return sum(x, 0); }},
      {"mean_axis", {3, 4}, [](const Td& x) { return mean(x, 1); }},
      {"matmul", {3, 4}, [&](const Td& x) { return matmul(x, transpose(other, 0, 1)); }},
      {"softmax", {3, 4}, [](const Td& x) { return softmax(x, 1); }},
      {"transpose", {3, 4}, [](const Td& x) { return transpose(x, 0, 1); }},
      {"reshape", {3, 4}, [](const Td& x) { return reshape(x, {2, 6}); }},
      {"slice", {3, 4}, [](const Td& x) { return slice(x, 1, 1, 3); }},
      {"concat", {3, 4}, [&](const Td& x) { return concat<double>({x, other, x}, 0); }},
      {"broadcast", {3, 1}, [](const Td& x) { return broadcast_to(x, {2, 3, 5}); }},
  };
  for (const auto& c : cases) {
    auto x = testutil::random_tensor(c.shape, 11);
    Td probe;
    {
      NoGradGuard g;
      probe = c.f(x);
    }
    auto w = testutil::uniform_values(probe.numel(), 12);
    auto a = testutil::analytic_grad(c.f, x, w);
    auto n = testutil::numeric_grad(c.f, x, w);
    EXPECT_LE(testutil::max_rel_error(a, n), 1e-4) << c.name;
  }
}

TEST(Determinism, ThreadCountDoesNotChangeResults) {
  auto a = testutil::random_tensor({8, 64, 64}, 13);
  auto b = testutil::random_tensor({64, 64}, 14);
  set_thread_count(1);
  auto one = matmul(a, b);
  set_thread_count(4);
  auto four = matmul(a, b);
  set_thread_count(0);
  EXPECT_EQ(testutil::max_abs_diff(one, four), 0.0);
}
