// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "scd/numcore.hpp"
#include "test_util.hpp"

namespace {

using namespace scd;
using num::DimensionError;
using num::Parameter;
using num::Tape;
using num::TapeError;
using num::Tensor;
using testkit::op_grad_error;
using testkit::random_tensor;
using TensorD = Tensor<double>;

constexpr double kGradTol = 1e-6;

void expect_values(const TensorD& t, const std::vector<double>& expected, double tol = 1e-12) {
  ASSERT_EQ(t.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(t[i], expected[i], tol) << "index " << i;
}

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(TensorD({2, 2}, {1, 2, 3}), DimensionError);
  EXPECT_THROW(TensorD(num::Shape{0, 2}, std::vector<double>{}), DimensionError);
  const auto m = TensorD::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m.at(1, 2), 6);
  EXPECT_EQ(m.dim(0), 2u);
  EXPECT_THROW(m.dim(2), DimensionError);
  EXPECT_THROW(m.item(), DimensionError);
}

TEST(Tensor, DetachDropsTape) {
  Tape<double> tape;
  auto v = tape.variable(TensorD::vector({1, 2}));
  EXPECT_TRUE(v.requires_grad());
  EXPECT_FALSE(v.detach().requires_grad());
}

TEST(Matmul, IdentityAndDotProduct) {
  const auto eye = TensorD::matrix(2, 2, {1, 0, 0, 1});
  const auto a = TensorD::matrix(2, 2, {1, 2, 3, 4});
  expect_values(num::matmul(eye, a), {1, 2, 3, 4});
  expect_values(num::matmul(TensorD::matrix(1, 2, {1, 2}), TensorD::matrix(2, 1, {3, 4})), {11});
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    num::matmul(TensorD::zeros({2, 3}), TensorD::zeros({2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientOfSumIsOnesTimesBTransposed) {
  std::mt19937_64 rng(1);
  const auto a = random_tensor({2, 3}, rng);
  const auto b = random_tensor({3, 4}, rng);
  Tape<double> tape;
  const auto va = tape.variable(a);
  tape.backward(num::sum(num::matmul(va, b)));
  const auto g = tape.grad(va);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      double row_sum = 0;
      for (std::size_t j = 0; j < 4; ++j) row_sum += b.at(k, j);
      EXPECT_NEAR(g[i * 3 + k], row_sum, 1e-12);
    }
  }
  EXPECT_LT(op_grad_error([&](const TensorD& x) { return num::matmul(x, b); }, a), kGradTol);
  EXPECT_LT(op_grad_error([&](const TensorD& x) { return num::matmul(a, x); }, b), kGradTol);
}

TEST(Affine, MatchesExplicitProduct) {
  const auto x = TensorD::matrix(2, 2, {1, 2, 3, 4});
  const auto w = TensorD::matrix(3, 2, {1, 0, 0, 1, 1, 1});
  const auto b = TensorD::vector({0.5, -0.5, 0});
  expect_values(num::affine(x, w, b), {1.5, 1.5, 3, 3.5, 3.5, 7});
  expect_values(num::affine(TensorD::vector({1, 2}), w), {1, 2, 3});
  EXPECT_THROW(num::affine(TensorD::vector({1, 2, 3}), w), DimensionError);
  EXPECT_THROW(num::affine(x, w, TensorD::vector({1, 2})), DimensionError);
}

TEST(Affine, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(2);
  const auto x = random_tensor({3, 4}, rng);
  const auto w = random_tensor({5, 4}, rng);
  const auto b = random_tensor({5}, rng);
  EXPECT_LT(op_grad_error([&](const TensorD& t) { return num::affine(t, w, b); }, x), kGradTol);
  EXPECT_LT(op_grad_error([&](const TensorD& t) { return num::affine(x, t, b); }, w), kGradTol);
  EXPECT_LT(op_grad_error([&](const TensorD& t) { return num::affine(x, w, t); }, b), kGradTol);
  const auto xv = random_tensor({4}, rng);
  EXPECT_LT(op_grad_error([&](const TensorD& t) { return num::affine(t, w, b); }, xv), kGradTol);
}

TEST(Elementwise, KnownValues) {
  expect_values(num::sigmoid(TensorD::vector({0, 0})), {0.5, 0.5});
  expect_values(num::tanh(TensorD::vector({0})), {0});
  expect_values(num::mul(TensorD::vector({2, 3}), TensorD::vector({4, 5})), {8, 15});
  expect_values(num::add(TensorD::vector({2, 3}), TensorD::vector({4, 5})), {6, 8});
  expect_values(num::sub(TensorD::vector({2, 3}), TensorD::vector({4, 5})), {-2, -2});
  expect_values(num::scale(TensorD::vector({2, 3}), 0.5), {1, 1.5});
  EXPECT_THROW(num::add(TensorD::vector({1}), TensorD::vector({1, 2})), DimensionError);
  EXPECT_THROW(num::mul(TensorD::zeros({2, 1}), TensorD::zeros({1, 2})), DimensionError);
}

TEST(Elementwise, SigmoidStaysFiniteForLargeInputs) {
  const auto s = num::sigmoid(TensorD::vector({-800, 800}));
  EXPECT_TRUE(std::isfinite(s[0]) && std::isfinite(s[1]));
  EXPECT_NEAR(s[0], 0.0, 1e-300);
  EXPECT_NEAR(s[1], 1.0, 1e-15);
}

TEST(Elementwise, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  const auto x = random_tensor({2, 3}, rng, -2, 2);
  const auto y = random_tensor({2, 3}, rng, -2, 2);
  EXPECT_LT(op_grad_error([](const TensorD& t) { return num::sigmoid(t); }, x), kGradTol);
  EXPECT_LT(op_grad_error([](const TensorD& t) { return num::tanh(t); }, x), kGradTol);
  EXPECT_LT(op_grad_error([&](const TensorD& t) { return num::mul(t, y); }, x), kGradTol);
  EXPECT_LT(op_grad_error([&](const TensorD& t) { return num::add(y, t); }, x), kGradTol);
  EXPECT_LT(op_grad_error([&](const TensorD& t) { return num::sub(y, t); }, x), kGradTol);
  EXPECT_LT(op_grad_error([](const TensorD& t) { return num::scale(t, -1.5); }, x), kGradTol);
  EXPECT_LT(op_grad_error([](const TensorD& t) { return num::mul(t, t); }, x), kGradTol);
}

TEST(Concat, JoinsAlongAxis) {
  const auto joined = num::concat<double>({TensorD::vector({1}), TensorD::vector({2})}, 0);
  expect_values(joined, {1, 2});
  const auto a = TensorD::matrix(2, 1, {1, 2});
  const auto b = TensorD::matrix(2, 2, {3, 4, 5, 6});
  expect_values(num::concat<double>({a, b}, 1), {1, 3, 4, 2, 5, 6});
  expect_values(num::concat<double>({b, b}, 0), {3, 4, 5, 6, 3, 4, 5, 6});
  std::vector<TensorD> four(4, TensorD::zeros({200}));
  EXPECT_EQ(num::concat<double>(std::span<const TensorD>(four), 0).shape(), num::Shape{800});
}

TEST(Concat, RejectsEmptyAndIncompatibleParts) {
  EXPECT_THROW(num::concat<double>(std::span<const TensorD>(), 0), DimensionError);
  EXPECT_THROW(num::concat<double>({TensorD::zeros({2, 1}), TensorD::zeros({3, 1})}, 1), DimensionError);
  EXPECT_THROW(num::concat<double>({TensorD::zeros({2}), TensorD::zeros({2})}, 1), DimensionError);
}

TEST(Concat, BackwardRoutesSlicesToParts) {
  Tape<double> tape;
  const auto a = tape.variable(TensorD::vector({1, 2}));
  const auto b = tape.variable(TensorD::vector({3}));
  const auto w = TensorD::vector({10, 20, 30});
  tape.backward(num::sum(num::mul(num::concat<double>({a, b}, 0), w)));
  EXPECT_EQ(tape.grad(a), (std::vector<double>{10, 20}));
  EXPECT_EQ(tape.grad(b), (std::vector<double>{30}));

  std::mt19937_64 rng(4);
  const auto x = random_tensor({2, 3}, rng);
  const auto y = random_tensor({2, 2}, rng);
  EXPECT_LT(op_grad_error([&](const TensorD& t) { return num::concat<double>({y, t, y}, 1); }, x), kGradTol);
  EXPECT_LT(op_grad_error([&](const TensorD& t) { return num::concat<double>({t, t}, 0); }, x), kGradTol);
}

TEST(SliceReshape, ValuesAndGradients) {
  const auto m = TensorD::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  expect_values(num::slice(m, 1, 1, 3), {2, 3, 5, 6});
  expect_values(num::slice(m, 0, 1, 2), {4, 5, 6});
  EXPECT_THROW(num::slice(m, 1, 2, 4), DimensionError);
  EXPECT_THROW(num::slice(m, 1, 2, 2), DimensionError);
  EXPECT_EQ(num::reshape(m, {3, 2}).shape(), (num::Shape{3, 2}));
  EXPECT_THROW(num::reshape(m, {4}), DimensionError);

  std::mt19937_64 rng(5);
  const auto x = random_tensor({3, 4}, rng);
  EXPECT_LT(op_grad_error([](const TensorD& t) { return num::slice(t, 1, 1, 3); }, x), kGradTol);
  EXPECT_LT(op_grad_error([](const TensorD& t) { return num::slice(t, 0, 2, 3); }, x), kGradTol);
  EXPECT_LT(op_grad_error([](const TensorD& t) { return num::reshape(t, {12}); }, x), kGradTol);
}

TEST(Softmax, KnownValuesAndStability) {
  expect_values(num::softmax_vec(TensorD::vector({0, 0})), {0.5, 0.5});
  expect_values(num::softmax_vec(TensorD::vector({-37.5})), {1.0});
  expect_values(num::softmax_vec(TensorD::vector({1000, 1000})), {0.5, 0.5});
  const auto lp = num::log_softmax(TensorD::matrix(1, 2, {1000, 0}));
  EXPECT_TRUE(std::isfinite(lp[1]));
  EXPECT_NEAR(lp[1], -1000.0, 1e-9);
}

TEST(Softmax, RowsSumToOneOnRandomInputs) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = random_tensor({3, 5}, rng, -50, 50);
    const auto p = num::softmax(x);
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 5; ++c) {
        EXPECT_GT(p.at(r, c), 0.0);
        EXPECT_LE(p.at(r, c), 1.0);
        s += p.at(r, c);
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Softmax, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  const auto x = random_tensor({3, 4}, rng, -2, 2);
  EXPECT_LT(op_grad_error([](const TensorD& t) { return num::softmax(t); }, x), kGradTol);
  EXPECT_LT(op_grad_error([](const TensorD& t) { return num::log_softmax(t); }, x), kGradTol);
  const auto v = random_tensor({5}, rng, -2, 2);
  EXPECT_LT(op_grad_error([](const TensorD& t) { return num::softmax_vec(t); }, v), kGradTol);
}

TEST(Reductions, SumAndMean) {
  const auto m = TensorD::matrix(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(num::sum(m).item(), 10);
  EXPECT_EQ(num::mean(m).item(), 2.5);
  std::mt19937_64 rng(8);
  const auto x = random_tensor({2, 3}, rng);
  EXPECT_LT(op_grad_error([](const TensorD& t) { return num::mean(t); }, x), kGradTol);
}

TEST(RowOps, ScaleRows) {
  const auto m = TensorD::matrix(2, 2, {1, 2, 3, 4});
  expect_values(num::scale_rows(m, TensorD::vector({2, -1})), {2, 4, -3, -4});
  expect_values(num::scale_rows(m, TensorD::matrix(2, 1, {0, 1})), {0, 0, 3, 4});
  EXPECT_THROW(num::scale_rows(m, TensorD::vector({1, 2, 3})), DimensionError);
  std::mt19937_64 rng(9);
  const auto x = random_tensor({3, 4}, rng);
  const auto w = random_tensor({3, 1}, rng);
  EXPECT_LT(op_grad_error([&](const TensorD& t) { return num::scale_rows(t, w); }, x), kGradTol);
  EXPECT_LT(op_grad_error([&](const TensorD& t) { return num::scale_rows(x, t); }, w), kGradTol);
}

TEST(RowOps, SelectRows) {
  const std::vector<std::uint8_t> keep{1, 0};
  const auto a = TensorD::matrix(2, 2, {1, 2, 3, 4});
  const auto b = TensorD::matrix(2, 2, {5, 6, 7, 8});
  expect_values(num::select_rows<double>(keep, a, b), {1, 2, 7, 8});
  EXPECT_THROW(num::select_rows<double>(std::vector<std::uint8_t>{1}, a, b), DimensionError);
  EXPECT_LT(op_grad_error([&](const TensorD& t) { return num::select_rows<double>(keep, t, b); }, a), kGradTol);
  EXPECT_LT(op_grad_error([&](const TensorD& t) { return num::select_rows<double>(keep, a, t); }, b), kGradTol);
}

TEST(RowOps, GatherRowsAccumulatesRepeatedRows) {
  const auto table = TensorD::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  const std::vector<std::size_t> rows{2, 0, 2};
  expect_values(num::gather_rows<double>(table, rows), {5, 6, 1, 2, 5, 6});
  EXPECT_THROW(num::gather_rows<double>(table, std::vector<std::size_t>{3}), DimensionError);
  Tape<double> tape;
  const auto t = tape.variable(table);
  tape.backward(num::sum(num::gather_rows<double>(t, rows)));
  EXPECT_EQ(tape.grad(t), (std::vector<double>{1, 1, 0, 0, 2, 2}));
  EXPECT_LT(op_grad_error([&](const TensorD& x) { return num::gather_rows<double>(x, rows); }, table), kGradTol);
}

TEST(RowOps, EmbeddingBag) {
  const auto table = TensorD::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  const std::vector<num::Bag> bags{{{0, 1.0}, {2, 2.0}}, {}, {{1, 0.5}}};
  expect_values(num::embedding_bag<double>(table, bags), {11, 14, 0, 0, 1.5, 2});
  EXPECT_THROW(num::embedding_bag<double>(table, std::vector<num::Bag>{{{3, 1.0}}}), DimensionError);
  EXPECT_LT(op_grad_error([&](const TensorD& x) { return num::embedding_bag<double>(x, bags); }, table), kGradTol);
}

TEST(RowOps, MaximumPicksLargestPart) {
  const std::vector<TensorD> parts{TensorD::vector({1, 5, 3}), TensorD::vector({4, 2, 3})};
  expect_values(num::maximum<double>(parts), {4, 5, 3});
  Tape<double> tape;
  const auto a = tape.variable(parts[0]);
  const auto b = tape.variable(parts[1]);
  tape.backward(num::sum(num::maximum<double>(std::vector<TensorD>{a, b})));
  // The tie at index 2 goes to the first part.
  EXPECT_EQ(tape.grad(a), (std::vector<double>{0, 1, 1}));
  EXPECT_EQ(tape.grad(b), (std::vector<double>{1, 0, 0}));
}

TEST(Loss, NllLossIsMeanNegativeLogLikelihood) {
  const auto logp = num::log_softmax(TensorD::matrix(2, 2, {0, 0, 2, -1}));
  const std::vector<int> labels{0, 1};
  const double expected = 0.5 * (std::log(2.0) + std::log1p(std::exp(3.0)));
  EXPECT_NEAR(num::nll_loss<double>(logp, labels).item(), expected, 1e-12);
  EXPECT_THROW(num::nll_loss<double>(logp, std::vector<int>{0}), DimensionError);
  EXPECT_THROW(num::nll_loss<double>(logp, std::vector<int>{0, 2}), DimensionError);
  std::mt19937_64 rng(10);
  const auto z = random_tensor({4, 2}, rng);
  const std::vector<int> y{0, 1, 1, 0};
  EXPECT_LT(op_grad_error([&](const TensorD& t) { return num::nll_loss<double>(num::log_softmax(t), y); }, z),
            kGradTol);
}

TEST(Dropout, IdentityAtRateZeroAndInvertedScaling) {
  std::mt19937_64 rng(11);
  const auto x = TensorD::full({1000}, 1.0);
  expect_values(num::dropout(x, 0.0, rng), std::vector<double>(1000, 1.0));
  const auto y = num::dropout(x, 0.25, rng);
  double total = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    EXPECT_TRUE(y[i] == 0.0 || std::abs(y[i] - 1.0 / 0.75) < 1e-12);
    total += y[i];
  }
  EXPECT_NEAR(total / 1000.0, 1.0, 0.1);
  EXPECT_THROW(num::dropout(x, 1.0, rng), std::invalid_argument);
}

TEST(Backward, SumAndSquareOfParameter) {
  Parameter<double> w("w", {3});
  Tape<double> tape;
  tape.backward(num::sum(tape.watch(w)));
  EXPECT_EQ(std::vector<double>(w.grad().begin(), w.grad().end()), (std::vector<double>{1, 1, 1}));

  Parameter<double> v("v", {2});
  v.value()[0] = 2;
  v.value()[1] = 3;
  Tape<double> tape2;
  const auto tv = tape2.watch(v);
  num::backward(num::sum(num::mul(tv, tv)));
  EXPECT_EQ(std::vector<double>(v.grad().begin(), v.grad().end()), (std::vector<double>{4, 6}));
}

TEST(Backward, TwiceWithoutZeroingDoublesGradientExactly) {
  std::mt19937_64 rng(12);
  Parameter<double> w("w", {3, 3});
  for (auto& x : w.value()) x = std::uniform_real_distribution<double>(-1, 1)(rng);
  const auto x = random_tensor({2, 3}, rng);
  Tape<double> tape;
  const auto loss = num::sum(num::tanh(num::affine(x, tape.watch(w))));
  tape.backward(loss);
  const std::vector<double> once(w.grad().begin(), w.grad().end());
  tape.backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(w.grad()[i], 2 * once[i]);
  num::zero_grads<double>(std::vector<Parameter<double>*>{&w});
  for (double g : w.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, VisitsEachOpOnceInReverseOrder) {
  Tape<double> tape;
  const auto x = tape.variable(TensorD::vector({0.3, -0.2}));
  const auto a = num::tanh(x);
  const auto b = num::mul(a, x);
  const auto loss = num::sum(b);
  tape.backward(loss);
  const auto& log = tape.visit_log();
  EXPECT_EQ(log, (std::vector<int>{loss.node(), b.node(), a.node()}));
}

TEST(Backward, RejectsNonScalarAndDetachedLoss) {
  Tape<double> tape;
  const auto x = tape.variable(TensorD::vector({1, 2}));
  EXPECT_THROW(tape.backward(x), TapeError);
  EXPECT_THROW(num::backward(TensorD::scalar(1.0)), TapeError);
  Tape<double> other;
  EXPECT_THROW(other.backward(num::sum(x)), TapeError);
}

TEST(Backward, UntrackedOpsRecordNothing) {
  Tape<double> tape;
  const auto a = num::tanh(num::matmul(TensorD::matrix(1, 1, {2}), TensorD::matrix(1, 1, {3})));
  EXPECT_FALSE(a.requires_grad());
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Forward, BitIdenticalOnRepeat) {
  std::mt19937_64 rng(13);
  const auto x = random_tensor({4, 6}, rng);
  const auto w = random_tensor({5, 6}, rng);
  const auto y1 = num::softmax(num::tanh(num::affine(x, w)));
  const auto y2 = num::softmax(num::tanh(num::affine(x, w)));
  EXPECT_EQ(y1.to_vector(), y2.to_vector());
}

TEST(FiniteDiff, SumOfSquaresAndConstant) {
  const auto x = TensorD::vector({1, 2});
  const auto g = num::finite_diff_grad<double>(
      [](const TensorD& t) {
        double s = 0;
        for (double v : t.data()) s += v * v;
        return s;
      },
      x, 1e-5);
  EXPECT_NEAR(g[0], 2.0, 1e-8);
  EXPECT_NEAR(g[1], 4.0, 1e-8);
  const auto c = num::finite_diff_grad<double>([](const TensorD&) { return 3.0; }, x, 1e-5);
  EXPECT_EQ(c.to_vector(), (std::vector<double>{0, 0}));
  EXPECT_THROW(num::finite_diff_grad<double>([](const TensorD&) { return 0.0; }, x, 0.0), std::invalid_argument);
}

TEST(FiniteDiff, ParameterOverloadRestoresValue) {
  Parameter<double> p("p", {2});
  p.value()[0] = 0.5;
  p.value()[1] = -1.5;
  const auto g = num::finite_diff_grad<double>([&] { return p.value()[0] * p.value()[1]; }, p, 1e-5);
  EXPECT_NEAR(g[0], -1.5, 1e-9);
  EXPECT_NEAR(g[1], 0.5, 1e-9);
  EXPECT_EQ(p.value()[0], 0.5);
  EXPECT_EQ(p.value()[1], -1.5);
}

TEST(FiniteDiff, RelativeErrorUsesFloor) {
  const std::vector<double> a{1e-9, 2.0};
  const std::vector<double> n{1.5e-9, 2.002};
  // The first pair differs by 5e-10 against the 1e-6 floor, i.e. 5e-4.
  EXPECT_NEAR(num::max_relative_error<double>(a, n), 0.002 / 2.002, 1e-12);
  EXPECT_THROW(num::max_relative_error<double>(a, std::vector<double>{1.0}), DimensionError);
}

TEST(ParameterCopy, IsDeep) {
  Parameter<double> p("p", {2});
  p.value()[0] = 1;
  Parameter<double> q = p;
  q.value()[0] = 7;
  EXPECT_EQ(p.value()[0], 1);
  const auto view = p.tensor();
  p.value()[1] = 9;
  EXPECT_EQ(view[1], 9);
}

}  // namespace
