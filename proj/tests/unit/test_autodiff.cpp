#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "hiercas/autodiff.hpp"
#include "hiercas/errors.hpp"
#include "op_cases.hpp"

namespace {

using hiercas::ad::Shape;
using hiercas::ad::Tape;
using hiercas::ad::Tensor;
using hiercas::ad::Var;
namespace ad = hiercas::ad;
namespace ht = hiercas::testing;

TEST(Tensor, ConstructionValidatesElementCount) {
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<double>(5)), hiercas::DimensionError);
  const Tensor t(Shape{2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_DOUBLE_EQ(Tensor::scalar(4.0).item(), 4.0);
  EXPECT_TRUE(Tensor::scalar(1.0).shape().empty());
}

TEST(Tensor, MatrixLiteralIsRowMajor) {
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(m.shape(), (Shape{2, 3}));
  EXPECT_EQ(m(1, 0), 4.0);
  EXPECT_EQ(m[2], 3.0);
}

TEST(Autodiff, MatmulValueAndShapeError) {
  Tape tape;
  Var a = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  Var b = tape.constant(Tensor::matrix({{5}, {6}}));
  EXPECT_EQ(ad::matmul(a, b).value(), Tensor::matrix({{17}, {39}}));
  Var c = tape.constant(Tensor(Shape{3, 1}));
  try {
    ad::matmul(a, c);
    FAIL() << "expected DimensionError";
  } catch (const hiercas::DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x2]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3x1]"), std::string::npos) << msg;
  }
}

TEST(Autodiff, LogOfNonPositiveThrows) {
  Tape tape;
  Var x = tape.variable(Tensor::row({1.0, 0.0}));
  EXPECT_THROW(ad::log(x), hiercas::DomainError);
}

TEST(Autodiff, GatherOutOfRangeThrows) {
  Tape tape;
  Var t = tape.variable(Tensor(Shape{3, 2}));
  const std::size_t idx[] = {3};
  EXPECT_THROW(ad::gather_rows(t, idx), hiercas::IndexError);
}

TEST(Autodiff, SoftmaxRowsSumToOneAndMaskedEntriesAreZero) {
  Tape tape;
  Var x = tape.constant(ht::random_tensor({4, 6}, 3, -30.0, 30.0));
  const Tensor p = ad::softmax_row(x).value();
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 6; ++c) s += p(r, c);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  std::vector<std::uint8_t> mask(24, 1);
  mask[1] = mask[7] = mask[8] = 0;
  const Tensor pm = ad::softmax_row(x, mask).value();
  EXPECT_EQ(pm(0, 1), 0.0);
  EXPECT_EQ(pm(1, 1), 0.0);
  EXPECT_EQ(pm(1, 2), 0.0);
  std::vector<std::uint8_t> dead(24, 1);
  std::fill_n(dead.begin() + 6, 6, 0);
  EXPECT_THROW(ad::softmax_row(x, dead), hiercas::DomainError);
}

TEST(Autodiff, SoftmaxIsShiftInvariantAndStableForLargeLogits) {
  Tape tape;
  const Tensor base = Tensor::matrix({{1000.0, 1001.0, 999.0}});
  Tensor shifted = base;
  for (double& v : shifted.data()) v -= 1000.0;
  const Tensor a = ad::softmax_row(tape.constant(base)).value();
  const Tensor b = ad::softmax_row(tape.constant(shifted)).value();
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(std::isfinite(a[i]));
    EXPECT_NEAR(a[i], b[i], 1e-15);
  }
}

TEST(Autodiff, GradientAccumulatesOverUseSites) {
  Tape tape;
  Var x = tape.variable(Tensor::row({2.0, -1.0}));
  Var y = ad::add(ad::mul(x, x), ad::scale(x, 3.0));
  tape.backward(ad::sum(y));
  const Tensor g = tape.grad(x);
  EXPECT_DOUBLE_EQ(g[0], 2 * 2.0 + 3.0);
  EXPECT_DOUBLE_EQ(g[1], 2 * -1.0 + 3.0);
}

TEST(Autodiff, BackwardIsLinearInTheLoss) {
  const Tensor xv = ht::random_tensor({2, 3}, 9);
  auto grad_of = [&](double k) {
    Tape tape;
    Var x = tape.variable(xv);
    tape.backward(ad::scale(ad::sum(ad::cos(ad::mul(x, x))), k));
    return tape.grad(x);
  };
  const Tensor g1 = grad_of(1.0);
  const Tensor g3 = grad_of(3.0);
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g3[i], 3.0 * g1[i], 1e-14);
}

TEST(Autodiff, BackwardIsDeterministic) {
  auto run = [] {
    Tape tape;
    Var a = tape.variable(ht::random_tensor({4, 4}, 1));
    Var b = tape.variable(ht::random_tensor({4, 4}, 2));
    Var s = ad::softmax_row(ad::matmul(a, b));
    tape.backward(ad::mean(ad::square(s)));
    return std::make_pair(tape.grad(a), tape.grad(b));
  };
  EXPECT_EQ(run(), run());
}

TEST(Autodiff, TapeRejectsReuseAfterBackward) {
  Tape tape;
  Var x = tape.variable(Tensor::scalar(1.0));
  tape.backward(ad::square(x));
  EXPECT_TRUE(tape.consumed());
  EXPECT_THROW(ad::square(x), std::logic_error);
}

TEST(Autodiff, BackwardRequiresScalarLoss) {
  Tape tape;
  Var x = tape.variable(Tensor::row({1.0, 2.0}));
  EXPECT_THROW(tape.backward(ad::square(x)), hiercas::DimensionError);
}

TEST(Autodiff, ParameterLeavesReferenceExternalStorage) {
  Tensor w = Tensor::row({1.0, 2.0});
  Tape tape;
  Var p = tape.parameter(w);
  EXPECT_EQ(&p.value(), &w);
  tape.backward(ad::sum(ad::square(p)));
  EXPECT_EQ(tape.grad(p), Tensor::row({2.0, 4.0}));
}

TEST(Autodiff, GatherOnLeafKeepsSparseRowGradients) {
  Tape tape;
  Var table = tape.variable(ht::random_tensor({100, 3}, 5));
  const std::size_t idx[] = {7, 42, 7};
  tape.backward(ad::sum(ad::gather_rows(table, idx)));
  const auto& lg = tape.leaf_grad(table);
  EXPECT_TRUE(lg.dense.empty());
  ASSERT_EQ(lg.rows.size(), 2u);
  EXPECT_EQ(lg.rows.at(7), (std::vector<double>{2.0, 2.0, 2.0}));
  EXPECT_EQ(lg.rows.at(42), (std::vector<double>{1.0, 1.0, 1.0}));
  const Tensor dense = tape.grad(table);
  EXPECT_EQ(std::accumulate(dense.data().begin(), dense.data().end(), 0.0), 9.0);
}

class OpGradient : public ::testing::TestWithParam<ht::OpCase> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  const ht::OpCase& c = GetParam();
  EXPECT_LT(ht::max_grad_error(c.fn, c.inputs), 1e-6) << c.name;
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::ValuesIn(ht::op_gradient_cases()),
                         [](const auto& info) { return info.param.name; });

}  // namespace
