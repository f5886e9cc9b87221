// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sparselab/errors.hpp"
#include "sparselab/grad_check.hpp"
#include "sparselab/numerics.hpp"
#include "sparselab/ops.hpp"

namespace sparselab {
namespace {

using testing::kNegInf;
using Mat = Tensor<double>;

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Mat(Shape{}), DimensionError);
  EXPECT_THROW(Mat({2, 0}), DimensionError);
  EXPECT_THROW(Mat({1, 1, 1, 1}), DimensionError);
  EXPECT_THROW(Mat({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(Tensor, FoldsLeadingExtentsIntoRows) {
  const Mat t({2, 3, 4});
  EXPECT_EQ(t.rows(), 6u);
  EXPECT_EQ(t.cols(), 4u);
  EXPECT_EQ(t.size(), 24u);
}

TEST(Tensor, WellFormedAllowsOnlyNegativeInfinity) {
  Mat t = Mat::matrix({{1, kNegInf}});
  EXPECT_TRUE(t.well_formed());
  t[0] = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(t.well_formed());
  t[0] = std::nan("");
  EXPECT_FALSE(t.well_formed());
}

TEST(Rng, SubstreamsAreReproducibleAndDistinct) {
  Rng a = Rng::substream(7, "params");
  Rng b = Rng::substream(7, "params");
  Rng c = Rng::substream(7, "data");
  const auto x = a.next();
  EXPECT_EQ(x, b.next());
  EXPECT_NE(x, c.next());
}

TEST(Rng, BelowStaysInRange) {
  Rng r(3);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(r.below(13), 13u);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Mat id = Mat::matrix({{1, 0}, {0, 1}});
  const Mat a = Mat::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(id, a), a);
}

TEST(Matmul, RowTimesColumn) {
  EXPECT_EQ(matmul(Mat::matrix({{1, 2}}), Mat::matrix({{3}, {4}})), Mat::matrix({{11}}));
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Mat({2, 3}), Mat({2, 3})), DimensionError);
  EXPECT_THROW(matmul_nt(Mat({2, 3}), Mat({2, 4})), DimensionError);
  EXPECT_THROW(matmul_tn(Mat({2, 3}), Mat({3, 4})), DimensionError);
}

TEST(Matmul, MatchesNaiveTripleLoopBitwise) {
  Rng rng(11);
  for (std::size_t m = 1; m <= 8; ++m) {
    for (std::size_t p = 1; p <= 8; p += 3) {
      for (std::size_t n = 1; n <= 8; n += 2) {
        const Mat a = testing::random_tensor({m, p}, rng);
        const Mat b = testing::random_tensor({p, n}, rng);
        const auto expect = testing::naive_matmul(testing::to_matrix(a), testing::to_matrix(b));
        const Mat c = matmul(a, b);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) ASSERT_EQ(c(i, j), expect[i][j]);
      }
    }
  }
}

TEST(Matmul, RandomFiveByFourTimesFourByThree) {
  Rng rng(5);
  const Mat a = testing::random_tensor({5, 4}, rng);
  const Mat b = testing::random_tensor({4, 3}, rng);
  EXPECT_EQ(matmul(a, b),
            testing::to_tensor(testing::naive_matmul(testing::to_matrix(a), testing::to_matrix(b))));
}

TEST(Matmul, TransposedVariantsMatchNaiveOracle) {
  Rng rng(8);
  const Mat a = testing::random_tensor({5, 4}, rng);
  const Mat b = testing::random_tensor({6, 4}, rng);
  const Mat c = testing::random_tensor({5, 3}, rng);
  const auto am = testing::to_matrix(a);
  EXPECT_EQ(matmul_nt(a, b), testing::to_tensor(testing::naive_matmul(
                                 am, testing::naive_transpose(testing::to_matrix(b)))));
  EXPECT_EQ(matmul_tn(a, c), testing::to_tensor(testing::naive_matmul(
                                 testing::naive_transpose(am), testing::to_matrix(c))));
}

TEST(Matmul, SparseLeftOperandGivesSameBits) {
  Rng rng(9);
  Mat a = testing::random_tensor({6, 7}, rng);
  for (std::size_t i = 0; i < a.size(); i += 2) a[i] = 0;
  const Mat b = testing::random_tensor({7, 5}, rng);
  EXPECT_EQ(matmul(a, b),
            testing::to_tensor(testing::naive_matmul(testing::to_matrix(a), testing::to_matrix(b))));
}

TEST(Softmax, SymmetricRowIsUniform) {
  EXPECT_EQ(softmax_rows(Mat::matrix({{0, 0}})), Mat::matrix({{0.5, 0.5}}));
}

TEST(Softmax, SingleFiniteEntryGetsAllMass) {
  EXPECT_EQ(softmax_rows(Mat::matrix({{kNegInf, 7}})), Mat::matrix({{0, 1}}));
}

TEST(Softmax, MatchesDirectFormula) {
  const Mat y = softmax_rows(Mat::matrix({{1, 2, 3}}));
  const auto expect = testing::direct_softmax({1, 2, 3});
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(y(0, j), expect[j], 1e-15);
}

TEST(Softmax, AllMaskedRowThrows) {
  EXPECT_THROW(softmax_rows(Mat::matrix({{1, 2}, {kNegInf, kNegInf}})), DegenerateRowError);
}

TEST(Softmax, RowsAreDistributionsAndShiftInvariant) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat x = testing::random_tensor({4, 7}, rng, -5, 5);
    const Mat y = softmax_rows(x);
    Mat shifted = x;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const double c = rng.uniform(-20, 20);
      for (double& v : shifted.row(i)) v += c;
    }
    const Mat ys = softmax_rows(shifted);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double total = 0;
      for (std::size_t j = 0; j < y.cols(); ++j) {
        EXPECT_GE(y(i, j), 0.0);
        EXPECT_LE(y(i, j), 1.0);
        EXPECT_NEAR(ys(i, j), y(i, j), 1e-12);
        total += y(i, j);
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Backward, SquareHasDerivativeSix) {
  Graph<double> g;
  const Var<double> x = g.leaf(Mat::vector({3}));
  const Var<double> y = ops::multiply(x, x);
  EXPECT_EQ(g.backward(y)[x][0], 6.0);
}

TEST(Backward, SumOfSoftmaxHasZeroGradient) {
  Rng rng(4);
  Graph<double> g;
  const Var<double> x = g.leaf(testing::random_tensor({3, 5}, rng));
  const auto grads = g.backward(ops::sum(ops::softmax_rows(x)));
  for (double v : grads[x].values()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Backward, FanOutGradientsAreSummed) {
  Graph<double> g;
  const Var<double> x = g.leaf(Mat::vector({2}));
  const Var<double> y = ops::add(ops::scale(x, 3.0), ops::multiply(x, x));
  EXPECT_EQ(g.backward(y)[x][0], 7.0);
}

TEST(Backward, ConstantsAndUnusedLeavesGetZero) {
  Graph<double> g;
  const Var<double> x = g.leaf(Mat::vector({2}));
  const Var<double> c = g.constant(Mat::vector({5}));
  const Var<double> unused = g.leaf(Mat::vector({1, 1}));
  const auto grads = g.backward(ops::multiply(x, c));
  EXPECT_EQ(grads[x][0], 5.0);
  EXPECT_EQ(grads[c][0], 0.0);
  EXPECT_EQ(grads[unused], Mat({2}));
}

TEST(Backward, NonScalarOutputIsContractError) {
  Graph<double> g;
  const Var<double> x = g.leaf(Mat::vector({1, 2}));
  EXPECT_THROW(g.backward(x), ContractError);
}

TEST(Backward, RandomCompositeMatchesFiniteDifferences) {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat w = testing::random_tensor({4, 3}, rng);
    const Mat b = testing::random_tensor({5, 3}, rng);
    const Mat r = testing::random_tensor({5, 3}, rng);
    const ScalarFn<double> f = [&](Graph<double>& g, Var<double> x) {
      const Var<double> h = ops::softmax_rows(ops::add(ops::matmul(x, g.constant(w)), g.constant(b)));
      return ops::sum(ops::multiply(h, g.constant(r)));
    };
    EXPECT_LE(grad_check(f, testing::random_tensor({5, 4}, rng), 1e-5), 1e-6);
  }
}

TEST(GradCheck, SumOfSquaresIsExactUpToRounding) {
  Rng rng(2);
  const ScalarFn<double> f = [](Graph<double>&, Var<double> x) {
    return ops::sum(ops::multiply(x, x));
  };
  EXPECT_LE(grad_check(f, testing::random_tensor({3, 4}, rng), 1e-5), 1e-8);
}

TEST(GradCheck, DetectsAWrongGradient) {
  // Identity forward whose backward claims a zero derivative.
  Rng rng(6);
  const ScalarFn<double> f = [](Graph<double>& g, Var<double> x) {
    const Var<double> bad = g.record(OpKind::scale, x.value(), {x.id}, [](const Mat& dy) {
      return std::vector<Mat>{Mat(dy.shape())};
    });
    return ops::sum(bad);
  };
  EXPECT_GT(grad_check(f, testing::random_tensor({2, 2}, rng, 0.5, 1.0), 1e-5), 0.5);
}

}  // namespace
}  // namespace sparselab
