// vamce/tests/test_numerics.cpp
//
// Copyright 2026 The vamce authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "vamce/adam.hpp"
#include "vamce/gradcheck.hpp"
#include "vamce/matrix.hpp"
#include "vamce/rng.hpp"

namespace vamce {
namespace {

// Independent oracle: textbook triple loop, no blocking or reordering.
Matrix matmul_oracle(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  }
  return c;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, RngStream& stream,
                     double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = lo + (hi - lo) * stream.uniform();
  return m;
}

TEST(Matrix, ConstructionAndShape) {
  Matrix m(2, 3, 1.5);
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m.size(), 6u);
  EXPECT_DOUBLE_EQ(m(1, 2), 1.5);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1.0, 2.0, 3.0}), ShapeError);
  EXPECT_THROW(Matrix({{1.0, 2.0}, {3.0}}), ShapeError);
}

TEST(Matrix, ElementwiseDirectExamples) {
  const Matrix prod = multiply(Matrix{{1, 2}}, Matrix{{3, 4}});
  EXPECT_DOUBLE_EQ(prod(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(prod(0, 1), 8.0);
  const Matrix root = epow(Matrix{{4}}, 0.5);
  EXPECT_DOUBLE_EQ(root(0, 0), 2.0);
  EXPECT_THROW(divide(Matrix{{1}}, Matrix{{0}}), DomainError);
  EXPECT_THROW(divide(Matrix{{1}}, Matrix{{-2}}), DomainError);
  EXPECT_THROW(multiply(Matrix(2, 2), Matrix(2, 3)), ShapeError);
}

TEST(Matrix, ElementwiseScalarBroadcast) {
  const Matrix a{{2, 4}, {6, 8}};
  const Matrix halved = divide(a, Matrix(1, 1, 2.0));
  EXPECT_DOUBLE_EQ(halved(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(halved(1, 1), 4.0);
  const Matrix shifted = elementwise(ElementwiseOp::kAdd, a, 1.0);
  EXPECT_DOUBLE_EQ(shifted(0, 0), 3.0);
}

TEST(Matrix, ElementwisePowerGuardsNonFinite) {
  EXPECT_THROW(epow(Matrix{{-1.0}}, 0.5), DomainError);
}

TEST(Matrix, MatmulIdentityAndDirect) {
  RngStream stream(7, 0);
  const Matrix b = random_matrix(2, 5, stream);
  const Matrix ib = matmul(Matrix::identity(2), b);
  for (std::size_t i = 0; i < b.size(); ++i) {
    EXPECT_DOUBLE_EQ(ib.data()[i], b.data()[i]);
  }
  const Matrix v = matmul(Matrix{{1, 2}}, Matrix{{3}, {4}});
  EXPECT_EQ(v.rows(), 1u);
  EXPECT_EQ(v.cols(), 1u);
  EXPECT_DOUBLE_EQ(v(0, 0), 11.0);
}

TEST(Matrix, MatmulAgainstTripleLoopOracle) {
  RngStream stream(11, 0);
  const Matrix a = random_matrix(3, 4, stream);
  const Matrix b = random_matrix(4, 2, stream);
  const Matrix got = matmul(a, b);
  const Matrix want = matmul_oracle(a, b);
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_DOUBLE_EQ(got.data()[i], want.data()[i]);
  }
}

TEST(Matrix, MatmulTransposedVariantsMatchOracle) {
  RngStream stream(13, 0);
  const Matrix a = random_matrix(4, 3, stream);
  const Matrix b = random_matrix(5, 3, stream);
  const Matrix nt = matmul_nt(a, b);  // a (4x3) times b^T (3x5)
  const Matrix nt_want = matmul_oracle(a, transpose(b));
  ASSERT_TRUE(nt.same_shape(nt_want));
  for (std::size_t i = 0; i < nt.size(); ++i) {
    EXPECT_NEAR(nt.data()[i], nt_want.data()[i], 1e-14);
  }
  const Matrix c = random_matrix(3, 4, stream);
  const Matrix d = random_matrix(3, 2, stream);
  const Matrix tn = matmul_tn(c, d);  // c^T (4x3) times d (3x2)
  const Matrix tn_want = matmul_oracle(transpose(c), d);
  ASSERT_TRUE(tn.same_shape(tn_want));
  for (std::size_t i = 0; i < tn.size(); ++i) {
    EXPECT_NEAR(tn.data()[i], tn_want.data()[i], 1e-14);
  }
}

TEST(Matrix, MatmulAssociativity) {
  RngStream stream(17, 0);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix a = random_matrix(3, 4, stream);
    const Matrix b = random_matrix(4, 5, stream);
    const Matrix c = random_matrix(5, 2, stream);
    const Matrix left = matmul(matmul(a, b), c);
    const Matrix right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) {
      const double scale = std::max(1.0, std::abs(left.data()[i]));
      EXPECT_NEAR(left.data()[i], right.data()[i], 1e-10 * scale);
    }
  }
}

TEST(Matrix, ElementwiseCommutesWithTranspose) {
  RngStream stream(19, 0);
  const Matrix a = random_matrix(3, 4, stream, 0.5, 2.0);
  const Matrix b = random_matrix(3, 4, stream, 0.5, 2.0);
  for (ElementwiseOp op : {ElementwiseOp::kAdd, ElementwiseOp::kSubtract,
                           ElementwiseOp::kMultiply, ElementwiseOp::kDivide}) {
    const Matrix lhs = transpose(elementwise(op, a, b));
    const Matrix rhs = elementwise(op, transpose(a), transpose(b));
    ASSERT_TRUE(lhs.same_shape(rhs));
    for (std::size_t i = 0; i < lhs.size(); ++i) {
      EXPECT_DOUBLE_EQ(lhs.data()[i], rhs.data()[i]);
    }
  }
}

TEST(Matrix, Reductions) {
  const Matrix m{{1, -2}, {3, -4}};
  EXPECT_DOUBLE_EQ(sum(m), -2.0);
  EXPECT_DOUBLE_EQ(mean(m), -0.5);
  EXPECT_DOUBLE_EQ(max_abs(m), 4.0);
  EXPECT_TRUE(all_finite(m));
  Matrix f = m;
  floor_in_place(f, 0.0);
  EXPECT_DOUBLE_EQ(f(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(f(1, 0), 3.0);
}

TEST(RngStream, ReplayIsBitIdentical) {
  RngStream a(12345, 9);
  RngStream b(12345, 9);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(a.next_u64(), b.next_u64());
  }
  RngStream c(12345, 9);
  RngStream d = c;  // copied mid-state replays identically
  for (int i = 0; i < 10; ++i) c.normal();
  d = c;
  for (int i = 0; i < 100; ++i) {
    EXPECT_DOUBLE_EQ(c.normal(), d.normal());
  }
}

TEST(RngStream, UniformStaysInOpenUnitInterval) {
  RngStream stream(1, 2);
  for (int i = 0; i < 100000; ++i) {
    const double u = stream.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

// Mean bound is 5 sigma / sqrt(n) with sigma = 1; variance bound from the
// chi-square concentration of the sample variance.
TEST(RngStream, GaussianMomentBounds) {
  RngStream stream(42, 0);
  const std::vector<double> draws = sample_gaussian(stream, 100000);
  double m = 0.0;
  for (double v : draws) m += v;
  m /= static_cast<double>(draws.size());
  EXPECT_LT(std::abs(m), 0.02);
  double var = 0.0;
  for (double v : draws) var += (v - m) * (v - m);
  var /= static_cast<double>(draws.size() - 1);
  EXPECT_GT(var, 0.97);
  EXPECT_LT(var, 1.03);
}

TEST(RngStream, DisjointStreamsDecorrelated) {
  RngStream a(42, 100);
  RngStream b(42, 101);
  const std::size_t n = 100000;
  double sum_ab = 0.0, sum_a = 0.0, sum_b = 0.0, sum_a2 = 0.0, sum_b2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a.normal();
    const double y = b.normal();
    sum_ab += x * y;
    sum_a += x;
    sum_b += y;
    sum_a2 += x * x;
    sum_b2 += y * y;
  }
  const double nd = static_cast<double>(n);
  const double cov = sum_ab / nd - (sum_a / nd) * (sum_b / nd);
  const double var_a = sum_a2 / nd - (sum_a / nd) * (sum_a / nd);
  const double var_b = sum_b2 / nd - (sum_b / nd) * (sum_b / nd);
  EXPECT_LT(std::abs(cov / std::sqrt(var_a * var_b)), 0.02);
}

TEST(RngStream, ShuffleIsDeterministicPermutation) {
  std::vector<int> v1{0, 1, 2, 3, 4, 5, 6, 7};
  std::vector<int> v2 = v1;
  RngStream s1(5, 5), s2(5, 5);
  shuffle(v1, s1);
  shuffle(v2, s2);
  EXPECT_EQ(v1, v2);
  std::vector<int> sorted = v1;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7}));
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  AdamState state(3);
  std::vector<double> params{1.0, -2.0, 0.5};
  const std::vector<double> before = params;
  adam_step(state, params, {0.0, 0.0, 0.0});
  EXPECT_EQ(params, before);
  EXPECT_EQ(state.step_count, 1u);
}

// First step evaluated by hand: m = (1-b1) g, v = (1-b2) g^2, bias-corrected
// m_hat = g and v_hat = g^2, so dp = -alpha g / (|g| + eps).
TEST(Adam, FirstStepMatchesHandFormula) {
  AdamState state(2);
  std::vector<double> params{0.0, 10.0};
  const std::vector<double> grads{3.0, -0.25};
  adam_step(state, params, grads);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double expect = (i == 0 ? 0.0 : 10.0) -
                          state.step_size * grads[i] /
                              (std::abs(grads[i]) + state.epsilon);
    EXPECT_NEAR(params[i], expect, 1e-15);
  }
}

TEST(Adam, DeterministicAcrossIdenticalRuns) {
  AdamState s1(2), s2(2);
  std::vector<double> p1{1.0, 2.0}, p2{1.0, 2.0};
  RngStream stream(3, 3);
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> g{stream.normal(), stream.normal()};
    adam_step(s1, p1, g);
    adam_step(s2, p2, g);
  }
  EXPECT_EQ(p1, p2);
}

TEST(Adam, RejectsBadInput) {
  AdamState state(2);
  std::vector<double> params{1.0, 2.0};
  EXPECT_THROW(adam_step(state, params, {1.0}), ShapeError);
  EXPECT_THROW(adam_step(state, params,
                         {std::numeric_limits<double>::quiet_NaN(), 0.0}),
               NumericError);
}

TEST(FiniteDiff, MatchesAnalyticDerivatives) {
  const auto square = [](const std::vector<double>& x) { return x[0] * x[0]; };
  const std::vector<double> g = finite_diff_grad(square, {3.0}, 1e-5);
  EXPECT_NEAR(g[0], 6.0, 1e-8);

  const auto constant = [](const std::vector<double>&) { return 4.2; };
  for (double v : finite_diff_grad(constant, {1.0, 2.0, 3.0}, 1e-5)) {
    EXPECT_DOUBLE_EQ(v, 0.0);
  }

  const auto total = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  };
  for (double v : finite_diff_grad(total, {0.5, -1.5, 7.0}, 1e-5)) {
    EXPECT_NEAR(v, 1.0, 1e-10);
  }
}

// Cubic polynomial with known gradient, checked to 1e-6 relative.
TEST(FiniteDiff, PolynomialRelativeError) {
  const auto poly = [](const std::vector<double>& x) {
    return x[0] * x[0] * x[0] + 2.0 * x[0] * x[1] + 3.0 * x[1];
  };
  const std::vector<double> x{1.25, -0.75};
  const std::vector<double> g = finite_diff_grad(poly, x, 1e-5);
  const std::vector<double> want{3.0 * x[0] * x[0] + 2.0 * x[1],
                                 2.0 * x[0] + 3.0};
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_NEAR(g[i], want[i], 1e-6 * std::abs(want[i]));
  }
}

TEST(FiniteDiff, GuardsBadInput) {
  const auto square = [](const std::vector<double>& x) { return x[0] * x[0]; };
  EXPECT_THROW(finite_diff_grad(square, {1.0}, 0.0), DomainError);
  const auto bad = [](const std::vector<double>&) {
    return std::numeric_limits<double>::infinity();
  };
  EXPECT_THROW(finite_diff_grad(bad, {1.0}, 1e-5), NumericError);
}

}  // namespace
}  // namespace vamce
