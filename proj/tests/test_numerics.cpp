#include <gtest/gtest.h>

#include <cmath>

#include "boxprior/errors.hpp"
#include "boxprior/numerics/autodiff.hpp"
#include "boxprior/numerics/gradcheck.hpp"
#include "boxprior/numerics/losses.hpp"
#include "boxprior/numerics/ops.hpp"
#include "support/op_checks.hpp"
#include "support/oracles.hpp"

namespace num = boxprior::numerics;
using num::Matrix;
using num::Rng;

TEST(Matmul, MatchesTripleLoopForAllTailWidths) {
  Rng rng(1);
  for (std::size_t n = 1; n <= 9; ++n) {
    const Matrix a = oracle::random_matrix(rng, 5, 7);
    const Matrix b = oracle::random_matrix(rng, 7, n);
    const Matrix got = num::matmul(a, b);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double want = 0.0;
        for (std::size_t k = 0; k < 7; ++k) want += a(i, k) * b(k, j);
        EXPECT_NEAR(got(i, j), want, 1e-13);
      }
    }
  }
  EXPECT_THROW(num::matmul(Matrix(2, 3), Matrix(2, 3)), boxprior::ShapeError);
}

TEST(Matmul, TransposedVariantsAgree) {
  Rng rng(2);
  const Matrix a = oracle::random_matrix(rng, 4, 6);
  const Matrix b = oracle::random_matrix(rng, 5, 6);
  EXPECT_LT(num::max_abs_diff(num::matmul_transposed(a, b), num::matmul(a, num::transpose(b))),
            1e-13);
  const Matrix c = oracle::random_matrix(rng, 4, 3);
  EXPECT_LT(num::max_abs_diff(num::transposed_matmul(a, c), num::matmul(num::transpose(a), c)),
            1e-13);
}

TEST(Softmax, RowsAreStochasticAndShiftInvariant) {
  Rng rng(3);
  Matrix m = oracle::random_matrix(rng, 10, 5, 50.0);
  const Matrix s = num::softmax_rows(m);
  for (std::size_t i = 0; i < s.rows(); ++i) {
    double total = 0.0;
    for (double v : s.row(i)) total += v;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  for (double& v : m.data()) v += 1000.0;
  EXPECT_LT(num::max_abs_diff(num::softmax_rows(m), s), 1e-12);
}

TEST(Sigmoid, SaturatesWithoutOverflow) {
  EXPECT_EQ(num::sigmoid(-1000.0), 0.0);
  EXPECT_EQ(num::sigmoid(1000.0), 1.0);
  EXPECT_DOUBLE_EQ(num::sigmoid(0.0), 0.5);
}

TEST(Cosine, UsesEpsilonFloor) {
  const Matrix a = Matrix::from_rows({{1.0, 0.0}, {0.0, 0.0}, {3.0, 4.0}});
  const Matrix b = Matrix::from_rows({{2.0, 0.0}, {1.0, 1.0}, {-3.0, -4.0}});
  const auto s = num::cosine_similarity(a, b, 1e-8);
  EXPECT_DOUBLE_EQ(s[0], 1.0);
  EXPECT_EQ(s[1], 0.0);
  EXPECT_NEAR(s[2], -1.0, 1e-15);
}

TEST(Attention, MatchesNaiveOracle) {
  Rng rng(4);
  for (std::size_t heads : {1u, 2u, 4u}) {
    const auto params = num::init_attention(8, heads, rng);
    const Matrix q = oracle::random_matrix(rng, 7, 8);
    const Matrix v = oracle::random_matrix(rng, 7, 8);
    std::vector<double> k(7);
    for (double& x : k) x = rng.uniform(-1, 1);
    const Matrix got = num::multihead_attention(params, q, std::span<const double>(k), v);
    const Matrix want = oracle::attention(params.query, params.key, params.value, q, k, v);
    EXPECT_LT(num::max_abs_diff(got, want), 1e-13) << heads << " heads";
  }
}

TEST(Attention, SingleKeyPassesValueThroughHeads) {
  Rng rng(5);
  const auto params = num::init_attention(6, 2, rng);
  const Matrix q = oracle::random_matrix(rng, 1, 6);
  const Matrix v = oracle::random_matrix(rng, 1, 6);
  const std::array<double, 1> k{0.4};
  const Matrix got = num::multihead_attention(params, q, std::span<const double>(k), v);
  for (std::size_t h = 0; h < 2; ++h) {
    const Matrix head = num::matmul(v, params.value[h]);
    for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(got(0, h * 3 + a), head(0, a), 1e-14);
  }
}

TEST(Attention, ConstantKeysMeanPool) {
  Rng rng(6);
  const auto params = num::init_attention(4, 2, rng);
  const Matrix q = oracle::random_matrix(rng, 5, 4);
  const Matrix v = oracle::random_matrix(rng, 5, 4);
  const std::vector<double> k(5, 0.8);
  const Matrix got = num::multihead_attention(params, q, std::span<const double>(k), v);
  for (std::size_t h = 0; h < 2; ++h) {
    const Matrix head = num::matmul(v, params.value[h]);
    for (std::size_t a = 0; a < 2; ++a) {
      double mean = 0.0;
      for (std::size_t j = 0; j < 5; ++j) mean += head(j, a) / 5.0;
      for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(got(i, h * 2 + a), mean, 1e-14);
    }
  }
}

TEST(Attention, RejectsIndivisibleWidth) {
  Rng rng(7);
  EXPECT_THROW(num::init_attention(6, 4, rng), boxprior::ShapeError);
  auto params = num::init_attention(8, 2, rng);
  EXPECT_THROW(num::validate(params, 6), boxprior::ShapeError);
}

TEST(Mlp, ValidatesAdjacentWidths) {
  Rng rng(8);
  const std::array<std::size_t, 3> widths{3, 5, 2};
  auto mlp = num::init_mlp(widths, num::Activation::kRelu, num::Activation::kNone, rng);
  EXPECT_NO_THROW(num::validate(mlp));
  mlp.layers[1].weight = Matrix(4, 2);
  EXPECT_THROW(num::validate(mlp), boxprior::ShapeError);
}

TEST(Mlp, GlorotBoundsAndZeroBias) {
  Rng rng(9);
  const Matrix w = num::glorot_uniform(20, 30, rng);
  const double bound = std::sqrt(6.0 / 50.0);
  for (double v : w.data()) EXPECT_LE(std::abs(v), bound);
  const std::array<std::size_t, 2> widths{20, 30};
  const auto mlp = num::init_mlp(widths, num::Activation::kTanh, num::Activation::kTanh, rng);
  for (double v : mlp.layers[0].bias.data()) EXPECT_EQ(v, 0.0);
}

TEST(Tape, GradientsOfParameterizedOpsMatchCentralDifferences) {
  for (const auto& check : oracle::check_parameterized_ops(42, 1e-5)) {
    EXPECT_LT(check.report.max_relative_error(), 1e-6) << check.op;
    EXPECT_GT(check.report.coordinates, 0u) << check.op;
  }
}

TEST(Tape, StopGradientBlocksFlow) {
  num::Tape t;
  const num::Var a = t.parameter(Matrix::from_rows({{1.0, 2.0}}));
  const num::Var b = num::ad::stop_gradient(t, a);
  const num::Var out = num::ad::dot_constant(t, num::ad::add(t, a, b), Matrix::from_rows({{1.0, 1.0}}));
  t.backward(out);
  EXPECT_EQ(t.grad(a), Matrix::from_rows({{1.0, 1.0}}));
}

TEST(Tape, ConstantsCarryNoGradient) {
  num::Tape t;
  const num::Var c = t.constant(Matrix::from_rows({{3.0}}));
  const num::Var p = t.parameter(Matrix::from_rows({{2.0}}));
  t.backward(num::ad::hadamard(t, c, p));
  EXPECT_FALSE(t.requires_grad(c));
  EXPECT_EQ(t.grad(c), Matrix(1, 1));
  EXPECT_EQ(t.grad(p), Matrix::from_rows({{3.0}}));
}

TEST(GradCheck, RestoresTensorsBitExactly) {
  Rng rng(10);
  Matrix x = oracle::random_matrix(rng, 3, 4);
  const Matrix before = x;
  Matrix analytic = x;
  for (double& v : analytic.data()) v *= 2.0;
  const std::vector<num::CheckedTensor> tensors{{"x", &x, &analytic}};
  const auto report = num::grad_check(
      [&] {
        long double s = 0;
        for (double v : x.data()) s += static_cast<long double>(v) * v;
        return s;
      },
      tensors, 1e-5);
  EXPECT_EQ(x, before);
  EXPECT_LT(report.max_relative_error(), 1e-9);
  EXPECT_EQ(report.coordinates, 12u);
  EXPECT_THROW(num::grad_check([] { return 0.0L; }, tensors, 0.0), boxprior::InvalidArgument);
}

TEST(GradCheck, ReportsWrongGradient) {
  Matrix x = Matrix::from_rows({{1.0, 2.0}});
  const Matrix wrong = Matrix::from_rows({{2.0, 0.0}});
  const std::vector<num::CheckedTensor> tensors{{"x", &x, &wrong}};
  const auto report = num::grad_check(
      [&] { return static_cast<long double>(x[0] * x[0] + x[1] * x[1]); }, tensors, 1e-5);
  EXPECT_GT(report.max_relative_error(), 0.9);
  ASSERT_NE(report.worst(), nullptr);
  EXPECT_EQ(report.worst()->worst_index, 1u);
}

TEST(GradCheck, NonFiniteLossThrows) {
  Matrix x = Matrix::from_rows({{1.0}});
  const Matrix g = x;
  const std::vector<num::CheckedTensor> tensors{{"x", &x, &g}};
  EXPECT_THROW(num::grad_check([] { return std::numeric_limits<long double>::quiet_NaN(); },
                               tensors, 1e-5),
               boxprior::EvaluationError);
}
