#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "oracle/oracle.hpp"
#include "pkan/autodiff.hpp"
#include "support.hpp"

using namespace pkan;
using testing_support::close;
using testing_support::Gen;

namespace {

using UnaryOp = std::function<Var(const Var&)>;
using BinaryOp = std::function<Var(const Var&, const Var&)>;

// root = sum(f(x) * w) for fixed random w, so every output element matters.
void check_unary(const UnaryOp& f, const Tensor& x0, Gen& gen, double rel = 1e-5, double abs_floor = 1e-8) {
  const Tensor probe = f(Var::constant(x0)).value();
  const Tensor w = gen.tensor(probe.shape(), -1.0, 1.0);
  Var x(x0);
  backward(sum(f(x) * Var::constant(w)));
  const auto scalar = [&](const std::vector<double>& v) {
    return sum(f(Var::constant(Tensor(x0.shape(), v))) * Var::constant(w)).item();
  };
  const std::vector<double> values(x0.values().begin(), x0.values().end());
  const auto fd = oracle::fd_gradient(scalar, values, 1e-5);
  for (std::size_t i = 0; i < fd.size(); ++i) {
    EXPECT_TRUE(close(x.grad()[i], fd[i], rel, abs_floor)) << "element " << i << ": " << x.grad()[i] << " vs " << fd[i];
  }
}

void check_binary(const BinaryOp& f, const Tensor& a0, const Tensor& b0, Gen& gen) {
  const Tensor probe = f(Var::constant(a0), Var::constant(b0)).value();
  const Tensor w = gen.tensor(probe.shape(), -1.0, 1.0);
  Var a(a0);
  Var b(b0);
  backward(sum(f(a, b) * Var::constant(w)));
  const std::vector<double> av(a0.values().begin(), a0.values().end());
  const std::vector<double> bv(b0.values().begin(), b0.values().end());
  const auto fa = [&](const std::vector<double>& v) {
    return sum(f(Var::constant(Tensor(a0.shape(), v)), Var::constant(b0)) * Var::constant(w)).item();
  };
  const auto fb = [&](const std::vector<double>& v) {
    return sum(f(Var::constant(a0), Var::constant(Tensor(b0.shape(), v))) * Var::constant(w)).item();
  };
  const auto ga = oracle::fd_gradient(fa, av, 1e-5);
  const auto gb = oracle::fd_gradient(fb, bv, 1e-5);
  for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_TRUE(close(a.grad()[i], ga[i], 1e-5, 1e-8)) << "lhs " << i;
  for (std::size_t i = 0; i < gb.size(); ++i) EXPECT_TRUE(close(b.grad()[i], gb[i], 1e-5, 1e-8)) << "rhs " << i;
}

}  // namespace

TEST(Tensor, RejectsSizeMismatchAndNonFinite) {
  EXPECT_THROW(Tensor(Shape{2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  EXPECT_THROW(Tensor(Shape{2}, {1.0, NAN}), DomainError);
  EXPECT_THROW(Tensor(Shape{1}, {INFINITY}), DomainError);
  EXPECT_NO_THROW(Tensor::unchecked(Shape{1}, {NAN}));
}

TEST(Autodiff, SpecValues) {
  EXPECT_EQ(silu(Var::constant(0.0)).item(), 0.0);
  EXPECT_NEAR(softplus(Var::constant(0.0)).item(), std::log(2.0), 1e-15);
  Var x(Tensor::scalar(0.0));
  backward(softplus(x));
  EXPECT_NEAR(x.grad()[0], 0.5, 1e-15);
}

TEST(Autodiff, SumOfSquaresGradient) {
  Var x(Tensor::vector({1.0, 2.0, 3.0}));
  backward(sum(x * x));
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 4.0);
  EXPECT_EQ(x.grad()[2], 6.0);
}

TEST(Autodiff, MatmulWithIdentityGivesOnes) {
  Var a = Var::constant(Tensor(Shape{2, 2}, {1.0, 0.0, 0.0, 1.0}));
  Var b(Tensor(Shape{2, 3}, {1, 2, 3, 4, 5, 6}));
  backward(sum(matmul(a, b)));
  for (double g : b.grad().values()) EXPECT_NEAR(g, 1.0, 1e-15);
  Gen gen(3);
  check_binary([](const Var& p, const Var& q) { return matmul(p, q); }, gen.tensor({2, 2}, -1, 1),
               gen.tensor({2, 3}, -1, 1), gen);
}

TEST(Autodiff, ChainSiluSoftplusMatchesFiniteDifference) {
  Var x(Tensor::scalar(1.0));
  backward(silu(softplus(x)));
  const auto f = [](const std::vector<double>& v) { return silu(softplus(Var::constant(v[0]))).item(); };
  const double fd = oracle::fd_gradient(f, {1.0}, 1e-5)[0];
  EXPECT_TRUE(close(x.grad()[0], fd, 1e-6, 0.0)) << x.grad()[0] << " vs " << fd;
}

TEST(Autodiff, UnaryOpsMatchFiniteDifferences) {
  Gen gen(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor any = gen.tensor({3, 4}, -3.0, 3.0);
    const Tensor positive = gen.tensor({3, 4}, 0.2, 4.0);
    check_unary([](const Var& v) { return exp(v); }, any, gen);
    check_unary([](const Var& v) { return log(v); }, positive, gen);
    check_unary([](const Var& v) { return log1p(v); }, positive, gen);
    check_unary([](const Var& v) { return sqrt(v); }, positive, gen);
    check_unary([](const Var& v) { return square(v); }, any, gen);
    check_unary([](const Var& v) { return sin(v); }, any, gen);
    check_unary([](const Var& v) { return atan(v); }, any, gen);
    check_unary([](const Var& v) { return sigmoid(v); }, any, gen);
    check_unary([](const Var& v) { return silu(v); }, any, gen);
    check_unary([](const Var& v) { return softplus(v); }, any, gen);
    check_unary([](const Var& v) { return lgamma(v); }, positive, gen);
    check_unary([](const Var& v) { return -v; }, any, gen);
    check_unary([](const Var& v) { return sum(v); }, any, gen);
    check_unary([](const Var& v) { return mean(v); }, any, gen);
    check_unary([](const Var& v) { return sum_rows(v); }, any, gen);
    check_unary([](const Var& v) { return reshape(v, {2, 6}); }, any, gen);
    check_unary([](const Var& v) { return broadcast_to(reshape(v, {1, 12}), {2, 12}); }, any, gen);
  }
}

TEST(Autodiff, ClampGradientConvention) {
  Var x(Tensor::vector({-2.0, -1.0, 0.0, 1.0, 2.0}));
  backward(sum(clamp(x, -1.0, 1.0)));
  const std::vector<double> expect = {0.0, 1.0, 1.0, 1.0, 0.0};
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_EQ(x.grad()[i], expect[i]) << i;
  Gen gen(5);
  check_unary([](const Var& v) { return clamp(v, -1.0, 1.0); }, gen.tensor({8}, -0.99, 0.99), gen);
}

TEST(Autodiff, BinaryOpsWithBroadcastingMatchFiniteDifferences) {
  Gen gen(13);
  const std::vector<std::pair<Shape, Shape>> shapes = {
      {{3, 4}, {3, 4}}, {{3, 4}, {4}}, {{3, 1}, {1, 4}}, {{4}, {}}, {{2, 3, 4}, {3, 1}}};
  for (const auto& [sa, sb] : shapes) {
    const Tensor a = gen.tensor(sa, -2.0, 2.0);
    const Tensor b = gen.tensor(sb, 0.5, 2.0);
    check_binary([](const Var& p, const Var& q) { return p + q; }, a, b, gen);
    check_binary([](const Var& p, const Var& q) { return p - q; }, a, b, gen);
    check_binary([](const Var& p, const Var& q) { return p * q; }, a, b, gen);
    check_binary([](const Var& p, const Var& q) { return p / q; }, a, b, gen);
  }
}

TEST(Autodiff, ShapeErrorsNameBothShapes) {
  const Var a = Var::constant(Tensor::zeros({2, 3}));
  const Var b = Var::constant(Tensor::zeros({4}));
  try {
    (void)(a + b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_EQ(e.lhs_shape(), "[2, 3]");
    EXPECT_EQ(e.rhs_shape(), "[4]");
  }
  EXPECT_THROW(matmul(a, a), ShapeError);
}

TEST(Autodiff, DomainErrorsCarryOperandAndElement) {
  try {
    (void)log(Var::constant(Tensor::vector({1.0, -1.0})));
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_EQ(e.op(), "log");
    EXPECT_EQ(e.operand(), 0u);
    EXPECT_EQ(e.element(), 1u);
  }
  EXPECT_THROW(sqrt(Var::constant(-1.0)), DomainError);
  EXPECT_THROW(lgamma(Var::constant(0.0)), DomainError);
  try {
    (void)(Var::constant(1.0) / Var::constant(Tensor::vector({2.0, 0.0})));
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_EQ(e.operand(), 1u);
    EXPECT_EQ(e.element(), 1u);
  }
}

TEST(Autodiff, BackwardNeedsScalarRoot) {
  Var x(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(backward(x * 2.0), InvalidArgument);
  Var y(Tensor::vector({3.0}));
  EXPECT_NO_THROW(backward(y * 2.0));
}

TEST(Autodiff, RepeatedBackwardAccumulatesUntilZeroed) {
  Var x(Tensor::vector({1.0, -2.0}));
  const auto root = [&] { return sum(square(x)); };
  backward(root());
  backward(root());
  EXPECT_EQ(x.grad()[0], 4.0);
  EXPECT_EQ(x.grad()[1], -8.0);
  std::vector<Var> vars = {x};
  zero_gradients(vars);
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 0.0);
}

TEST(Autodiff, SharedNodeReceivesSumOfPaths) {
  Var x(Tensor::scalar(3.0));
  backward(mul(x, x));
  EXPECT_EQ(x.grad()[0], 6.0);
}

// Property: backward(f + g) equals backward(f) + backward(g) for independent subgraphs.
TEST(AutodiffProperty, LinearityOfAccumulation) {
  Gen gen(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a0 = gen.tensor({5}, -2.0, 2.0);
    const Tensor b0 = gen.tensor({5}, 0.1, 2.0);
    const auto f = [](const Var& a, const Var& b) { return sum(silu(a) * b); };
    const auto g = [](const Var& a, const Var& b) { return sum(log(b) + sin(a)); };

    Var a1(a0), b1(b0);
    backward(f(a1, b1) + g(a1, b1));

    Var a2(a0), b2(b0);
    backward(f(a2, b2));
    backward(g(a2, b2));

    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_TRUE(close(a1.grad()[i], a2.grad()[i], 1e-13, 1e-15));
      EXPECT_TRUE(close(b1.grad()[i], b2.grad()[i], 1e-13, 1e-15));
    }
  }
}

TEST(Autodiff, ConstantsReceiveNoGradientAndGraphIsPruned) {
  const Var c = Var::constant(Tensor::vector({1.0, 2.0}));
  const Var y = exp(c) * 2.0;
  EXPECT_FALSE(y.requires_grad());
  EXPECT_NO_THROW(backward(sum(y)));
}
