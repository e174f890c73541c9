#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "distana/autodiff.hpp"
#include "distana/rng.hpp"

using namespace distana;
using namespace distana::ad;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

}  // namespace

TEST(Linear, IdentityZeroAndHandExample) {
  Tape tape;
  auto x = tape.constant(Tensor::vector({1, 2, 3}));
  EXPECT_EQ(linear(tape.constant(Tensor::identity(3)), x).value(), Tensor::vector({1, 2, 3}));
  EXPECT_EQ(linear(tape.constant(Tensor::zeros({2, 3})), x).value(), Tensor::vector({0, 0}));
  auto w = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  EXPECT_EQ(linear(w, tape.constant(Tensor::vector({1, 1}))).value(), Tensor::vector({3, 7}));
}

TEST(Linear, ShapeMismatchIsDimensionError) {
  Tape tape;
  auto w = tape.constant(Tensor::zeros({2, 3}));
  EXPECT_THROW(linear(w, tape.constant(Tensor::vector({1, 2}))), DimensionError);
}

TEST(Elementwise, Examples) {
  Tape tape;
  EXPECT_DOUBLE_EQ(sigmoid(tape.constant(Tensor::scalar(0))).value().item(), 0.5);
  EXPECT_DOUBLE_EQ(tanh(tape.constant(Tensor::scalar(0))).value().item(), 0.0);
  EXPECT_EQ(hadamard(tape.constant(Tensor::vector({2, 3})), tape.constant(Tensor::vector({4, 5}))).value(),
            Tensor::vector({8, 15}));
}

TEST(Mse, Examples) {
  Tape tape;
  auto a = tape.constant(Tensor::vector({1, 3}));
  EXPECT_DOUBLE_EQ(mse(a, a).value().item(), 0.0);
  EXPECT_DOUBLE_EQ(mse(tape.constant(Tensor::vector({1, 1})), tape.constant(Tensor::vector({0, 0}))).value().item(), 1.0);
  EXPECT_DOUBLE_EQ(mse(a, tape.constant(Tensor::vector({0, 1}))).value().item(), 2.5);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tape tape;
  auto x = tape.variable(Tensor::vector({1, 2}));
  EXPECT_THROW(backward(tanh(x)), ContractError);
}

TEST(Backward, NonFiniteForwardIsNumericError) {
  Tape tape;
  auto x = tape.variable(Tensor::vector({1e308, 1e308}));
  EXPECT_THROW(scale(x, 10.0), NumericError);
}

TEST(Backward, UnusedParameterGradientIsExactlyZero) {
  Tape tape;
  auto x = tape.variable(Tensor::vector({1, 2}));
  auto unused = tape.variable(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  GradientMap g = backward(sum(tanh(x)));
  EXPECT_FALSE(g.reached(unused));
  EXPECT_EQ(g[unused], Tensor::zeros({2, 2}));
  EXPECT_EQ(g[x].shape(), x.value().shape());
}

TEST(GradCheck, Square) {
  auto f = [](Tape&, std::span<const Var> p) { return sum(hadamard(p[0], p[0])); };
  EXPECT_LT(grad_check(f, {Tensor::scalar(3.0)}, 1e-5), 1e-9);
  Tape tape;
  auto x = tape.variable(Tensor::scalar(3.0));
  EXPECT_NEAR(backward(hadamard(x, x))[x].item(), 6.0, 1e-15);
}

TEST(GradCheck, ConstantFunctionHasZeroGradient) {
  auto f = [](Tape& tape, std::span<const Var>) { return tape.constant(Tensor::scalar(4.0)); };
  EXPECT_EQ(grad_check(f, {Tensor::vector({1, 2})}, 1e-5), 0.0);
}

// Every op against central differences over many random small problems.
TEST(GradCheck, EveryOpOverRandomSeeds) {
  auto table = std::make_shared<GatherTable>();
  table->slots = 2;
  table->index = {1, -1, 2, 0, -1, -1};  // 3 output rows from 3 input rows
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 120; ++seed) {
    Rng rng = make_rng(seed, "autodiff-test");
    std::vector<Tensor> params = {random_tensor({3, 2}, rng), random_tensor({3, 4}, rng),
                                  random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)};
    const Tensor target = random_tensor({3, 3}, rng);
    auto f = [&](Tape& tape, std::span<const Var> p) {
      Var x = concat(p[0], columns(p[1], 1, 2));      // [3 x 4]
      Var y = linear(p[3], tanh(hadamard(x, p[2])));  // [3 x 3]
      Var g = gather_rows(columns(y, 0, 1), table);    // [3 x 2]
      Var z = sigmoid(y) - concat(scale(g, 0.7), columns(y, 2, 1));
      return sum(z) + mse(z, tape.constant(target)) + scale(sum(p[1]), 0.3);
    };
    worst = std::max(worst, grad_check(f, params, 1e-5));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Backward, LinearityOverLossSum) {
  Tape tape;
  auto w = tape.variable(Tensor::matrix(2, 2, {0.1, -0.4, 0.7, 0.2}));
  auto x = tape.constant(Tensor::matrix(3, 2, {1, 2, -1, 0.5, 0.3, -0.2}));
  Var l1 = sum(tanh(linear(w, x)));
  Var l2 = mse(sigmoid(linear(w, x)), tape.constant(Tensor::zeros({3, 2})));
  Tensor g1 = backward(l1)[w], g2 = backward(l2)[w], g12 = backward(l1 + l2)[w];
  for (std::size_t i = 0; i < g12.size(); ++i) EXPECT_NEAR(g12[i], g1[i] + g2[i], 1e-15);
}

TEST(Backward, ReplayIsBitIdentical) {
  Tape tape;
  auto w = tape.variable(Tensor::matrix(2, 3, {0.1, -0.4, 0.7, 0.2, 0.9, -0.3}));
  auto x = tape.constant(Tensor::matrix(2, 3, {1, 2, 3, -1, 0.5, 0.25}));
  Var loss = sum(tanh(linear(w, x)));
  EXPECT_EQ(backward(loss)[w], backward(loss)[w]);
}
