#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mia/autodiff.hpp"
#include "mia/grad_check.hpp"
#include "mia/grad_suite.hpp"

using namespace mia;

TEST(Backward, SquareHasGradientSix) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(3.0));
  const Var loss = ad::sum(ad::hadamard(x, x));
  EXPECT_DOUBLE_EQ(tape.backward(loss).of(x)[0], 6.0);
}

TEST(Backward, SumOfSoftmaxHasZeroGradient) {
  Tape tape;
  const Var x = tape.leaf(Tensor::matrix({{0.3, -1.2, 2.0}, {5.0, 4.0, -3.0}}));
  const Gradients g = tape.backward(ad::sum(ad::softmax_rows(x)));
  for (double v : g.of(x).values()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Backward, ProductGradientIsOtherFactor) {
  Tape tape;
  const Tensor a_val = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor b_val = Tensor::matrix({{-1, 0.5}, {7, 2}});
  const Var a = tape.leaf(a_val), b = tape.leaf(b_val);
  const Gradients g = tape.backward(ad::sum(ad::hadamard(a, b)));
  EXPECT_EQ(g.of(a), b_val);
  EXPECT_EQ(g.of(b), a_val);
}

TEST(Backward, RejectsNonScalarLoss) {
  Tape tape;
  const Var x = tape.leaf(Tensor::row({1, 2}));
  EXPECT_THROW(tape.backward(ad::scale(x, 2.0)), ShapeError);
}

TEST(Backward, RejectsDetachedGraph) {
  Tape tape;
  const Var c = tape.constant(Tensor::row({1, 2}));
  EXPECT_THROW(tape.backward(ad::sum(c)), std::logic_error);
}

TEST(Backward, ConsumesTape) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(2.0));
  const Var loss = ad::sum(ad::hadamard(x, x));
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), std::logic_error);
}

TEST(Backward, RejectsLossFromAnotherTape) {
  Tape a, b;
  const Var x = a.leaf(Tensor::scalar(2.0));
  const Var loss = ad::sum(x);
  EXPECT_THROW(b.backward(loss), std::logic_error);
}

TEST(Backward, UnreachedLeafGetsZeros) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(2.0));
  const Var unused = tape.leaf(Tensor::row({1, 2, 3}));
  const Gradients g = tape.backward(ad::sum(x));
  EXPECT_EQ(g.of(unused), Tensor({1, 3}, 0.0));
}

TEST(Backward, FanOutAccumulates) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(1.5));
  const Var y = ad::add(ad::scale(x, 2.0), ad::hadamard(x, x));
  EXPECT_DOUBLE_EQ(tape.backward(ad::sum(y)).of(x)[0], 2.0 + 3.0);
}

TEST(Backward, BroadcastGradientsReduce) {
  Tape tape;
  const Var a = tape.leaf(Tensor({3, 2}, 1.0));
  const Var row = tape.leaf(Tensor::row({1, 2}));
  const Var col = tape.leaf(Tensor::matrix({{1}, {2}, {3}}));
  const Gradients g = tape.backward(ad::sum(ad::add(ad::add(a, row), col)));
  EXPECT_EQ(g.of(row), Tensor::row({3, 3}));
  EXPECT_EQ(g.of(col), Tensor::matrix({{2}, {2}, {2}}));
}

TEST(Backward, NonFiniteForwardIsAnError) {
  Tape tape;
  const Var x = tape.leaf(Tensor::row({1e308, 1e308}));
  EXPECT_THROW(ad::scale(x, 10.0), NumericError);
}

TEST(GradCheck, SquareIsAccurate) {
  const double err = grad_check(
      [](Tape&, const Var& x) { return ad::sum(ad::hadamard(x, x)); }, Tensor::scalar(3.0), 1e-6);
  EXPECT_LT(err, 1e-8);
}

TEST(GradCheck, ConstantFunctionHasZeroGradients) {
  const TapedFunction f = [](Tape& tape, std::span<const Var>) {
    return tape.constant(Tensor::scalar(4.0));
  };
  const GradCheckResult r = grad_check(f, {Tensor::row({1, 2, 3})});
  EXPECT_EQ(r.max_rel_error, 0.0);
  EXPECT_EQ(r.worst_analytic, 0.0);
  EXPECT_EQ(r.worst_numeric, 0.0);
}

TEST(GradCheck, RejectsNonPositiveStep) {
  const TapedFunction f = [](Tape&, std::span<const Var> v) { return ad::sum(v[0]); };
  GradCheckOptions o;
  o.step = 0.0;
  EXPECT_THROW(grad_check(f, {Tensor::scalar(1.0)}, o), std::invalid_argument);
}

TEST(GradCheck, NonFiniteFunctionIsAnError) {
  const TapedFunction f = [](Tape&, std::span<const Var> v) { return ad::sum(ad::scale(v[0], 1e300)); };
  EXPECT_THROW(grad_check(f, {Tensor::scalar(1e10)}), NumericError);
}

TEST(GradCheck, SamplingCoversEveryInput) {
  const TapedFunction f = [](Tape&, std::span<const Var> v) {
    return ad::add(ad::sum(v[0]), ad::sum(v[1]));
  };
  GradCheckOptions o;
  o.coords_per_input = 2;
  const auto r = grad_check(f, {Tensor({5, 5}, 1.0), Tensor({1, 1}, 2.0)}, o);
  EXPECT_EQ(r.coords_checked, 3u);
}

TEST(GradientSuite, EveryCheckPassesOverTenSeeds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GradSuiteOptions o;
    o.seed = seed;
    for (const auto& e : run_gradient_suite(o)) {
      EXPECT_TRUE(e.passed) << "seed " << seed << " " << e.name << " " << e.result.max_rel_error;
      EXPECT_GT(e.result.coords_checked, 0u);
    }
  }
}

TEST(GradientSuite, InjectedFaultIsDetected) {
  GradSuiteOptions o;
  o.inject_fault = true;
  bool silu_failed = false;
  for (const auto& e : run_gradient_suite(o)) {
    if (e.name == "silu") silu_failed = !e.passed;
    else EXPECT_TRUE(e.passed) << e.name;
  }
  EXPECT_TRUE(silu_failed);
}

TEST(GradientSuite, SeedChangesSampledPointsNotVerdict) {
  GradSuiteOptions a, b;
  a.seed = 1;
  b.seed = 2;
  const auto ra = run_gradient_suite(a), rb = run_gradient_suite(b);
  ASSERT_EQ(ra.size(), rb.size());
  bool differs = false;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    EXPECT_EQ(ra[i].passed, rb[i].passed);
    differs = differs || ra[i].result.max_rel_error != rb[i].result.max_rel_error;
  }
  EXPECT_TRUE(differs);
}
