#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "trajdiff/error.hpp"
#include "trajdiff/finite_diff.hpp"
#include "trajdiff/tape.hpp"

using namespace trajdiff;
namespace ad = trajdiff::ad;

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.at(1, 0), 3.0);
}

TEST(Ops, MatmulHandProduct) {
  ad::Tape tape;
  const auto a = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  const auto b = tape.constant(Tensor::matrix({{1}, {1}}));
  EXPECT_EQ(ad::matmul(a, b).value(), Tensor::matrix({{3}, {7}}));
}

TEST(Ops, AddZerosIsIdentity) {
  ad::Tape tape;
  const Tensor x = Tensor::matrix({{1.5, -2}, {0.25, 7}});
  const auto y = ad::add(tape.constant(x), tape.constant(Tensor::zeros_like(x)));
  EXPECT_EQ(y.value(), x);
}

TEST(Ops, MeanHandArithmetic) {
  ad::Tape tape;
  EXPECT_DOUBLE_EQ(ad::mean(tape.constant(Tensor::vector({1, 2, 3, 6}))).value().item(), 3.0);
}

TEST(Ops, ShapeMismatchNamesShapes) {
  ad::Tape tape;
  const auto a = tape.constant(Tensor({2, 3}));
  const auto b = tape.constant(Tensor({3, 2}));
  try {
    ad::add(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3,2]"), std::string::npos) << msg;
  }
  EXPECT_THROW(ad::matmul(a, a), ShapeError);
}

TEST(Ops, BroadcastRules) {
  EXPECT_TRUE(ad::broadcastable({1}, {4, 3}));
  EXPECT_TRUE(ad::broadcastable({3}, {4, 3}));
  EXPECT_TRUE(ad::broadcastable({1, 3}, {4, 3}));
  EXPECT_FALSE(ad::broadcastable({4}, {4, 3}));
  EXPECT_FALSE(ad::broadcastable({4, 1}, {4, 3}));
}

TEST(Ops, DomainErrors) {
  ad::Tape tape;
  EXPECT_THROW(ad::sqrt(tape.constant(Tensor::vector({1.0, -0.5}))), DomainError);
  EXPECT_THROW(ad::log(tape.constant(Tensor::vector({0.0}))), DomainError);
  EXPECT_THROW(ad::log(tape.constant(Tensor::vector({-1.0}))), DomainError);
}

TEST(Backward, SquareAtThree) {
  ad::Tape tape;
  const auto x = tape.leaf(Tensor::scalar(3.0));
  EXPECT_DOUBLE_EQ(ad::backward(x * x)[x].item(), 6.0);
}

TEST(Backward, SumGivesOnes) {
  ad::Tape tape;
  const auto x = tape.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(ad::backward(ad::sum(x))[x], Tensor::ones({2, 3}));
}

TEST(Backward, MatmulHandJacobian) {
  ad::Tape tape;
  const auto w = tape.leaf(Tensor::matrix({{0.3, -1}, {2, 0.5}}));
  const auto v = tape.constant(Tensor::matrix({{1}, {2}}));
  EXPECT_EQ(ad::backward(ad::sum(ad::matmul(w, v)))[w], Tensor::matrix({{1, 2}, {1, 2}}));
}

TEST(Backward, RejectsNonScalar) {
  ad::Tape tape;
  const auto x = tape.leaf(Tensor({2}));
  EXPECT_THROW(ad::backward(x), ShapeError);
}

TEST(Backward, UnreachedLeafIsZero) {
  ad::Tape tape;
  const auto x = tape.leaf(Tensor::vector({1, 2}));
  const auto y = tape.leaf(Tensor::matrix({{1, 2}, {3, 4}}));
  const auto g = ad::backward(ad::sum(ad::square(x)));
  EXPECT_FALSE(g.reached(y.id()));
  EXPECT_EQ(g[y], Tensor::zeros({2, 2}));
}

TEST(FiniteDiff, ScalarExamples) {
  const auto sq = [](const Tensor& x) { return x.item() * x.item(); };
  EXPECT_NEAR(finite_diff_grad(sq, Tensor::scalar(3.0), 1e-5).item(), 6.0, 1e-8);
  const auto ex = [](const Tensor& x) { return std::exp(x.item()); };
  EXPECT_NEAR(finite_diff_grad(ex, Tensor::scalar(0.0), 1e-5).item(), 1.0, 1e-8);
}

namespace {

struct OpCase {
  const char* name;
  Shape shape;
  oracle::LeafFn fn;
  bool positive = false;  // input domain restricted to (0.1, 2.1]
};

// Each op is followed by a weighted sum with fixed, non-uniform weights so the
// upstream gradient is not all ones.
ad::Var weighted(const ad::Var& y) {
  Tensor w(y.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.5 + 0.37 * static_cast<double>(i % 5) - 0.2 * (i % 2);
  return ad::sum(ad::mul(y, y.tape()->constant(w)));
}

std::vector<OpCase> op_cases() {
  const Tensor b23 = Tensor::matrix({{0.4, -1.3, 0.8}, {1.1, 0.2, -0.6}});
  return {
      {"add", {2, 3}, [b23](const ad::Var& x) { return weighted(x + x.tape()->constant(b23)); }},
      {"add_self", {2, 3}, [](const ad::Var& x) { return weighted(x + ad::tanh(x)); }},
      {"add_bias_row", {3}, [b23](const ad::Var& x) { return weighted(x.tape()->constant(b23) + x); }},
      {"add_scalar_bcast", {1}, [b23](const ad::Var& x) { return weighted(x.tape()->constant(b23) + x); }},
      {"sub", {2, 3}, [b23](const ad::Var& x) { return weighted(x.tape()->constant(b23) - x * x); }},
      {"sub_bias_row", {3}, [b23](const ad::Var& x) { return weighted(x.tape()->constant(b23) - x); }},
      {"mul", {2, 3}, [b23](const ad::Var& x) { return weighted(x * x.tape()->constant(b23)); }},
      {"mul_self", {2, 3}, [](const ad::Var& x) { return weighted(x * x); }},
      {"mul_bias_row", {3}, [b23](const ad::Var& x) { return weighted(x.tape()->constant(b23) * x); }},
      {"scale", {2, 3}, [](const ad::Var& x) { return weighted(-1.7 * x); }},
      {"add_scalar", {2, 3}, [](const ad::Var& x) { return weighted(ad::square(ad::add_scalar(x, 0.3))); }},
      {"matmul_left", {2, 3}, [](const ad::Var& x) {
         return weighted(ad::matmul(x, x.tape()->constant(Tensor::matrix({{1, -2}, {0.5, 3}, {-1, 0.25}}))));
       }},
      {"matmul_right", {3, 2}, [b23](const ad::Var& x) { return weighted(ad::matmul(x.tape()->constant(b23), x)); }},
      {"matmul_gram", {3, 3}, [](const ad::Var& x) { return weighted(ad::matmul(x, x)); }},
      {"concat_axis0", {2, 3}, [b23](const ad::Var& x) {
         const std::vector<ad::Var> parts = {x, x.tape()->constant(b23), ad::square(x)};
         return weighted(ad::concat(parts, 0));
       }},
      {"concat_axis1", {2, 3}, [b23](const ad::Var& x) {
         const std::vector<ad::Var> parts = {x.tape()->constant(b23), ad::exp(x)};
         return weighted(ad::concat(parts, 1));
       }},
      {"slice_axis0", {4, 3}, [](const ad::Var& x) { return weighted(ad::slice(x, 0, 1, 3)); }},
      {"slice_axis1", {2, 5}, [](const ad::Var& x) { return weighted(ad::square(ad::slice(x, 1, 2, 5))); }},
      {"sum", {2, 3}, [](const ad::Var& x) { return ad::sum(ad::square(x)); }},
      {"mean", {2, 3}, [](const ad::Var& x) { return ad::mean(ad::exp(x)); }},
      {"abs", {2, 3}, [](const ad::Var& x) { return weighted(ad::abs(x)); }},
      {"square", {2, 3}, [](const ad::Var& x) { return weighted(ad::square(x)); }},
      {"sqrt", {2, 3}, [](const ad::Var& x) { return weighted(ad::sqrt(x)); }, true},
      {"exp", {2, 3}, [](const ad::Var& x) { return weighted(ad::exp(x)); }},
      {"log", {2, 3}, [](const ad::Var& x) { return weighted(ad::log(x)); }, true},
      {"tanh", {2, 3}, [](const ad::Var& x) { return weighted(ad::tanh(x)); }},
      {"leaky_relu", {2, 3}, [](const ad::Var& x) { return weighted(ad::leaky_relu(x, 0.2)); }},
      {"relu", {2, 3}, [](const ad::Var& x) { return weighted(ad::relu(x)); }},
      {"sigmoid", {2, 3}, [](const ad::Var& x) { return weighted(ad::sigmoid(x)); }},
      {"softplus", {2, 3}, [](const ad::Var& x) { return weighted(ad::softplus(x)); }},
      {"broadcast_row", {3}, [](const ad::Var& x) { return weighted(ad::broadcast_to(x, {4, 3})); }},
      {"broadcast_scalar", {1}, [](const ad::Var& x) { return weighted(ad::broadcast_to(x, {2, 3})); }},
  };
}

}  // namespace

TEST(GradCheck, EveryOpOnTwentyRandomTensors) {
  Rng rng(2024);
  for (const auto& c : op_cases()) {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      Tensor x = c.positive ? oracle::uniform_tensor(c.shape, rng, 0.1, 2.1) : oracle::uniform_tensor(c.shape, rng);
      // Keep kinks of abs/relu away from the finite-difference stencil.
      if (!c.positive) {
        for (auto& v : x.data()) {
          if (std::abs(v) < 1e-3) v = 0.5;
        }
      }
      worst = std::max(worst, oracle::grad_check(c.fn, x));
    }
    EXPECT_LT(worst, 1e-4) << c.name;
  }
}

TEST(GradCheck, Linearity) {
  Rng rng(7);
  const Tensor x0 = oracle::uniform_tensor({3, 2}, rng);
  const double a = 0.7, b = -2.3;
  auto f = [](const ad::Var& x) { return ad::sum(ad::tanh(x) * x); };
  auto g = [](const ad::Var& x) { return ad::mean(ad::exp(x)); };

  ad::Tape t1;
  const auto x1 = t1.leaf(x0);
  const Tensor gf = ad::backward(f(x1))[x1];
  ad::Tape t2;
  const auto x2 = t2.leaf(x0);
  const Tensor gg = ad::backward(g(x2))[x2];
  ad::Tape t3;
  const auto x3 = t3.leaf(x0);
  const Tensor gc = ad::backward(a * f(x3) + b * g(x3))[x3];
  for (std::size_t i = 0; i < gc.size(); ++i) EXPECT_NEAR(gc[i], a * gf[i] + b * gg[i], 1e-12);
}

TEST(GradCheck, BackwardTwiceIsBitIdentical) {
  Rng rng(11);
  ad::Tape tape;
  const auto w = tape.leaf(oracle::uniform_tensor({3, 3}, rng));
  const auto x = tape.constant(oracle::uniform_tensor({4, 3}, rng));
  const auto out = ad::mean(ad::square(ad::tanh(ad::matmul(x, w))));
  const Tensor g1 = ad::backward(out)[w];
  const Tensor g2 = ad::backward(out)[w];
  EXPECT_EQ(g1, g2);
}

TEST(Tape, IdsAreTopological) {
  ad::Tape tape;
  const auto x = tape.leaf(Tensor::vector({1, 2}));
  const auto y = ad::sum(ad::square(x) + ad::exp(x));
  for (ad::NodeId id = 0; id <= y.id(); ++id) {
    for (auto in : tape.inputs(id)) EXPECT_LT(in, id);
  }
}
