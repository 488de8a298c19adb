#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "trajdiff/error.hpp"
#include "trajdiff/losses.hpp"

using namespace trajdiff;
namespace ad = trajdiff::ad;

namespace {

const Tensor kA = Tensor::vector({1.0, 2.0});
const Tensor kB = Tensor::vector({1.5, 1.0});

double eval(const std::function<ad::Var(ad::Tape&, const ad::Var&, const ad::Var&)>& f, const Tensor& a,
            const Tensor& b) {
  ad::Tape tape;
  return f(tape, tape.constant(a), tape.constant(b)).value().item();
}

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

const FeatureNet& feature_net() {
  static const FeatureNet f = FeatureNet::init(2, 1234);
  return f;
}

double perceptual(const Tensor& a, const Tensor& b) {
  ad::Tape tape;
  const Binding fb = bind(feature_net().params(), tape, false);
  return recon_perceptual(feature_net(), fb, tape.constant(a), tape.constant(b)).value().item();
}

double hybrid(const LossWeights& w, const Tensor& a, const Tensor& b) {
  ad::Tape tape;
  const Binding fb = bind(feature_net().params(), tape, false);
  return recon_hybrid(w, feature_net(), fb, tape.constant(a), tape.constant(b)).value().item();
}

double l1(const Tensor& a, const Tensor& b) {
  return eval([](ad::Tape&, const ad::Var& x, const ad::Var& y) { return recon_l1(x, y); }, a, b);
}
double l2(const Tensor& a, const Tensor& b) {
  return eval([](ad::Tape&, const ad::Var& x, const ad::Var& y) { return recon_l2(x, y); }, a, b);
}

}  // namespace

TEST(ReconL1, HandCases) {
  EXPECT_EQ(l1(kA, kA), 0.0);
  EXPECT_NEAR(l1(kA, kB), 0.75, 1e-15);
  const Tensor a3 = Tensor::vector({-3.0, -6.0}), b3 = Tensor::vector({-4.5, -3.0});
  EXPECT_NEAR(l1(a3, b3), 3.0 * 0.75, 1e-15);
}

TEST(ReconL2, HandCasesAndGradient) {
  EXPECT_EQ(l2(kA, kA), 0.0);
  EXPECT_NEAR(l2(kA, kB), 0.625, 1e-15);

  ad::Tape tape;
  const ad::Var pred = tape.leaf(kB);
  const Tensor g = ad::backward(recon_l2(tape.constant(kA), pred))[pred];
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(g[i], 2.0 * (kB[i] - kA[i]) / 2.0, 1e-15);
  const Tensor numeric = finite_diff_grad([](const Tensor& p) { return l2(kA, p); }, kB);
  EXPECT_LT(max_relative_error(g, numeric), 1e-4);
}

TEST(Recon, RejectsShapeMismatch) {
  const Tensor c = Tensor::vector({1.0, 2.0, 3.0});
  EXPECT_THROW(l1(kA, c), ShapeError);
  EXPECT_THROW(l2(kA, c), ShapeError);
  EXPECT_THROW(perceptual(Tensor::zeros({2, 2}), Tensor::zeros({3, 2})), ShapeError);
}

TEST(ReconPerceptual, IdentitySymmetryAndDegenerateNet) {
  Rng rng(1);
  const Tensor a = oracle::uniform_tensor({5, 2}, rng), b = oracle::uniform_tensor({5, 2}, rng);
  EXPECT_EQ(perceptual(a, a), 0.0);
  EXPECT_GT(perceptual(a, b), 0.0);
  EXPECT_EQ(perceptual(a, b), perceptual(b, a));

  // Independent evaluation: mean over rows and features of the squared feature difference.
  const Tensor fa = feature_net().features(a), fb = feature_net().features(b);
  double ss = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) ss += (fa[i] - fb[i]) * (fa[i] - fb[i]);
  EXPECT_NEAR(perceptual(a, b), ss / static_cast<double>(fa.size()), 1e-12);

  const FeatureNet zero = FeatureNet::zeros(2);
  ad::Tape tape;
  const Binding zb = bind(zero.params(), tape, false);
  EXPECT_EQ(recon_perceptual(zero, zb, tape.constant(a), tape.constant(b)).value().item(), 0.0);
}

TEST(ReconHybrid, WeightedSumOfComponents) {
  Rng rng(2);
  const Tensor a = oracle::uniform_tensor({4, 2}, rng), b = oracle::uniform_tensor({4, 2}, rng);
  EXPECT_EQ(hybrid({1, 0, 0, 0}, a, b), l1(a, b));
  EXPECT_EQ(hybrid({0, 1, 0, 0}, a, b), l2(a, b));
  EXPECT_EQ(hybrid({0, 0, 1, 0}, a, b), perceptual(a, b));
  EXPECT_NEAR(hybrid({0, 1, 1, 0}, a, b), l2(a, b) + perceptual(a, b), 1e-15);
  EXPECT_NEAR(hybrid({0.3, 2.0, 0.5, 0}, a, b), 0.3 * l1(a, b) + 2.0 * l2(a, b) + 0.5 * perceptual(a, b), 1e-14);
  EXPECT_NEAR(hybrid({0.6, 4.0, 1.0, 0}, a, b), 2.0 * hybrid({0.3, 2.0, 0.5, 0}, a, b), 1e-14);
  // The GAN weight plays no part in reconstruction.
  EXPECT_EQ(hybrid({0, 1, 1, 0.01}, a, b), hybrid({0, 1, 1, 0}, a, b));
  EXPECT_THROW(hybrid({0, 0, 0, 1}, a, b), ConfigError);
}

TEST(ReconHybrid, HandSum) {
  // With separately computed components 0.625 (L2) and 0.04 (perceptual) the hybrid is their sum.
  ad::Tape tape;
  const ad::Var r = tape.constant(Tensor::scalar(0.625)) + tape.constant(Tensor::scalar(0.04));
  EXPECT_NEAR(r.value().item(), 0.665, 1e-15);
}

TEST(Recon, NonNegativeAndZeroOnlyWhenEqual) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = oracle::uniform_tensor({3, 2}, rng), b = oracle::uniform_tensor({3, 2}, rng);
    EXPECT_GT(l1(a, b), 0.0);
    EXPECT_GT(l2(a, b), 0.0);
    EXPECT_GE(perceptual(a, b), 0.0);
  }
}

TEST(Recon, GradientsMatchFiniteDifferences) {
  Rng rng(4);
  const Tensor a = oracle::uniform_tensor({4, 2}, rng), b0 = oracle::uniform_tensor({4, 2}, rng);
  const LossWeights cases[] = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0.5, 1, 1, 0}};
  for (const auto& w : cases) {
    ad::Tape tape;
    const Binding fb = bind(feature_net().params(), tape, false);
    const ad::Var pred = tape.leaf(b0);
    const Tensor g = ad::backward(recon_hybrid(w, feature_net(), fb, tape.constant(a), pred))[pred];
    const Tensor numeric = finite_diff_grad([&](const Tensor& p) { return hybrid(w, a, p); }, b0);
    EXPECT_LT(max_relative_error(g, numeric), 1e-4) << w.l1 << "," << w.l2 << "," << w.lpips;
  }
}

TEST(Gan, ZeroLogits) {
  ad::Tape tape;
  const ad::Var zero = tape.constant(Tensor::zeros({6, 1}));
  EXPECT_NEAR(gan_generator_loss(zero).value().item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(gan_generator_loss(zero).value().item(), 0.69315, 1e-5);
  EXPECT_NEAR(gan_discriminator_loss(zero, zero).value().item(), 2.0 * std::log(2.0), 1e-15);
}

TEST(Gan, Limits) {
  ad::Tape tape;
  const double g = gan_generator_loss(tape.constant(Tensor::full({3, 1}, 50.0))).value().item();
  EXPECT_LT(g, 1e-20);
  EXPECT_GE(g, 0.0);
  const double d =
      gan_discriminator_loss(tape.constant(Tensor::full({3, 1}, 10.0)), tape.constant(Tensor::full({3, 1}, -10.0)))
          .value()
          .item();
  EXPECT_LT(d, 1e-4);
  EXPECT_NEAR(d, 2.0 * softplus(-10.0), 1e-15);
  // Very negative logits stay finite.
  const double big = gan_generator_loss(tape.constant(Tensor::full({1, 1}, -800.0))).value().item();
  EXPECT_NEAR(big, 800.0, 1e-9);
}

TEST(Gan, MatchesSoftplusOracleAndGradients) {
  Rng rng(5);
  const Tensor real = oracle::uniform_tensor({5, 1}, rng, -3, 3), fake = oracle::uniform_tensor({5, 1}, rng, -3, 3);
  double g = 0.0, d = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    g += softplus(-fake[i]) / 5.0;
    d += softplus(-real[i]) / 5.0 + softplus(fake[i]) / 5.0;
  }
  ad::Tape tape;
  EXPECT_NEAR(gan_generator_loss(tape.constant(fake)).value().item(), g, 1e-14);
  EXPECT_NEAR(gan_discriminator_loss(tape.constant(real), tape.constant(fake)).value().item(), d, 1e-14);

  EXPECT_LT(oracle::grad_check([](const ad::Var& x) { return gan_generator_loss(x); }, fake), 1e-4);
  EXPECT_LT(oracle::grad_check(
                [&](const ad::Var& x) { return gan_discriminator_loss(x, x.tape()->constant(fake)); }, real),
            1e-4);
  EXPECT_LT(oracle::grad_check(
                [&](const ad::Var& x) { return gan_discriminator_loss(x.tape()->constant(real), x); }, fake),
            1e-4);
}

TEST(TotalLoss, CombinesWithLambda) {
  ad::Tape tape;
  const ad::Var recon = tape.constant(Tensor::scalar(0.5));
  const ad::Var gan = tape.constant(Tensor::scalar(0.7));
  LossWeights w;
  w.gan = 0.01;
  EXPECT_NEAR(total_loss(w, recon, gan).value().item(), 0.507, 1e-15);
  w.gan = 0.0;
  const ad::Var same = total_loss(w, recon, gan);
  EXPECT_EQ(same.id(), recon.id());
  EXPECT_EQ(same.value().item(), 0.5);
}

TEST(TotalLoss, GradientSplits) {
  Rng rng(6);
  const Tensor a = oracle::uniform_tensor({4, 2}, rng), p0 = oracle::uniform_tensor({4, 2}, rng);
  const Tensor v = oracle::uniform_tensor({2, 1}, rng);
  const double lambda = 0.01;
  auto grads = [&](int which) {
    ad::Tape tape;
    const ad::Var p = tape.leaf(p0);
    const ad::Var recon = recon_l2(tape.constant(a), p);
    const ad::Var gan = gan_generator_loss(ad::matmul(p, tape.constant(v)));
    LossWeights w;
    w.gan = lambda;
    const ad::Var out = which == 0 ? total_loss(w, recon, gan) : which == 1 ? recon : gan;
    return ad::backward(out)[p];
  };
  const Tensor gt = grads(0), gr = grads(1), gg = grads(2);
  for (std::size_t i = 0; i < gt.size(); ++i) EXPECT_NEAR(gt[i], gr[i] + lambda * gg[i], 1e-12);
}

TEST(LossWeights, PresetsAndValidation) {
  EXPECT_EQ(loss_preset("l1"), (LossWeights{1, 0, 0, 0}));
  EXPECT_EQ(loss_preset("l2"), (LossWeights{0, 1, 0, 0}));
  EXPECT_EQ(loss_preset("lpips"), (LossWeights{0, 0, 1, 0}));
  EXPECT_EQ(loss_preset("l2+lpips"), (LossWeights{0, 1, 1, 0}));
  EXPECT_EQ(loss_preset("l2+lpips+gan"), (LossWeights{0, 1, 1, 0.01}));
  EXPECT_EQ(loss_preset_names().size(), 5u);
  EXPECT_THROW(loss_preset("hinge"), ConfigError);
  EXPECT_THROW((LossWeights{-1, 1, 0, 0}.validate()), ConfigError);
  EXPECT_THROW((LossWeights{0, std::numeric_limits<double>::infinity(), 0, 0}.validate()), ConfigError);
  EXPECT_NO_THROW((LossWeights{0, 1, 0, 0}.validate()));
}
