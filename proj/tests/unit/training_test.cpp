#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "trajdiff/dataset.hpp"
#include "trajdiff/error.hpp"
#include "trajdiff/training.hpp"

using namespace trajdiff;
namespace ad = trajdiff::ad;

namespace {

ParamStore scalar_store(double v) {
  ParamStore p;
  p.add("w", Tensor::vector({v}));
  return p;
}

DenoiserSpec net_spec(PredictionMode mode, std::size_t hidden = 16, int total_steps = 1000) {
  DenoiserSpec s;
  s.data_dim = 2;
  s.hidden = hidden;
  s.layers = 2;
  s.time_dim = 8;
  s.cond_dim = 4;
  s.num_labels = 4;
  s.total_steps = total_steps;
  s.prediction = mode;
  return s;
}

struct Batch {
  Tensor x;
  std::vector<int> labels;
};

Batch ring_batch(const Dataset& d, std::size_t rows, Rng& rng) {
  Batch b{Tensor({rows, d.spec.dim}), std::vector<int>(rows)};
  for (std::size_t r = 0; r < rows; ++r) {
    const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(d.spec.n) - 1));
    for (std::size_t c = 0; c < d.spec.dim; ++c) b.x.at(r, c) = d.samples.at(i, c);
    b.labels[r] = d.labels[i];
  }
  return b;
}

const Dataset& ring() {
  static const Dataset d = [] {
    DatasetSpec spec;
    spec.n = 2000;
    spec.components = 4;
    return gen_dataset(spec, 3);
  }();
  return d;
}

TrainConfig stepwise_cfg() {
  TrainConfig c;
  c.mode = TrainMode::kStepwise;
  c.loss = {0, 1, 0, 0};
  return c;
}

TrainConfig e2e_cfg(int nfe) {
  TrainConfig c;
  c.mode = TrainMode::kE2E;
  c.nfe = nfe;
  c.loss = {0, 1, 0, 0};
  return c;
}

}  // namespace

TEST(Ema, HandCases) {
  EXPECT_EQ(ema_update(scalar_store(1.0), scalar_store(0.0), 0.95)[0][0], 0.95);
  EXPECT_EQ(ema_update(scalar_store(3.0), scalar_store(-2.0), 0.0)[0][0], -2.0);
  EXPECT_EQ(ema_update(scalar_store(3.0), scalar_store(-2.0), 1.0)[0][0], 3.0);
  EXPECT_NEAR(ema_update(scalar_store(3.0), scalar_store(-2.0), 0.25)[0][0], 0.25 * 3.0 + 0.75 * -2.0, 1e-15);
}

TEST(Ema, Rejects) {
  ParamStore two;
  two.add("w", Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(ema_update(scalar_store(1.0), two, 0.5), ShapeError);
  EXPECT_THROW(ema_update(scalar_store(1.0), scalar_store(0.0), 1.5), DomainError);
}

TEST(Adam, MatchesHandComputedSteps) {
  AdamHParams hp;
  hp.lr = 0.1;
  hp.weight_decay = 0.01;
  ParamStore p = scalar_store(2.0);
  AdamState st = AdamState::zeros_like(p);
  double w = 2.0, m = 0.0, v = 0.0;
  const double grads[] = {0.5, -1.5, 0.25};
  for (int k = 0; k < 3; ++k) {
    const double g = grads[k];
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, k + 1));
    const double vh = v / (1 - std::pow(0.999, k + 1));
    w -= 0.1 * (mh / (std::sqrt(vh) + 1e-8) + 0.01 * w);
    optimizer_step(st, p, {Tensor::vector({g})}, hp);
    EXPECT_NEAR(p[0][0], w, 1e-15);
  }
  EXPECT_EQ(st.step, 3u);
}

TEST(Adam, ZeroGradientAndSign) {
  AdamHParams hp;
  hp.weight_decay = 0.0;
  ParamStore p = scalar_store(1.25);
  AdamState st = AdamState::zeros_like(p);
  optimizer_step(st, p, {Tensor::vector({0.0})}, hp);
  EXPECT_EQ(p[0][0], 1.25);

  for (double g : {3.0, -0.002}) {
    ParamStore q = scalar_store(0.0);
    AdamState s2 = AdamState::zeros_like(q);
    optimizer_step(s2, q, {Tensor::vector({g})}, hp);
    EXPECT_LT(q[0][0] * g, 0.0);
    // First bias-corrected step: -lr * g / (|g| + eps).
    EXPECT_NEAR(q[0][0], -hp.lr * g / (std::abs(g) + hp.eps), 1e-15);
  }
}

TEST(Adam, RejectsNonFiniteWithStep) {
  AdamHParams hp;
  ParamStore p = scalar_store(1.0);
  AdamState st = AdamState::zeros_like(p);
  optimizer_step(st, p, {Tensor::vector({1.0})}, hp);
  optimizer_step(st, p, {Tensor::vector({1.0})}, hp);
  try {
    optimizer_step(st, p, {Tensor::vector({std::numeric_limits<double>::quiet_NaN()})}, hp);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("step 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(optimizer_step(st, p, {Tensor::vector({1.0, 2.0})}, hp), ShapeError);
}

TEST(Adam, DeterministicOverFiftySteps) {
  auto run = [] {
    Denoiser m = Denoiser::init(net_spec(PredictionMode::kEpsilon), 4);
    AdamState st = AdamState::zeros_like(m.params());
    Rng rng(8);
    for (int k = 0; k < 50; ++k) {
      std::vector<Tensor> g;
      for (const auto& t : m.params().tensors()) g.push_back(rng.normal_tensor(t.shape()));
      optimizer_step(st, m.params(), g, AdamHParams{});
    }
    return m.params().hash();
  };
  EXPECT_EQ(run(), run());
}

// Four-point design: x0 in {mu - s, mu + s}, eps in {-1, +1} reproduces the first
// two moments of the Gaussian case exactly, so the linear optimum
// eps_hat = c (x_t - a mu) + d with c = b / (a^2 s^2 + b^2), d = 0 sits at a
// stationary point whose loss is the irreducible value.
TEST(StepwiseObjective, PerfectPredictorIsStationaryAtIrreducibleLoss) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  const oracle::GaussianOptimum opt{0.7, 1.3};
  for (int t : {1, 10, 250, 500, 999, 1000}) {
    const double a = s.signal(t), b = s.noise(t);
    Tensor x0({4, 1}), eps({4, 1});
    const double xs[] = {opt.mu - opt.s, opt.mu - opt.s, opt.mu + opt.s, opt.mu + opt.s};
    const double es[] = {-1, 1, -1, 1};
    for (int i = 0; i < 4; ++i) {
      x0[i] = xs[i];
      eps[i] = es[i];
    }
    const Tensor xt = forward_noise(s, x0, t, eps);
    Tensor centered = xt;
    for (auto& v : centered.data()) v -= a * opt.mu;

    ad::Tape tape;
    const ad::Var c = tape.leaf(Tensor::scalar(b / (a * a * opt.s * opt.s + b * b)));
    const ad::Var d = tape.leaf(Tensor::scalar(0.0));
    const ad::Var eps_hat = ad::add(ad::mul(tape.constant(centered), c), d);
    // The closed-form predictor agrees with the oracle's.
    const Tensor oracle_eps = opt.eps(s, t, xt);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(eps_hat.value()[i], oracle_eps[i], 1e-14);

    const ad::Var loss = stepwise_loss(tape.constant(eps), eps_hat);
    EXPECT_NEAR(loss.value().item(), opt.irreducible(s, t), 1e-12) << "t=" << t;
    const auto g = ad::backward(loss);
    const double gn = std::hypot(g[c].item(), g[d].item());
    EXPECT_LT(gn, 1e-6) << "t=" << t;
  }
}

TEST(StepwiseStep, RejectsNonEpsilonModel) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  TrainState st = TrainState::create(Denoiser::init(net_spec(PredictionMode::kX0), 1), 2);
  Rng rng(1);
  const Batch b = ring_batch(ring(), 8, rng);
  EXPECT_THROW(train_step_stepwise(st, b.x, b.labels, s, stepwise_cfg()), Error);
}

TEST(StepwiseStep, ZeroLearningRateMovesOnlyEma) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  TrainState st = TrainState::create(Denoiser::init(net_spec(PredictionMode::kEpsilon), 1), 2);
  for (auto& t : st.ema.params().tensors()) t = Tensor::zeros(t.shape());
  const auto before = st.params.params().hash();
  TrainConfig cfg = stepwise_cfg();
  cfg.adam.lr = 0.0;
  Rng rng(1);
  const Batch b = ring_batch(ring(), 16, rng);
  const double gap0 = [&] {
    double g = 0.0;
    for (std::size_t k = 0; k < st.params.params().size(); ++k) {
      for (std::size_t i = 0; i < st.params.params()[k].size(); ++i) {
        g += std::abs(st.params.params()[k][i] - st.ema.params()[k][i]);
      }
    }
    return g;
  }();
  const StepMetrics m = train_step_stepwise(st, b.x, b.labels, s, cfg);
  EXPECT_EQ(st.params.params().hash(), before);
  EXPECT_EQ(st.step, 1u);
  EXPECT_EQ(m.step, 1u);
  double gap1 = 0.0;
  for (std::size_t k = 0; k < st.params.params().size(); ++k) {
    for (std::size_t i = 0; i < st.params.params()[k].size(); ++i) {
      EXPECT_NEAR(st.ema.params()[k][i], 0.05 * st.params.params()[k][i], 1e-15);
      gap1 += std::abs(st.params.params()[k][i] - st.ema.params()[k][i]);
    }
  }
  EXPECT_LT(gap1, gap0);
}

TEST(StepwiseStep, IdenticalLossTraceOverHundredSteps) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  auto trace = [&] {
    TrainState st = TrainState::create(Denoiser::init(net_spec(PredictionMode::kEpsilon), 5), 6);
    Rng rng(7);
    std::vector<double> out;
    for (int k = 0; k < 100; ++k) {
      const Batch b = ring_batch(ring(), 32, rng);
      out.push_back(train_step_stepwise(st, b.x, b.labels, s, stepwise_cfg()).loss);
    }
    return out;
  };
  const auto a = trace();
  EXPECT_EQ(a, trace());
  EXPECT_EQ(a.size(), 100u);
}

TEST(StepwiseStep, LossIsMeanSquaredNoiseError) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  TrainState st = TrainState::create(Denoiser::init(net_spec(PredictionMode::kEpsilon), 5), 6);
  Rng rng(7);
  const Batch b = ring_batch(ring(), 8, rng);

  // Replay the step's draws: per-row t, then eps.
  Rng replay = st.rng;
  std::vector<int> t_rows(8);
  for (auto& t : t_rows) t = static_cast<int>(replay.uniform_int(1, 1000));
  const Tensor eps = replay.normal_tensor({8, 2});
  Tensor xt({8, 2});
  for (std::size_t r = 0; r < 8; ++r) {
    const Tensor row = forward_noise(s, b.x.row(r), t_rows[r], eps.row(r));
    xt.at(r, 0) = row[0];
    xt.at(r, 1) = row[1];
  }
  ad::Tape tape;
  const Binding bind_ = bind(st.params.params(), tape, false);
  const ad::Var e = embed_condition(st.params, bind_, b.labels, tape);
  const Tensor pred = denoiser_forward(st.params, bind_, tape.constant(xt), t_rows, e).value();
  double mse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) mse += (eps[i] - pred[i]) * (eps[i] - pred[i]);
  mse /= static_cast<double>(pred.size());

  EXPECT_NEAR(train_step_stepwise(st, b.x, b.labels, s, stepwise_cfg()).loss, mse, 1e-14);
}

TEST(E2eStep, NfeOneGradientMatchesFiniteDifferences) {
  const auto s = NoiseSchedule::linear(100, 1e-4, 0.02);
  TrainState st = TrainState::create(Denoiser::init(net_spec(PredictionMode::kDirectNext, 6, 100), 9), 10);
  const FeatureNet f = FeatureNet::init(2, 1);
  Rng rng(2);
  const Batch b = ring_batch(ring(), 5, rng);
  const TrainConfig cfg = e2e_cfg(1);
  const Denoiser start = st.params;
  const Rng noise = st.rng;

  auto loss_of = [&](const Denoiser& m) {
    ad::Tape tape;
    const Binding bb = bind(m.params(), tape, false);
    const ad::Var e = embed_condition(m, bb, b.labels, tape);
    Rng r = noise;
    const std::vector<int> steps{100};
    const auto traj = e2e_trajectory(m, bb, s, steps, e, r, RenoiseMode::kConvex, tape);
    double l = 0.0;
    for (std::size_t i = 0; i < traj.final.size(); ++i) l += std::pow(traj.final[i] - b.x[i], 2);
    return l / static_cast<double>(traj.final.size());
  };

  ad::Tape tape;
  const StepMetrics m = train_step_e2e(st, b.x, b.labels, s, cfg, f, &tape);
  EXPECT_NEAR(m.loss, loss_of(start), 1e-14);
  // With only L2 active the recorded loss is the last node on the tape.
  const ad::Var loss(&tape, tape.size() - 1);
  EXPECT_EQ(loss.value().item(), m.loss);
  const auto g = ad::backward(loss);

  double sq = 0.0;
  std::size_t checked = 0;
  for (const auto id : tape.leaves()) {
    const std::string& name = tape.leaf_name(id);
    ASSERT_EQ(name.rfind("gen.", 0), 0u) << name;
    const std::size_t k = static_cast<std::size_t>(
        std::find(start.params().names().begin(), start.params().names().end(), name.substr(4)) -
        start.params().names().begin());
    ASSERT_LT(k, start.params().size());
    const Tensor numeric = finite_diff_grad(
        [&](const Tensor& w) {
          Denoiser copy = start;
          copy.params()[k] = w;
          return loss_of(copy);
        },
        start.params()[k]);
    EXPECT_LT(max_relative_error(g.of(id), numeric), 1e-4) << name;
    sq += g.of(id).squared_norm();
    ++checked;
  }
  EXPECT_EQ(checked, start.params().size());
  EXPECT_NEAR(m.grad_norm, std::sqrt(sq), 1e-12 * std::sqrt(sq));
}

TEST(E2eStep, TauOneFreezesEma) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  TrainState st = TrainState::create(Denoiser::init(net_spec(PredictionMode::kEpsilon), 9), 10);
  const auto ema0 = st.ema.params().hash();
  TrainConfig cfg = e2e_cfg(4);
  cfg.tau = 1.0;
  const FeatureNet f = FeatureNet::init(2, 1);
  Rng rng(2);
  for (int k = 0; k < 5; ++k) {
    const Batch b = ring_batch(ring(), 8, rng);
    train_step_e2e(st, b.x, b.labels, s, cfg, f);
  }
  EXPECT_EQ(st.ema.params().hash(), ema0);
  EXPECT_NE(st.params.params().hash(), ema0);
  EXPECT_EQ(st.step, 5u);
}

TEST(E2eStep, ZeroTargetZeroOutputLayerGivesZeroLoss) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  DenoiserSpec spec = net_spec(PredictionMode::kDirectNext);
  spec.zero_init_output = true;
  TrainState st = TrainState::create(Denoiser::init(spec, 9), 10);
  const FeatureNet f = FeatureNet::init(2, 1);
  const std::vector<int> labels{0, 1, 2, 3};
  TrainConfig cfg = e2e_cfg(4);
  cfg.loss = {1, 1, 1, 0};
  const StepMetrics m = train_step_e2e(st, Tensor::zeros({4, 2}), labels, s, cfg, f);
  EXPECT_EQ(m.loss, 0.0);
  EXPECT_EQ(m.recon, 0.0);
}

TEST(E2eStep, RejectsWrongModeAndNfeCap) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  TrainState st = TrainState::create(Denoiser::init(net_spec(PredictionMode::kEpsilon), 9), 10);
  const FeatureNet f = FeatureNet::init(2, 1);
  const std::vector<int> labels{0, 1};
  EXPECT_THROW(train_step_e2e(st, Tensor::zeros({2, 2}), labels, s, stepwise_cfg(), f), ConfigError);
  EXPECT_THROW(train_step_e2e(st, Tensor::zeros({2, 2}), labels, s, e2e_cfg(kMaxNfe + 1), f), DomainError);
  EXPECT_THROW(e2e_cfg(kMaxNfe + 1).validate(), ConfigError);
  EXPECT_THROW(train_step_e2e(st, Tensor::zeros({2, 3}), labels, s, e2e_cfg(2), f), ShapeError);
}

TEST(E2eStep, NoGanTotalEqualsReconstruction) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  TrainState st = TrainState::create(Denoiser::init(net_spec(PredictionMode::kEpsilon), 9), 10);
  const FeatureNet f = FeatureNet::init(2, 1);
  TrainConfig cfg = e2e_cfg(3);
  cfg.loss = {0.5, 1, 1, 0};
  Rng rng(4);
  for (int k = 0; k < 10; ++k) {
    const Batch b = ring_batch(ring(), 8, rng);
    const StepMetrics m = train_step_e2e(st, b.x, b.labels, s, cfg, f);
    EXPECT_EQ(m.loss, m.recon);
    EXPECT_NEAR(m.recon, 0.5 * m.l1 + m.l2 + m.lpips, 1e-12);
    EXPECT_EQ(m.gan, 0.0);
  }
}

TEST(E2eStep, EmaNeverEntersTheGraph) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  TrainState st = TrainState::create(Denoiser::init(net_spec(PredictionMode::kEpsilon), 9), 10,
                                     Discriminator::init(DiscriminatorSpec{}, 3));
  const FeatureNet f = FeatureNet::init(2, 1);
  Rng rng(4);
  const Batch b = ring_batch(ring(), 8, rng);

  std::vector<const void*> ema_storage;
  for (const auto& t : st.ema.params().tensors()) ema_storage.push_back(&t);
  std::vector<const void*> live_storage;
  for (const auto& t : st.params.params().tensors()) live_storage.push_back(&t);

  auto audit = [&](const ad::Tape& tape) {
    const auto leaves = tape.leaves();
    EXPECT_EQ(leaves.size(), live_storage.size());
    for (const auto id : leaves) {
      const void* origin = tape.leaf_origin(id);
      EXPECT_EQ(std::find(ema_storage.begin(), ema_storage.end(), origin), ema_storage.end());
      EXPECT_NE(std::find(live_storage.begin(), live_storage.end(), origin), live_storage.end());
    }
  };

  TrainConfig cfg = e2e_cfg(4);
  ad::Tape t1;
  train_step_e2e(st, b.x, b.labels, s, cfg, f, &t1);
  audit(t1);

  TrainConfig sw = stepwise_cfg();
  ad::Tape t2;
  train_step_stepwise(st, b.x, b.labels, s, sw, &t2);
  audit(t2);

  cfg.loss.gan = 0.01;
  ad::Tape t3;
  train_step_e2e(st, b.x, b.labels, s, cfg, f, &t3);
  audit(t3);
}

TEST(AdversarialRound, FiveDiscriminatorUpdatesPerGeneratorUpdate) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  TrainState st = TrainState::create(Denoiser::init(net_spec(PredictionMode::kEpsilon), 9), 10,
                                     Discriminator::init(DiscriminatorSpec{}, 3));
  const FeatureNet f = FeatureNet::init(2, 1);
  TrainConfig cfg = e2e_cfg(4);
  cfg.loss = loss_preset("l2+lpips+gan");
  Rng rng(4);
  const Batch b = ring_batch(ring(), 16, rng);
  const StepMetrics m = adversarial_round(st, b.x, b.labels, s, cfg, f);
  ASSERT_EQ(m.disc_losses.size(), 5u);
  for (double d : m.disc_losses) EXPECT_TRUE(std::isfinite(d));
  EXPECT_EQ(st.step, 1u);
  EXPECT_EQ(st.disc_opt.step, 5u);
  EXPECT_EQ(st.opt.step, 1u);
  EXPECT_GT(m.gan, 0.0);
  EXPECT_NEAR(m.loss, m.recon + 0.01 * m.gan, 1e-14);
}

TEST(AdversarialRound, DiscriminatorUpdatesLeaveGeneratorUntouched) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  TrainState st = TrainState::create(Denoiser::init(net_spec(PredictionMode::kEpsilon), 9), 10,
                                     Discriminator::init(DiscriminatorSpec{}, 3));
  const FeatureNet f = FeatureNet::init(2, 1);
  TrainConfig cfg = e2e_cfg(4);
  cfg.loss = loss_preset("l2+lpips+gan");
  // A frozen generator step isolates whatever the five discriminator updates do.
  cfg.adam.lr = 0.0;
  const auto gen0 = st.params.params().hash();
  const auto disc0 = st.disc->params().hash();
  Rng rng(4);
  const Batch b = ring_batch(ring(), 16, rng);
  adversarial_round(st, b.x, b.labels, s, cfg, f);
  EXPECT_EQ(st.params.params().hash(), gen0);
  EXPECT_NE(st.disc->params().hash(), disc0);
}

TEST(AdversarialRound, Preconditions) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  const FeatureNet f = FeatureNet::init(2, 1);
  const std::vector<int> labels{0, 1};
  TrainState no_disc = TrainState::create(Denoiser::init(net_spec(PredictionMode::kEpsilon), 9), 10);
  TrainConfig cfg = e2e_cfg(4);
  cfg.loss.gan = 0.01;
  EXPECT_THROW(adversarial_round(no_disc, Tensor::zeros({2, 2}), labels, s, cfg, f), Error);
  TrainState st = TrainState::create(Denoiser::init(net_spec(PredictionMode::kEpsilon), 9), 10,
                                     Discriminator::init(DiscriminatorSpec{}, 3));
  cfg.loss.gan = 0.0;
  EXPECT_THROW(adversarial_round(st, Tensor::zeros({2, 2}), labels, s, cfg, f), ConfigError);
  cfg.loss.gan = 0.01;
  cfg.disc_updates_per_gen = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.tau = 1.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.nfe = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.loss = {0, 0, 0, 0.01};
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.init = InitMode::kFromCheckpoint;
  EXPECT_THROW(c.validate(), ConfigError);
}

// Shared-mode e2e training at NFE 4 on a 2-D ring with a 2-layer net. Mean loss
// over the first and last ten of 500 steps. Reference run: 6.76 -> 0.095.
TEST(E2eStep, SmokeTrainingHalvesTheLoss) {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  DenoiserSpec spec = net_spec(PredictionMode::kDirectNext, 32);
  TrainState st = TrainState::create(Denoiser::init(spec, 21), 22);
  const FeatureNet f = FeatureNet::init(2, 1);
  TrainConfig cfg = e2e_cfg(4);
  cfg.loss = {0, 1, 0, 0};
  Rng rng(23);
  std::vector<double> losses;
  for (int k = 0; k < 500; ++k) {
    const Batch b = ring_batch(ring(), 64, rng);
    losses.push_back(train_step_e2e(st, b.x, b.labels, s, cfg, f).loss);
  }
  const double first = std::accumulate(losses.begin(), losses.begin() + 10, 0.0) / 10.0;
  const double last = std::accumulate(losses.end() - 10, losses.end(), 0.0) / 10.0;
  RecordProperty("initial_loss", std::to_string(first));
  RecordProperty("final_loss", std::to_string(last));
  std::printf("smoke: initial %.6f final %.6f ratio %.4f\n", first, last, last / first);
  EXPECT_LT(last, 0.5 * first);
}
