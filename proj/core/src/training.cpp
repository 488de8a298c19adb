#include "trajdiff/training.hpp"

#include <cmath>

#include "trajdiff/error.hpp"

namespace trajdiff {

std::string_view to_string(TrainMode mode) { return mode == TrainMode::kStepwise ? "stepwise" : "e2e"; }

std::string_view to_string(InitMode mode) {
  switch (mode) {
    case InitMode::kRandom: return "random";
    case InitMode::kFromCheckpoint: return "from-checkpoint";
    case InitMode::kPretrain: return "pretrain";
  }
  return "?";
}

TrainMode parse_train_mode(std::string_view text) {
  if (text == "stepwise") return TrainMode::kStepwise;
  if (text == "e2e") return TrainMode::kE2E;
  throw ConfigError("unknown train mode '" + std::string(text) + "' (stepwise|e2e)");
}

InitMode parse_init_mode(std::string_view text) {
  if (text == "random") return InitMode::kRandom;
  if (text == "from-checkpoint") return InitMode::kFromCheckpoint;
  if (text == "pretrain") return InitMode::kPretrain;
  throw ConfigError("unknown init mode '" + std::string(text) + "' (random|from-checkpoint|pretrain)");
}

void TrainConfig::validate() const {
  if (nfe < 1) throw ConfigError("train.nfe: must be >= 1");
  if (mode == TrainMode::kE2E && nfe > kMaxNfe) {
    throw ConfigError("train.nfe: " + std::to_string(nfe) + " exceeds the unroll cap of " + std::to_string(kMaxNfe));
  }
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("train.tau: must lie in [0,1]");
  if (steps < 0) throw ConfigError("train.steps: must be >= 0");
  if (batch < 1) throw ConfigError("train.batch: must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every: must be >= 0");
  loss.validate();
  if (mode == TrainMode::kE2E && !loss.has_reconstruction()) {
    throw ConfigError("loss: at least one reconstruction weight must be > 0");
  }
  if (loss.gan > 0.0 && disc_updates_per_gen < 1) {
    throw ConfigError("train.disc_updates_per_gen: must be >= 1 when loss.gan > 0");
  }
  if (init == InitMode::kFromCheckpoint && checkpoint.empty()) {
    throw ConfigError("train.checkpoint: required when train.init = from-checkpoint");
  }
  adam.validate();
  disc_adam.validate();
}

TrainState TrainState::create(Denoiser init, std::uint64_t seed, std::optional<Discriminator> disc) {
  TrainState st;
  st.ema = init;
  st.opt = AdamState::zeros_like(init.params());
  st.params = std::move(init);
  if (disc) st.disc_opt = AdamState::zeros_like(disc->params());
  st.disc = std::move(disc);
  st.rng = Rng(seed);
  return st;
}

std::vector<Tensor> gradients_for(const ad::Gradients& g, const Binding& b) {
  std::vector<Tensor> out;
  out.reserve(b.vars.size());
  for (const auto& v : b.vars) out.push_back(g[v]);
  return out;
}

ad::Var stepwise_loss(const ad::Var& eps, const ad::Var& eps_hat) { return ad::mean(ad::square(eps - eps_hat)); }

namespace {

void check_batch(const Tensor& batch, std::span<const int> labels, std::size_t dim) {
  if (batch.rank() != 2 || batch.cols() != dim) {
    throw ShapeError("train: batch has shape " + shape_str(batch.shape()) + ", expected [B," + std::to_string(dim) +
                     "]");
  }
  if (labels.size() != batch.rows()) throw ShapeError("train: one label per batch row required");
}

void check_finite(double loss, std::size_t step) {
  if (!std::isfinite(loss)) throw NonFiniteError("train: non-finite loss at step " + std::to_string(step + 1));
}

void apply_update(TrainState& st, const std::vector<Tensor>& grads, const TrainConfig& cfg, StepMetrics& m) {
  m.grad_norm = global_norm(grads);
  optimizer_step(st.opt, st.params.params(), grads, cfg.adam);
  st.ema.params() = ema_update(st.ema.params(), st.params.params(), cfg.tau);
  ++st.step;
  m.step = st.step;
  m.param_norm = st.params.params().norm();
}

double mean_abs_diff(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double mean_sq_diff(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

StepMetrics e2e_update(TrainState& st, const Tensor& batch, std::span<const int> labels, const NoiseSchedule& s,
                       const TrainConfig& cfg, const FeatureNet& features, ad::Tape& tape) {
  if (cfg.loss.gan > 0.0 && !st.disc) throw Error("train: loss.gan > 0 needs a discriminator");
  const std::vector<int> steps = strided_steps(s.steps(), cfg.nfe);
  if (static_cast<int>(steps.size()) > kMaxNfe) {
    throw DomainError("train: NFE " + std::to_string(steps.size()) + " exceeds the cap of " + std::to_string(kMaxNfe));
  }
  const Binding gen = bind(st.params.params(), tape, true, "gen.");
  const Binding fb = bind(features.params(), tape, false);
  const ad::Var e_c = embed_condition(st.params, gen, labels, tape);
  const Trajectory traj = e2e_trajectory(st.params, gen, s, steps, e_c, st.rng, cfg.renoise, tape);
  const ad::Var target = tape.constant(batch);
  const ad::Var recon = recon_hybrid(cfg.loss, features, fb, target, traj.final_var);

  StepMetrics m;
  m.mode = TrainMode::kE2E;
  ad::Var gan_g;
  if (cfg.loss.gan > 0.0) {
    const Binding db = bind(st.disc->params(), tape, false);
    gan_g = gan_generator_loss(discriminator_forward(*st.disc, db, traj.final_var, labels));
    m.gan = gan_g.value().item();
  }
  const ad::Var total = total_loss(cfg.loss, recon, gan_g);
  m.loss = total.value().item();
  m.recon = recon.value().item();
  check_finite(m.loss, st.step);

  m.l1 = mean_abs_diff(batch, traj.final);
  m.l2 = mean_sq_diff(batch, traj.final);
  if (cfg.loss.lpips > 0.0) m.lpips = mean_sq_diff(features.features(batch), features.features(traj.final));

  const ad::Gradients g = ad::backward(total);
  apply_update(st, gradients_for(g, gen), cfg, m);
  return m;
}

}  // namespace

StepMetrics train_step_stepwise(TrainState& st, const Tensor& batch, std::span<const int> labels,
                                const NoiseSchedule& s, const TrainConfig& cfg, ad::Tape* tape) {
  const auto& spec = st.params.spec();
  if (spec.prediction != PredictionMode::kEpsilon) {
    throw Error("train: stepwise training needs an epsilon-mode model, got " +
                std::string(to_string(spec.prediction)));
  }
  check_batch(batch, labels, spec.data_dim);
  ad::Tape local;
  ad::Tape& tp = tape ? *tape : local;

  const std::size_t rows = batch.rows();
  std::vector<int> t_rows(rows);
  for (auto& t : t_rows) t = static_cast<int>(st.rng.uniform_int(1, s.steps()));
  const Tensor eps = st.rng.normal_tensor(batch.shape());
  Tensor x_t(batch.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double a = s.signal(t_rows[r]);
    const double b = s.noise(t_rows[r]);
    for (std::size_t c = 0; c < spec.data_dim; ++c) x_t.at(r, c) = a * batch.at(r, c) + b * eps.at(r, c);
  }

  const Binding gen = bind(st.params.params(), tp, true, "gen.");
  const ad::Var e_c = embed_condition(st.params, gen, labels, tp);
  const ad::Var eps_hat = denoiser_forward(st.params, gen, tp.constant(x_t), t_rows, e_c);
  const ad::Var loss = stepwise_loss(tp.constant(eps), eps_hat);

  StepMetrics m;
  m.mode = TrainMode::kStepwise;
  m.loss = m.recon = m.l2 = loss.value().item();
  check_finite(m.loss, st.step);
  const ad::Gradients g = ad::backward(loss);
  apply_update(st, gradients_for(g, gen), cfg, m);
  return m;
}

StepMetrics train_step_e2e(TrainState& st, const Tensor& batch, std::span<const int> labels,
                           const NoiseSchedule& s, const TrainConfig& cfg, const FeatureNet& features,
                           ad::Tape* tape) {
  if (cfg.mode != TrainMode::kE2E) throw ConfigError("train: train_step_e2e needs train.mode = e2e");
  check_batch(batch, labels, st.params.spec().data_dim);
  ad::Tape local;
  return e2e_update(st, batch, labels, s, cfg, features, tape ? *tape : local);
}

StepMetrics adversarial_round(TrainState& st, const Tensor& batch, std::span<const int> labels,
                              const NoiseSchedule& s, const TrainConfig& cfg, const FeatureNet& features) {
  if (!(cfg.loss.gan > 0.0)) throw ConfigError("train: adversarial round needs loss.gan > 0");
  if (!st.disc) throw Error("train: adversarial round needs a discriminator");
  if (cfg.disc_updates_per_gen < 1) throw ConfigError("train.disc_updates_per_gen: must be >= 1");
  check_batch(batch, labels, st.params.spec().data_dim);
  const std::vector<int> steps = strided_steps(s.steps(), cfg.nfe);

  std::vector<double> disc_losses;
  for (int k = 0; k < cfg.disc_updates_per_gen; ++k) {
    ad::Tape tape;
    const Binding gen = bind(st.params.params(), tape, false);
    const Binding db = bind(st.disc->params(), tape, true, "disc.");
    const ad::Var e_c = embed_condition(st.params, gen, labels, tape);
    const Trajectory fake = e2e_trajectory(st.params, gen, s, steps, e_c, st.rng, cfg.renoise, tape);
    const ad::Var real_logits = discriminator_forward(*st.disc, db, tape.constant(batch), labels);
    const ad::Var fake_logits = discriminator_forward(*st.disc, db, fake.final_var, labels);
    const ad::Var loss = gan_discriminator_loss(real_logits, fake_logits);
    const double value = loss.value().item();
    check_finite(value, st.step);
    const ad::Gradients g = ad::backward(loss);
    optimizer_step(st.disc_opt, st.disc->params(), gradients_for(g, db), cfg.disc_adam);
    disc_losses.push_back(value);
  }

  ad::Tape tape;
  StepMetrics m = e2e_update(st, batch, labels, s, cfg, features, tape);
  m.disc_losses = std::move(disc_losses);
  return m;
}

}  // namespace trajdiff
