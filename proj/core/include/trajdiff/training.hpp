#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trajdiff/diffusion.hpp"
#include "trajdiff/losses.hpp"
#include "trajdiff/model.hpp"
#include "trajdiff/optim.hpp"
#include "trajdiff/rng.hpp"
#include "trajdiff/schedule.hpp"

namespace trajdiff {

enum class TrainMode { kStepwise, kE2E };
enum class InitMode { kRandom, kFromCheckpoint, kPretrain };

std::string_view to_string(TrainMode mode);
std::string_view to_string(InitMode mode);
TrainMode parse_train_mode(std::string_view text);
InitMode parse_init_mode(std::string_view text);

struct TrainConfig {
  TrainMode mode = TrainMode::kE2E;
  int nfe = 4;
  LossWeights loss = {0.0, 1.0, 1.0, 0.0};
  RenoiseMode renoise = RenoiseMode::kConvex;
  SharingMode sharing = SharingMode::kShared;
  AdamHParams adam;
  AdamHParams disc_adam;
  double tau = 0.95;
  int steps = 5000;
  int batch = 64;
  int disc_updates_per_gen = 5;
  InitMode init = InitMode::kPretrain;
  std::string checkpoint;  // used by InitMode::kFromCheckpoint
  int checkpoint_every = 0;  // 0 = final checkpoint only

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TrainState {
  Denoiser params;
  Denoiser ema;
  std::optional<Discriminator> disc;
  AdamState opt;
  AdamState disc_opt;
  std::size_t step = 0;
  Rng rng;

  // theta_EMA starts as a copy of theta.
  static TrainState create(Denoiser init, std::uint64_t seed, std::optional<Discriminator> disc = std::nullopt);
};

struct StepMetrics {
  std::size_t step = 0;
  TrainMode mode = TrainMode::kStepwise;
  double loss = 0.0;   // total objective
  double recon = 0.0;  // reconstruction (e2e) or noise-prediction MSE (stepwise)
  double l1 = 0.0, l2 = 0.0, lpips = 0.0, gan = 0.0;
  double grad_norm = 0.0;
  double param_norm = 0.0;
  std::vector<double> disc_losses;
};

// Noise-prediction objective: mean over all elements of (eps - eps_hat)^2.
ad::Var stepwise_loss(const ad::Var& eps, const ad::Var& eps_hat);

// One ELBO update: per-row t ~ U{1..T}, x_t = forward_noise(x0, t, eps),
// regress eps, one optimizer step, EMA update. Needs an epsilon-mode model.
// When `tape` is given the graph is recorded there (for inspection).
StepMetrics train_step_stepwise(TrainState& st, const Tensor& batch, std::span<const int> labels,
                                const NoiseSchedule& s, const TrainConfig& cfg, ad::Tape* tape = nullptr);

// One end-to-end update: unrolled trajectory over strided_steps(T, nfe),
// L = d(x0, zhat_0) [+ lambda_gan * L_gan(zhat_0)], backprop through every
// step, optimizer step, then the EMA update outside any graph.
StepMetrics train_step_e2e(TrainState& st, const Tensor& batch, std::span<const int> labels,
                           const NoiseSchedule& s, const TrainConfig& cfg, const FeatureNet& features,
                           ad::Tape* tape = nullptr);

// cfg.disc_updates_per_gen discriminator updates against fresh generator
// samples (no generator gradient), then one generator update with the GAN
// term. Requires lambda_gan > 0 and a discriminator in the state.
StepMetrics adversarial_round(TrainState& st, const Tensor& batch, std::span<const int> labels,
                              const NoiseSchedule& s, const TrainConfig& cfg, const FeatureNet& features);

// Gradients of a loss w.r.t. a bound parameter set, in ParamStore order.
std::vector<Tensor> gradients_for(const ad::Gradients& g, const Binding& b);

}  // namespace trajdiff
