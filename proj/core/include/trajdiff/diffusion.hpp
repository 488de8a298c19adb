#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "trajdiff/model.hpp"
#include "trajdiff/rng.hpp"
#include "trajdiff/schedule.hpp"
#include "trajdiff/tape.hpp"

namespace trajdiff {

// Largest unrolled trajectory the trainer accepts.
inline constexpr int kMaxNfe = 8;

enum class RenoiseMode {
  kLiteral,  // z + sqrt(max(alpha^2 - sigma^2, 0)) * noise
  kConvex,   // alpha * z + sigma * noise
};

std::string_view to_string(RenoiseMode mode);
RenoiseMode parse_renoise_mode(std::string_view text);

// Uniformly strided steps: round(T * (nfe - i) / nfe) for i = 0..nfe-1.
// nfe == T gives T, T-1, ..., 1.
std::vector<int> strided_steps(int total_steps, int nfe);

Tensor renoise(const Tensor& z_prev, int t, const NoiseSchedule& s, const Tensor& noise, RenoiseMode mode);
ad::Var renoise(const ad::Var& z_prev, int t, const NoiseSchedule& s, const ad::Var& noise, RenoiseMode mode);

// Posterior-mean step from t to t_prev (t_prev = 0 means clean data):
//   a = alpha_bar_t / alpha_bar_prev, b = 1 - a
//   z_prev = (z_t - b / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(a) + sqrt(var) * xi
//   var = (1 - alpha_bar_prev) / (1 - alpha_bar_t) * b
// `xi` may be null; it is ignored when t_prev == 0.
Tensor ancestral_update(const NoiseSchedule& s, const Tensor& z_t, const Tensor& eps_hat, int t, int t_prev,
                        const Tensor* xi);
double posterior_variance(const NoiseSchedule& s, int t, int t_prev);

// Predicted noise for a batch at step t.
using EpsilonPredictor = std::function<Tensor(const Tensor& z, int t)>;

// Wraps an epsilon-mode denoiser with fixed labels (off tape).
EpsilonPredictor epsilon_predictor(const Denoiser& model, std::vector<int> labels);

// One ancestral transition t -> t_prev with fresh N(0, I) noise for t_prev > 0.
Tensor ancestral_step(const Denoiser& model, const Tensor& z_t, int t, const NoiseSchedule& s,
                      std::span<const int> labels, Rng& rng, int t_prev = -1);

struct TrajectoryEntry {
  int t = 0;
  Tensor pre;         // state entering the step
  Tensor post;        // re-noised network input
  Tensor prediction;  // raw network output
  Tensor output;      // state implied by the prediction
  ad::Var pre_var, post_var, output_var;  // set when recorded on a tape
};

struct Trajectory {
  std::vector<TrajectoryEntry> entries;
  Tensor final;
  ad::Var final_var;
  bool differentiable = false;
};

// Ancestral sampling from pure noise along `steps` (strictly decreasing,
// within 1..T). Each step targets the next listed step; the last targets 0.
Trajectory sample_baseline(const EpsilonPredictor& predict, const NoiseSchedule& s, std::span<const int> steps,
                           std::size_t batch, std::size_t dim, Rng& rng);
Trajectory sample_baseline(const Denoiser& model, const NoiseSchedule& s, std::span<const int> steps,
                           std::span<const int> labels, Rng& rng);

// Unrolled differentiable trajectory:
//   z_T ~ N(0, I); for t in step_list: z ~ N(0, I); zhat = renoise(state, t, z);
//   state = G(zhat, e_c, t); final = state.
// Epsilon-mode models map their prediction to the implied clean estimate
// (zhat - sigma_t * eps) / alpha_t so the state always lives in data space.
// `e_c` fixes the batch size. Noise draws: z_T first, then one draw per step.
Trajectory e2e_trajectory(const Denoiser& model, const Binding& params, const NoiseSchedule& s,
                          std::span<const int> step_list, const ad::Var& e_c, Rng& rng, RenoiseMode mode,
                          ad::Tape& tape);

// Off-tape convenience: samples for the given labels.
Tensor sample_e2e(const Denoiser& model, const NoiseSchedule& s, std::span<const int> step_list,
                  std::span<const int> labels, Rng& rng, RenoiseMode mode);

// One JSON object per step: t, RMS norms of the latents and, optionally, the
// full latent rows (data_dim <= 8 only).
void write_trajectory_jsonl(std::ostream& os, const Trajectory& traj, bool full_vectors);

}  // namespace trajdiff
