#pragma once

#include <cstddef>
#include <vector>

#include "trajdiff/tensor.hpp"

namespace trajdiff {

// Variance-preserving forward process. Steps are indexed 1..T; step 0 is the
// clean data (alpha_bar = 1) and is accepted by the *_at queries so strided
// samplers can target it.
class NoiseSchedule {
 public:
  // Linear betas from beta_start (t = 1) to beta_end (t = T).
  static NoiseSchedule linear(int steps, double beta_start, double beta_end);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta_start() const { return betas_.front(); }
  double beta_end() const { return betas_.back(); }

  double beta(int t) const { return betas_[index(t)]; }
  double alpha(int t) const { return alphas_[index(t)]; }
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars_[index(t)]; }
  // sqrt(alpha_bar_t) and sqrt(1 - alpha_bar_t).
  double signal(int t) const { return t == 0 ? 1.0 : signal_[index(t)]; }
  double noise(int t) const { return t == 0 ? 0.0 : noise_[index(t)]; }

  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

  void check_step(int t) const;

 private:
  NoiseSchedule() = default;
  std::size_t index(int t) const;

  std::vector<double> betas_, alphas_, alpha_bars_, signal_, noise_;
};

NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end);

// signal(t) * x0 + noise(t) * eps
Tensor forward_noise(const NoiseSchedule& s, const Tensor& x0, int t, const Tensor& eps);

}  // namespace trajdiff
