#include "trajdiff/schedule.hpp"

#include <cmath>

#include "trajdiff/error.hpp"

namespace trajdiff {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw DomainError("schedule: T must be >= 1, got " + std::to_string(steps));
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw DomainError("schedule: need 0 < beta_start <= beta_end < 1, got " +
                      std::to_string(beta_start) + ", " + std::to_string(beta_end));
  }
  NoiseSchedule s;
  const auto n = static_cast<std::size_t>(steps);
  s.betas_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double frac = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    s.betas_[i] = beta_start + frac * (beta_end - beta_start);
  }
  s.betas_.back() = beta_end;
  s.alphas_.resize(n);
  s.alpha_bars_.resize(n);
  s.signal_.resize(n);
  s.noise_.resize(n);
  double running = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    s.alphas_[i] = 1.0 - s.betas_[i];
    running *= s.alphas_[i];
    s.alpha_bars_[i] = running;
    s.signal_[i] = std::sqrt(running);
    s.noise_[i] = std::sqrt(1.0 - running);
  }
  return s;
}

NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end) {
  return NoiseSchedule::linear(steps, beta_start, beta_end);
}

std::size_t NoiseSchedule::index(int t) const {
  check_step(t);
  return static_cast<std::size_t>(t - 1);
}

void NoiseSchedule::check_step(int t) const {
  if (t < 1 || t > steps()) {
    throw DomainError("schedule: step " + std::to_string(t) + " outside 1.." + std::to_string(steps()));
  }
}

Tensor forward_noise(const NoiseSchedule& s, const Tensor& x0, int t, const Tensor& eps) {
  s.check_step(t);
  if (x0.shape() != eps.shape()) {
    throw ShapeError("forward_noise: x0 " + shape_str(x0.shape()) + " vs eps " + shape_str(eps.shape()));
  }
  const double a = s.signal(t);
  const double b = s.noise(t);
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

}  // namespace trajdiff
