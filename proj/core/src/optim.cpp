#include "trajdiff/optim.hpp"

#include <cmath>

#include "trajdiff/error.hpp"

namespace trajdiff {

void AdamHParams::validate() const {
  if (!(lr >= 0.0 && std::isfinite(lr))) throw ConfigError("optimizer: lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("optimizer: beta1 must lie in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("optimizer: beta2 must lie in [0,1)");
  if (!(eps > 0.0)) throw ConfigError("optimizer: eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("optimizer: weight_decay must be >= 0");
}

AdamState AdamState::zeros_like(const ParamStore& params) {
  AdamState s;
  for (const auto& t : params.tensors()) {
    s.m.push_back(Tensor::zeros_like(t));
    s.v.push_back(Tensor::zeros_like(t));
  }
  return s;
}

void optimizer_step(AdamState& state, ParamStore& params, const std::vector<Tensor>& grads, const AdamHParams& hp) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw ShapeError("optimizer: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (grads[k].shape() != params[k].shape()) {
      throw ShapeError("optimizer: gradient for " + params.name(k) + " has shape " + shape_str(grads[k].shape()));
    }
    if (!grads[k].all_finite()) {
      throw NonFiniteError("optimizer: non-finite gradient for " + params.name(k) + " at step " +
                           std::to_string(state.step + 1));
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < grads.size(); ++k) {
    auto p = params[k].data();
    auto m = state.m[k].data();
    auto v = state.v[k].data();
    const auto g = grads[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
      v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= hp.lr * (m_hat / (std::sqrt(v_hat) + hp.eps) + hp.weight_decay * p[i]);
    }
  }
}

ParamStore ema_update(const ParamStore& ema, const ParamStore& live, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("ema: tau must lie in [0,1]");
  if (!ema.congruent(live)) throw ShapeError("ema: parameter sets are not shape-congruent");
  ParamStore out = ema;
  for (std::size_t k = 0; k < out.size(); ++k) {
    auto e = out[k].data();
    const auto l = live[k].data();
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = tau * e[i] + (1.0 - tau) * l[i];
  }
  return out;
}

double global_norm(const std::vector<Tensor>& tensors) {
  double s = 0.0;
  for (const auto& t : tensors) s += t.squared_norm();
  return std::sqrt(s);
}

}  // namespace trajdiff
