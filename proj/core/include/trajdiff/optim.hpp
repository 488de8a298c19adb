#pragma once

#include <cstddef>
#include <vector>

#include "trajdiff/model.hpp"

namespace trajdiff {

struct AdamHParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-8;
  void validate() const;
  friend bool operator==(const AdamHParams&, const AdamHParams&) = default;
};

// First/second moment accumulators, one pair per parameter tensor.
struct AdamState {
  std::vector<Tensor> m, v;
  std::size_t step = 0;
  static AdamState zeros_like(const ParamStore& params);
};

// AdamW with bias correction and decoupled weight decay:
//   p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
// Throws NonFiniteError (naming the step) if any gradient is NaN/Inf.
void optimizer_step(AdamState& state, ParamStore& params, const std::vector<Tensor>& grads, const AdamHParams& hp);

// tau * ema + (1 - tau) * live, elementwise.
ParamStore ema_update(const ParamStore& ema, const ParamStore& live, double tau);

double global_norm(const std::vector<Tensor>& tensors);

}  // namespace trajdiff
