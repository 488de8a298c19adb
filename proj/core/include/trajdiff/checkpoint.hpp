#pragma once

#include <cstddef>
#include <string>

#include "trajdiff/diffusion.hpp"
#include "trajdiff/model.hpp"
#include "trajdiff/training.hpp"

namespace trajdiff {

inline constexpr int kCheckpointVersion = 1;

// Live and EMA weights plus what a sampler needs to reproduce the training
// trajectory. Doubles are written shortest-round-trip, so load(save(x)) is
// bit-exact.
struct Checkpoint {
  Denoiser model;
  Denoiser ema;
  std::size_t step = 0;
  TrainMode mode = TrainMode::kStepwise;
  int nfe = 4;
  RenoiseMode renoise = RenoiseMode::kConvex;
  std::string config_hash;

  const Denoiser& weights(bool use_ema) const { return use_ema ? ema : model; }
};

std::string checkpoint_to_string(const Checkpoint& ckpt);
Checkpoint checkpoint_from_string(const std::string& text);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace trajdiff
