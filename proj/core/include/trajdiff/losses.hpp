#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "trajdiff/model.hpp"
#include "trajdiff/tape.hpp"

namespace trajdiff {

struct LossWeights {
  double l1 = 0.0;
  double l2 = 1.0;
  double lpips = 0.0;  // perceptual proxy
  double gan = 0.0;

  bool has_reconstruction() const { return l1 > 0.0 || l2 > 0.0 || lpips > 0.0; }
  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

// Named loss combinations: "l1", "l2", "lpips", "l2+lpips", "l2+lpips+gan".
LossWeights loss_preset(std::string_view name);
const std::vector<std::string>& loss_preset_names();

// mean |a - b|
ad::Var recon_l1(const ad::Var& target, const ad::Var& pred);
// mean (a - b)^2
ad::Var recon_l2(const ad::Var& target, const ad::Var& pred);
// mean squared distance between frozen feature-net outputs.
ad::Var recon_perceptual(const FeatureNet& f, const Binding& fb, const ad::Var& target, const ad::Var& pred);

// Components with zero weight are skipped; unit weights are not multiplied,
// so a single unit-weight component reproduces its base loss exactly.
ad::Var recon_hybrid(const LossWeights& w, const FeatureNet& f, const Binding& fb, const ad::Var& target,
                     const ad::Var& pred);

// Non-saturating logistic losses.
ad::Var gan_generator_loss(const ad::Var& logits_fake);
ad::Var gan_discriminator_loss(const ad::Var& logits_real, const ad::Var& logits_fake);

// recon + lambda_gan * gan_g; returns recon itself when lambda_gan == 0.
ad::Var total_loss(const LossWeights& w, const ad::Var& recon, const ad::Var& gan_g);

}  // namespace trajdiff
