#include "trajdiff/losses.hpp"

#include <cmath>

#include "trajdiff/error.hpp"

namespace trajdiff {

void LossWeights::validate() const {
  for (double v : {l1, l2, lpips, gan}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("loss: weights must be finite and >= 0");
  }
}

const std::vector<std::string>& loss_preset_names() {
  static const std::vector<std::string> names{"l1", "l2", "lpips", "l2+lpips", "l2+lpips+gan"};
  return names;
}

LossWeights loss_preset(std::string_view name) {
  if (name == "l1") return {1.0, 0.0, 0.0, 0.0};
  if (name == "l2") return {0.0, 1.0, 0.0, 0.0};
  if (name == "lpips") return {0.0, 0.0, 1.0, 0.0};
  if (name == "l2+lpips") return {0.0, 1.0, 1.0, 0.0};
  if (name == "l2+lpips+gan") return {0.0, 1.0, 1.0, 0.01};
  throw ConfigError("unknown loss preset '" + std::string(name) + "'");
}

namespace {

void same_shape(const char* what, const ad::Var& a, const ad::Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " differ");
  }
}

}  // namespace

ad::Var recon_l1(const ad::Var& target, const ad::Var& pred) {
  same_shape("recon_l1", target, pred);
  return ad::mean(ad::abs(target - pred));
}

ad::Var recon_l2(const ad::Var& target, const ad::Var& pred) {
  same_shape("recon_l2", target, pred);
  return ad::mean(ad::square(target - pred));
}

ad::Var recon_perceptual(const FeatureNet& f, const Binding& fb, const ad::Var& target, const ad::Var& pred) {
  same_shape("recon_perceptual", target, pred);
  return ad::mean(ad::square(f.forward(target, fb) - f.forward(pred, fb)));
}

ad::Var recon_hybrid(const LossWeights& w, const FeatureNet& f, const Binding& fb, const ad::Var& target,
                     const ad::Var& pred) {
  same_shape("recon_hybrid", target, pred);
  if (!w.has_reconstruction()) throw ConfigError("recon_hybrid: all reconstruction weights are zero");
  ad::Var total;
  auto accumulate = [&total](double weight, ad::Var term) {
    if (weight != 1.0) term = weight * term;
    total = total.valid() ? total + term : term;
  };
  if (w.l1 > 0.0) accumulate(w.l1, recon_l1(target, pred));
  if (w.l2 > 0.0) accumulate(w.l2, recon_l2(target, pred));
  if (w.lpips > 0.0) accumulate(w.lpips, recon_perceptual(f, fb, target, pred));
  return total;
}

ad::Var gan_generator_loss(const ad::Var& logits_fake) { return ad::mean(ad::softplus(-logits_fake)); }

ad::Var gan_discriminator_loss(const ad::Var& logits_real, const ad::Var& logits_fake) {
  return ad::mean(ad::softplus(-logits_real)) + ad::mean(ad::softplus(logits_fake));
}

ad::Var total_loss(const LossWeights& w, const ad::Var& recon, const ad::Var& gan_g) {
  if (w.gan == 0.0) return recon;
  return recon + w.gan * gan_g;
}

}  // namespace trajdiff
