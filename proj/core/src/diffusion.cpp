#include "trajdiff/diffusion.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <ostream>

#include "trajdiff/error.hpp"

namespace trajdiff {

std::string_view to_string(RenoiseMode mode) { return mode == RenoiseMode::kLiteral ? "literal" : "convex"; }

RenoiseMode parse_renoise_mode(std::string_view text) {
  if (text == "literal") return RenoiseMode::kLiteral;
  if (text == "convex") return RenoiseMode::kConvex;
  throw ConfigError("unknown renoise mode '" + std::string(text) + "' (literal|convex)");
}

std::vector<int> strided_steps(int total_steps, int nfe) {
  if (nfe < 1 || nfe > total_steps) {
    throw DomainError("strided_steps: nfe " + std::to_string(nfe) + " outside 1.." + std::to_string(total_steps));
  }
  std::vector<int> steps;
  steps.reserve(static_cast<std::size_t>(nfe));
  for (int i = 0; i < nfe; ++i) {
    steps.push_back(static_cast<int>(std::lround(static_cast<double>(total_steps) * (nfe - i) / nfe)));
  }
  return steps;
}

namespace {

double literal_gain(const NoiseSchedule& s, int t) {
  const double a = s.signal(t);
  const double sig = s.noise(t);
  return std::sqrt(std::max(a * a - sig * sig, 0.0));
}

void check_steps(const NoiseSchedule& s, std::span<const int> steps) {
  if (steps.empty()) throw DomainError("sampler: empty step list");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    s.check_step(steps[i]);
    if (i > 0 && steps[i] >= steps[i - 1]) throw DomainError("sampler: steps must be strictly decreasing");
  }
}

}  // namespace

Tensor renoise(const Tensor& z_prev, int t, const NoiseSchedule& s, const Tensor& noise, RenoiseMode mode) {
  if (z_prev.shape() != noise.shape()) {
    throw ShapeError("renoise: state " + shape_str(z_prev.shape()) + " vs noise " + shape_str(noise.shape()));
  }
  Tensor out(z_prev.shape());
  if (mode == RenoiseMode::kLiteral) {
    const double g = literal_gain(s, t);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = z_prev[i] + g * noise[i];
  } else {
    const double a = s.signal(t);
    const double sig = s.noise(t);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z_prev[i] + sig * noise[i];
  }
  return out;
}

ad::Var renoise(const ad::Var& z_prev, int t, const NoiseSchedule& s, const ad::Var& noise, RenoiseMode mode) {
  if (z_prev.shape() != noise.shape()) {
    throw ShapeError("renoise: state " + shape_str(z_prev.shape()) + " vs noise " + shape_str(noise.shape()));
  }
  if (mode == RenoiseMode::kLiteral) return z_prev + literal_gain(s, t) * noise;
  return s.signal(t) * z_prev + s.noise(t) * noise;
}

double posterior_variance(const NoiseSchedule& s, int t, int t_prev) {
  if (t_prev == 0) return 0.0;
  const double a = s.alpha_bar(t) / s.alpha_bar(t_prev);
  return (1.0 - s.alpha_bar(t_prev)) / (1.0 - s.alpha_bar(t)) * (1.0 - a);
}

Tensor ancestral_update(const NoiseSchedule& s, const Tensor& z_t, const Tensor& eps_hat, int t, int t_prev,
                        const Tensor* xi) {
  s.check_step(t);
  if (t_prev < 0 || t_prev >= t) {
    throw DomainError("ancestral: target step " + std::to_string(t_prev) + " must lie in 0.." + std::to_string(t - 1));
  }
  if (z_t.shape() != eps_hat.shape()) {
    throw ShapeError("ancestral: z " + shape_str(z_t.shape()) + " vs eps " + shape_str(eps_hat.shape()));
  }
  const double a = s.alpha_bar(t) / s.alpha_bar(t_prev);
  const double b = 1.0 - a;
  const double eps_coef = b / s.noise(t);
  const double inv_sqrt_a = 1.0 / std::sqrt(a);
  const double sd = std::sqrt(posterior_variance(s, t, t_prev));
  const bool inject = t_prev > 0 && xi != nullptr;
  if (inject && xi->shape() != z_t.shape()) throw ShapeError("ancestral: xi shape mismatch");
  Tensor out(z_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (z_t[i] - eps_coef * eps_hat[i]) * inv_sqrt_a;
    if (inject) out[i] += sd * (*xi)[i];
  }
  return out;
}

EpsilonPredictor epsilon_predictor(const Denoiser& model, std::vector<int> labels) {
  if (model.spec().prediction != PredictionMode::kEpsilon) {
    throw Error("ancestral sampling needs an epsilon-mode model, got " +
                std::string(to_string(model.spec().prediction)));
  }
  return [&model, labels = std::move(labels)](const Tensor& z, int t) {
    ad::Tape tape;
    const Binding b = bind(model.params(), tape, false);
    const ad::Var e_c = embed_condition(model, b, labels, tape);
    return denoiser_forward(model, b, tape.constant(z), t, e_c).value();
  };
}

Tensor ancestral_step(const Denoiser& model, const Tensor& z_t, int t, const NoiseSchedule& s,
                      std::span<const int> labels, Rng& rng, int t_prev) {
  if (t_prev < 0) t_prev = t - 1;
  const EpsilonPredictor predict = epsilon_predictor(model, {labels.begin(), labels.end()});
  const Tensor eps = predict(z_t, t);
  Tensor xi;
  if (t_prev > 0) xi = rng.normal_tensor(z_t.shape());
  return ancestral_update(s, z_t, eps, t, t_prev, t_prev > 0 ? &xi : nullptr);
}

Trajectory sample_baseline(const EpsilonPredictor& predict, const NoiseSchedule& s, std::span<const int> steps,
                           std::size_t batch, std::size_t dim, Rng& rng) {
  check_steps(s, steps);
  Trajectory traj;
  Tensor z = rng.normal_tensor({batch, dim});
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const int t = steps[i];
    const int t_prev = i + 1 < steps.size() ? steps[i + 1] : 0;
    TrajectoryEntry e;
    e.t = t;
    e.pre = z;
    e.post = z;
    e.prediction = predict(z, t);
    Tensor xi;
    if (t_prev > 0) xi = rng.normal_tensor(z.shape());
    z = ancestral_update(s, z, e.prediction, t, t_prev, t_prev > 0 ? &xi : nullptr);
    e.output = z;
    traj.entries.push_back(std::move(e));
  }
  traj.final = std::move(z);
  return traj;
}

Trajectory sample_baseline(const Denoiser& model, const NoiseSchedule& s, std::span<const int> steps,
                           std::span<const int> labels, Rng& rng) {
  return sample_baseline(epsilon_predictor(model, {labels.begin(), labels.end()}), s, steps, labels.size(),
                         model.spec().data_dim, rng);
}

Trajectory e2e_trajectory(const Denoiser& model, const Binding& params, const NoiseSchedule& s,
                          std::span<const int> step_list, const ad::Var& e_c, Rng& rng, RenoiseMode mode,
                          ad::Tape& tape) {
  if (static_cast<int>(step_list.size()) > kMaxNfe) {
    throw DomainError("e2e trajectory: NFE " + std::to_string(step_list.size()) + " exceeds the cap of " +
                      std::to_string(kMaxNfe));
  }
  check_steps(s, step_list);
  const std::size_t batch = e_c.shape()[0];
  const Shape shape{batch, model.spec().data_dim};

  Trajectory traj;
  traj.differentiable = true;
  ad::Var state = tape.constant(rng.normal_tensor(shape));
  for (const int t : step_list) {
    const ad::Var noise = tape.constant(rng.normal_tensor(shape));
    const ad::Var post = renoise(state, t, s, noise, mode);
    const ad::Var pred = denoiser_forward(model, params, post, t, e_c);
    ad::Var next = pred;
    if (model.spec().prediction == PredictionMode::kEpsilon) {
      next = (1.0 / s.signal(t)) * (post - s.noise(t) * pred);
    }
    TrajectoryEntry e;
    e.t = t;
    e.pre = state.value();
    e.post = post.value();
    e.prediction = pred.value();
    e.output = next.value();
    e.pre_var = state;
    e.post_var = post;
    e.output_var = next;
    traj.entries.push_back(std::move(e));
    state = next;
  }
  traj.final = state.value();
  traj.final_var = state;
  return traj;
}

Tensor sample_e2e(const Denoiser& model, const NoiseSchedule& s, std::span<const int> step_list,
                  std::span<const int> labels, Rng& rng, RenoiseMode mode) {
  ad::Tape tape;
  const Binding b = bind(model.params(), tape, false);
  const ad::Var e_c = embed_condition(model, b, labels, tape);
  return e2e_trajectory(model, b, s, step_list, e_c, rng, mode, tape).final;
}

namespace {

double rms(const Tensor& t) { return t.size() ? std::sqrt(t.squared_norm() / static_cast<double>(t.size())) : 0.0; }

nlohmann::json rows_json(const Tensor& t) {
  nlohmann::json rows = nlohmann::json::array();
  const std::size_t c = t.cols();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    rows.push_back(std::vector<double>(t.data().begin() + static_cast<std::ptrdiff_t>(r * c),
                                       t.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * c)));
  }
  return rows;
}

}  // namespace

void write_trajectory_jsonl(std::ostream& os, const Trajectory& traj, bool full_vectors) {
  if (full_vectors && !traj.entries.empty() && traj.entries.front().pre.cols() > 8) {
    throw Error("trajectory: full vectors are only written for data_dim <= 8");
  }
  for (const auto& e : traj.entries) {
    nlohmann::json rec = {{"t", e.t},
                          {"pre_rms", rms(e.pre)},
                          {"post_rms", rms(e.post)},
                          {"prediction_rms", rms(e.prediction)},
                          {"output_rms", rms(e.output)}};
    if (full_vectors) {
      rec["pre"] = rows_json(e.pre);
      rec["post"] = rows_json(e.post);
      rec["output"] = rows_json(e.output);
    }
    os << rec.dump() << '\n';
  }
}

}  // namespace trajdiff
