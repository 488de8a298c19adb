#include "trajdiff/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "trajdiff/error.hpp"
#include "trajdiff/rng.hpp"

namespace trajdiff {

std::string_view to_string(PredictionMode mode) {
  switch (mode) {
    case PredictionMode::kEpsilon: return "epsilon";
    case PredictionMode::kX0: return "x0";
    case PredictionMode::kDirectNext: return "direct-next";
  }
  return "?";
}

std::string_view to_string(SharingMode mode) {
  return mode == SharingMode::kShared ? "shared" : "per-step";
}

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kLeakyRelu: return "leaky-relu";
  }
  return "?";
}

PredictionMode parse_prediction_mode(std::string_view text) {
  if (text == "epsilon") return PredictionMode::kEpsilon;
  if (text == "x0") return PredictionMode::kX0;
  if (text == "direct-next") return PredictionMode::kDirectNext;
  throw ConfigError("unknown prediction mode '" + std::string(text) + "' (epsilon|x0|direct-next)");
}

SharingMode parse_sharing_mode(std::string_view text) {
  if (text == "shared") return SharingMode::kShared;
  if (text == "per-step") return SharingMode::kPerStep;
  throw ConfigError("unknown sharing mode '" + std::string(text) + "' (shared|per-step)");
}

Activation parse_activation(std::string_view text) {
  if (text == "tanh") return Activation::kTanh;
  if (text == "relu") return Activation::kRelu;
  if (text == "leaky-relu") return Activation::kLeakyRelu;
  throw ConfigError("unknown activation '" + std::string(text) + "' (tanh|relu|leaky-relu)");
}

Tensor time_embed(int t, std::size_t dim, int total_steps) {
  if (dim == 0 || dim % 2 != 0) throw DomainError("time_embed: dim must be even, got " + std::to_string(dim));
  if (t < 0 || t > total_steps) {
    throw DomainError("time_embed: step " + std::to_string(t) + " outside 0.." + std::to_string(total_steps));
  }
  Tensor out({dim});
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
    out[2 * i] = std::sin(t * freq);
    out[2 * i + 1] = std::cos(t * freq);
  }
  return out;
}

// ---------------------------------------------------------------- ParamStore

void ParamStore::add(std::string name, Tensor value) {
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

const Tensor& ParamStore::get(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return tensors_[i];
  }
  throw Error("params: no tensor named '" + std::string(name) + "'");
}

Tensor& ParamStore::get(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

std::uint64_t ParamStore::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    feed(names_[i].data(), names_[i].size());
    for (std::size_t d : tensors_[i].shape()) feed(&d, sizeof d);
    feed(tensors_[i].data().data(), tensors_[i].size() * sizeof(double));
  }
  return h;
}

double ParamStore::norm() const {
  double s = 0.0;
  for (const auto& t : tensors_) s += t.squared_norm();
  return std::sqrt(s);
}

bool ParamStore::congruent(const ParamStore& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (tensors_[i].shape() != other.tensors_[i].shape()) return false;
  }
  return true;
}

// ----------------------------------------------------------------- helpers

namespace {

double init_gain(Activation act) { return act == Activation::kTanh ? 1.0 : std::sqrt(2.0); }

Tensor kaiming(std::size_t fan_in, std::size_t fan_out, double gain, Rng& rng) {
  Tensor w({fan_in, fan_out});
  const double std = gain / std::sqrt(static_cast<double>(fan_in));
  for (double& v : w.data()) v = std * rng.normal();
  return w;
}

ad::Var activate(const ad::Var& x, Activation act, double slope = 0.01) {
  switch (act) {
    case Activation::kTanh: return ad::tanh(x);
    case Activation::kRelu: return ad::relu(x);
    case Activation::kLeakyRelu: return ad::leaky_relu(x, slope);
  }
  return x;
}

// Affine layer xW + b with a broadcast bias row.
ad::Var affine(const ad::Var& x, const ad::Var& w, const ad::Var& b) { return ad::matmul(x, w) + b; }

std::vector<std::size_t> layer_widths(std::size_t in, std::size_t hidden, std::size_t layers, std::size_t out) {
  std::vector<std::size_t> widths{in};
  for (std::size_t i = 0; i < layers; ++i) widths.push_back(hidden);
  widths.push_back(out);
  return widths;
}

std::size_t mlp_count(const std::vector<std::size_t>& widths) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) n += widths[i] * widths[i + 1] + widths[i + 1];
  return n;
}

}  // namespace

Tensor one_hot(std::span<const int> labels, std::size_t num_labels) {
  Tensor out({labels.size(), num_labels + 1});
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const int l = labels[r];
    if (l == kNullLabel) {
      out.at(r, num_labels) = 1.0;
    } else if (l >= 0 && static_cast<std::size_t>(l) < num_labels) {
      out.at(r, static_cast<std::size_t>(l)) = 1.0;
    } else {
      throw DomainError("label " + std::to_string(l) + " outside 0.." + std::to_string(num_labels - 1));
    }
  }
  return out;
}

Binding bind(const ParamStore& params, ad::Tape& tape, bool trainable, std::string_view prefix) {
  Binding b;
  b.vars.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (trainable) {
      b.vars.push_back(tape.leaf(params[i], std::string(prefix) + params.name(i), &params[i]));
    } else {
      b.vars.push_back(tape.constant(params[i]));
    }
  }
  return b;
}

// ----------------------------------------------------------------- Denoiser

void DenoiserSpec::validate() const {
  if (data_dim == 0) throw ConfigError("model: data_dim must be positive");
  if (hidden == 0) throw ConfigError("model: hidden must be positive");
  if (time_dim == 0 || time_dim % 2 != 0) throw ConfigError("model: time_dim must be even and positive");
  if (cond_dim == 0) throw ConfigError("model: cond_dim must be positive");
  if (num_labels == 0) throw ConfigError("model: num_labels must be positive");
  if (total_steps < 1) throw ConfigError("model: total_steps must be >= 1");
  if (sharing == SharingMode::kPerStep && step_list.empty()) {
    throw ConfigError("model: per-step sharing needs a non-empty step list");
  }
}

std::size_t Denoiser::analytic_parameter_count(const DenoiserSpec& spec) {
  const auto widths = layer_widths(spec.input_dim(), spec.hidden, spec.layers, spec.data_dim);
  return (spec.num_labels + 1) * spec.cond_dim + spec.num_sets() * mlp_count(widths);
}

Denoiser Denoiser::init(const DenoiserSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  ParamStore params;
  Tensor table({spec.num_labels + 1, spec.cond_dim});
  for (double& v : table.data()) v = rng.normal();
  params.add("cond.table", std::move(table));
  const auto widths = layer_widths(spec.input_dim(), spec.hidden, spec.layers, spec.data_dim);
  const double gain = init_gain(spec.activation);
  for (std::size_t k = 0; k < spec.num_sets(); ++k) {
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      const bool output = i + 2 == widths.size();
      Tensor w = kaiming(widths[i], widths[i + 1], output ? 1.0 : gain, rng);
      if (output && spec.zero_init_output) w = Tensor::zeros(w.shape());
      const std::string prefix = "set" + std::to_string(k) + ".";
      params.add(prefix + "w" + std::to_string(i), std::move(w));
      params.add(prefix + "b" + std::to_string(i), Tensor::zeros({widths[i + 1]}));
    }
  }
  return Denoiser(spec, seed, std::move(params));
}

Denoiser load_denoiser_from(const DenoiserSpec& spec, std::uint64_t seed, ParamStore params) {
  spec.validate();
  Denoiser shape_ref = Denoiser::init(spec, 0);
  if (!shape_ref.params().congruent(params) || shape_ref.params().names() != params.names()) {
    throw ShapeError("denoiser: stored parameters do not match the architecture");
  }
  return Denoiser(spec, seed, std::move(params));
}

std::size_t Denoiser::weight_index(std::size_t set, std::size_t layer) const {
  return 1 + set * 2 * (spec_.layers + 1) + 2 * layer;
}

std::size_t Denoiser::set_for_step(int t) const {
  if (spec_.sharing == SharingMode::kShared) return 0;
  const auto& steps = spec_.step_list;
  // Smallest listed step >= t; the list runs in descending trajectory order.
  std::size_t best = 0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i] >= t) best = i;
  }
  return best;
}

Denoiser Denoiser::to_per_step(std::vector<int> step_list) const {
  if (spec_.sharing != SharingMode::kShared) throw Error("to_per_step: model is already per-step");
  DenoiserSpec spec = spec_;
  spec.sharing = SharingMode::kPerStep;
  spec.step_list = std::move(step_list);
  spec.validate();
  ParamStore params;
  params.add("cond.table", params_[0]);
  for (std::size_t k = 0; k < spec.num_sets(); ++k) {
    for (std::size_t i = 0; i <= spec.layers; ++i) {
      const std::string prefix = "set" + std::to_string(k) + ".";
      params.add(prefix + "w" + std::to_string(i), params_[weight_index(0, i)]);
      params.add(prefix + "b" + std::to_string(i), params_[bias_index(0, i)]);
    }
  }
  return Denoiser(spec, seed_, std::move(params));
}

ad::Var embed_condition(const Denoiser& model, const Binding& b, std::span<const int> labels, ad::Tape& tape) {
  if (labels.empty()) throw ShapeError("embed_condition: empty label batch");
  const ad::Var hot = tape.constant(one_hot(labels, model.spec().num_labels));
  return ad::matmul(hot, b[0]);
}

namespace {

ad::Var run_mlp(const Denoiser& model, const Binding& b, std::size_t set, ad::Var h) {
  const auto& spec = model.spec();
  for (std::size_t i = 0; i <= spec.layers; ++i) {
    h = affine(h, b[model.weight_index(set, i)], b[model.bias_index(set, i)]);
    if (i < spec.layers) h = activate(h, spec.activation);
  }
  return h;
}

void check_inputs(const DenoiserSpec& spec, const ad::Var& z, const ad::Var& e_c) {
  if (z.shape().size() != 2 || z.shape()[1] != spec.data_dim) {
    throw ShapeError("denoiser: z has shape " + shape_str(z.shape()) + ", expected [B," +
                     std::to_string(spec.data_dim) + "]");
  }
  if (e_c.shape().size() != 2 || e_c.shape()[0] != z.shape()[0] || e_c.shape()[1] != spec.cond_dim) {
    throw ShapeError("denoiser: e_c has shape " + shape_str(e_c.shape()) + ", expected [" +
                     std::to_string(z.shape()[0]) + "," + std::to_string(spec.cond_dim) + "]");
  }
}

}  // namespace

ad::Var denoiser_forward(const Denoiser& model, const Binding& b, const ad::Var& z, int t, const ad::Var& e_c) {
  const auto& spec = model.spec();
  check_inputs(spec, z, e_c);
  if (t < 1 || t > spec.total_steps) {
    throw DomainError("denoiser: step " + std::to_string(t) + " outside 1.." + std::to_string(spec.total_steps));
  }
  ad::Tape& tape = *z.tape();
  const std::size_t batch = z.shape()[0];
  const ad::Var temb =
      ad::broadcast_to(tape.constant(time_embed(t, spec.time_dim, spec.total_steps)), {batch, spec.time_dim});
  const ad::Var parts[] = {z, temb, e_c};
  return run_mlp(model, b, model.set_for_step(t), ad::concat(parts, 1));
}

ad::Var denoiser_forward(const Denoiser& model, const Binding& b, const ad::Var& z, std::span<const int> t_rows,
                         const ad::Var& e_c) {
  const auto& spec = model.spec();
  check_inputs(spec, z, e_c);
  if (spec.sharing != SharingMode::kShared) {
    throw Error("denoiser: per-row steps require shared parameters");
  }
  const std::size_t batch = z.shape()[0];
  if (t_rows.size() != batch) throw ShapeError("denoiser: one step per row required");
  Tensor temb({batch, spec.time_dim});
  for (std::size_t r = 0; r < batch; ++r) {
    if (t_rows[r] < 1 || t_rows[r] > spec.total_steps) {
      throw DomainError("denoiser: step " + std::to_string(t_rows[r]) + " outside 1.." +
                        std::to_string(spec.total_steps));
    }
    const Tensor e = time_embed(t_rows[r], spec.time_dim, spec.total_steps);
    std::copy(e.data().begin(), e.data().end(), temb.data().begin() + static_cast<std::ptrdiff_t>(r * spec.time_dim));
  }
  const ad::Var parts[] = {z, z.tape()->constant(std::move(temb)), e_c};
  return run_mlp(model, b, 0, ad::concat(parts, 1));
}

// ------------------------------------------------------------ Discriminator

std::size_t Discriminator::analytic_parameter_count(const DiscriminatorSpec& spec) {
  const std::size_t in = spec.data_dim + (spec.use_condition ? spec.cond_dim : 0);
  const std::size_t table = spec.use_condition ? (spec.num_labels + 1) * spec.cond_dim : 0;
  return table + mlp_count(layer_widths(in, spec.hidden, spec.layers, 1));
}

Discriminator Discriminator::init(const DiscriminatorSpec& spec, std::uint64_t seed) {
  if (spec.data_dim == 0 || spec.hidden == 0) throw ConfigError("discriminator: dims must be positive");
  Rng rng(seed);
  Discriminator d;
  d.spec_ = spec;
  if (spec.use_condition) {
    Tensor table({spec.num_labels + 1, spec.cond_dim});
    for (double& v : table.data()) v = rng.normal();
    d.params_.add("cond.table", std::move(table));
  }
  const std::size_t in = spec.data_dim + (spec.use_condition ? spec.cond_dim : 0);
  const auto widths = layer_widths(in, spec.hidden, spec.layers, 1);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool output = i + 2 == widths.size();
    d.params_.add("w" + std::to_string(i), kaiming(widths[i], widths[i + 1], output ? 1.0 : std::sqrt(2.0), rng));
    d.params_.add("b" + std::to_string(i), Tensor::zeros({widths[i + 1]}));
  }
  return d;
}

ad::Var discriminator_forward(const Discriminator& d, const Binding& b, const ad::Var& z,
                              std::span<const int> labels) {
  const auto& spec = d.spec();
  if (z.shape().size() != 2 || z.shape()[1] != spec.data_dim) {
    throw ShapeError("discriminator: z has shape " + shape_str(z.shape()) + ", expected [B," +
                     std::to_string(spec.data_dim) + "]");
  }
  ad::Var h = z;
  std::size_t first = 0;
  if (spec.use_condition) {
    if (labels.size() != z.shape()[0]) throw ShapeError("discriminator: one label per row required");
    const ad::Var hot = z.tape()->constant(one_hot(labels, spec.num_labels));
    const ad::Var parts[] = {z, ad::matmul(hot, b[0])};
    h = ad::concat(parts, 1);
    first = 1;
  }
  for (std::size_t i = 0; i <= spec.layers; ++i) {
    h = affine(h, b[first + 2 * i], b[first + 2 * i + 1]);
    if (i < spec.layers) h = ad::leaky_relu(h, spec.negative_slope);
  }
  return h;
}

// --------------------------------------------------------------- FeatureNet

FeatureNet FeatureNet::init(std::size_t data_dim, std::uint64_t seed, std::size_t hidden, std::size_t features) {
  Rng rng(seed);
  FeatureNet f;
  f.data_dim_ = data_dim;
  f.params_.add("w0", kaiming(data_dim, hidden, std::sqrt(2.0), rng));
  f.params_.add("b0", Tensor::zeros({hidden}));
  f.params_.add("w1", kaiming(hidden, features, std::sqrt(2.0), rng));
  f.params_.add("b1", Tensor::zeros({features}));
  return f;
}

FeatureNet FeatureNet::zeros(std::size_t data_dim, std::size_t hidden, std::size_t features) {
  FeatureNet f;
  f.data_dim_ = data_dim;
  f.params_.add("w0", Tensor::zeros({data_dim, hidden}));
  f.params_.add("b0", Tensor::zeros({hidden}));
  f.params_.add("w1", Tensor::zeros({hidden, features}));
  f.params_.add("b1", Tensor::zeros({features}));
  return f;
}

ad::Var FeatureNet::forward(const ad::Var& x, const Binding& b) const {
  if (x.shape().size() != 2 || x.shape()[1] != data_dim_) {
    throw ShapeError("feature net: input " + shape_str(x.shape()) + ", expected [B," + std::to_string(data_dim_) + "]");
  }
  const ad::Var h = ad::relu(affine(x, b[0], b[1]));
  return affine(h, b[2], b[3]);
}

Tensor FeatureNet::features(const Tensor& x) const {
  ad::Tape tape;
  const Binding b = bind(params_, tape, false);
  return forward(tape.constant(x), b).value();
}

}  // namespace trajdiff
