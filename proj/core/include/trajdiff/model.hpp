#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trajdiff/tape.hpp"
#include "trajdiff/tensor.hpp"

namespace trajdiff {

enum class PredictionMode { kEpsilon, kX0, kDirectNext };
enum class SharingMode { kShared, kPerStep };
enum class Activation { kTanh, kRelu, kLeakyRelu };

std::string_view to_string(PredictionMode mode);
std::string_view to_string(SharingMode mode);
std::string_view to_string(Activation act);
PredictionMode parse_prediction_mode(std::string_view text);
SharingMode parse_sharing_mode(std::string_view text);
Activation parse_activation(std::string_view text);

// Label value selecting the reserved unconditional row of a CondEmbedding.
inline constexpr int kNullLabel = -1;

// Sinusoidal embedding: (sin(t / 10000^(2i/dim)), cos(...)) for i < dim/2,
// interleaved. t = 0 is accepted as a probe value.
Tensor time_embed(int t, std::size_t dim, int total_steps);

// Ordered named tensors. Order is the serialization and optimizer order.
class ParamStore {
 public:
  void add(std::string name, Tensor value);
  std::size_t size() const { return tensors_.size(); }
  std::size_t scalar_count() const;

  const std::string& name(std::size_t i) const { return names_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);

  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<std::string>& names() const { return names_; }

  // FNV-1a over names, shapes and raw value bytes.
  std::uint64_t hash() const;
  double norm() const;
  bool congruent(const ParamStore& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

struct DenoiserSpec {
  std::size_t data_dim = 2;
  std::size_t hidden = 128;
  std::size_t layers = 3;  // hidden layers
  std::size_t time_dim = 16;
  std::size_t cond_dim = 16;
  std::size_t num_labels = 1;  // K; the table holds K + 1 rows, the last is the null label
  int total_steps = 1000;
  Activation activation = Activation::kTanh;
  PredictionMode prediction = PredictionMode::kDirectNext;
  SharingMode sharing = SharingMode::kShared;
  // Per-step mode: one parameter set per entry, in trajectory order.
  std::vector<int> step_list;
  bool zero_init_output = false;

  std::size_t input_dim() const { return data_dim + time_dim + cond_dim; }
  std::size_t num_sets() const { return sharing == SharingMode::kShared ? 1 : step_list.size(); }
  void validate() const;
  friend bool operator==(const DenoiserSpec&, const DenoiserSpec&) = default;
};

// Conditional denoiser G(z, e_c, t): an MLP over concat(z, time_embed(t), e_c).
// Parameter layout: "cond.table" first (shared by all sets), then for each set
// k the pairs "set<k>.w<i>", "set<k>.b<i>" for i = 0..layers.
class Denoiser {
 public:
  Denoiser() = default;
  static Denoiser init(const DenoiserSpec& spec, std::uint64_t seed);

  const DenoiserSpec& spec() const { return spec_; }
  DenoiserSpec& spec() { return spec_; }
  std::uint64_t seed() const { return seed_; }
  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }

  std::size_t parameter_count() const { return params_.scalar_count(); }
  static std::size_t analytic_parameter_count(const DenoiserSpec& spec);

  // Parameter set used at diffusion step t.
  std::size_t set_for_step(int t) const;
  std::size_t weight_index(std::size_t set, std::size_t layer) const;
  std::size_t bias_index(std::size_t set, std::size_t layer) const { return weight_index(set, layer) + 1; }

  // Copy of a shared-mode model with one tied parameter set per listed step.
  Denoiser to_per_step(std::vector<int> step_list) const;

 private:
  Denoiser(DenoiserSpec spec, std::uint64_t seed, ParamStore params)
      : spec_(std::move(spec)), seed_(seed), params_(std::move(params)) {}
  friend Denoiser load_denoiser_from(const DenoiserSpec&, std::uint64_t, ParamStore);

  DenoiserSpec spec_;
  std::uint64_t seed_ = 0;
  ParamStore params_;
};

// Rebuilds a Denoiser from deserialized parts; validates shapes against spec.
Denoiser load_denoiser_from(const DenoiserSpec& spec, std::uint64_t seed, ParamStore params);

// Parameters registered on a tape, parallel to ParamStore order.
struct Binding {
  std::vector<ad::Var> vars;
  const ad::Var& operator[](std::size_t i) const { return vars[i]; }
};

// Registers every parameter as a leaf (trainable) or a constant.
Binding bind(const ParamStore& params, ad::Tape& tape, bool trainable, std::string_view prefix = "");

// e_c rows for a batch of labels: one-hot(labels) x cond.table.
ad::Var embed_condition(const Denoiser& model, const Binding& b, std::span<const int> labels, ad::Tape& tape);

// Network output at a single step t for every row of z.
ad::Var denoiser_forward(const Denoiser& model, const Binding& b, const ad::Var& z, int t,
                         const ad::Var& e_c);
// Network output with a per-row step (shared mode only).
ad::Var denoiser_forward(const Denoiser& model, const Binding& b, const ad::Var& z,
                         std::span<const int> t_rows, const ad::Var& e_c);

struct DiscriminatorSpec {
  std::size_t data_dim = 2;
  std::size_t hidden = 64;
  std::size_t layers = 2;
  double negative_slope = 0.2;
  bool use_condition = false;
  std::size_t cond_dim = 16;
  std::size_t num_labels = 1;
  friend bool operator==(const DiscriminatorSpec&, const DiscriminatorSpec&) = default;
};

// MLP critic producing one logit per row. With use_condition, "cond.table" is
// first and its embedding is concatenated to the input.
class Discriminator {
 public:
  Discriminator() = default;
  static Discriminator init(const DiscriminatorSpec& spec, std::uint64_t seed);
  const DiscriminatorSpec& spec() const { return spec_; }
  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }
  std::size_t parameter_count() const { return params_.scalar_count(); }
  static std::size_t analytic_parameter_count(const DiscriminatorSpec& spec);

 private:
  DiscriminatorSpec spec_;
  ParamStore params_;
};

// Logits of shape [B, 1]. `labels` is ignored unless the spec is conditional.
ad::Var discriminator_forward(const Discriminator& d, const Binding& b, const ad::Var& z,
                              std::span<const int> labels = {});

// Frozen random feature lift: data_dim -> hidden (relu) -> features.
// Weights ~ N(0, 2 / fan_in), biases zero. Always bound as constants.
class FeatureNet {
 public:
  FeatureNet() = default;
  static FeatureNet init(std::size_t data_dim, std::uint64_t seed, std::size_t hidden = 64,
                         std::size_t features = 64);
  // Zero weights; every input maps to the same features.
  static FeatureNet zeros(std::size_t data_dim, std::size_t hidden = 64, std::size_t features = 64);

  const ParamStore& params() const { return params_; }
  std::size_t data_dim() const { return data_dim_; }
  std::uint64_t hash() const { return params_.hash(); }

  ad::Var forward(const ad::Var& x, const Binding& b) const;
  Tensor features(const Tensor& x) const;  // off-tape convenience

 private:
  std::size_t data_dim_ = 0;
  ParamStore params_;
};

// One-hot rows for labels over num_labels + 1 columns (last = null label).
Tensor one_hot(std::span<const int> labels, std::size_t num_labels);

}  // namespace trajdiff
