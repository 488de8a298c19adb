#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "trajdiff/dataset.hpp"
#include "trajdiff/model.hpp"
#include "trajdiff/training.hpp"

namespace trajdiff {

struct ScheduleSpec {
  int steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  friend bool operator==(const ScheduleSpec&, const ScheduleSpec&) = default;
};

// Stepwise pretraining used when train.init = pretrain.
struct PretrainSpec {
  int steps = 3000;
  int batch = 64;
  AdamHParams adam;
  double tau = 0.95;
  friend bool operator==(const PretrainSpec&, const PretrainSpec&) = default;
};

struct EvalSpec {
  std::size_t n_samples = 2000;
  std::size_t mmd_samples = 1000;  // rows from each side fed to the O(n^2) MMD
  double bandwidth = 1.0;
  bool use_ema = true;
  bool feature_lift = false;  // also report Frechet distance in FeatureNet space
  friend bool operator==(const EvalSpec&, const EvalSpec&) = default;
};

struct RunConfig {
  std::string name = "run";
  std::uint64_t seed = 0;
  std::string output_dir = "runs";
  DatasetSpec data;
  ScheduleSpec schedule;
  DenoiserSpec model = default_model();
  DiscriminatorSpec disc;
  PretrainSpec pretrain;
  TrainConfig train;
  EvalSpec eval;

  static DenoiserSpec default_model();
  // Model spec with the fields derived from data and schedule filled in.
  DenoiserSpec resolved_model() const;
  DiscriminatorSpec resolved_disc() const;
  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Canonical text form: every field, fixed order, doubles as %.17g.
std::string serialize_config(const RunConfig& cfg);
// Flat "[section]" + "key = value" text. Missing keys keep defaults;
// unknown keys and bad values throw ConfigError naming "section.key".
// "loss.preset" is accepted on input and expands to the four weights.
RunConfig parse_config(std::string_view text);
RunConfig load_config_file(const std::string& path);
void save_config_file(const std::string& path, const RunConfig& cfg);

// git blob hash of the canonical text.
std::string config_hash(const RunConfig& cfg);

}  // namespace trajdiff
