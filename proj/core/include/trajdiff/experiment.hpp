#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trajdiff/checkpoint.hpp"
#include "trajdiff/config.hpp"
#include "trajdiff/dataset.hpp"
#include "trajdiff/metrics.hpp"

namespace trajdiff {

// Latent-space hooks. The encoder and decoder are the identity at desk scale.
Tensor encode(const Tensor& x);
Tensor decode(const Tensor& z);

// Seed streams split from RunConfig::seed.
enum class SeedStream : std::uint64_t { kData = 1, kModel, kFeatures, kPretrain, kPretrainBatch, kTrain, kTrainBatch, kEval, kDisc, kDiagnose };
std::uint64_t stream_seed(std::uint64_t root, SeedStream stream);

std::vector<int> stratified_labels(std::size_t n, std::size_t components);

// Few-step generation: ancestral sampling for stepwise models, the
// re-noised trajectory for e2e models.
Tensor generate(const Denoiser& model, TrainMode mode, int nfe, RenoiseMode renoise, const NoiseSchedule& s,
                std::span<const int> labels, Rng& rng);

struct Evaluation {
  MetricReport report;
  std::string mode;
  std::optional<double> frechet_lift;

  // Stable JSON (no timing), identical across re-runs.
  std::string to_json() const;
};

Evaluation evaluate_model(const Denoiser& model, TrainMode mode, int nfe, RenoiseMode renoise, const NoiseSchedule& s,
                          const Dataset& data, const EvalSpec& spec, std::uint64_t seed,
                          const FeatureNet* lift = nullptr);
// Re-scores a checkpoint with the dataset, schedule and eval settings of cfg.
Evaluation evaluate_checkpoint(const RunConfig& cfg, const Checkpoint& ckpt);

struct RunRecord {
  std::string run_id;
  std::string run_dir;
  std::string config_text;
  std::string config_hash;
  std::string metrics_path;
  std::string pretrain_checkpoint;  // empty unless this run pretrained
  std::string checkpoint;
  std::string checkpoint_hash;
  std::string final_metrics_path;
  TrainMode mode = TrainMode::kStepwise;
  int nfe = 0;
  std::vector<Evaluation> final_metrics;
  double wall_pretrain = 0.0, wall_train = 0.0, wall_eval = 0.0;
};

struct RunOptions {
  std::string output_root;  // beats TRAJDIFF_OUTPUT_ROOT, which beats run.output_dir
  std::string ledger_path;  // appended to when non-empty
  std::ostream* log = nullptr;
  int log_every = 500;
};

std::string resolve_output_root(const RunConfig& cfg, const std::string& override_root);

// dataset -> optional stepwise pretrain -> configured trainer -> eval.
// Writes config.toml, metrics.jsonl, checkpoints, final_metrics.json and
// record.json under <root>/<run.name>.
RunRecord run_experiment(const RunConfig& cfg, const RunOptions& opt = {});

struct LedgerRow {
  std::string run_id;
  std::string mode;
  int nfe = 0;
  std::uint64_t seed = 0;
  std::size_t n_samples = 0;
  double frechet = 0.0;
  double mmd = 0.0;
  double alignment = 0.0;
};

// Append-only; appends from concurrent runs in one process are serialized.
void append_ledger(const std::string& path, const LedgerRow& row);
std::vector<LedgerRow> read_ledger(const std::string& path);
std::string report_csv(const std::vector<LedgerRow>& rows);
std::string report_text(const std::vector<LedgerRow>& rows);

struct PresetOptions {
  RunOptions run;
  int jobs = 1;
  int seeds = 10;  // table1-analog only
};

struct PresetResult {
  std::string name;
  std::vector<RunRecord> runs;  // in a fixed order independent of jobs
  std::string summary_csv;      // path
  std::string summary_text;
};

const std::vector<std::string>& preset_names();
// table1-analog: per seed, {stepwise@4, stepwise@3} from one pretrain plus
// {e2e@4, e2e@3} fine-tuned from it. table3-ablation: one pretrain, then five
// e2e children (l1, l2, lpips, l2+lpips, l2+lpips+gan).
PresetResult run_preset(std::string_view preset, const RunConfig& base, const PresetOptions& opt = {});

struct DiagnoseResult {
  GapReport gap;
  std::vector<int> leakage_t;
  std::vector<double> leakage_kl;
  std::vector<double> leakage_mi;
};

// Gap probe on the checkpoint's EMA weights (epsilon mode) over
// strided_steps(T, nfe), and the Gaussian-channel leakage curve of the
// dataset's Gaussian fit. Writes gap.csv, gap.json and leakage.csv when
// out_dir is non-empty.
DiagnoseResult diagnose(const RunConfig& cfg, const Checkpoint& ckpt, int nfe, const std::string& out_dir);

}  // namespace trajdiff
