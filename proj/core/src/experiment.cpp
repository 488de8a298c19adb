#include "trajdiff/experiment.hpp"

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>
#include <thread>

#include "trajdiff/error.hpp"
#include "trajdiff/hash.hpp"

namespace trajdiff {

namespace fs = std::filesystem;
using nlohmann::json;

Tensor encode(const Tensor& x) { return x; }
Tensor decode(const Tensor& z) { return z; }

std::uint64_t stream_seed(std::uint64_t root, SeedStream stream) {
  return mix_seed(root, static_cast<std::uint64_t>(stream));
}

std::vector<int> stratified_labels(std::size_t n, std::size_t components) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % components);
  return labels;
}

Tensor generate(const Denoiser& model, TrainMode mode, int nfe, RenoiseMode renoise, const NoiseSchedule& s,
                std::span<const int> labels, Rng& rng) {
  const std::vector<int> steps = strided_steps(s.steps(), nfe);
  if (mode == TrainMode::kStepwise) return decode(sample_baseline(model, s, steps, labels, rng).final);
  return decode(sample_e2e(model, s, steps, labels, rng, renoise));
}

std::string Evaluation::to_json() const {
  json j = {{"mode", mode},
            {"nfe", report.nfe},
            {"seed", report.seed},
            {"n_samples", report.n_samples},
            {"frechet", report.frechet},
            {"mmd", report.mmd},
            {"alignment", report.alignment}};
  if (frechet_lift) j["frechet_lift"] = *frechet_lift;
  return j.dump(2) + "\n";
}

namespace {

Tensor head_rows(const Tensor& t, std::size_t n) {
  n = std::min(n, t.rows());
  return Tensor({n, t.cols()}, std::vector<double>(t.values().begin(),
                                                   t.values().begin() + static_cast<std::ptrdiff_t>(n * t.cols())));
}

NoiseSchedule schedule_of(const RunConfig& cfg) {
  return NoiseSchedule::linear(cfg.schedule.steps, cfg.schedule.beta_start, cfg.schedule.beta_end);
}

Dataset dataset_of(const RunConfig& cfg) { return gen_dataset(cfg.data, stream_seed(cfg.seed, SeedStream::kData)); }

FeatureNet features_of(const RunConfig& cfg) {
  return FeatureNet::init(cfg.data.dim, stream_seed(cfg.seed, SeedStream::kFeatures));
}

}  // namespace

Evaluation evaluate_model(const Denoiser& model, TrainMode mode, int nfe, RenoiseMode renoise, const NoiseSchedule& s,
                          const Dataset& data, const EvalSpec& spec, std::uint64_t seed, const FeatureNet* lift) {
  Rng rng(seed);
  const std::vector<int> labels = stratified_labels(spec.n_samples, data.spec.components);
  const Tensor samples = generate(model, mode, nfe, renoise, s, labels, rng);
  if (!samples.all_finite()) throw NonFiniteError("eval: generated samples are not finite");
  Evaluation ev;
  ev.mode = std::string(to_string(mode));
  ev.report.frechet = frechet_distance(samples, data.samples);
  ev.report.mmd = mmd_rbf(head_rows(samples, spec.mmd_samples), head_rows(data.samples, spec.mmd_samples),
                          spec.bandwidth);
  ev.report.alignment = mode_alignment(samples, labels, data.alignment_reference());
  ev.report.n_samples = spec.n_samples;
  ev.report.nfe = nfe;
  ev.report.seed = seed;
  if (spec.feature_lift && lift) {
    ev.frechet_lift = frechet_distance(lift->features(samples), lift->features(data.samples));
  }
  return ev;
}

Evaluation evaluate_checkpoint(const RunConfig& cfg, const Checkpoint& ckpt) {
  cfg.validate();
  const Dataset data = dataset_of(cfg);
  const FeatureNet lift = features_of(cfg);
  return evaluate_model(ckpt.weights(cfg.eval.use_ema), ckpt.mode, ckpt.nfe, ckpt.renoise, schedule_of(cfg), data,
                        cfg.eval, stream_seed(cfg.seed, SeedStream::kEval), &lift);
}

std::string resolve_output_root(const RunConfig& cfg, const std::string& override_root) {
  if (!override_root.empty()) return override_root;
  if (const char* env = std::getenv("TRAJDIFF_OUTPUT_ROOT"); env && *env) return env;
  return cfg.output_dir;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << text;
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

struct BatchSampler {
  const Dataset& data;
  Rng rng;

  void draw(std::size_t batch, Tensor& x, std::vector<int>& labels) {
    const std::size_t d = data.spec.dim;
    x = Tensor({batch, d});
    labels.resize(batch);
    for (std::size_t r = 0; r < batch; ++r) {
      const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(data.spec.n) - 1));
      labels[r] = data.labels[i];
      for (std::size_t c = 0; c < d; ++c) x.at(r, c) = data.samples.at(i, c);
    }
    x = encode(x);
  }
};

json step_json(const char* phase, const StepMetrics& m) {
  json j = {{"phase", phase},     {"step", m.step},   {"mode", to_string(m.mode)}, {"loss", m.loss},
            {"recon", m.recon},   {"l1", m.l1},       {"l2", m.l2},                {"lpips", m.lpips},
            {"gan", m.gan},       {"grad_norm", m.grad_norm}, {"param_norm", m.param_norm}};
  if (!m.disc_losses.empty()) j["disc_losses"] = m.disc_losses;
  return j;
}

Checkpoint checkpoint_of(const TrainState& st, TrainMode mode, int nfe, RenoiseMode renoise, const std::string& hash) {
  Checkpoint c;
  c.model = st.params;
  c.ema = st.ema;
  c.step = st.step;
  c.mode = mode;
  c.nfe = nfe;
  c.renoise = renoise;
  c.config_hash = hash;
  return c;
}

// Runs `steps` updates; on a non-finite loss the last good state is saved
// before the error propagates.
template <typename StepFn>
void train_loop(TrainState& st, int steps, std::size_t batch, BatchSampler& sampler, const char* phase,
                std::ostream& metrics, const RunOptions& opt, const std::string& run_id, const fs::path& rescue,
                TrainMode mode, int nfe, RenoiseMode renoise, const std::string& hash, int every, StepFn&& step_fn) {
  const auto t0 = Clock::now();
  Tensor x;
  std::vector<int> labels;
  for (int i = 0; i < steps; ++i) {
    sampler.draw(batch, x, labels);
    StepMetrics m;
    try {
      m = step_fn(x, labels);
    } catch (const NonFiniteError& e) {
      save_checkpoint(rescue.string(), checkpoint_of(st, mode, nfe, renoise, hash));
      throw NonFiniteError(std::string(e.what()) + " during " + phase + "; last good checkpoint kept at " +
                           rescue.string());
    }
    json line = step_json(phase, m);
    line["wall_ms"] = 1000.0 * seconds_since(t0);
    metrics << line.dump() << '\n';
    if (every > 0 && (i + 1) % every == 0) {
      const fs::path p = rescue.parent_path() / (std::string(phase) + ".step" + std::to_string(i + 1) + ".ckpt.json");
      save_checkpoint(p.string(), checkpoint_of(st, mode, nfe, renoise, hash));
    }
    if (opt.log && opt.log_every > 0 && (i + 1) % opt.log_every == 0) {
      *opt.log << run_id << ' ' << phase << " step " << (i + 1) << '/' << steps << " loss " << m.loss << std::endl;
    }
  }
}

}  // namespace

RunRecord run_experiment(const RunConfig& cfg, const RunOptions& opt) {
  cfg.validate();
  const auto t_start = Clock::now();
  RunRecord rec;
  rec.run_id = cfg.name;
  rec.mode = cfg.train.mode;
  rec.nfe = cfg.train.nfe;
  rec.config_text = serialize_config(cfg);
  rec.config_hash = git_blob_hash(rec.config_text);

  const fs::path dir = fs::path(resolve_output_root(cfg, opt.output_root)) / cfg.name;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run directory '" + dir.string() + "': " + ec.message());
  rec.run_dir = dir.string();
  write_text(dir / "config.toml", rec.config_text);

  const Dataset data = dataset_of(cfg);
  const NoiseSchedule s = schedule_of(cfg);
  const FeatureNet features = features_of(cfg);

  rec.metrics_path = (dir / "metrics.jsonl").string();
  std::ofstream metrics(rec.metrics_path, std::ios::binary);
  if (!metrics) throw IoError("cannot open '" + rec.metrics_path + "' for writing");

  // Initial weights.
  Denoiser init;
  const auto t_pre = Clock::now();
  switch (cfg.train.init) {
    case InitMode::kRandom:
      init = Denoiser::init(cfg.resolved_model(), stream_seed(cfg.seed, SeedStream::kModel));
      break;
    case InitMode::kFromCheckpoint: {
      const Checkpoint ck = load_checkpoint(cfg.train.checkpoint);
      init = ck.ema;
      const auto& sp = init.spec();
      if (sp.data_dim != cfg.data.dim || sp.num_labels != cfg.data.components || sp.total_steps != cfg.schedule.steps) {
        throw ConfigError("train.checkpoint: '" + cfg.train.checkpoint + "' does not match data/schedule settings");
      }
      if (sp.sharing != SharingMode::kShared) throw ConfigError("train.checkpoint: expected a shared-parameter model");
      break;
    }
    case InitMode::kPretrain: {
      TrainConfig pc;
      pc.mode = TrainMode::kStepwise;
      pc.adam = cfg.pretrain.adam;
      pc.tau = cfg.pretrain.tau;
      pc.batch = cfg.pretrain.batch;
      pc.steps = cfg.pretrain.steps;
      TrainState st = TrainState::create(Denoiser::init(cfg.resolved_model(), stream_seed(cfg.seed, SeedStream::kModel)),
                                         stream_seed(cfg.seed, SeedStream::kPretrain));
      BatchSampler sampler{data, Rng(stream_seed(cfg.seed, SeedStream::kPretrainBatch))};
      const fs::path ckpt_path = dir / "pretrain.ckpt.json";
      train_loop(st, pc.steps, static_cast<std::size_t>(pc.batch), sampler, "pretrain", metrics, opt, cfg.name,
                 ckpt_path, TrainMode::kStepwise, cfg.train.nfe, cfg.train.renoise, rec.config_hash, 0,
                 [&](const Tensor& x, const std::vector<int>& l) { return train_step_stepwise(st, x, l, s, pc); });
      save_checkpoint(ckpt_path.string(),
                      checkpoint_of(st, TrainMode::kStepwise, cfg.train.nfe, cfg.train.renoise, rec.config_hash));
      rec.pretrain_checkpoint = ckpt_path.string();
      init = st.ema;
      break;
    }
  }
  rec.wall_pretrain = seconds_since(t_pre);

  if (cfg.train.mode == TrainMode::kE2E && cfg.train.sharing == SharingMode::kPerStep) {
    init = init.to_per_step(strided_steps(cfg.schedule.steps, cfg.train.nfe));
  }

  // Configured trainer.
  const auto t_train = Clock::now();
  std::optional<Discriminator> disc;
  if (cfg.train.mode == TrainMode::kE2E && cfg.train.loss.gan > 0.0) {
    disc = Discriminator::init(cfg.resolved_disc(), stream_seed(cfg.seed, SeedStream::kDisc));
  }
  TrainState st = TrainState::create(init, stream_seed(cfg.seed, SeedStream::kTrain), disc);
  BatchSampler sampler{data, Rng(stream_seed(cfg.seed, SeedStream::kTrainBatch))};
  const fs::path ckpt_path = dir / "model.ckpt.json";
  const auto batch = static_cast<std::size_t>(cfg.train.batch);
  const char* phase = cfg.train.mode == TrainMode::kStepwise ? "stepwise" : "e2e";
  train_loop(st, cfg.train.steps, batch, sampler, phase, metrics, opt, cfg.name, ckpt_path, cfg.train.mode,
             cfg.train.nfe, cfg.train.renoise, rec.config_hash, cfg.train.checkpoint_every,
             [&](const Tensor& x, const std::vector<int>& l) {
               if (cfg.train.mode == TrainMode::kStepwise) return train_step_stepwise(st, x, l, s, cfg.train);
               if (cfg.train.loss.gan > 0.0) return adversarial_round(st, x, l, s, cfg.train, features);
               return train_step_e2e(st, x, l, s, cfg.train, features);
             });
  metrics.close();
  const Checkpoint final_ckpt = checkpoint_of(st, cfg.train.mode, cfg.train.nfe, cfg.train.renoise, rec.config_hash);
  save_checkpoint(ckpt_path.string(), final_ckpt);
  rec.checkpoint = ckpt_path.string();
  rec.checkpoint_hash = file_sha1(rec.checkpoint);
  rec.wall_train = seconds_since(t_train);

  const auto t_eval = Clock::now();
  const Evaluation ev = evaluate_model(final_ckpt.weights(cfg.eval.use_ema), cfg.train.mode, cfg.train.nfe,
                                       cfg.train.renoise, s, data, cfg.eval, stream_seed(cfg.seed, SeedStream::kEval),
                                       &features);
  rec.final_metrics.push_back(ev);
  rec.final_metrics_path = (dir / "final_metrics.json").string();
  write_text(rec.final_metrics_path, ev.to_json());
  rec.wall_eval = seconds_since(t_eval);

  if (!opt.ledger_path.empty()) {
    append_ledger(opt.ledger_path, {rec.run_id, ev.mode, ev.report.nfe, cfg.seed, ev.report.n_samples,
                                    ev.report.frechet, ev.report.mmd, ev.report.alignment});
  }

  const json record = {{"run_id", rec.run_id},
                       {"config_hash", rec.config_hash},
                       {"config", rec.config_text},
                       {"metrics", rec.metrics_path},
                       {"checkpoints", {{"pretrain", rec.pretrain_checkpoint}, {"final", rec.checkpoint}}},
                       {"checkpoint_sha1", rec.checkpoint_hash},
                       {"final_metrics", json::parse(ev.to_json())},
                       {"wall_seconds",
                        {{"pretrain", rec.wall_pretrain},
                         {"train", rec.wall_train},
                         {"eval", rec.wall_eval},
                         {"total", seconds_since(t_start)}}}};
  write_text(dir / "record.json", record.dump(2) + "\n");
  return rec;
}

namespace {

std::mutex& ledger_mutex() {
  static std::mutex m;
  return m;
}

constexpr const char* kLedgerHeader = "run_id,mode,nfe,seed,n_samples,frechet,mmd,alignment";

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

void append_ledger(const std::string& path, const LedgerRow& row) {
  if (row.run_id.find(',') != std::string::npos) throw Error("ledger: run id must not contain ','");
  std::lock_guard<std::mutex> lock(ledger_mutex());
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream os(path, std::ios::app | std::ios::binary);
  if (!os) throw IoError("ledger: cannot open '" + path + "' for appending");
  if (fresh) os << kLedgerHeader << '\n';
  os << row.run_id << ',' << row.mode << ',' << row.nfe << ',' << row.seed << ',' << row.n_samples << ','
     << fmt17(row.frechet) << ',' << fmt17(row.mmd) << ',' << fmt17(row.alignment) << '\n';
  if (!os) throw IoError("ledger: append failed for '" + path + "'");
}

std::vector<LedgerRow> read_ledger(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("ledger: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line) || split_csv(line) != split_csv(kLedgerHeader)) {
    throw IoError("ledger: '" + path + "' has an unexpected header");
  }
  std::vector<LedgerRow> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 8) throw IoError("ledger: line " + std::to_string(line_no) + " has " + std::to_string(f.size()) + " fields");
    try {
      rows.push_back({f[0], f[1], std::stoi(f[2]), std::stoull(f[3]), std::stoull(f[4]), std::stod(f[5]),
                      std::stod(f[6]), std::stod(f[7])});
    } catch (const std::exception&) {
      throw IoError("ledger: line " + std::to_string(line_no) + " is malformed");
    }
  }
  return rows;
}

std::string report_csv(const std::vector<LedgerRow>& rows) {
  std::ostringstream os;
  os << "run_id,mode,nfe,seed,n_samples,frechet,mmd,alignment\n";
  for (const auto& r : rows) {
    os << r.run_id << ',' << r.mode << ',' << r.nfe << ',' << r.seed << ',' << r.n_samples << ',' << fmt17(r.frechet)
       << ',' << fmt17(r.mmd) << ',' << fmt17(r.alignment) << '\n';
  }
  return os.str();
}

std::string report_text(const std::vector<LedgerRow>& rows) {
  const std::vector<std::string> head = {"run_id", "mode", "nfe", "seed", "n_samples", "frechet", "mmd", "alignment"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    char f[32], m[32], a[32];
    std::snprintf(f, sizeof f, "%.4f", r.frechet);
    std::snprintf(m, sizeof m, "%.5f", r.mmd);
    std::snprintf(a, sizeof a, "%.4f", r.alignment);
    cells.push_back({r.run_id, r.mode, std::to_string(r.nfe), std::to_string(r.seed), std::to_string(r.n_samples), f, m, a});
  }
  std::vector<std::size_t> width(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    width[c] = head[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      // Text columns left-aligned, numbers right-aligned.
      if (c < 2) {
        os << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      } else {
        os << std::right << std::setw(static_cast<int>(width[c])) << row[c];
      }
      os << (c + 1 < row.size() ? "  " : "\n");
    }
  };
  emit(head);
  std::vector<std::string> rule;
  for (auto w : width) rule.push_back(std::string(w, '-'));
  emit(rule);
  for (const auto& row : cells) emit(row);
  return os.str();
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"table1-analog", "table3-ablation"};
  return names;
}

namespace {

// Runs fn(0..n-1) on up to `jobs` threads; the first exception wins.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

RunConfig child(const RunConfig& base, const std::string& name, TrainMode mode, int nfe) {
  RunConfig c = base;
  c.name = name;
  c.train.mode = mode;
  c.train.nfe = nfe;
  return c;
}

RunConfig baseline_child(const RunConfig& base, const std::string& name, int nfe) {
  RunConfig c = child(base, name, TrainMode::kStepwise, nfe);
  c.train.steps = 0;
  c.train.init = InitMode::kPretrain;
  c.train.checkpoint.clear();
  c.train.sharing = SharingMode::kShared;
  return c;
}

RunConfig from_checkpoint(RunConfig c, const std::string& ckpt) {
  c.train.init = InitMode::kFromCheckpoint;
  c.train.checkpoint = ckpt;
  return c;
}

std::string absolute(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

PresetResult run_table1(const RunConfig& base, const PresetOptions& opt) {
  if (opt.seeds < 1) throw ConfigError("preset: seeds must be >= 1");
  PresetResult res;
  res.name = "table1-analog";
  const auto seeds = static_cast<std::size_t>(opt.seeds);
  std::vector<std::array<RunRecord, 4>> per_seed(seeds);
  parallel_for(seeds, opt.jobs, [&](std::size_t k) {
    const std::string prefix = base.name + "/seed" + std::to_string(k);
    RunConfig b = base;
    b.seed = mix_seed(base.seed, k);
    auto& out = per_seed[k];
    out[0] = run_experiment(baseline_child(b, prefix + "/stepwise-nfe4", 4), opt.run);
    const std::string ckpt = absolute(out[0].pretrain_checkpoint);
    out[1] = run_experiment(from_checkpoint(child(b, prefix + "/e2e-nfe4", TrainMode::kE2E, 4), ckpt), opt.run);
    RunConfig s3 = from_checkpoint(baseline_child(b, prefix + "/stepwise-nfe3", 3), ckpt);
    out[2] = run_experiment(s3, opt.run);
    out[3] = run_experiment(from_checkpoint(child(b, prefix + "/e2e-nfe3", TrainMode::kE2E, 3), ckpt), opt.run);
  });

  std::ostringstream csv;
  csv << "seed,nfe,stepwise_frechet,e2e_frechet,e2e_wins\n";
  std::array<int, 2> wins{0, 0};
  for (std::size_t k = 0; k < seeds; ++k) {
    for (int j = 0; j < 2; ++j) {
      const auto& sw = per_seed[k][2 * j].final_metrics.front().report;
      const auto& e2e = per_seed[k][2 * j + 1].final_metrics.front().report;
      const bool win = e2e.frechet < sw.frechet;
      wins[j] += win ? 1 : 0;
      csv << k << ',' << sw.nfe << ',' << fmt17(sw.frechet) << ',' << fmt17(e2e.frechet) << ',' << (win ? 1 : 0) << '\n';
    }
    for (auto& r : per_seed[k]) res.runs.push_back(std::move(r));
  }
  const fs::path root = fs::path(resolve_output_root(base, opt.run.output_root)) / base.name;
  fs::create_directories(root);
  res.summary_csv = (root / "table1.csv").string();
  write_text(res.summary_csv, csv.str());
  std::ostringstream text;
  text << "e2e beats stepwise at NFE 4 in " << wins[0] << "/" << seeds << " seeds\n"
       << "e2e beats stepwise at NFE 3 in " << wins[1] << "/" << seeds << " seeds\n";
  res.summary_text = text.str();
  write_text(root / "table1.txt", res.summary_text);
  return res;
}

PresetResult run_table3(const RunConfig& base, const PresetOptions& opt) {
  PresetResult res;
  res.name = "table3-ablation";
  const int nfe = base.train.nfe;
  RunRecord pre = run_experiment(baseline_child(base, base.name + "/pretrain", nfe), opt.run);
  const std::string ckpt = absolute(pre.pretrain_checkpoint);
  const std::vector<std::string> losses = {"l1", "l2", "lpips", "l2+lpips", "l2+lpips+gan"};
  std::vector<RunRecord> rows(losses.size());
  parallel_for(losses.size(), opt.jobs, [&](std::size_t i) {
    RunConfig c = from_checkpoint(child(base, base.name + "/" + losses[i], TrainMode::kE2E, nfe), ckpt);
    c.train.loss = loss_preset(losses[i]);
    rows[i] = run_experiment(c, opt.run);
  });

  std::ostringstream csv;
  csv << "loss,frechet,mmd,alignment\n";
  std::ostringstream text;
  text << std::left << std::setw(14) << "loss" << std::right << std::setw(12) << "frechet" << std::setw(12) << "mmd"
       << std::setw(12) << "alignment" << '\n';
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const auto& r = rows[i].final_metrics.front().report;
    csv << losses[i] << ',' << fmt17(r.frechet) << ',' << fmt17(r.mmd) << ',' << fmt17(r.alignment) << '\n';
    text << std::left << std::setw(14) << losses[i] << std::right << std::fixed << std::setprecision(4)
         << std::setw(12) << r.frechet << std::setw(12) << r.mmd << std::setw(12) << r.alignment << '\n';
  }
  const fs::path root = fs::path(resolve_output_root(base, opt.run.output_root)) / base.name;
  res.summary_csv = (root / "ablation.csv").string();
  write_text(res.summary_csv, csv.str());
  res.summary_text = text.str();
  write_text(root / "ablation.txt", res.summary_text);
  res.runs.push_back(std::move(pre));
  for (auto& r : rows) res.runs.push_back(std::move(r));
  return res;
}

}  // namespace

PresetResult run_preset(std::string_view preset, const RunConfig& base, const PresetOptions& opt) {
  base.validate();
  if (preset == "table1-analog") return run_table1(base, opt);
  if (preset == "table3-ablation") return run_table3(base, opt);
  throw ConfigError("unknown preset '" + std::string(preset) + "' (table1-analog|table3-ablation)");
}

DiagnoseResult diagnose(const RunConfig& cfg, const Checkpoint& ckpt, int nfe, const std::string& out_dir) {
  cfg.validate();
  const Dataset data = dataset_of(cfg);
  const NoiseSchedule s = schedule_of(cfg);
  DiagnoseResult res;
  const std::vector<int> steps = strided_steps(s.steps(), nfe);
  res.gap = gap_probe(ckpt.ema, s, data.samples, data.labels, steps, stream_seed(cfg.seed, SeedStream::kDiagnose));

  const GaussianFit fit = fit_gaussian(data.samples);
  for (int t = 1; t <= s.steps(); ++t) {
    res.leakage_t.push_back(t);
    res.leakage_kl.push_back(leakage_kl(s, fit.mean, fit.cov, t));
    res.leakage_mi.push_back(leakage_mutual_information(s, fit.cov, t));
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ostringstream gap;
    gap << "t,teacher_forced\n";
    for (std::size_t i = 0; i < res.gap.steps.size(); ++i) {
      gap << res.gap.steps[i] << ',' << fmt17(res.gap.teacher_forced[i]) << '\n';
    }
    write_text(fs::path(out_dir) / "gap.csv", gap.str());
    const json g = {{"protocol", res.gap.protocol},
                    {"steps", res.gap.steps},
                    {"teacher_forced", res.gap.teacher_forced},
                    {"mean_teacher_forced", res.gap.mean_teacher_forced()},
                    {"rollout", res.gap.rollout},
                    {"gap", res.gap.gap},
                    {"n", res.gap.n}};
    write_text(fs::path(out_dir) / "gap.json", g.dump(2) + "\n");
    std::ostringstream leak;
    leak << "t,kl,mi\n";
    for (std::size_t i = 0; i < res.leakage_t.size(); ++i) {
      leak << res.leakage_t[i] << ',' << fmt17(res.leakage_kl[i]) << ',' << fmt17(res.leakage_mi[i]) << '\n';
    }
    write_text(fs::path(out_dir) / "leakage.csv", leak.str());
  }
  return res;
}

}  // namespace trajdiff
