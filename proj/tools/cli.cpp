#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <ostream>
#include <sstream>

#include "trajdiff/checkpoint.hpp"
#include "trajdiff/config.hpp"
#include "trajdiff/dataset.hpp"
#include "trajdiff/error.hpp"
#include "trajdiff/experiment.hpp"
#include "trajdiff/rng.hpp"

namespace trajdiff::cli {
namespace {

struct GenDataArgs {
  std::string kind = "gaussian-ring";
  std::size_t k = 8, n = 8000, dim = 2;
  double radius = 4.0, std = 0.3;
  std::uint64_t seed = 0;
  std::string out;
};

struct TrainArgs {
  std::string config, output_root, ledger, preset;
  int jobs = 1, seeds = 10;
  bool quiet = false;
};

struct SampleArgs {
  std::string checkpoint, config, out, trajectory;
  std::size_t n = 1000;
  int nfe = 0;
  std::uint64_t seed = 0;
  bool live = false;
};

struct EvalArgs {
  std::string checkpoint, config, out, ledger, run_id;
};

struct DiagnoseArgs {
  std::string checkpoint, config, out_dir;
  int nfe = 0;
};

struct ReportArgs {
  std::string ledger, out;
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << text;
  if (!os) throw IoError("write failed for '" + path + "'");
}

int gen_data(const GenDataArgs& a, std::ostream& out) {
  DatasetSpec spec;
  spec.kind = parse_dataset_kind(a.kind);
  spec.components = a.k;
  spec.n = a.n;
  spec.dim = a.dim;
  spec.radius = a.radius;
  spec.std = a.std;
  const Dataset d = gen_dataset(spec, a.seed);
  write_dataset_file(a.out, d);
  out << "wrote " << d.spec.n << " x " << d.spec.dim << " " << to_string(d.spec.kind) << " samples to " << a.out
      << '\n';
  return 0;
}

int train(const TrainArgs& a, std::ostream& out) {
  const RunConfig cfg = load_config_file(a.config);
  PresetOptions po;
  po.run.output_root = a.output_root;
  po.run.ledger_path = a.ledger;
  po.run.log = a.quiet ? nullptr : &std::cerr;
  po.jobs = a.jobs;
  po.seeds = a.seeds;
  if (!a.preset.empty()) {
    const PresetResult res = run_preset(a.preset, cfg, po);
    out << res.summary_text << "summary: " << res.summary_csv << '\n';
    return 0;
  }
  const RunRecord rec = run_experiment(cfg, po.run);
  out << rec.final_metrics.front().to_json() << "record: " << rec.run_dir << "/record.json\n";
  return 0;
}

RunConfig optional_config(const std::string& path) { return path.empty() ? RunConfig{} : load_config_file(path); }

NoiseSchedule schedule_for(const RunConfig& cfg, const Checkpoint& ck) {
  if (ck.model.spec().total_steps != cfg.schedule.steps) {
    throw ConfigError("schedule.steps: config has " + std::to_string(cfg.schedule.steps) + ", checkpoint was trained with " +
                      std::to_string(ck.model.spec().total_steps));
  }
  return NoiseSchedule::linear(cfg.schedule.steps, cfg.schedule.beta_start, cfg.schedule.beta_end);
}

int sample(const SampleArgs& a, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  RunConfig cfg = optional_config(a.config);
  if (a.config.empty()) cfg.schedule.steps = ck.model.spec().total_steps;
  const NoiseSchedule s = schedule_for(cfg, ck);
  const Denoiser& model = ck.weights(!a.live);
  const int nfe = a.nfe > 0 ? a.nfe : ck.nfe;
  const std::vector<int> labels = stratified_labels(a.n, model.spec().num_labels);
  const std::vector<int> steps = strided_steps(s.steps(), nfe);
  Rng rng(a.seed);

  Trajectory traj;
  if (ck.mode == TrainMode::kStepwise) {
    traj = sample_baseline(model, s, steps, labels, rng);
  } else {
    ad::Tape tape;
    const Binding b = bind(model.params(), tape, false);
    const ad::Var e_c = embed_condition(model, b, labels, tape);
    traj = e2e_trajectory(model, b, s, steps, e_c, rng, ck.renoise, tape);
  }
  const Tensor x = decode(traj.final);

  std::ostringstream csv;
  csv << "label";
  for (std::size_t c = 0; c < x.cols(); ++c) csv << ",x" << c;
  csv << '\n';
  for (std::size_t r = 0; r < x.rows(); ++r) {
    csv << labels[r];
    for (std::size_t c = 0; c < x.cols(); ++c) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", x.at(r, c));
      csv << ',' << buf;
    }
    csv << '\n';
  }
  write_file(a.out, csv.str());
  if (!a.trajectory.empty()) {
    std::ofstream os(a.trajectory, std::ios::binary);
    if (!os) throw IoError("cannot open '" + a.trajectory + "' for writing");
    write_trajectory_jsonl(os, traj, x.cols() <= 8);
  }
  out << "wrote " << x.rows() << " samples (" << to_string(ck.mode) << ", NFE " << nfe << ") to " << a.out << '\n';
  return 0;
}

int eval(const EvalArgs& a, std::ostream& out) {
  const RunConfig cfg = load_config_file(a.config);
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  schedule_for(cfg, ck);
  const Evaluation ev = evaluate_checkpoint(cfg, ck);
  const std::string text = ev.to_json();
  if (a.out.empty()) {
    out << text;
  } else {
    write_file(a.out, text);
    out << "wrote " << a.out << '\n';
  }
  if (!a.ledger.empty()) {
    append_ledger(a.ledger, {a.run_id.empty() ? cfg.name : a.run_id, ev.mode, ev.report.nfe, cfg.seed,
                             ev.report.n_samples, ev.report.frechet, ev.report.mmd, ev.report.alignment});
  }
  return 0;
}

int diagnose_cmd(const DiagnoseArgs& a, std::ostream& out) {
  const RunConfig cfg = load_config_file(a.config);
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  schedule_for(cfg, ck);
  const DiagnoseResult res = diagnose(cfg, ck, a.nfe > 0 ? a.nfe : ck.nfe, a.out_dir);
  out << "rollout " << res.gap.rollout << " mean teacher-forced " << res.gap.mean_teacher_forced() << " gap "
      << res.gap.gap << "\nwrote gap.csv, gap.json, leakage.csv to " << a.out_dir << '\n';
  return 0;
}

int report(const ReportArgs& a, std::ostream& out) {
  const auto rows = read_ledger(a.ledger);
  if (!a.out.empty()) write_file(a.out, report_csv(rows));
  out << report_text(rows);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-step diffusion trajectory training on synthetic 2-D data"};
  app.name("trajdiff");
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset file");
  gen->add_option("--kind", gd.kind, "gaussian-ring|gaussian-grid|two-moons|checkerboard")->capture_default_str();
  gen->add_option("--k", gd.k, "Number of components")->capture_default_str();
  gen->add_option("--n", gd.n, "Number of samples")->capture_default_str();
  gen->add_option("--dim", gd.dim, "Data dimension")->capture_default_str();
  gen->add_option("--radius", gd.radius, "Ring radius / grid half-width")->capture_default_str();
  gen->add_option("--std", gd.std, "Component standard deviation")->capture_default_str();
  gen->add_option("--seed", gd.seed)->capture_default_str();
  gen->add_option("--out", gd.out, "Output file")->required();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Run one experiment config (or a preset)");
  tr->add_option("--config", ta.config, "Run config file")->required();
  tr->add_option("--output-root", ta.output_root, "Overrides run.output_dir and TRAJDIFF_OUTPUT_ROOT");
  tr->add_option("--ledger", ta.ledger, "Ledger CSV to append to");
  tr->add_option("--preset", ta.preset, "table1-analog|table3-ablation");
  tr->add_option("--jobs", ta.jobs, "Parallel child runs for presets")->capture_default_str();
  tr->add_option("--seeds", ta.seeds, "Seeds for table1-analog")->capture_default_str();
  tr->add_flag("--quiet", ta.quiet, "No progress output");

  SampleArgs sa;
  auto* sm = app.add_subcommand("sample", "Draw samples from a checkpoint");
  sm->add_option("--checkpoint", sa.checkpoint)->required();
  sm->add_option("--config", sa.config, "Config providing the schedule (defaults otherwise)");
  sm->add_option("--n", sa.n)->capture_default_str();
  sm->add_option("--nfe", sa.nfe, "Defaults to the checkpoint's NFE");
  sm->add_option("--seed", sa.seed)->capture_default_str();
  sm->add_option("--out", sa.out, "Samples CSV")->required();
  sm->add_option("--trajectory", sa.trajectory, "Per-step trajectory JSONL");
  sm->add_flag("--live", sa.live, "Use live instead of EMA weights");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score a checkpoint");
  ev->add_option("--checkpoint", ea.checkpoint)->required();
  ev->add_option("--config", ea.config)->required();
  ev->add_option("--out", ea.out, "Metrics JSON (stdout if omitted)");
  ev->add_option("--ledger", ea.ledger, "Ledger CSV to append to");
  ev->add_option("--run-id", ea.run_id, "Ledger run id (defaults to run.name)");

  DiagnoseArgs da;
  auto* dg = app.add_subcommand("diagnose", "Gap probe and leakage curves");
  dg->add_option("--checkpoint", da.checkpoint)->required();
  dg->add_option("--config", da.config)->required();
  dg->add_option("--nfe", da.nfe, "Defaults to the checkpoint's NFE");
  dg->add_option("--out-dir", da.out_dir)->required();

  TrainArgs aa;
  auto* ab = app.add_subcommand("ablate", "Run the five-way loss ablation from one pretrain");
  ab->add_option("--config", aa.config, "Base run config")->required();
  ab->add_option("--output-root", aa.output_root);
  ab->add_option("--ledger", aa.ledger);
  ab->add_option("--jobs", aa.jobs)->capture_default_str();
  ab->add_flag("--quiet", aa.quiet);

  ReportArgs ra;
  auto* rp = app.add_subcommand("report", "Aggregate a ledger into a comparison table");
  rp->add_option("--ledger", ra.ledger)->required();
  rp->add_option("--out", ra.out, "CSV output");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
  }

  try {
    if (*gen) return gen_data(gd, out);
    if (*tr) return train(ta, out);
    if (*sm) return sample(sa, out);
    if (*ev) return eval(ea, out);
    if (*dg) return diagnose_cmd(da, out);
    if (*ab) {
      aa.preset = "table3-ablation";
      return train(aa, out);
    }
    if (*rp) return report(ra, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace trajdiff::cli
