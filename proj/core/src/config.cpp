#include "trajdiff/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "trajdiff/error.hpp"
#include "trajdiff/hash.hpp"

namespace trajdiff {

DenoiserSpec RunConfig::default_model() {
  DenoiserSpec m;
  m.hidden = 64;
  m.layers = 3;
  m.prediction = PredictionMode::kEpsilon;
  return m;
}

DenoiserSpec RunConfig::resolved_model() const {
  DenoiserSpec m = model;
  m.data_dim = data.dim;
  m.num_labels = data.components;
  m.total_steps = schedule.steps;
  m.sharing = SharingMode::kShared;
  m.step_list.clear();
  return m;
}

DiscriminatorSpec RunConfig::resolved_disc() const {
  DiscriminatorSpec d = disc;
  d.data_dim = data.dim;
  d.num_labels = data.components;
  return d;
}

void RunConfig::validate() const {
  if (name.empty()) throw ConfigError("run.name: must not be empty");
  data.validate();
  if (schedule.steps < 1) throw ConfigError("schedule.steps: must be >= 1");
  if (!(schedule.beta_start > 0.0 && schedule.beta_start < 1.0)) throw ConfigError("schedule.beta_start: must lie in (0,1)");
  if (!(schedule.beta_end > 0.0 && schedule.beta_end < 1.0)) throw ConfigError("schedule.beta_end: must lie in (0,1)");
  try {
    resolved_model().validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  const bool needs_eps = train.mode == TrainMode::kStepwise || train.init == InitMode::kPretrain;
  if (needs_eps && model.prediction != PredictionMode::kEpsilon) {
    throw ConfigError("model.prediction: stepwise training needs epsilon, got " +
                      std::string(to_string(model.prediction)));
  }
  if (train.mode == TrainMode::kStepwise && train.sharing != SharingMode::kShared) {
    throw ConfigError("train.sharing: stepwise training supports shared parameters only");
  }
  if (train.nfe > schedule.steps) throw ConfigError("train.nfe: exceeds schedule.steps");
  train.validate();
  if (pretrain.steps < 0) throw ConfigError("pretrain.steps: must be >= 0");
  if (pretrain.batch < 1) throw ConfigError("pretrain.batch: must be >= 1");
  if (!(pretrain.tau >= 0.0 && pretrain.tau <= 1.0)) throw ConfigError("pretrain.tau: must lie in [0,1]");
  pretrain.adam.validate();
  if (eval.n_samples <= data.dim) throw ConfigError("eval.n_samples: must exceed data.dim");
  if (eval.mmd_samples < 2) throw ConfigError("eval.mmd_samples: must be >= 2");
  if (!(eval.bandwidth > 0.0)) throw ConfigError("eval.bandwidth: must be > 0");
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out + "\"";
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string& key, std::string_view raw)> set;
};

std::string unquote(const std::string& key, std::string_view raw) {
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
    std::string out;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
      if (raw[i] == '\\' && i + 2 < raw.size()) ++i;
      out.push_back(raw[i]);
    }
    return out;
  }
  if (!raw.empty() && (raw.front() == '"' || raw.back() == '"')) {
    throw ConfigError(key + ": unterminated string");
  }
  return std::string(raw);
}

template <typename I>
I parse_int(const std::string& key, std::string_view raw) {
  I v{};
  const auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (ec != std::errc() || p != raw.data() + raw.size()) {
    throw ConfigError(key + ": expected an integer, got '" + std::string(raw) + "'");
  }
  return v;
}

double parse_double(const std::string& key, std::string_view raw) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (ec != std::errc() || p != raw.data() + raw.size() || !std::isfinite(v)) {
    throw ConfigError(key + ": expected a finite number, got '" + std::string(raw) + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, std::string_view raw) {
  if (raw == "true") return true;
  if (raw == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + std::string(raw) + "'");
}

// Wraps a parser so domain errors from enum parsing carry the field name.
template <typename F>
auto named(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(key, 0) == 0) throw;
    throw ConfigError(key + ": " + msg);
  }
}

class Registry {
 public:
  explicit Registry(RunConfig& c) {
    str("run", "name", c.name);
    u64("run", "seed", c.seed);
    str("run", "output_dir", c.output_dir);

    enumf("data", "kind", c.data.kind, parse_dataset_kind);
    size("data", "n", c.data.n);
    size("data", "dim", c.data.dim);
    size("data", "components", c.data.components);
    real("data", "radius", c.data.radius);
    real("data", "std", c.data.std);

    integer("schedule", "steps", c.schedule.steps);
    real("schedule", "beta_start", c.schedule.beta_start);
    real("schedule", "beta_end", c.schedule.beta_end);

    size("model", "hidden", c.model.hidden);
    size("model", "layers", c.model.layers);
    size("model", "time_dim", c.model.time_dim);
    size("model", "cond_dim", c.model.cond_dim);
    enumf("model", "activation", c.model.activation, parse_activation);
    enumf("model", "prediction", c.model.prediction, parse_prediction_mode);
    boolean("model", "zero_init_output", c.model.zero_init_output);

    size("disc", "hidden", c.disc.hidden);
    size("disc", "layers", c.disc.layers);
    real("disc", "negative_slope", c.disc.negative_slope);
    boolean("disc", "use_condition", c.disc.use_condition);
    size("disc", "cond_dim", c.disc.cond_dim);

    integer("pretrain", "steps", c.pretrain.steps);
    integer("pretrain", "batch", c.pretrain.batch);
    adam("pretrain", "", c.pretrain.adam);
    real("pretrain", "tau", c.pretrain.tau);

    enumf("train", "mode", c.train.mode, parse_train_mode);
    integer("train", "nfe", c.train.nfe);
    integer("train", "steps", c.train.steps);
    integer("train", "batch", c.train.batch);
    adam("train", "", c.train.adam);
    adam("train", "disc_", c.train.disc_adam);
    real("train", "tau", c.train.tau);
    enumf("train", "renoise", c.train.renoise, parse_renoise_mode);
    enumf("train", "sharing", c.train.sharing, parse_sharing_mode);
    integer("train", "disc_updates_per_gen", c.train.disc_updates_per_gen);
    enumf("train", "init", c.train.init, parse_init_mode);
    str("train", "checkpoint", c.train.checkpoint);
    integer("train", "checkpoint_every", c.train.checkpoint_every);

    real("loss", "l1", c.train.loss.l1);
    real("loss", "l2", c.train.loss.l2);
    real("loss", "lpips", c.train.loss.lpips);
    real("loss", "gan", c.train.loss.gan);

    size("eval", "n_samples", c.eval.n_samples);
    size("eval", "mmd_samples", c.eval.mmd_samples);
    real("eval", "bandwidth", c.eval.bandwidth);
    boolean("eval", "use_ema", c.eval.use_ema);
    boolean("eval", "feature_lift", c.eval.feature_lift);
  }

  const std::vector<Field>& fields() const { return fields_; }

 private:
  void add(std::string section, std::string key, std::function<std::string()> get,
           std::function<void(const std::string&, std::string_view)> set) {
    fields_.push_back({std::move(section), std::move(key), std::move(get), std::move(set)});
  }
  void str(const char* s, const char* k, std::string& v) {
    add(s, k, [&v] { return quote(v); }, [&v](const std::string& key, std::string_view raw) { v = unquote(key, raw); });
  }
  void u64(const char* s, const char* k, std::uint64_t& v) {
    add(s, k, [&v] { return std::to_string(v); },
        [&v](const std::string& key, std::string_view raw) { v = parse_int<std::uint64_t>(key, raw); });
  }
  void size(const char* s, const char* k, std::size_t& v) {
    add(s, k, [&v] { return std::to_string(v); },
        [&v](const std::string& key, std::string_view raw) { v = parse_int<std::size_t>(key, raw); });
  }
  void integer(const char* s, const char* k, int& v) {
    add(s, k, [&v] { return std::to_string(v); },
        [&v](const std::string& key, std::string_view raw) { v = parse_int<int>(key, raw); });
  }
  void real(const char* s, const char* k, double& v) {
    add(s, k, [&v] { return fmt_double(v); },
        [&v](const std::string& key, std::string_view raw) { v = parse_double(key, raw); });
  }
  void boolean(const char* s, const char* k, bool& v) {
    add(s, k, [&v] { return std::string(v ? "true" : "false"); },
        [&v](const std::string& key, std::string_view raw) { v = parse_bool(key, raw); });
  }
  template <typename E, typename P>
  void enumf(const char* s, const char* k, E& v, P parse) {
    add(s, k, [&v] { return quote(std::string(to_string(v))); },
        [&v, parse](const std::string& key, std::string_view raw) {
          const std::string text = unquote(key, raw);
          v = named(key, [&] { return parse(text); });
        });
  }
  void adam(const char* s, const std::string& prefix, AdamHParams& a) {
    real(s, (prefix + "lr").c_str(), a.lr);
    real(s, (prefix + "beta1").c_str(), a.beta1);
    real(s, (prefix + "beta2").c_str(), a.beta2);
    real(s, (prefix + "eps").c_str(), a.eps);
    real(s, (prefix + "weight_decay").c_str(), a.weight_decay);
  }

  std::vector<Field> fields_;
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Drops a trailing "# comment" that is outside quotes.
std::string_view strip_comment(std::string_view s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && in_str) {
      ++i;
    } else if (s[i] == '"') {
      in_str = !in_str;
    } else if (s[i] == '#' && !in_str) {
      return s.substr(0, i);
    }
  }
  return s;
}

}  // namespace

std::string serialize_config(const RunConfig& cfg) {
  RunConfig copy = cfg;
  Registry reg(copy);
  std::ostringstream os;
  std::string section;
  for (const auto& f : reg.fields()) {
    if (f.section != section) {
      if (!section.empty()) os << '\n';
      section = f.section;
      os << '[' << section << "]\n";
    }
    os << f.key << " = " << f.get() << '\n';
  }
  return os.str();
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  Registry reg(cfg);
  std::map<std::string, const Field*> index;
  for (const auto& f : reg.fields()) index[f.section + "." + f.key] = &f;

  struct Entry {
    std::string key;
    std::string raw;
  };
  std::vector<Entry> entries;
  std::map<std::string, int> seen;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view line = trim(strip_comment(text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos)));
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    if (section.empty()) throw ConfigError("line " + std::to_string(line_no) + ": key outside of any section");
    const std::string key = section + "." + std::string(trim(line.substr(0, eq)));
    if (++seen[key] > 1) throw ConfigError(key + ": duplicate key");
    entries.push_back({key, std::string(trim(line.substr(eq + 1)))});
  }

  // The preset expands first so explicit weights override it.
  for (const auto& e : entries) {
    if (e.key == "loss.preset") cfg.train.loss = named(e.key, [&] { return loss_preset(unquote(e.key, e.raw)); });
  }
  for (const auto& e : entries) {
    if (e.key == "loss.preset") continue;
    const auto it = index.find(e.key);
    if (it == index.end()) throw ConfigError(e.key + ": unknown key");
    if (e.raw.empty()) throw ConfigError(e.key + ": missing value");
    it->second->set(e.key, e.raw);
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

void save_config_file(const std::string& path, const RunConfig& cfg) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("config: cannot open '" + path + "' for writing");
  os << serialize_config(cfg);
  if (!os) throw IoError("config: write failed for '" + path + "'");
}

std::string config_hash(const RunConfig& cfg) { return git_blob_hash(serialize_config(cfg)); }

}  // namespace trajdiff
