#include "trajdiff/checkpoint.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "trajdiff/error.hpp"

namespace trajdiff {
namespace {

using nlohmann::json;

json spec_json(const DenoiserSpec& s) {
  return {{"data_dim", s.data_dim},
          {"hidden", s.hidden},
          {"layers", s.layers},
          {"time_dim", s.time_dim},
          {"cond_dim", s.cond_dim},
          {"num_labels", s.num_labels},
          {"total_steps", s.total_steps},
          {"activation", to_string(s.activation)},
          {"prediction", to_string(s.prediction)},
          {"sharing", to_string(s.sharing)},
          {"step_list", s.step_list},
          {"zero_init_output", s.zero_init_output}};
}

DenoiserSpec spec_from(const json& j) {
  DenoiserSpec s;
  s.data_dim = j.at("data_dim").get<std::size_t>();
  s.hidden = j.at("hidden").get<std::size_t>();
  s.layers = j.at("layers").get<std::size_t>();
  s.time_dim = j.at("time_dim").get<std::size_t>();
  s.cond_dim = j.at("cond_dim").get<std::size_t>();
  s.num_labels = j.at("num_labels").get<std::size_t>();
  s.total_steps = j.at("total_steps").get<int>();
  s.activation = parse_activation(j.at("activation").get<std::string>());
  s.prediction = parse_prediction_mode(j.at("prediction").get<std::string>());
  s.sharing = parse_sharing_mode(j.at("sharing").get<std::string>());
  s.step_list = j.at("step_list").get<std::vector<int>>();
  s.zero_init_output = j.at("zero_init_output").get<bool>();
  return s;
}

json params_json(const ParamStore& p) {
  json arr = json::array();
  for (std::size_t i = 0; i < p.size(); ++i) {
    arr.push_back({{"name", p.name(i)}, {"shape", p[i].shape()}, {"data", p[i].values()}});
  }
  return arr;
}

ParamStore params_from(const json& arr) {
  ParamStore p;
  for (const auto& e : arr) {
    p.add(e.at("name").get<std::string>(),
          Tensor(e.at("shape").get<Shape>(), e.at("data").get<std::vector<double>>()));
  }
  return p;
}

}  // namespace

std::string checkpoint_to_string(const Checkpoint& c) {
  const json j = {{"format", "trajdiff-checkpoint"},
                  {"version", kCheckpointVersion},
                  {"spec", spec_json(c.model.spec())},
                  {"seed", c.model.seed()},
                  {"step", c.step},
                  {"mode", to_string(c.mode)},
                  {"nfe", c.nfe},
                  {"renoise", to_string(c.renoise)},
                  {"config_hash", c.config_hash},
                  {"params", params_json(c.model.params())},
                  {"ema", params_json(c.ema.params())}};
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint: malformed JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "trajdiff-checkpoint") throw IoError("checkpoint: wrong format tag");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw IoError("checkpoint: unsupported version " + std::to_string(version));
    }
    const DenoiserSpec spec = spec_from(j.at("spec"));
    const auto seed = j.at("seed").get<std::uint64_t>();
    Checkpoint c;
    c.model = load_denoiser_from(spec, seed, params_from(j.at("params")));
    c.ema = load_denoiser_from(spec, seed, params_from(j.at("ema")));
    c.step = j.at("step").get<std::size_t>();
    c.mode = parse_train_mode(j.at("mode").get<std::string>());
    c.nfe = j.at("nfe").get<int>();
    c.renoise = parse_renoise_mode(j.at("renoise").get<std::string>());
    c.config_hash = j.at("config_hash").get<std::string>();
    return c;
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string text = checkpoint_to_string(ckpt);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  os << text;
  if (!os) throw IoError("checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  try {
    return checkpoint_from_string(ss.str());
  } catch (const IoError& e) {
    throw IoError(std::string(e.what()) + " (" + path + ")");
  }
}

}  // namespace trajdiff
