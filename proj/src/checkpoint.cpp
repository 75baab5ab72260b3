#include "gild/checkpoint.hpp"

#include <json.hpp>

#include <fstream>

#include "gild/data.hpp"

namespace gild {

using nlohmann::json;

namespace {

json spec_json(const MlpSpec& spec) {
  return {{"input_dim", spec.input_dim},
          {"hidden_dims", spec.hidden_dims},
          {"output_dim", spec.output_dim},
          {"hidden_activation", to_string(spec.hidden_activation)},
          {"output_activation", to_string(spec.output_activation)}};
}

MlpSpec spec_from_json(const json& j) {
  MlpSpec spec;
  spec.input_dim = j.at("input_dim").get<std::size_t>();
  spec.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
  spec.output_dim = j.at("output_dim").get<std::size_t>();
  spec.hidden_activation = activation_from_string(j.at("hidden_activation").get<std::string>());
  spec.output_activation = activation_from_string(j.at("output_activation").get<std::string>());
  spec.validate();
  return spec;
}

json layers_json(const ParamSet& params) {
  json layers = json::array();
  for (std::size_t i = 0; i < params.count(); ++i) {
    layers.push_back({{"name", params.name(i)},
                      {"shape", {params[i].rows(), params[i].cols()}},
                      {"data", params[i].values()}});
  }
  return layers;
}

ParamSet params_from_json(const json& layers) {
  ParamSet params;
  for (const auto& l : layers) {
    const auto shape = l.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2) throw ParseError("layer shape must have two extents", 0);
    params.add(l.at("name").get<std::string>(), Tensor(shape[0], shape[1], l.at("data").get<std::vector<double>>()));
  }
  return params;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
  const int version = j.value("format_version", 0);
  if (version != kCheckpointFormatVersion) {
    throw ParseError(path.string() + ": unsupported format_version " + std::to_string(version), 0);
  }
  return j;
}

void write_json(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump() << '\n';
}

}  // namespace

void save_actor_checkpoint(const std::filesystem::path& path, const ActorCheckpoint& ckpt) {
  const auto& a = ckpt.actor;
  json j = {{"format_version", kCheckpointFormatVersion},
            {"kind", a.kind == PolicyKind::Deterministic ? "deterministic_actor" : "gaussian_actor"},
            {"spec", spec_json(a.spec)},
            {"action_scale", a.action_scale.values()},
            {"layers", layers_json(a.params)},
            {"rng_note", ckpt.rng_note},
            {"step", ckpt.step},
            {"eval_return", ckpt.eval_return}};
  write_json(path, j);
}

ActorCheckpoint load_actor_checkpoint(const std::filesystem::path& path) {
  const json j = read_json(path);
  ActorCheckpoint ckpt;
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "deterministic_actor") {
      ckpt.actor.kind = PolicyKind::Deterministic;
    } else if (kind == "gaussian_actor") {
      ckpt.actor.kind = PolicyKind::Gaussian;
    } else {
      throw ParseError(path.string() + ": not an actor checkpoint (kind '" + kind + "')", 0);
    }
    ckpt.actor.spec = spec_from_json(j.at("spec"));
    const auto scale = j.at("action_scale").get<std::vector<double>>();
    ckpt.actor.action_scale = Tensor::row(scale);
    ckpt.actor.params = params_from_json(j.at("layers"));
    ckpt.rng_note = j.value("rng_note", std::string());
    ckpt.step = j.value("step", 0L);
    ckpt.eval_return = j.value("eval_return", 0.0);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
  return ckpt;
}

void save_network(const std::filesystem::path& path, const std::string& kind, const MlpSpec& spec,
                  const ParamSet& params, const std::string& rng_note) {
  write_json(path, {{"format_version", kCheckpointFormatVersion},
                    {"kind", kind},
                    {"spec", spec_json(spec)},
                    {"layers", layers_json(params)},
                    {"rng_note", rng_note}});
}

ParamSet load_network(const std::filesystem::path& path, MlpSpec* spec_out, std::string* kind_out) {
  const json j = read_json(path);
  try {
    if (spec_out) *spec_out = spec_from_json(j.at("spec"));
    if (kind_out) *kind_out = j.at("kind").get<std::string>();
    return params_from_json(j.at("layers"));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

}  // namespace gild
