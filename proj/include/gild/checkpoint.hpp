#pragma once

// Network checkpoints: one JSON document per network,
//   {format_version, kind, spec, action_scale?, layers: [{name, shape, data}],
//    rng_note, step, eval_return}
// Numbers are written in shortest round-trip form, so load(save(x)) == x.

#include <filesystem>
#include <string>

#include "gild/nets.hpp"

namespace gild {

inline constexpr int kCheckpointFormatVersion = 1;

struct ActorCheckpoint {
  ActorModel actor;
  long step = 0;
  double eval_return = 0.0;
  std::string rng_note;
};

void save_actor_checkpoint(const std::filesystem::path& path, const ActorCheckpoint& ckpt);
ActorCheckpoint load_actor_checkpoint(const std::filesystem::path& path);

/// Generic parameter document (critics, GILD networks).
void save_network(const std::filesystem::path& path, const std::string& kind, const MlpSpec& spec,
                  const ParamSet& params, const std::string& rng_note = {});
ParamSet load_network(const std::filesystem::path& path, MlpSpec* spec_out = nullptr, std::string* kind_out = nullptr);

}  // namespace gild
