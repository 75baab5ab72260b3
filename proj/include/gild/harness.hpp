#pragma once

// Experiment orchestration: run configuration, the training loop, expert
// training, behaviour selection, demonstration collection and evaluation.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gild/checkpoint.hpp"
#include "gild/data.hpp"
#include "gild/envs.hpp"
#include "gild/gild.hpp"
#include "gild/rl_core.hpp"

namespace gild {

enum class Variant { Vanilla, Il, Gild };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

/// Complete description of one training run. Every field has a key in the
/// flat `key = value` config format (see config_keys()).
struct RunConfig {
  std::string env_id = "point2d-sparse";
  Variant variant = Variant::Vanilla;
  AlgoConfig algo;
  long total_steps = 100'000;
  long eval_interval = 5000;
  int eval_episodes = 10;
  std::uint64_t seed = 0;
  long start_steps = 1000;
  std::vector<std::size_t> hidden = {256, 256};
  std::vector<std::size_t> gild_hidden = {256, 256};
  double warm_start_fraction = 0.01;
  MetaLossVariant meta_loss_variant = MetaLossVariant::DifferenceTanh;
  MetaSign meta_sign = MetaSign::MaximizeSuperiority;
  double meta_lr_outer = 3e-4;
  bool gild_frozen = false;
  bool gild_zero_policy_inputs = false;
  double sparse_threshold = 1.0;
  std::size_t buffer_capacity = ReplayBuffer::kDefaultCapacity;
  long log_interval = 100;
  bool save_snapshots = true;
  std::string demo_path;
  std::string output_dir;

  /// Throws ConfigError on inconsistent settings. `demos_supplied` lets
  /// in-process callers satisfy the demonstration requirement directly.
  void validate(bool demos_supplied = false) const;
  GildConfig gild_config() const;
};

/// Documented config keys, in canonical order.
const std::vector<std::string>& config_keys();

/// Sets one key. Throws ConfigError for unknown keys or unparsable values.
void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// Parses `key = value` lines; `#` starts a comment.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Canonical text form; parse_config_text(to_config_text(c)) reproduces c.
std::string to_config_text(const RunConfig& cfg);

// ---------------------------------------------------------------------------

struct EvalSummary {
  double mean_return = 0.0;
  double std_return = 0.0;
  double goal_rate = 0.0;  // fraction of episodes that ended in a terminal state
  std::vector<double> returns;
};

/// Exploit-mode rollouts on the dense channel. Episode i is reset with the
/// i-th seed drawn from `eval_rng`, so episodes can run in any order.
EvalSummary evaluate_policy(const ActorModel& actor, const std::string& env_id, int episodes, RngStream& eval_rng,
                            double sparse_threshold = 1.0);

struct RunResult {
  RunLog log;
  ActorModel final_actor;
  std::optional<GildModel> gild;
  std::vector<ActorCheckpoint> snapshots;  // one per evaluation point
  long actor_update_steps = 0;             // steps on which an actor update ran
  std::vector<long> actor_update_log;      // first kActorLogLimit steps with an actor update

  static constexpr std::size_t kActorLogLimit = 1000;
};

/// Called after every environment step with the step index.
using StepObserver = std::function<void(long step, const Agent& agent)>;

/// Runs the full training loop. Train rows are labelled with the index of
/// the last step they cover; eval rows with the number of steps taken.
/// Writes eval.csv, train.csv, config.txt, final_actor.json and snapshots/
/// under cfg.output_dir when it is set.
/// Throws ConfigError for invalid configs and NumericError on divergence.
RunResult train_run(const RunConfig& cfg, const DemonstrationSet* demos = nullptr, const StepObserver& observer = {});

struct ExpertSeries {
  std::vector<ActorCheckpoint> checkpoints;
  double expert_max_return = 0.0;
  RunLog log;
};

/// Vanilla training on a dense-channel env; one checkpoint per evaluation.
ExpertSeries train_expert(const RunConfig& cfg);

/// First checkpoint whose return is at least rho * expert max. When the
/// expert's best return is not positive (cost-like rewards) the rule becomes
/// return >= max / rho, i.e. at most 1/rho times the expert's cost. Throws
/// std::invalid_argument when the series is empty or nothing qualifies.
const ActorCheckpoint& select_behavior(const std::vector<ActorCheckpoint>& checkpoints, double rho = 0.45);

/// Exploit rollouts on the dense channel until `n_samples` pairs are stored.
DemonstrationSet collect_demos(const ActorModel& behavior, const std::string& env_id, std::size_t n_samples,
                               RngStream& rng, double sparse_threshold = 1.0);

}  // namespace gild
