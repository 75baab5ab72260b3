#pragma once

// DDPG / TD3 / SAC update rules and the conventional RL+IL objective.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gild/data.hpp"
#include "gild/nets.hpp"
#include "gild/params.hpp"
#include "gild/rng.hpp"

namespace gild {

enum class Algo { Ddpg, Td3, Sac };
enum class OptimizerKind { Adam, Sgd };

std::string to_string(Algo a);
Algo algo_from_string(const std::string& s);
std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

/// Hyperparameters shared by a family (vanilla, +IL, +GILD).
struct AlgoConfig {
  Algo algo = Algo::Td3;
  double lr = 3e-4;
  double gamma = 0.99;
  double tau = 5e-3;
  std::size_t batch_size = 256;
  double expl_noise = 0.2;    // ddpg, td3; fraction of the action bound
  double policy_noise = 0.2;  // td3 target smoothing
  double noise_clip = 0.5;    // td3
  int policy_delay = 2;       // td3: actor and targets every d steps
  double alpha_ent = 0.2;     // sac temperature, fixed
  int target_interval = 2;    // sac: target sync every d steps
  double beta = 2.5;          // w_rl = beta / mean|Q|
  double w_il = 1.0;
  OptimizerKind optimizer = OptimizerKind::Adam;

  void validate() const;
};

/// Adam or plain gradient descent over one parameter set.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerKind kind, double lr, const ParamSet& layout);

  OptimizerKind kind() const noexcept { return kind_; }
  double lr() const noexcept { return lr_; }

  void step(ParamSet& params, const ParamSet& grad);
  /// Result of one step applied to a copy; this optimizer is not modified.
  ParamSet stepped(const ParamSet& params, const ParamSet& grad) const;

 private:
  OptimizerKind kind_ = OptimizerKind::Sgd;
  double lr_ = 0.0;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  ParamSet m_;
  ParamSet v_;
};

/// Online and target networks plus optimizer state for one learner.
struct Agent {
  AlgoConfig cfg;
  ActorModel actor;
  ParamSet actor_target;  // ddpg, td3
  std::vector<CriticModel> critics;
  std::vector<ParamSet> critic_targets;
  Optimizer actor_opt;
  std::vector<Optimizer> critic_opts;

  std::size_t critic_count() const { return critics.size(); }
};

Agent make_agent(const AlgoConfig& cfg, std::size_t state_dim, std::size_t action_dim,
                 const std::vector<std::size_t>& hidden, double action_bound, RngStream& init_rng);

enum class ActionMode { Explore, Exploit };

std::vector<double> select_action(const Agent& agent, std::span<const double> state, ActionMode mode, RngStream& rng);

/// Clipped TD3 target-smoothing noise, (n x action_dim), scaled by the bound.
Tensor td3_target_noise(std::size_t n, const AlgoConfig& cfg, const Tensor& action_scale, RngStream& rng);

/// Standard-normal matrix.
Tensor normal_noise(std::size_t rows, std::size_t cols, RngStream& rng);

/// Bellman targets for a batch (constants).
Tensor critic_targets(const Agent& agent, const Batch& batch, RngStream& noise_rng);

/// One optimizer step on each critic's mean squared TD error. Returns the
/// summed loss over critics.
double critic_update(Agent& agent, const Batch& batch, RngStream& noise_rng);

/// Critic value used for actor losses: Q1 for ddpg/td3, min twin for sac.
Var critic_for_actor(const Agent& agent, Tape& tape, Var states, Var actions);

/// RL actor loss on `tape` for actor parameters `phi`. `noise` (standard
/// normal, batch x action_dim) is required for SAC.
Var rl_actor_loss(const Agent& agent, Tape& tape, std::span<const Var> phi, Var states, const Tensor* noise);

/// Behaviour-cloning loss: per-sample squared error in bound-normalized
/// units, ((a - a_d) / scale)^2 summed over action dims (deterministic), or negative log-likelihood under the squashed Gaussian,
/// averaged over the batch.
Var il_loss(const ActorModel& actor, Tape& tape, std::span<const Var> phi, const DemoBatch& demos);

struct IlRlWeights {
  double w_rl = 1.0;
  double w_il = 1.0;
};

inline constexpr double kWeightFloor = 1e-8;

/// w_rl = beta / max(mean |Q(s, a)|, 1e-8), w_il = configured weight.
IlRlWeights ilrl_weights(const Agent& agent, const Tensor& states, const Tensor& actions);

/// Gradient of the vanilla RL actor loss at `phi`.
ParamSet rl_actor_grad(const Agent& agent, const ParamSet& phi, const Tensor& states, const Tensor* noise,
                       double* loss_out = nullptr);

/// Gradient of w_rl * RL + w_il * IL at `phi`.
ParamSet ilrl_actor_grad(const Agent& agent, const ParamSet& phi, const Batch& batch, const DemoBatch& demos,
                         const Tensor* noise, double* loss_out = nullptr);

/// One RL+IL step applied to a copy of the actor. The agent is not modified.
ParamSet pseudo_update(const Agent& agent, const Batch& batch, const DemoBatch& demos, const Tensor* noise,
                       double* loss_out = nullptr);

/// Live actor steps for the vanilla and RL+IL variants. Return the loss.
double vanilla_actor_update(Agent& agent, const Tensor& states, const Tensor* noise);
double ilrl_actor_update(Agent& agent, const Batch& batch, const DemoBatch& demos, const Tensor* noise);

/// Soft-updates every target network that the algorithm keeps.
void sync_targets(Agent& agent);

}  // namespace gild
