#pragma once

// Actor, critic and GILD network definitions.
//
// Parameters live in flat ParamSets ("l0.weight", "l0.bias", ...) so the same
// forward code serves plain evaluation, first-order gradients, and gradients
// recorded for a second differentiation pass. Weights are (fan_in x fan_out)
// and inputs are row batches, so a layer is `x W + b`.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gild/params.hpp"
#include "gild/rng.hpp"
#include "gild/tape.hpp"

namespace gild {

enum class Activation { Relu, Tanh, Softplus, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 0;
  Activation hidden_activation = Activation::Relu;
  Activation output_activation = Activation::Identity;

  /// Throws std::invalid_argument unless all dims >= 1 and there is at
  /// least one hidden layer.
  void validate() const;
  std::size_t layer_count() const { return hidden_dims.size() + 1; }

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
ParamSet init_network(const MlpSpec& spec, RngStream& rng);

Var mlp_forward(const MlpSpec& spec, std::span<const Var> params, Var input);

/// Evaluates the network on a constant input without keeping a tape around.
Tensor mlp_eval(const MlpSpec& spec, const ParamSet& params, const Tensor& input);

// ---------------------------------------------------------------------------
// Actors

enum class PolicyKind { Deterministic, Gaussian };

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

struct ActorModel {
  PolicyKind kind = PolicyKind::Deterministic;
  MlpSpec spec;
  Tensor action_scale;  // 1 x action_dim, the symmetric action bound
  ParamSet params;

  std::size_t state_dim() const { return spec.input_dim; }
  std::size_t action_dim() const { return action_scale.cols(); }
};

/// Deterministic policy: action = scale * tanh(mlp(s)).
ActorModel make_deterministic_actor(std::size_t state_dim, std::size_t action_dim, std::vector<std::size_t> hidden,
                                    double action_bound, RngStream& rng);

/// Tanh-squashed Gaussian policy; the trunk emits [mean | log_std].
ActorModel make_gaussian_actor(std::size_t state_dim, std::size_t action_dim, std::vector<std::size_t> hidden,
                               double action_bound, RngStream& rng);

struct GaussianHeads {
  Var mean;
  Var log_std;  // clamped to [kLogStdMin, kLogStdMax]
};

GaussianHeads gaussian_heads(const ActorModel& actor, std::span<const Var> params, Var states);

/// Deterministic action: scale * tanh(output) for the deterministic actor,
/// scale * tanh(mean) for the Gaussian actor.
Var actor_mean_action(const ActorModel& actor, std::span<const Var> params, Var states);

struct SampledAction {
  Var action;    // scale * tanh(u), u = mean + std * noise
  Var log_prob;  // (batch, 1), includes the tanh change of variables
};

/// Reparameterized sample; `noise` is a standard-normal (batch x action_dim)
/// tensor so randomness stays outside the tape.
SampledAction sample_action(const ActorModel& actor, std::span<const Var> params, Var states, const Tensor& noise);

/// log(1 - tanh(u)^2), evaluated stably as 2 (log 2 - u - softplus(-2u)).
Var log_one_minus_tanh_sq(Var u);

/// Squashed log-density of pre-squash value `u` under the heads.
Var squashed_log_prob(const GaussianHeads& heads, Var u);

/// Exploit action for a batch of states.
Tensor actor_act(const ActorModel& actor, const Tensor& states);

// ---------------------------------------------------------------------------
// Critic

struct CriticModel {
  MlpSpec spec;  // input = state_dim + action_dim, output 1, identity
  ParamSet params;
};

CriticModel make_critic(std::size_t state_dim, std::size_t action_dim, std::vector<std::size_t> hidden, RngStream& rng);

Var critic_forward(const CriticModel& critic, std::span<const Var> params, Var states, Var actions);

// ---------------------------------------------------------------------------
// GILD network

struct GildModel {
  MlpSpec spec;  // input = state_dim + 2 action_dim, output 1, softplus
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  ParamSet params;
};

GildModel make_gild_net(std::size_t state_dim, std::size_t action_dim, std::vector<std::size_t> hidden, RngStream& rng);

/// Per-sample loss f(s_d, a_d, a_pi) >= 0 over the input [s_d | a_d | a_pi].
Var gild_forward(const GildModel& gild, std::span<const Var> params, Var demo_states, Var demo_actions,
                 Var policy_actions);

/// Zeroes the first-layer weights fed by the a_pi block, making the network
/// output independent of the policy action.
void zero_policy_action_inputs(GildModel& gild);

// ---------------------------------------------------------------------------

/// target <- tau * online + (1 - tau) * target, elementwise.
void soft_update(ParamSet& target, const ParamSet& online, double tau);

}  // namespace gild
