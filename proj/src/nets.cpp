#include "gild/nets.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gild {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Softplus: return "softplus";
    case Activation::Identity: return "identity";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "softplus") return Activation::Softplus;
  if (s == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

void MlpSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) throw std::invalid_argument("MlpSpec: input and output dims must be >= 1");
  if (hidden_dims.empty()) throw std::invalid_argument("MlpSpec: at least one hidden layer is required");
  for (auto h : hidden_dims) {
    if (h == 0) throw std::invalid_argument("MlpSpec: hidden dims must be >= 1");
  }
  if (hidden_activation != Activation::Relu) throw std::invalid_argument("MlpSpec: hidden activation must be relu");
}

ParamSet init_network(const MlpSpec& spec, RngStream& rng) {
  spec.validate();
  ParamSet params;
  std::size_t fan_in = spec.input_dim;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t fan_out = l < spec.hidden_dims.size() ? spec.hidden_dims[l] : spec.output_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor w(fan_in, fan_out);
    for (auto& v : w.data()) v = rng.uniform(-bound, bound);
    params.add("l" + std::to_string(l) + ".weight", std::move(w));
    params.add("l" + std::to_string(l) + ".bias", Tensor(1, fan_out));
    fan_in = fan_out;
  }
  return params;
}

namespace {

Var activate(Activation a, Var x) {
  switch (a) {
    case Activation::Relu: return relu(x);
    case Activation::Tanh: return tanh(x);
    case Activation::Softplus: return softplus(x);
    case Activation::Identity: return x;
  }
  return x;
}

}  // namespace

Var mlp_forward(const MlpSpec& spec, std::span<const Var> params, Var input) {
  if (params.size() != 2 * spec.layer_count()) {
    throw ShapeError("mlp_forward: expected " + std::to_string(2 * spec.layer_count()) + " parameter tensors, got " +
                     std::to_string(params.size()));
  }
  if (input.cols() != spec.input_dim) {
    throw ShapeError("mlp_forward: input " + input.value().shape_string() + " does not match input_dim " +
                     std::to_string(spec.input_dim));
  }
  Var h = input;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    h = add(matmul(h, params[2 * l]), params[2 * l + 1]);
    h = activate(l + 1 < spec.layer_count() ? spec.hidden_activation : spec.output_activation, h);
  }
  return h;
}

Tensor mlp_eval(const MlpSpec& spec, const ParamSet& params, const Tensor& input) {
  Tape tape;
  const auto vars = params.as_constants(tape);
  return mlp_forward(spec, vars, tape.constant(input)).value();
}

// ---------------------------------------------------------------------------

ActorModel make_deterministic_actor(std::size_t state_dim, std::size_t action_dim, std::vector<std::size_t> hidden,
                                    double action_bound, RngStream& rng) {
  ActorModel actor;
  actor.kind = PolicyKind::Deterministic;
  actor.spec = MlpSpec{state_dim, std::move(hidden), action_dim, Activation::Relu, Activation::Tanh};
  actor.action_scale = Tensor(1, action_dim, action_bound);
  actor.params = init_network(actor.spec, rng);
  return actor;
}

ActorModel make_gaussian_actor(std::size_t state_dim, std::size_t action_dim, std::vector<std::size_t> hidden,
                               double action_bound, RngStream& rng) {
  ActorModel actor;
  actor.kind = PolicyKind::Gaussian;
  actor.spec = MlpSpec{state_dim, std::move(hidden), 2 * action_dim, Activation::Relu, Activation::Identity};
  actor.action_scale = Tensor(1, action_dim, action_bound);
  actor.params = init_network(actor.spec, rng);
  return actor;
}

GaussianHeads gaussian_heads(const ActorModel& actor, std::span<const Var> params, Var states) {
  if (actor.kind != PolicyKind::Gaussian) throw std::invalid_argument("gaussian_heads: actor is deterministic");
  const Var out = mlp_forward(actor.spec, params, states);
  const std::size_t m = actor.action_dim();
  return {slice_cols(out, 0, m), clip(slice_cols(out, m, 2 * m), kLogStdMin, kLogStdMax)};
}

Var actor_mean_action(const ActorModel& actor, std::span<const Var> params, Var states) {
  Tape& tape = *states.tape();
  const Var scale = tape.constant(actor.action_scale);
  if (actor.kind == PolicyKind::Deterministic) {
    return mul(mlp_forward(actor.spec, params, states), scale);
  }
  return mul(tanh(gaussian_heads(actor, params, states).mean), scale);
}

Var log_one_minus_tanh_sq(Var u) {
  return affine(add(u, softplus(affine(u, -2.0, 0.0))), -2.0, 2.0 * std::numbers::ln2);
}

Var squashed_log_prob(const GaussianHeads& heads, Var u) {
  return sub(gaussian_log_pdf(u, heads.mean, heads.log_std), sum_cols(log_one_minus_tanh_sq(u)));
}

SampledAction sample_action(const ActorModel& actor, std::span<const Var> params, Var states, const Tensor& noise) {
  const GaussianHeads heads = gaussian_heads(actor, params, states);
  if (!noise.same_shape(heads.mean.value())) {
    throw ShapeError("sample_action: noise " + noise.shape_string() + " vs mean " + heads.mean.value().shape_string());
  }
  Tape& tape = *states.tape();
  const Var u = add(heads.mean, mul(exp(heads.log_std), tape.constant(noise)));
  const Var action = mul(tanh(u), tape.constant(actor.action_scale));
  return {action, squashed_log_prob(heads, u)};
}

Tensor actor_act(const ActorModel& actor, const Tensor& states) {
  Tape tape;
  const auto vars = actor.params.as_constants(tape);
  return actor_mean_action(actor, vars, tape.constant(states)).value();
}

// ---------------------------------------------------------------------------

CriticModel make_critic(std::size_t state_dim, std::size_t action_dim, std::vector<std::size_t> hidden, RngStream& rng) {
  CriticModel critic;
  critic.spec = MlpSpec{state_dim + action_dim, std::move(hidden), 1, Activation::Relu, Activation::Identity};
  critic.params = init_network(critic.spec, rng);
  return critic;
}

Var critic_forward(const CriticModel& critic, std::span<const Var> params, Var states, Var actions) {
  if (states.rows() != actions.rows()) {
    throw ShapeError("critic_forward: batch mismatch, " + states.value().shape_string() + " vs " +
                     actions.value().shape_string());
  }
  return mlp_forward(critic.spec, params, concat_cols(states, actions));
}

// ---------------------------------------------------------------------------

GildModel make_gild_net(std::size_t state_dim, std::size_t action_dim, std::vector<std::size_t> hidden, RngStream& rng) {
  GildModel gild;
  gild.state_dim = state_dim;
  gild.action_dim = action_dim;
  gild.spec = MlpSpec{state_dim + 2 * action_dim, std::move(hidden), 1, Activation::Relu, Activation::Softplus};
  gild.params = init_network(gild.spec, rng);
  return gild;
}

Var gild_forward(const GildModel& gild, std::span<const Var> params, Var demo_states, Var demo_actions,
                 Var policy_actions) {
  if (demo_states.cols() != gild.state_dim || demo_actions.cols() != gild.action_dim ||
      policy_actions.cols() != gild.action_dim) {
    throw ShapeError("gild_forward: inputs " + demo_states.value().shape_string() + ", " +
                     demo_actions.value().shape_string() + ", " + policy_actions.value().shape_string() +
                     " do not match state_dim " + std::to_string(gild.state_dim) + " / action_dim " +
                     std::to_string(gild.action_dim));
  }
  if (demo_states.rows() != demo_actions.rows() || demo_states.rows() != policy_actions.rows()) {
    throw ShapeError("gild_forward: batch sizes differ");
  }
  const std::array<Var, 3> parts{demo_states, demo_actions, policy_actions};
  return mlp_forward(gild.spec, params, concat_cols(parts));
}

void zero_policy_action_inputs(GildModel& gild) {
  Tensor& w = gild.params[0];
  const std::size_t begin = gild.state_dim + gild.action_dim;
  for (std::size_t r = begin; r < begin + gild.action_dim; ++r) {
    for (std::size_t c = 0; c < w.cols(); ++c) w(r, c) = 0.0;
  }
}

void soft_update(ParamSet& target, const ParamSet& online, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("soft_update: tau must lie in (0, 1]");
  if (!target.same_layout(online)) throw ShapeError("soft_update: parameter layouts differ");
  for (std::size_t i = 0; i < target.count(); ++i) {
    auto dst = target[i].data();
    auto src = online[i].data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = tau * src[j] + (1.0 - tau) * dst[j];
  }
}

}  // namespace gild
