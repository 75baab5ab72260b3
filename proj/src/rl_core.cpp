#include "gild/rl_core.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace gild {

std::string to_string(Algo a) {
  switch (a) {
    case Algo::Ddpg: return "ddpg";
    case Algo::Td3: return "td3";
    case Algo::Sac: return "sac";
  }
  return "td3";
}

Algo algo_from_string(const std::string& s) {
  if (s == "ddpg") return Algo::Ddpg;
  if (s == "td3") return Algo::Td3;
  if (s == "sac") return Algo::Sac;
  throw std::invalid_argument("unknown algorithm '" + s + "'");
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::Sgd;
  throw std::invalid_argument("unknown optimizer '" + s + "'");
}

void AlgoConfig::validate() const {
  if (!(lr >= 0.0)) throw std::invalid_argument("lr must be non-negative");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in (0, 1]");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (expl_noise < 0.0 || policy_noise < 0.0 || noise_clip < 0.0 || alpha_ent < 0.0 || beta < 0.0 || w_il < 0.0) {
    throw std::invalid_argument("noise scales, temperature and IL weights must be non-negative");
  }
  if (policy_delay < 1 || target_interval < 1) throw std::invalid_argument("update intervals must be >= 1");
}

// ---------------------------------------------------------------------------

Optimizer::Optimizer(OptimizerKind kind, double lr, const ParamSet& layout) : kind_(kind), lr_(lr) {
  if (kind_ == OptimizerKind::Adam) {
    m_ = layout.zeros_like();
    v_ = layout.zeros_like();
  }
}

void Optimizer::step(ParamSet& params, const ParamSet& grad) {
  if (!params.same_layout(grad)) throw ShapeError("Optimizer::step: gradient layout differs from parameters");
  if (kind_ == OptimizerKind::Sgd) {
    axpy(params, -lr_, grad);
    return;
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.count(); ++i) {
    auto p = params[i].data();
    auto g = grad[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      p[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
    }
  }
}

ParamSet Optimizer::stepped(const ParamSet& params, const ParamSet& grad) const {
  Optimizer copy = *this;
  ParamSet out = params;
  copy.step(out, grad);
  return out;
}

// ---------------------------------------------------------------------------

Agent make_agent(const AlgoConfig& cfg, std::size_t state_dim, std::size_t action_dim,
                 const std::vector<std::size_t>& hidden, double action_bound, RngStream& init_rng) {
  cfg.validate();
  Agent agent;
  agent.cfg = cfg;
  agent.actor = cfg.algo == Algo::Sac ? make_gaussian_actor(state_dim, action_dim, hidden, action_bound, init_rng)
                                      : make_deterministic_actor(state_dim, action_dim, hidden, action_bound, init_rng);
  if (cfg.algo != Algo::Sac) agent.actor_target = agent.actor.params;
  const std::size_t n_critics = cfg.algo == Algo::Ddpg ? 1 : 2;
  for (std::size_t i = 0; i < n_critics; ++i) {
    agent.critics.push_back(make_critic(state_dim, action_dim, hidden, init_rng));
    agent.critic_targets.push_back(agent.critics.back().params);
    agent.critic_opts.emplace_back(cfg.optimizer, cfg.lr, agent.critics.back().params);
  }
  agent.actor_opt = Optimizer(cfg.optimizer, cfg.lr, agent.actor.params);
  return agent;
}

Tensor normal_noise(std::size_t rows, std::size_t cols, RngStream& rng) {
  Tensor out(rows, cols);
  for (auto& v : out.data()) v = rng.normal();
  return out;
}

std::vector<double> select_action(const Agent& agent, std::span<const double> state, ActionMode mode, RngStream& rng) {
  const ActorModel& actor = agent.actor;
  const Tensor s = Tensor::row(state);
  if (actor.kind == PolicyKind::Gaussian && mode == ActionMode::Explore) {
    Tape tape;
    const auto vars = actor.params.as_constants(tape);
    const Tensor eps = normal_noise(1, actor.action_dim(), rng);
    const auto sample = sample_action(actor, vars, tape.constant(s), eps);
    return {sample.action.value().data().begin(), sample.action.value().data().end()};
  }
  Tensor a = actor_act(actor, s);
  if (mode == ActionMode::Explore) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double bound = actor.action_scale[j];
      a[j] = std::clamp(a[j] + rng.normal(0.0, agent.cfg.expl_noise * bound), -bound, bound);
    }
  }
  return {a.data().begin(), a.data().end()};
}

Tensor td3_target_noise(std::size_t n, const AlgoConfig& cfg, const Tensor& action_scale, RngStream& rng) {
  Tensor noise(n, action_scale.cols());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < noise.cols(); ++c) {
      const double bound = cfg.noise_clip * action_scale[c];
      noise(r, c) = std::clamp(rng.normal(0.0, cfg.policy_noise * action_scale[c]), -bound, bound);
    }
  }
  return noise;
}

Tensor critic_targets(const Agent& agent, const Batch& batch, RngStream& noise_rng) {
  const auto& cfg = agent.cfg;
  const std::size_t n = batch.states.rows();
  Tape tape;
  const Var s2 = tape.constant(batch.next_states);
  Var next_action;
  Var log_prob;
  if (cfg.algo == Algo::Sac) {
    const auto phi = agent.actor.params.as_constants(tape);
    const auto sample = sample_action(agent.actor, phi, s2, normal_noise(n, agent.actor.action_dim(), noise_rng));
    next_action = sample.action;
    log_prob = sample.log_prob;
  } else {
    const auto phi_t = agent.actor_target.as_constants(tape);
    next_action = actor_mean_action(agent.actor, phi_t, s2);
    if (cfg.algo == Algo::Td3) {
      const Var noisy = add(next_action, tape.constant(td3_target_noise(n, cfg, agent.actor.action_scale, noise_rng)));
      // Per-dimension bound; all dims share one bound in the shipped envs.
      const double bound = agent.actor.action_scale[0];
      next_action = clip(noisy, -bound, bound);
    }
  }
  Var q_next;
  for (std::size_t i = 0; i < agent.critic_count(); ++i) {
    const auto theta_t = agent.critic_targets[i].as_constants(tape);
    const Var q = critic_forward(agent.critics[i], theta_t, s2, next_action);
    q_next = q_next.valid() ? minimum(q_next, q) : q;
  }
  if (cfg.algo == Algo::Sac) q_next = sub(q_next, affine(log_prob, cfg.alpha_ent, 0.0));
  const Var not_done = affine(tape.constant(batch.dones), -1.0, 1.0);
  const Var y = add(tape.constant(batch.rewards), affine(mul(not_done, q_next), cfg.gamma, 0.0));
  return y.value();
}

double critic_update(Agent& agent, const Batch& batch, RngStream& noise_rng) {
  const Tensor y = critic_targets(agent, batch, noise_rng);
  double total = 0.0;
  for (std::size_t i = 0; i < agent.critic_count(); ++i) {
    Tape tape;
    const auto theta = agent.critics[i].params.as_leaves(tape);
    const Var q = critic_forward(agent.critics[i], theta, tape.constant(batch.states), tape.constant(batch.actions));
    const Var loss = mean(square(sub(q, tape.constant(y))));
    const auto g = with_layout(agent.critics[i].params, tape.gradient(loss, theta));
    agent.critic_opts[i].step(agent.critics[i].params, g);
    total += loss.value().item();
  }
  return total;
}

Var critic_for_actor(const Agent& agent, Tape& tape, Var states, Var actions) {
  const auto theta1 = agent.critics[0].params.as_constants(tape);
  Var q = critic_forward(agent.critics[0], theta1, states, actions);
  if (agent.cfg.algo == Algo::Sac && agent.critic_count() > 1) {
    const auto theta2 = agent.critics[1].params.as_constants(tape);
    q = minimum(q, critic_forward(agent.critics[1], theta2, states, actions));
  }
  return q;
}

Var rl_actor_loss(const Agent& agent, Tape& tape, std::span<const Var> phi, Var states, const Tensor* noise) {
  if (agent.cfg.algo == Algo::Sac) {
    if (noise == nullptr) throw std::invalid_argument("rl_actor_loss: SAC requires sampling noise");
    const auto sample = sample_action(agent.actor, phi, states, *noise);
    const Var q = critic_for_actor(agent, tape, states, sample.action);
    return mean(sub(affine(sample.log_prob, agent.cfg.alpha_ent, 0.0), q));
  }
  const Var a = actor_mean_action(agent.actor, phi, states);
  return neg(mean(critic_for_actor(agent, tape, states, a)));
}

namespace {

constexpr double kAtanhMargin = 1e-6;

}  // namespace

Var il_loss(const ActorModel& actor, Tape& tape, std::span<const Var> phi, const DemoBatch& demos) {
  const Var s = tape.constant(demos.states);
  if (actor.kind == PolicyKind::Deterministic) {
    const Var a = actor_mean_action(actor, phi, s);
    const Var err = div(sub(a, tape.constant(demos.actions)), tape.constant(actor.action_scale));
    return mean(sum_cols(square(err)));
  }
  const std::size_t n = demos.actions.rows();
  const std::size_t m = demos.actions.cols();
  Tensor u(n, m);
  Tensor log_jac(n, 1);
  std::size_t clamped = 0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      const double scale = actor.action_scale[c];
      double y = demos.actions(r, c) / scale;
      if (std::abs(y) > 1.0) ++clamped;
      y = std::clamp(y, -1.0 + kAtanhMargin, 1.0 - kAtanhMargin);
      u(r, c) = std::atanh(y);
      log_jac(r, 0) += std::log1p(-y * y);
    }
  }
  if (clamped > 0) {
    std::cerr << "warning: il_loss clamped " << clamped << " demonstration action entries into the action bounds\n";
  }
  const GaussianHeads heads = gaussian_heads(actor, phi, s);
  const Var log_prob = sub(gaussian_log_pdf(tape.constant(u), heads.mean, heads.log_std), tape.constant(log_jac));
  return neg(mean(log_prob));
}

IlRlWeights ilrl_weights(const Agent& agent, const Tensor& states, const Tensor& actions) {
  Tape tape;
  const Var q = critic_for_actor(agent, tape, tape.constant(states), tape.constant(actions));
  const double mean_abs = mean(abs(q)).value().item();
  return {agent.cfg.beta / std::max(mean_abs, kWeightFloor), agent.cfg.w_il};
}

ParamSet rl_actor_grad(const Agent& agent, const ParamSet& phi, const Tensor& states, const Tensor* noise,
                       double* loss_out) {
  Tape tape;
  const auto leaves = phi.as_leaves(tape);
  const Var loss = rl_actor_loss(agent, tape, leaves, tape.constant(states), noise);
  if (loss_out) *loss_out = loss.value().item();
  return with_layout(phi, tape.gradient(loss, leaves));
}

ParamSet ilrl_actor_grad(const Agent& agent, const ParamSet& phi, const Batch& batch, const DemoBatch& demos,
                         const Tensor* noise, double* loss_out) {
  const IlRlWeights w = ilrl_weights(agent, batch.states, batch.actions);
  Tape tape;
  const auto leaves = phi.as_leaves(tape);
  const Var rl = rl_actor_loss(agent, tape, leaves, tape.constant(batch.states), noise);
  const Var il = il_loss(agent.actor, tape, leaves, demos);
  const Var loss = add(affine(rl, w.w_rl, 0.0), affine(il, w.w_il, 0.0));
  if (loss_out) *loss_out = loss.value().item();
  return with_layout(phi, tape.gradient(loss, leaves));
}

ParamSet pseudo_update(const Agent& agent, const Batch& batch, const DemoBatch& demos, const Tensor* noise,
                       double* loss_out) {
  const ParamSet g = ilrl_actor_grad(agent, agent.actor.params, batch, demos, noise, loss_out);
  return agent.actor_opt.stepped(agent.actor.params, g);
}

double vanilla_actor_update(Agent& agent, const Tensor& states, const Tensor* noise) {
  double loss = 0.0;
  const ParamSet g = rl_actor_grad(agent, agent.actor.params, states, noise, &loss);
  agent.actor_opt.step(agent.actor.params, g);
  return loss;
}

double ilrl_actor_update(Agent& agent, const Batch& batch, const DemoBatch& demos, const Tensor* noise) {
  double loss = 0.0;
  const ParamSet g = ilrl_actor_grad(agent, agent.actor.params, batch, demos, noise, &loss);
  agent.actor_opt.step(agent.actor.params, g);
  return loss;
}

void sync_targets(Agent& agent) {
  if (agent.cfg.algo != Algo::Sac) soft_update(agent.actor_target, agent.actor.params, agent.cfg.tau);
  for (std::size_t i = 0; i < agent.critic_count(); ++i) {
    soft_update(agent.critic_targets[i], agent.critics[i].params, agent.cfg.tau);
  }
}

}  // namespace gild
