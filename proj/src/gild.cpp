#include "gild/gild.hpp"

#include <stdexcept>

namespace gild {

std::string to_string(MetaLossVariant v) {
  return v == MetaLossVariant::DifferenceTanh ? "difference_tanh" : "intuitive";
}

MetaLossVariant meta_loss_variant_from_string(const std::string& s) {
  if (s == "difference_tanh") return MetaLossVariant::DifferenceTanh;
  if (s == "intuitive") return MetaLossVariant::Intuitive;
  throw std::invalid_argument("unknown meta_loss_variant '" + s + "'");
}

std::string to_string(MetaSign s) { return s == MetaSign::LiteralEq10 ? "literal_eq10" : "maximize_superiority"; }

MetaSign meta_sign_from_string(const std::string& s) {
  if (s == "maximize_superiority") return MetaSign::MaximizeSuperiority;
  if (s == "literal_eq10") return MetaSign::LiteralEq10;
  throw std::invalid_argument("unknown meta_sign '" + s + "'");
}

Var gild_loss(const ActorModel& actor, std::span<const Var> phi, const GildModel& gild, std::span<const Var> omega,
              Tape& tape, const DemoBatch& demos, const Tensor* policy_noise) {
  const Var s = tape.constant(demos.states);
  Var a_pi;
  if (actor.kind == PolicyKind::Gaussian) {
    if (policy_noise == nullptr) throw std::invalid_argument("gild_loss: Gaussian actor requires sampling noise");
    a_pi = sample_action(actor, phi, s, *policy_noise).action;
  } else {
    a_pi = actor_mean_action(actor, phi, s);
  }
  return mean(gild_forward(gild, omega, s, tape.constant(demos.actions), a_pi));
}

ActorStepper sgd_stepper(double inner_lr) {
  return [inner_lr](const ParamSet& phi, const ParamSet& grad) {
    ParamSet out = phi;
    axpy(out, -inner_lr, grad);
    return out;
  };
}

GildActorStep gild_actor_update(const Agent& agent, const ParamSet& phi, const Tensor& states, const DemoBatch& demos,
                                const GildModel& gild, double inner_lr, const Tensor* rl_noise,
                                const Tensor* gild_noise, const ActorStepper& stepper) {
  GildActorStep out;
  out.rl_grad = rl_actor_grad(agent, phi, states, rl_noise, &out.rl_loss);

  RetainedPath path;
  path.tape = std::make_unique<Tape>();
  Tape& tape = *path.tape;
  const auto phi_vars = phi.as_leaves(tape);
  path.omega = gild.params.as_leaves(tape);
  const Var loss = gild_loss(agent.actor, phi_vars, gild, path.omega, tape, demos, gild_noise);
  out.gild_loss = loss.value().item();
  path.gild_grad = tape.gradient_graph(loss, phi_vars);
  path.phi_layout = phi;
  path.omega_layout = gild.params;
  path.inner_lr = inner_lr;

  std::vector<Tensor> g;
  g.reserve(path.gild_grad.size());
  for (const auto& v : path.gild_grad) g.push_back(v.value());
  out.gild_grad = with_layout(phi, std::move(g));

  ParamSet total = out.rl_grad;
  axpy(total, 1.0, out.gild_grad);
  out.phi_new = stepper ? stepper(phi, total) : sgd_stepper(inner_lr)(phi, total);
  out.path = std::move(path);
  return out;
}

MetaLossResult meta_loss(const Agent& agent, const ParamSet& phi_new, const ParamSet& phi_hat, const Tensor& val_states,
                         MetaLossVariant variant) {
  Tape tape;
  const auto leaves = phi_new.as_leaves(tape);
  const Var s = tape.constant(val_states);
  const Var q_new = critic_for_actor(agent, tape, s, actor_mean_action(agent.actor, leaves, s));
  Var loss;
  if (variant == MetaLossVariant::DifferenceTanh) {
    const auto hat = phi_hat.as_constants(tape);
    const Var q_hat = critic_for_actor(agent, tape, s, actor_mean_action(agent.actor, hat, s));
    loss = mean(tanh(sub(q_new, q_hat)));
  } else {
    loss = mean(q_new);
  }
  return {loss.value().item(), with_layout(phi_new, tape.gradient(loss, leaves))};
}

MetaUpdate gild_meta_update(GildModel& gild, const RetainedPath& path, const ParamSet& v, const GildConfig& cfg) {
  if (!path.valid()) throw std::logic_error("gild_meta_update: no retained path from a GILD actor step");
  if (!v.same_layout(path.phi_layout)) throw ShapeError("gild_meta_update: meta gradient layout differs from phi");
  if (!gild.params.same_layout(path.omega_layout)) throw ShapeError("gild_meta_update: GILD layout changed");

  Tape& tape = *path.tape;
  const Var contracted = inner_product(tape, v, path.gild_grad);
  MetaUpdate out;
  out.mixed = with_layout(gild.params, tape.gradient(contracted, path.omega));
  out.delta = gild.params.zeros_like();
  if (cfg.frozen) return out;
  axpy(out.delta, cfg.sign_factor() * cfg.meta_lr_outer * path.inner_lr, out.mixed);
  axpy(gild.params, 1.0, out.delta);
  return out;
}

WarmStartDecision warmstart_gate(long step, long total_steps, double warm_start_fraction) {
  if (step < 0 || step >= total_steps) throw std::out_of_range("warmstart_gate: step outside [0, total_steps)");
  return {static_cast<double>(step) < warm_start_fraction * static_cast<double>(total_steps)};
}

}  // namespace gild
