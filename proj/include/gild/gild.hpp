#pragma once

// Bi-level GILD engine.
//
// Per training step (after the critic update):
//   1. phi_hat = one RL+IL step from phi                (rl_core::pseudo_update)
//   2. phi_new = phi - a * grad_phi[L_RL + L_GILD(phi, w)] (gild_actor_update)
//      The RL term is constant in w; the GILD gradient is kept on a tape so
//      that d phi_new / d w = -a * d2 L_GILD / d phi d w.
//   3. L_meta = mean tanh(Q(s, phi_new(s)) - Q(s, phi_hat(s)))  (meta_loss)
//   4. w += s * a_outer * a * v . d2 L_GILD / d phi d w,
//      v = dL_meta / d phi_new                          (gild_meta_update)

#include <functional>
#include <memory>
#include <string>

#include "gild/rl_core.hpp"

namespace gild {

enum class MetaLossVariant { DifferenceTanh, Intuitive };
enum class MetaSign { MaximizeSuperiority, LiteralEq10 };

std::string to_string(MetaLossVariant v);
MetaLossVariant meta_loss_variant_from_string(const std::string& s);
std::string to_string(MetaSign s);
MetaSign meta_sign_from_string(const std::string& s);

struct GildConfig {
  double meta_lr_outer = 3e-4;
  double inner_lr = 3e-4;
  MetaLossVariant variant = MetaLossVariant::DifferenceTanh;
  MetaSign sign = MetaSign::MaximizeSuperiority;
  double warm_start_fraction = 0.01;
  bool frozen = false;  // compute meta steps but never apply them

  /// +1 for the literal update sign, -1 for ascent on superiority.
  double sign_factor() const { return sign == MetaSign::LiteralEq10 ? 1.0 : -1.0; }
};

/// The per-sample GILD losses' batch mean, L_GILD(phi, w), on `tape`.
/// `policy_noise` drives the reparameterized sample for Gaussian actors and
/// is ignored for deterministic ones.
Var gild_loss(const ActorModel& actor, std::span<const Var> phi, const GildModel& gild, std::span<const Var> omega,
              Tape& tape, const DemoBatch& demos, const Tensor* policy_noise);

/// Differentiable record of the GILD gradient from one actor step.
struct RetainedPath {
  std::unique_ptr<Tape> tape;
  std::vector<Var> omega;       // leaves
  std::vector<Var> gild_grad;   // dL_GILD/dphi as expressions of (phi, w)
  ParamSet phi_layout;
  ParamSet omega_layout;
  double inner_lr = 0.0;

  bool valid() const { return tape != nullptr; }
};

struct GildActorStep {
  ParamSet phi_new;
  RetainedPath path;
  double rl_loss = 0.0;
  double gild_loss = 0.0;
  ParamSet rl_grad;
  ParamSet gild_grad;
};

/// Maps (phi, total gradient) to the next actor parameters.
using ActorStepper = std::function<ParamSet(const ParamSet& phi, const ParamSet& grad)>;

/// phi - inner_lr * grad.
ActorStepper sgd_stepper(double inner_lr);

/// RL+GILD actor step from `phi`. With the default stepper the result is
/// phi - inner_lr * (grad L_RL + grad L_GILD).
GildActorStep gild_actor_update(const Agent& agent, const ParamSet& phi, const Tensor& states, const DemoBatch& demos,
                                const GildModel& gild, double inner_lr, const Tensor* rl_noise,
                                const Tensor* gild_noise, const ActorStepper& stepper = {});

struct MetaLossResult {
  double value = 0.0;
  ParamSet grad_phi_new;  // dL_meta / d phi_new
};

/// difference_tanh: mean tanh(Qc(s, phi_new(s)) - Qc(s, phi_hat(s)));
/// intuitive: mean Qc(s, phi_new(s)). Gaussian actors use their mean action.
MetaLossResult meta_loss(const Agent& agent, const ParamSet& phi_new, const ParamSet& phi_hat, const Tensor& val_states,
                         MetaLossVariant variant);

struct MetaUpdate {
  ParamSet mixed;  // v . d2 L_GILD / d phi d w
  ParamSet delta;  // applied change to w (zero when frozen)
};

/// Applies the meta step to `gild` (unless cfg.frozen). Throws
/// std::logic_error when `path` is empty.
MetaUpdate gild_meta_update(GildModel& gild, const RetainedPath& path, const ParamSet& v, const GildConfig& cfg);

struct WarmStartDecision {
  bool use_gild = true;
  bool use_vanilla() const { return !use_gild; }
};

/// GILD runs while step < fraction * total_steps.
WarmStartDecision warmstart_gate(long step, long total_steps, double warm_start_fraction);

}  // namespace gild
