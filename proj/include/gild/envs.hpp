#pragma once

// Desk-scale continuous-control environments. Every step reports both a
// sparse and a dense reward; training reads one channel, evaluation always
// reads the dense one.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gild/tensor.hpp"

namespace gild {

struct StepResult {
  std::vector<double> next_state;
  double reward_sparse = 0.0;
  double reward_dense = 0.0;
  bool done = false;      // terminal or horizon reached
  bool terminal = false;  // true environment termination (no bootstrapping)
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Env {
 public:
  virtual ~Env() = default;

  virtual std::vector<double> reset(std::uint64_t seed) = 0;
  virtual StepResult step(std::span<const double> action) = 0;

  virtual std::size_t state_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  /// Symmetric per-dimension action bound.
  virtual double action_bound() const = 0;
  virtual int horizon() const = 0;
  virtual int step_count() const = 0;
  virtual std::vector<double> state() const = 0;
  /// Scalar progress coordinate for sparsification, if the env has one.
  virtual std::optional<double> progress() const { return std::nullopt; }
  virtual std::unique_ptr<Env> clone() const = 0;
};

/// 2-D goal reaching: start (0, 0), goal (1, 1), per-axis step <= 0.1,
/// success radius 0.1, horizon 100. Sparse reward is the goal indicator.
class Point2D final : public Env {
 public:
  static constexpr double kMaxStep = 0.1;
  static constexpr double kGoalRadius = 0.1;
  static constexpr int kHorizon = 100;

  std::vector<double> reset(std::uint64_t seed) override;
  StepResult step(std::span<const double> action) override;
  std::size_t state_dim() const override { return 2; }
  std::size_t action_dim() const override { return 2; }
  double action_bound() const override { return kMaxStep; }
  int horizon() const override { return kHorizon; }
  int step_count() const override { return steps_; }
  std::vector<double> state() const override { return {x_, y_}; }
  std::unique_ptr<Env> clone() const override { return std::make_unique<Point2D>(*this); }

  /// Places the agent (test hook).
  void set_position(double x, double y) {
    x_ = x;
    y_ = y;
  }

 private:
  double x_ = 0.0;
  double y_ = 0.0;
  int steps_ = 0;
};

/// Point-mass double integrator; dense reward is forward (+x) progress.
/// The sparse channel is zero until wrapped by Sparsified.
class Mass2D final : public Env {
 public:
  static constexpr double kAccel = 0.05;
  static constexpr double kMaxVel = 0.5;
  static constexpr double kDt = 0.1;
  static constexpr int kHorizon = 200;

  std::vector<double> reset(std::uint64_t seed) override;
  StepResult step(std::span<const double> action) override;
  std::size_t state_dim() const override { return 4; }
  std::size_t action_dim() const override { return 2; }
  double action_bound() const override { return 1.0; }
  int horizon() const override { return kHorizon; }
  int step_count() const override { return steps_; }
  std::vector<double> state() const override { return {px_, py_, vx_, vy_}; }
  std::optional<double> progress() const override { return px_; }
  std::unique_ptr<Env> clone() const override { return std::make_unique<Mass2D>(*this); }

  void set_velocity(double vx, double vy) {
    vx_ = vx;
    vy_ = vy;
  }

 private:
  double px_ = 0.0, py_ = 0.0, vx_ = 0.0, vy_ = 0.0;
  int steps_ = 0;
};

/// Emits one sparse reward unit each time cumulative progress crosses the
/// next multiple of `threshold` within an episode.
class Sparsified final : public Env {
 public:
  Sparsified(std::unique_ptr<Env> inner, double threshold);
  Sparsified(const Sparsified& other);

  std::vector<double> reset(std::uint64_t seed) override;
  StepResult step(std::span<const double> action) override;
  std::size_t state_dim() const override { return inner_->state_dim(); }
  std::size_t action_dim() const override { return inner_->action_dim(); }
  double action_bound() const override { return inner_->action_bound(); }
  int horizon() const override { return inner_->horizon(); }
  int step_count() const override { return inner_->step_count(); }
  std::vector<double> state() const override { return inner_->state(); }
  std::optional<double> progress() const override { return inner_->progress(); }
  std::unique_ptr<Env> clone() const override { return std::make_unique<Sparsified>(*this); }

  Env& inner() { return *inner_; }

 private:
  std::unique_ptr<Env> inner_;
  double threshold_;
  double origin_ = 0.0;
  long crossings_ = 0;
};

/// Crossing count after progress `progress` from the episode origin.
long threshold_crossings(double progress, double threshold);

struct EnvSpec {
  std::string id;
  bool sparse_training = false;  // which reward channel the learner sees
};

/// Parses one of "point2d-dense", "point2d-sparse", "mass2d-dense",
/// "mass2d-sparse". Throws ConfigError otherwise.
EnvSpec parse_env_id(const std::string& id);

/// Builds the environment for `id`. `threshold` is the mass2d sparsification
/// unit.
std::unique_ptr<Env> make_env(const std::string& id, double threshold = 1.0);

/// The reward the learner sees for this env id.
double training_reward(const EnvSpec& spec, const StepResult& r);

}  // namespace gild
