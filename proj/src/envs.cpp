#include "gild/envs.hpp"

#include <algorithm>
#include <cmath>

namespace gild {

std::vector<double> Point2D::reset(std::uint64_t /*seed*/) {
  x_ = 0.0;
  y_ = 0.0;
  steps_ = 0;
  return state();
}

StepResult Point2D::step(std::span<const double> action) {
  if (action.size() != 2) throw ShapeError("Point2D::step: expected a 2-vector action");
  x_ += std::clamp(action[0], -kMaxStep, kMaxStep);
  y_ += std::clamp(action[1], -kMaxStep, kMaxStep);
  ++steps_;
  const double dist = std::hypot(x_ - 1.0, y_ - 1.0);
  StepResult r;
  r.next_state = state();
  r.reward_dense = -dist;
  r.terminal = dist < kGoalRadius;
  r.reward_sparse = r.terminal ? 1.0 : 0.0;
  r.done = r.terminal || steps_ >= kHorizon;
  return r;
}

std::vector<double> Mass2D::reset(std::uint64_t /*seed*/) {
  px_ = py_ = vx_ = vy_ = 0.0;
  steps_ = 0;
  return state();
}

StepResult Mass2D::step(std::span<const double> action) {
  if (action.size() != 2) throw ShapeError("Mass2D::step: expected a 2-vector action");
  const double ax = std::clamp(action[0], -1.0, 1.0);
  const double ay = std::clamp(action[1], -1.0, 1.0);
  vx_ = std::clamp(vx_ + kAccel * ax, -kMaxVel, kMaxVel);
  vy_ = std::clamp(vy_ + kAccel * ay, -kMaxVel, kMaxVel);
  const double old_x = px_;
  px_ += kDt * vx_;
  py_ += kDt * vy_;
  ++steps_;
  StepResult r;
  r.next_state = state();
  r.reward_dense = px_ - old_x;
  r.done = steps_ >= kHorizon;
  return r;
}

long threshold_crossings(double progress, double threshold) {
  if (progress <= 0.0) return 0;
  return static_cast<long>(std::floor(progress / threshold));
}

Sparsified::Sparsified(std::unique_ptr<Env> inner, double threshold) : inner_(std::move(inner)), threshold_(threshold) {
  if (!(threshold_ > 0.0)) throw ConfigError("sparsify: threshold must be positive");
  if (!inner_->progress()) throw ConfigError("sparsify: wrapped environment exposes no progress coordinate");
}

Sparsified::Sparsified(const Sparsified& other)
    : inner_(other.inner_->clone()), threshold_(other.threshold_), origin_(other.origin_), crossings_(other.crossings_) {}

std::vector<double> Sparsified::reset(std::uint64_t seed) {
  auto s = inner_->reset(seed);
  origin_ = *inner_->progress();
  crossings_ = 0;
  return s;
}

StepResult Sparsified::step(std::span<const double> action) {
  StepResult r = inner_->step(action);
  const long now = threshold_crossings(*inner_->progress() - origin_, threshold_);
  r.reward_sparse = now > crossings_ ? static_cast<double>(now - crossings_) : 0.0;
  crossings_ = std::max(crossings_, now);
  return r;
}

EnvSpec parse_env_id(const std::string& id) {
  if (id == "point2d-dense" || id == "mass2d-dense") return {id, false};
  if (id == "point2d-sparse" || id == "mass2d-sparse") return {id, true};
  throw ConfigError("unknown environment id '" + id + "'");
}

std::unique_ptr<Env> make_env(const std::string& id, double threshold) {
  const EnvSpec spec = parse_env_id(id);
  if (spec.id.starts_with("point2d")) return std::make_unique<Point2D>();
  auto base = std::make_unique<Mass2D>();
  if (spec.sparse_training) return std::make_unique<Sparsified>(std::move(base), threshold);
  return base;
}

double training_reward(const EnvSpec& spec, const StepResult& r) {
  return spec.sparse_training ? r.reward_sparse : r.reward_dense;
}

}  // namespace gild
