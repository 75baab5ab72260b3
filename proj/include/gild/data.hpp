#pragma once

// Replay buffer, demonstration sets and the CSV run logs.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "gild/rng.hpp"
#include "gild/tensor.hpp"

namespace gild {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct Transition {
  std::vector<double> s;
  std::vector<double> a;
  double r = 0.0;
  std::vector<double> s_next;
  bool done = false;

  friend bool operator==(const Transition&, const Transition&) = default;
};

struct Batch {
  Tensor states;       // n x state_dim
  Tensor actions;      // n x action_dim
  Tensor rewards;      // n x 1
  Tensor next_states;  // n x state_dim
  Tensor dones;        // n x 1, 1.0 where terminal
};

/// Fixed-capacity ring of transitions; the oldest entry is overwritten once
/// full. Storage grows lazily up to capacity.
class ReplayBuffer {
 public:
  static constexpr std::size_t kDefaultCapacity = 2'000'000;

  ReplayBuffer(std::size_t state_dim, std::size_t action_dim, std::size_t capacity = kDefaultCapacity);

  void push(const Transition& t);
  std::size_t size() const noexcept { return size_; }
  std::size_t capacity() const noexcept { return capacity_; }
  bool empty() const noexcept { return size_ == 0; }

  /// Logical index: 0 is the oldest stored transition.
  Transition at(std::size_t i) const;

  /// n uniform draws with replacement. Throws std::logic_error when empty.
  Batch sample(std::size_t n, RngStream& rng) const;
  /// States only, for validation batches.
  Tensor sample_states(std::size_t n, RngStream& rng) const;

 private:
  std::size_t physical(std::size_t logical) const;
  void copy_row(std::size_t slot, std::size_t row, Batch& out) const;

  std::size_t sdim_;
  std::size_t adim_;
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;
  std::vector<double> s_, a_, r_, s2_, d_;
};

struct DemoMetadata {
  std::string env_id;
  double behavior_return = 0.0;
  std::size_t sample_count = 0;
  std::string behavior_checkpoint;

  friend bool operator==(const DemoMetadata&, const DemoMetadata&) = default;
};

struct DemoBatch {
  Tensor states;
  Tensor actions;
};

/// Demonstration (state, action) pairs plus provenance metadata.
struct DemonstrationSet {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<double> states;   // row-major, size() x state_dim
  std::vector<double> actions;  // row-major, size() x action_dim
  DemoMetadata meta;

  std::size_t size() const { return state_dim == 0 ? 0 : states.size() / state_dim; }
  void add(std::span<const double> s, std::span<const double> a);
  Tensor state_tensor() const;
  DemoBatch sample(std::size_t n, RngStream& rng) const;

  friend bool operator==(const DemonstrationSet&, const DemonstrationSet&) = default;
};

/// Writes `<path>` (CSV, header s0..,a0..) and `<path>.meta.json`.
void save_demos(const std::filesystem::path& path, const DemonstrationSet& demos);
DemonstrationSet load_demos(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

struct EvalRecord {
  long step = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

struct TrainRecord {
  long step = 0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double gild_loss = 0.0;
  double meta_loss = 0.0;
  double wall_ms = 0.0;  // wall-clock per 1000 training steps over the interval
  friend bool operator==(const TrainRecord&, const TrainRecord&) = default;
};

/// Append-only metric records with monotone steps.
class RunLog {
 public:
  void append(const EvalRecord& r);
  void append(const TrainRecord& r);
  const std::vector<EvalRecord>& eval() const noexcept { return eval_; }
  const std::vector<TrainRecord>& train() const noexcept { return train_; }

  /// Maximum over evaluation points of the mean return.
  double max_average_return() const;

  void write_eval_csv(const std::filesystem::path& path) const;
  void write_train_csv(const std::filesystem::path& path) const;
  static std::vector<EvalRecord> read_eval_csv(const std::filesystem::path& path);
  static std::vector<TrainRecord> read_train_csv(const std::filesystem::path& path);

 private:
  std::vector<EvalRecord> eval_;
  std::vector<TrainRecord> train_;
};

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double v);
double parse_double(std::string_view s, std::size_t line);
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace gild
