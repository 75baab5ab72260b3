#include "gild/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gild {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, std::size_t line) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("not a number: '" + std::string(s) + "'", line);
  }
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t state_dim, std::size_t action_dim, std::size_t capacity)
    : sdim_(state_dim), adim_(action_dim), capacity_(capacity) {
  if (capacity_ == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(const Transition& t) {
  if (t.s.size() != sdim_ || t.s_next.size() != sdim_ || t.a.size() != adim_) {
    throw ShapeError("ReplayBuffer::push: transition dims do not match the buffer");
  }
  if (size_ < capacity_) {
    s_.insert(s_.end(), t.s.begin(), t.s.end());
    a_.insert(a_.end(), t.a.begin(), t.a.end());
    r_.push_back(t.r);
    s2_.insert(s2_.end(), t.s_next.begin(), t.s_next.end());
    d_.push_back(t.done ? 1.0 : 0.0);
    ++size_;
    cursor_ = size_ % capacity_;
    return;
  }
  std::copy(t.s.begin(), t.s.end(), s_.begin() + static_cast<std::ptrdiff_t>(cursor_ * sdim_));
  std::copy(t.a.begin(), t.a.end(), a_.begin() + static_cast<std::ptrdiff_t>(cursor_ * adim_));
  r_[cursor_] = t.r;
  std::copy(t.s_next.begin(), t.s_next.end(), s2_.begin() + static_cast<std::ptrdiff_t>(cursor_ * sdim_));
  d_[cursor_] = t.done ? 1.0 : 0.0;
  cursor_ = (cursor_ + 1) % capacity_;
}

std::size_t ReplayBuffer::physical(std::size_t logical) const {
  return size_ < capacity_ ? logical : (cursor_ + logical) % capacity_;
}

Transition ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("ReplayBuffer::at: index out of range");
  const std::size_t p = physical(i);
  Transition t;
  t.s.assign(s_.begin() + static_cast<std::ptrdiff_t>(p * sdim_), s_.begin() + static_cast<std::ptrdiff_t>((p + 1) * sdim_));
  t.a.assign(a_.begin() + static_cast<std::ptrdiff_t>(p * adim_), a_.begin() + static_cast<std::ptrdiff_t>((p + 1) * adim_));
  t.r = r_[p];
  t.s_next.assign(s2_.begin() + static_cast<std::ptrdiff_t>(p * sdim_),
                  s2_.begin() + static_cast<std::ptrdiff_t>((p + 1) * sdim_));
  t.done = d_[p] != 0.0;
  return t;
}

void ReplayBuffer::copy_row(std::size_t slot, std::size_t row, Batch& out) const {
  std::copy_n(s_.begin() + static_cast<std::ptrdiff_t>(slot * sdim_), sdim_, out.states.row_span(row).begin());
  std::copy_n(a_.begin() + static_cast<std::ptrdiff_t>(slot * adim_), adim_, out.actions.row_span(row).begin());
  out.rewards(row, 0) = r_[slot];
  std::copy_n(s2_.begin() + static_cast<std::ptrdiff_t>(slot * sdim_), sdim_, out.next_states.row_span(row).begin());
  out.dones(row, 0) = d_[slot];
}

Batch ReplayBuffer::sample(std::size_t n, RngStream& rng) const {
  if (size_ == 0) throw std::logic_error("ReplayBuffer::sample: buffer is empty");
  Batch b{Tensor(n, sdim_), Tensor(n, adim_), Tensor(n, 1), Tensor(n, sdim_), Tensor(n, 1)};
  for (std::size_t i = 0; i < n; ++i) copy_row(rng.index(size_), i, b);
  return b;
}

Tensor ReplayBuffer::sample_states(std::size_t n, RngStream& rng) const {
  if (size_ == 0) throw std::logic_error("ReplayBuffer::sample_states: buffer is empty");
  Tensor out(n, sdim_);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t slot = rng.index(size_);
    std::copy_n(s_.begin() + static_cast<std::ptrdiff_t>(slot * sdim_), sdim_, out.row_span(i).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------

void DemonstrationSet::add(std::span<const double> s, std::span<const double> a) {
  if (s.size() != state_dim || a.size() != action_dim) throw ShapeError("DemonstrationSet::add: dims do not match");
  states.insert(states.end(), s.begin(), s.end());
  actions.insert(actions.end(), a.begin(), a.end());
  meta.sample_count = size();
}

Tensor DemonstrationSet::state_tensor() const { return Tensor(size(), state_dim, states); }

DemoBatch DemonstrationSet::sample(std::size_t n, RngStream& rng) const {
  if (size() == 0) throw std::logic_error("DemonstrationSet::sample: no demonstrations");
  DemoBatch b{Tensor(n, state_dim), Tensor(n, action_dim)};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = rng.index(size());
    std::copy_n(states.begin() + static_cast<std::ptrdiff_t>(k * state_dim), state_dim, b.states.row_span(i).begin());
    std::copy_n(actions.begin() + static_cast<std::ptrdiff_t>(k * action_dim), action_dim, b.actions.row_span(i).begin());
  }
  return b;
}

namespace {

std::filesystem::path meta_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".meta.json");
}

}  // namespace

void save_demos(const std::filesystem::path& path, const DemonstrationSet& demos) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i = 0; i < demos.state_dim; ++i) out << (i ? "," : "") << 's' << i;
  for (std::size_t i = 0; i < demos.action_dim; ++i) out << ',' << 'a' << i;
  out << '\n';
  for (std::size_t r = 0; r < demos.size(); ++r) {
    for (std::size_t i = 0; i < demos.state_dim; ++i) out << (i ? "," : "") << format_double(demos.states[r * demos.state_dim + i]);
    for (std::size_t i = 0; i < demos.action_dim; ++i) out << ',' << format_double(demos.actions[r * demos.action_dim + i]);
    out << '\n';
  }

  nlohmann::json meta = {{"env_id", demos.meta.env_id},
                         {"behavior_return", demos.meta.behavior_return},
                         {"sample_count", demos.size()},
                         {"behavior_checkpoint", demos.meta.behavior_checkpoint},
                         {"state_dim", demos.state_dim},
                         {"action_dim", demos.action_dim}};
  std::ofstream mout(meta_path(path));
  mout << meta.dump(2) << '\n';
}

DemonstrationSet load_demos(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  DemonstrationSet demos;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  const auto header = split_csv_line(line);
  std::size_t n_s = 0;
  std::size_t n_a = 0;
  for (const auto& h : header) {
    const char kind = h.empty() ? '?' : h.front();
    const std::size_t expected = kind == 's' ? n_s : n_a;
    if ((kind != 's' && kind != 'a') || h.substr(1) != std::to_string(expected) || (kind == 's' && n_a > 0)) {
      throw ParseError("malformed header column '" + h + "'", 1);
    }
    (kind == 's' ? n_s : n_a)++;
  }
  if (n_s == 0 || n_a == 0) throw ParseError("header needs at least one state and one action column", 1);
  demos.state_dim = n_s;
  demos.action_dim = n_a;

  std::size_t lineno = 1;
  std::vector<double> s(n_s), a(n_a);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != n_s + n_a) {
      throw ParseError("expected " + std::to_string(n_s + n_a) + " fields, got " + std::to_string(cells.size()), lineno);
    }
    for (std::size_t i = 0; i < n_s; ++i) s[i] = parse_double(cells[i], lineno);
    for (std::size_t i = 0; i < n_a; ++i) a[i] = parse_double(cells[n_s + i], lineno);
    demos.add(s, a);
  }

  std::ifstream min(meta_path(path));
  if (min) {
    nlohmann::json meta;
    try {
      min >> meta;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("metadata: ") + e.what(), 0);
    }
    demos.meta.env_id = meta.value("env_id", std::string());
    demos.meta.behavior_return = meta.value("behavior_return", 0.0);
    demos.meta.behavior_checkpoint = meta.value("behavior_checkpoint", std::string());
    const auto count = meta.value("sample_count", demos.size());
    if (count != demos.size()) {
      throw ParseError("metadata sample_count " + std::to_string(count) + " disagrees with " +
                           std::to_string(demos.size()) + " rows",
                       0);
    }
  }
  demos.meta.sample_count = demos.size();
  return demos;
}

// ---------------------------------------------------------------------------

void RunLog::append(const EvalRecord& r) {
  if (!eval_.empty() && r.step <= eval_.back().step) throw std::logic_error("RunLog: eval steps must increase");
  eval_.push_back(r);
}

void RunLog::append(const TrainRecord& r) {
  if (!train_.empty() && r.step <= train_.back().step) throw std::logic_error("RunLog: train steps must increase");
  train_.push_back(r);
}

double RunLog::max_average_return() const {
  if (eval_.empty()) throw std::logic_error("RunLog: no evaluation records");
  double best = eval_.front().mean_return;
  for (const auto& r : eval_) best = std::max(best, r.mean_return);
  return best;
}

void RunLog::write_eval_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,mean_dense_return,std_dense_return\n";
  for (const auto& r : eval_) {
    out << r.step << ',' << format_double(r.mean_return) << ',' << format_double(r.std_return) << '\n';
  }
}

void RunLog::write_train_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,critic_loss,actor_loss,gild_loss,meta_loss,wall_ms\n";
  for (const auto& r : train_) {
    out << r.step << ',' << format_double(r.critic_loss) << ',' << format_double(r.actor_loss) << ','
        << format_double(r.gild_loss) << ',' << format_double(r.meta_loss) << ',' << format_double(r.wall_ms) << '\n';
  }
}

namespace {

std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw ParseError("unexpected header '" + line + "'", 1);
  const std::size_t width = split_csv_line(header).size();
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != width) throw ParseError("expected " + std::to_string(width) + " fields", lineno);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

std::vector<EvalRecord> RunLog::read_eval_csv(const std::filesystem::path& path) {
  std::vector<EvalRecord> out;
  std::size_t lineno = 1;
  for (const auto& c : read_csv_rows(path, "step,mean_dense_return,std_dense_return")) {
    ++lineno;
    out.push_back({static_cast<long>(parse_double(c[0], lineno)), parse_double(c[1], lineno), parse_double(c[2], lineno)});
  }
  return out;
}

std::vector<TrainRecord> RunLog::read_train_csv(const std::filesystem::path& path) {
  std::vector<TrainRecord> out;
  std::size_t lineno = 1;
  for (const auto& c : read_csv_rows(path, "step,critic_loss,actor_loss,gild_loss,meta_loss,wall_ms")) {
    ++lineno;
    out.push_back({static_cast<long>(parse_double(c[0], lineno)), parse_double(c[1], lineno), parse_double(c[2], lineno),
                   parse_double(c[3], lineno), parse_double(c[4], lineno), parse_double(c[5], lineno)});
  }
  return out;
}

}  // namespace gild
