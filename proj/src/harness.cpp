#include "gild/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <type_traits>

namespace gild {

namespace fs = std::filesystem;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Vanilla: return "vanilla";
    case Variant::Il: return "il";
    case Variant::Gild: return "gild";
  }
  return "vanilla";
}

Variant variant_from_string(const std::string& s) {
  if (s == "vanilla") return Variant::Vanilla;
  if (s == "il") return Variant::Il;
  if (s == "gild") return Variant::Gild;
  throw ConfigError("unknown variant '" + s + "'");
}

void RunConfig::validate(bool demos_supplied) const {
  parse_env_id(env_id);
  try {
    algo.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (total_steps <= 0) throw ConfigError("total_steps must be positive");
  if (eval_interval <= 0 || eval_interval > total_steps) throw ConfigError("eval_interval must lie in [1, total_steps]");
  if (eval_episodes <= 0) throw ConfigError("eval_episodes must be positive");
  if (start_steps < 0) throw ConfigError("start_steps must be non-negative");
  if (hidden.empty() || gild_hidden.empty()) throw ConfigError("networks need at least one hidden layer");
  for (auto h : hidden) {
    if (h == 0) throw ConfigError("hidden_units entries must be positive");
  }
  for (auto h : gild_hidden) {
    if (h == 0) throw ConfigError("gild_hidden_units entries must be positive");
  }
  if (!(warm_start_fraction >= 0.0 && warm_start_fraction <= 1.0)) {
    throw ConfigError("warm_start_fraction must lie in [0, 1]");
  }
  if (!(meta_lr_outer >= 0.0)) throw ConfigError("meta_lr_outer must be non-negative");
  if (!(sparse_threshold > 0.0)) throw ConfigError("sparse_threshold must be positive");
  if (buffer_capacity == 0) throw ConfigError("buffer_capacity must be positive");
  if (log_interval <= 0) throw ConfigError("log_interval must be positive");
  if (variant != Variant::Vanilla && demo_path.empty() && !demos_supplied) {
    throw ConfigError("variant " + to_string(variant) + " requires demo_path");
  }
}

GildConfig RunConfig::gild_config() const {
  GildConfig g;
  g.meta_lr_outer = meta_lr_outer;
  g.inner_lr = algo.lr;
  g.variant = meta_loss_variant;
  g.sign = meta_sign;
  g.warm_start_fraction = warm_start_fraction;
  g.frozen = gild_frozen;
  return g;
}

// ---------------------------------------------------------------------------
// Config text

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  if constexpr (std::is_unsigned_v<T>) {
    if (value.find('-') != std::string::npos) throw ConfigError("bad value '" + value + "' for " + key);
  }
  std::istringstream in(value);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) throw ConfigError("bad value '" + value + "' for " + key);
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    return parse_double(value, 0);
  } catch (const std::exception&) {
    throw ConfigError("bad value '" + value + "' for " + key);
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("bad value '" + value + "' for " + key + " (expected true or false)");
}

std::vector<std::size_t> parse_dims(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::stringstream in(value);
  std::string part;
  while (std::getline(in, part, ',')) out.push_back(parse_number<std::size_t>(key, trim(part)));
  if (out.empty()) throw ConfigError("empty value for " + key);
  return out;
}

std::string join_dims(const std::vector<std::size_t>& dims) {
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(dims[i]);
  }
  return out;
}

template <typename Fn>
auto wrap_enum(const std::string& key, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "env_id", "algo", "variant", "total_steps", "eval_interval", "eval_episodes", "seed", "start_steps",
      "hidden_units", "gild_hidden_units", "warm_start_fraction", "meta_loss_variant", "meta_sign",
      "meta_lr_outer", "gild_frozen", "gild_zero_policy_inputs", "lr", "gamma", "tau", "batch_size",
      "expl_noise", "policy_noise", "noise_clip", "policy_delay", "alpha_ent", "target_interval", "beta",
      "w_il", "optimizer", "sparse_threshold", "buffer_capacity", "log_interval", "save_snapshots",
      "demo_path", "output_dir"};
  return keys;
}

void apply_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "env_id") c.env_id = value;
  else if (key == "algo") c.algo.algo = wrap_enum(key, [&] { return algo_from_string(value); });
  else if (key == "variant") c.variant = variant_from_string(value);
  else if (key == "total_steps") c.total_steps = parse_number<long>(key, value);
  else if (key == "eval_interval") c.eval_interval = parse_number<long>(key, value);
  else if (key == "eval_episodes") c.eval_episodes = parse_number<int>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "start_steps") c.start_steps = parse_number<long>(key, value);
  else if (key == "hidden_units") c.hidden = parse_dims(key, value);
  else if (key == "gild_hidden_units") c.gild_hidden = parse_dims(key, value);
  else if (key == "warm_start_fraction") c.warm_start_fraction = parse_real(key, value);
  else if (key == "meta_loss_variant") c.meta_loss_variant = wrap_enum(key, [&] { return meta_loss_variant_from_string(value); });
  else if (key == "meta_sign") c.meta_sign = wrap_enum(key, [&] { return meta_sign_from_string(value); });
  else if (key == "meta_lr_outer") c.meta_lr_outer = parse_real(key, value);
  else if (key == "gild_frozen") c.gild_frozen = parse_bool(key, value);
  else if (key == "gild_zero_policy_inputs") c.gild_zero_policy_inputs = parse_bool(key, value);
  else if (key == "lr") c.algo.lr = parse_real(key, value);
  else if (key == "gamma") c.algo.gamma = parse_real(key, value);
  else if (key == "tau") c.algo.tau = parse_real(key, value);
  else if (key == "batch_size") c.algo.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "expl_noise") c.algo.expl_noise = parse_real(key, value);
  else if (key == "policy_noise") c.algo.policy_noise = parse_real(key, value);
  else if (key == "noise_clip") c.algo.noise_clip = parse_real(key, value);
  else if (key == "policy_delay") c.algo.policy_delay = parse_number<int>(key, value);
  else if (key == "alpha_ent") c.algo.alpha_ent = parse_real(key, value);
  else if (key == "target_interval") c.algo.target_interval = parse_number<int>(key, value);
  else if (key == "beta") c.algo.beta = parse_real(key, value);
  else if (key == "w_il") c.algo.w_il = parse_real(key, value);
  else if (key == "optimizer") c.algo.optimizer = wrap_enum(key, [&] { return optimizer_from_string(value); });
  else if (key == "sparse_threshold") c.sparse_threshold = parse_real(key, value);
  else if (key == "buffer_capacity") c.buffer_capacity = parse_number<std::size_t>(key, value);
  else if (key == "log_interval") c.log_interval = parse_number<long>(key, value);
  else if (key == "save_snapshots") c.save_snapshots = parse_bool(key, value);
  else if (key == "demo_path") c.demo_path = value;
  else if (key == "output_dir") c.output_dir = value;
  else throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key = value");
    apply_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string to_config_text(const RunConfig& c) {
  const auto b = [](bool v) { return v ? "true" : "false"; };
  std::ostringstream out;
  out << "env_id = " << c.env_id << "\n"
      << "algo = " << to_string(c.algo.algo) << "\n"
      << "variant = " << to_string(c.variant) << "\n"
      << "total_steps = " << c.total_steps << "\n"
      << "eval_interval = " << c.eval_interval << "\n"
      << "eval_episodes = " << c.eval_episodes << "\n"
      << "seed = " << c.seed << "\n"
      << "start_steps = " << c.start_steps << "\n"
      << "hidden_units = " << join_dims(c.hidden) << "\n"
      << "gild_hidden_units = " << join_dims(c.gild_hidden) << "\n"
      << "warm_start_fraction = " << format_double(c.warm_start_fraction) << "\n"
      << "meta_loss_variant = " << to_string(c.meta_loss_variant) << "\n"
      << "meta_sign = " << to_string(c.meta_sign) << "\n"
      << "meta_lr_outer = " << format_double(c.meta_lr_outer) << "\n"
      << "gild_frozen = " << b(c.gild_frozen) << "\n"
      << "gild_zero_policy_inputs = " << b(c.gild_zero_policy_inputs) << "\n"
      << "lr = " << format_double(c.algo.lr) << "\n"
      << "gamma = " << format_double(c.algo.gamma) << "\n"
      << "tau = " << format_double(c.algo.tau) << "\n"
      << "batch_size = " << c.algo.batch_size << "\n"
      << "expl_noise = " << format_double(c.algo.expl_noise) << "\n"
      << "policy_noise = " << format_double(c.algo.policy_noise) << "\n"
      << "noise_clip = " << format_double(c.algo.noise_clip) << "\n"
      << "policy_delay = " << c.algo.policy_delay << "\n"
      << "alpha_ent = " << format_double(c.algo.alpha_ent) << "\n"
      << "target_interval = " << c.algo.target_interval << "\n"
      << "beta = " << format_double(c.algo.beta) << "\n"
      << "w_il = " << format_double(c.algo.w_il) << "\n"
      << "optimizer = " << to_string(c.algo.optimizer) << "\n"
      << "sparse_threshold = " << format_double(c.sparse_threshold) << "\n"
      << "buffer_capacity = " << c.buffer_capacity << "\n"
      << "log_interval = " << c.log_interval << "\n"
      << "save_snapshots = " << b(c.save_snapshots) << "\n"
      << "demo_path = " << c.demo_path << "\n"
      << "output_dir = " << c.output_dir << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Evaluation

EvalSummary evaluate_policy(const ActorModel& actor, const std::string& env_id, int episodes, RngStream& eval_rng,
                            double sparse_threshold) {
  if (episodes <= 0) throw std::invalid_argument("evaluate_policy: episodes must be positive");
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(episodes));
  for (auto& s : seeds) s = eval_rng.next_u64();

  EvalSummary out;
  int goals = 0;
  auto env = make_env(env_id, sparse_threshold);
  for (const auto seed : seeds) {
    auto state = env->reset(seed);
    double ret = 0.0;
    while (true) {
      const Tensor a = actor_act(actor, Tensor::row(state));
      const StepResult r = env->step(a.data());
      ret += r.reward_dense;
      state = r.next_state;
      if (r.done) {
        goals += r.terminal ? 1 : 0;
        break;
      }
    }
    out.returns.push_back(ret);
  }
  const double n = static_cast<double>(out.returns.size());
  double sum = 0.0;
  for (double r : out.returns) sum += r;
  out.mean_return = sum / n;
  double sq = 0.0;
  for (double r : out.returns) sq += (r - out.mean_return) * (r - out.mean_return);
  out.std_return = std::sqrt(sq / n);
  out.goal_rate = goals / n;
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

struct IntervalStats {
  double critic = 0.0, actor = 0.0, gild = 0.0, meta = 0.0;
  long n_critic = 0, n_actor = 0, n_gild = 0;
  double train_ms = 0.0;
  long steps = 0;

  TrainRecord record(long step) const {
    const auto avg = [](double s, long n) { return n > 0 ? s / static_cast<double>(n) : 0.0; };
    return {step,
            avg(critic, n_critic),
            avg(actor, n_actor),
            avg(gild, n_gild),
            avg(meta, n_gild),
            steps > 0 ? train_ms * 1000.0 / static_cast<double>(steps) : 0.0};
  }
};

void write_outputs(const RunConfig& cfg, const RunResult& res) {
  if (cfg.output_dir.empty()) return;
  const fs::path dir(cfg.output_dir);
  res.log.write_eval_csv(dir / "eval.csv");
  res.log.write_train_csv(dir / "train.csv");
}

}  // namespace

RunResult train_run(const RunConfig& cfg, const DemonstrationSet* demos_in, const StepObserver& observer) {
  cfg.validate(demos_in != nullptr);
  const EnvSpec spec = parse_env_id(cfg.env_id);

  DemonstrationSet loaded;
  const DemonstrationSet* demos = demos_in;
  if (cfg.variant != Variant::Vanilla && demos == nullptr) {
    try {
      loaded = load_demos(cfg.demo_path);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("cannot load demonstrations: ") + e.what());
    }
    demos = &loaded;
  }

  auto env = make_env(cfg.env_id, cfg.sparse_threshold);
  const std::size_t sdim = env->state_dim();
  const std::size_t adim = env->action_dim();
  const double bound = env->action_bound();
  if (demos != nullptr && cfg.variant != Variant::Vanilla &&
      (demos->state_dim != sdim || demos->action_dim != adim || demos->size() == 0)) {
    throw ConfigError("demonstrations do not match env " + cfg.env_id);
  }

  RngRegistry rngs(cfg.seed);
  Agent agent = make_agent(cfg.algo, sdim, adim, cfg.hidden, bound, rngs.stream(streams::kInit));
  const GildConfig gcfg = cfg.gild_config();
  std::optional<GildModel> gild;
  if (cfg.variant == Variant::Gild) {
    gild = make_gild_net(sdim, adim, cfg.gild_hidden, rngs.stream(streams::kGildInit));
    if (cfg.gild_zero_policy_inputs) zero_policy_action_inputs(*gild);
  }

  RngStream& explore_rng = rngs.stream(streams::kExploration);
  RngStream& buffer_rng = rngs.stream(streams::kBuffer);
  RngStream& demo_rng = rngs.stream(streams::kDemo);
  RngStream& val_rng = rngs.stream(streams::kValidation);
  RngStream& noise_rng = rngs.stream(streams::kPolicyNoise);
  RngStream& meta_rng = rngs.stream(streams::kMetaNoise);
  RngStream& env_rng = rngs.stream(streams::kEnv);
  RngStream& eval_rng = rngs.stream(streams::kEval);

  fs::path snap_dir;
  if (!cfg.output_dir.empty()) {
    fs::create_directories(cfg.output_dir);
    std::ofstream(fs::path(cfg.output_dir) / "config.txt") << to_config_text(cfg);
    if (cfg.save_snapshots) {
      snap_dir = fs::path(cfg.output_dir) / "snapshots";
      fs::create_directories(snap_dir);
    }
  }

  RunResult res;
  ReplayBuffer buffer(sdim, adim, cfg.buffer_capacity);
  const std::size_t n = cfg.algo.batch_size;
  const bool sac = cfg.algo.algo == Algo::Sac;
  const ActorStepper live_stepper = [&agent](const ParamSet& phi, const ParamSet& g) {
    ParamSet out = phi;
    agent.actor_opt.step(out, g);
    return out;
  };

  std::vector<double> state = env->reset(env_rng.next_u64());
  IntervalStats stats;
  long t = 0;
  using clock = std::chrono::steady_clock;
  try {
    for (; t < cfg.total_steps; ++t) {
      const auto t0 = clock::now();

      std::vector<double> action;
      if (t < cfg.start_steps) {
        action.resize(adim);
        for (auto& a : action) a = explore_rng.uniform(-bound, bound);
      } else {
        action = select_action(agent, state, ActionMode::Explore, explore_rng);
      }
      const StepResult step = env->step(action);
      buffer.push({state, action, training_reward(spec, step), step.next_state, step.terminal});
      state = step.done ? env->reset(env_rng.next_u64()) : step.next_state;

      if (t >= cfg.start_steps) {
        const Batch batch = buffer.sample(n, buffer_rng);
        stats.critic += critic_update(agent, batch, noise_rng);
        ++stats.n_critic;

        const bool actor_turn = cfg.algo.algo != Algo::Td3 || t % cfg.algo.policy_delay == 0;
        if (actor_turn) {
          Tensor rl_noise;
          if (sac) rl_noise = normal_noise(n, adim, noise_rng);
          const Tensor* rl_noise_ptr = sac ? &rl_noise : nullptr;

          const bool gild_active =
              cfg.variant == Variant::Gild && warmstart_gate(t, cfg.total_steps, cfg.warm_start_fraction).use_gild;
          if (cfg.variant == Variant::Il) {
            const DemoBatch d = demos->sample(n, demo_rng);
            stats.actor += ilrl_actor_update(agent, batch, d, rl_noise_ptr);
          } else if (gild_active) {
            const DemoBatch d = demos->sample(n, demo_rng);
            Tensor pseudo_noise, gild_noise;
            if (sac) {
              pseudo_noise = normal_noise(n, adim, meta_rng);
              gild_noise = normal_noise(n, adim, meta_rng);
            }
            const ParamSet phi_hat = pseudo_update(agent, batch, d, sac ? &pseudo_noise : nullptr);
            GildActorStep g = gild_actor_update(agent, agent.actor.params, batch.states, d, *gild, cfg.algo.lr,
                                                rl_noise_ptr, sac ? &gild_noise : nullptr, live_stepper);
            agent.actor.params = std::move(g.phi_new);
            const Tensor val = buffer.sample_states(n, val_rng);
            const MetaLossResult ml = meta_loss(agent, agent.actor.params, phi_hat, val, cfg.meta_loss_variant);
            gild_meta_update(*gild, g.path, ml.grad_phi_new, gcfg);
            stats.actor += g.rl_loss + g.gild_loss;
            stats.gild += g.gild_loss;
            stats.meta += ml.value;
            ++stats.n_gild;
          } else {
            stats.actor += vanilla_actor_update(agent, batch.states, rl_noise_ptr);
          }
          ++stats.n_actor;
          ++res.actor_update_steps;
          if (res.actor_update_log.size() < RunResult::kActorLogLimit) res.actor_update_log.push_back(t);
        }

        const bool sync = cfg.algo.algo == Algo::Ddpg || (cfg.algo.algo == Algo::Td3 && actor_turn) ||
                          (sac && t % cfg.algo.target_interval == 0);
        if (sync) sync_targets(agent);
      }

      stats.train_ms += std::chrono::duration<double, std::milli>(clock::now() - t0).count();
      ++stats.steps;
      if ((t + 1) % cfg.log_interval == 0 || t + 1 == cfg.total_steps) {
        res.log.append(stats.record(t));
        stats = {};
      }

      if ((t + 1) % cfg.eval_interval == 0) {
        RngStream ep_rng(eval_rng.next_u64());
        const EvalSummary ev =
            evaluate_policy(agent.actor, cfg.env_id, cfg.eval_episodes, ep_rng, cfg.sparse_threshold);
        res.log.append(EvalRecord{t + 1, ev.mean_return, ev.std_return});
        if (cfg.save_snapshots) {
          ActorCheckpoint ck{agent.actor, t + 1, ev.mean_return, "seed=" + std::to_string(cfg.seed)};
          if (!snap_dir.empty()) save_actor_checkpoint(snap_dir / ("actor_" + std::to_string(t + 1) + ".json"), ck);
          res.snapshots.push_back(std::move(ck));
        }
      }
      if (observer) observer(t, agent);
    }
  } catch (const NumericError& e) {
    write_outputs(cfg, res);
    throw NumericError("training diverged at step " + std::to_string(t) + ": " + e.what());
  }

  res.final_actor = agent.actor;
  res.gild = std::move(gild);
  write_outputs(cfg, res);
  if (!cfg.output_dir.empty()) {
    const fs::path dir(cfg.output_dir);
    save_actor_checkpoint(dir / "final_actor.json",
                          {agent.actor, cfg.total_steps, res.log.eval().empty() ? 0.0 : res.log.eval().back().mean_return,
                           "seed=" + std::to_string(cfg.seed)});
    if (res.gild) save_network(dir / "gild.json", "gild", res.gild->spec, res.gild->params);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Expert and behaviour

ExpertSeries train_expert(const RunConfig& cfg_in) {
  if (parse_env_id(cfg_in.env_id).sparse_training) {
    throw ConfigError("train_expert needs a dense env id, got " + cfg_in.env_id);
  }
  RunConfig cfg = cfg_in;
  cfg.variant = Variant::Vanilla;
  cfg.save_snapshots = true;
  RunResult run = train_run(cfg);
  ExpertSeries out;
  out.checkpoints = std::move(run.snapshots);
  out.expert_max_return = run.log.max_average_return();
  out.log = std::move(run.log);
  return out;
}

const ActorCheckpoint& select_behavior(const std::vector<ActorCheckpoint>& checkpoints, double rho) {
  if (checkpoints.empty()) throw std::invalid_argument("select_behavior: empty checkpoint series");
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("select_behavior: rho must lie in [0, 1]");
  double best = checkpoints.front().eval_return;
  for (const auto& c : checkpoints) best = std::max(best, c.eval_return);
  if (rho == 1.0) std::cerr << "warning: rho = 1 selects the expert itself as the behaviour policy\n";
  double threshold = -std::numeric_limits<double>::infinity();
  if (rho > 0.0) threshold = best > 0.0 ? rho * best : best / rho;
  for (const auto& c : checkpoints) {
    if (c.eval_return >= threshold) return c;
  }
  throw std::invalid_argument("select_behavior: no checkpoint reaches the threshold; try a lower rho");
}

DemonstrationSet collect_demos(const ActorModel& behavior, const std::string& env_id, std::size_t n_samples,
                               RngStream& rng, double sparse_threshold) {
  auto env = make_env(env_id, sparse_threshold);
  if (env->state_dim() != behavior.state_dim() || env->action_dim() != behavior.action_dim()) {
    throw ConfigError("behaviour checkpoint does not match env " + env_id);
  }
  DemonstrationSet out;
  out.state_dim = env->state_dim();
  out.action_dim = env->action_dim();
  out.meta.env_id = env_id;

  double completed_sum = 0.0;
  long completed = 0;
  double partial = 0.0;
  auto state = env->reset(rng.next_u64());
  while (out.size() < n_samples) {
    const Tensor a = actor_act(behavior, Tensor::row(state));
    out.add(state, a.data());
    const StepResult r = env->step(a.data());
    partial += r.reward_dense;
    if (r.done) {
      completed_sum += partial;
      ++completed;
      partial = 0.0;
      state = env->reset(rng.next_u64());
    } else {
      state = r.next_state;
    }
  }
  out.meta.sample_count = out.size();
  out.meta.behavior_return = completed > 0 ? completed_sum / static_cast<double>(completed) : partial;
  return out;
}

}  // namespace gild
