// Command-line front end for expert training, demonstration collection,
// training runs, evaluation, analysis and plotting.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "gild/analysis.hpp"
#include "gild/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

void apply_overrides(gild::RunConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw gild::ConfigError("override '" + kv + "' is not key=value");
    gild::apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
}

// Snapshots under <run>/snapshots, ordered by step.
std::vector<std::pair<long, fs::path>> list_snapshots(const fs::path& run) {
  const fs::path dir = run / "snapshots";
  if (!fs::is_directory(dir)) throw gild::ConfigError("no snapshots directory in " + run.string());
  std::vector<std::pair<long, fs::path>> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().stem().string();
    if (e.path().extension() != ".json" || name.rfind("actor_", 0) != 0) continue;
    out.emplace_back(std::stol(name.substr(6)), e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

int cmd_train_expert(const std::string& env, const std::string& algo, std::uint64_t seed, const std::string& out,
                     const std::string& config, const std::vector<std::string>& overrides, double rho) {
  gild::RunConfig cfg = config.empty() ? gild::RunConfig{} : gild::load_config(config);
  cfg.env_id = env;
  cfg.algo.algo = gild::algo_from_string(algo);
  cfg.seed = seed;
  cfg.output_dir = out;
  apply_overrides(cfg, overrides);
  const gild::ExpertSeries series = gild::train_expert(cfg);
  if (series.checkpoints.empty()) throw gild::ConfigError("no evaluation point was reached; lower eval_interval");

  const auto& behavior = gild::select_behavior(series.checkpoints, rho);
  const fs::path dir(out);
  gild::save_actor_checkpoint(dir / "expert.json", series.checkpoints.back());
  gild::save_actor_checkpoint(dir / "behavior.json", behavior);
  write_json(dir / "summary.json", {{"env_id", env},
                                    {"algo", algo},
                                    {"seed", seed},
                                    {"expert_max_return", series.expert_max_return},
                                    {"rho", rho},
                                    {"behavior_step", behavior.step},
                                    {"behavior_return", behavior.eval_return}});
  std::cout << "expert max average return " << series.expert_max_return << "; behaviour at step " << behavior.step
            << " with return " << behavior.eval_return << "\n";
  return 0;
}

int cmd_collect(const std::string& checkpoint, const std::string& env, std::size_t samples, const std::string& out,
                std::uint64_t seed) {
  const auto ckpt = gild::load_actor_checkpoint(checkpoint);
  gild::RngStream rng(seed, "demo-collection");
  auto demos = gild::collect_demos(ckpt.actor, env, samples, rng);
  demos.meta.behavior_checkpoint = fs::absolute(checkpoint).string();
  if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  gild::save_demos(out, demos);
  std::cout << demos.size() << " pairs, behaviour return " << demos.meta.behavior_return << "\n";
  return 0;
}

int cmd_train(const std::string& config, const std::vector<std::string>& overrides) {
  gild::RunConfig cfg = gild::load_config(config);
  apply_overrides(cfg, overrides);
  const auto res = gild::train_run(cfg);
  std::cout << "max average return " << res.log.max_average_return() << "\n";
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& env, int episodes, std::uint64_t seed) {
  const auto ckpt = gild::load_actor_checkpoint(checkpoint);
  gild::RngStream rng(seed, gild::streams::kEval);
  const auto ev = gild::evaluate_policy(ckpt.actor, env, episodes, rng);
  std::cout << json{{"mean_return", ev.mean_return}, {"std_return", ev.std_return}, {"goal_rate", ev.goal_rate},
                    {"episodes", episodes}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_analyze_kl(const fs::path& run) {
  const auto cfg = gild::load_config(run / "config.txt");
  if (cfg.demo_path.empty()) throw gild::ConfigError("run has no demo_path; KL needs the behaviour policy");
  const auto demos = gild::load_demos(cfg.demo_path);
  if (demos.meta.behavior_checkpoint.empty()) throw gild::ConfigError("demonstration metadata names no checkpoint");
  const auto behavior = gild::load_actor_checkpoint(demos.meta.behavior_checkpoint).actor;
  const gild::Tensor states = demos.state_tensor();
  std::ofstream out(run / "kl.csv");
  out << "step,kl\n";
  for (const auto& [step, path] : list_snapshots(run)) {
    const auto actor = gild::load_actor_checkpoint(path).actor;
    out << step << "," << gild::format_double(gild::kl_to_behavior(actor, behavior, states)) << "\n";
  }
  std::cout << "wrote " << (run / "kl.csv").string() << "\n";
  return 0;
}

int cmd_analyze_pca(const fs::path& run) {
  const auto snaps = list_snapshots(run);
  std::vector<long> steps;
  std::vector<gild::Tensor> rows;
  for (const auto& [step, path] : snaps) {
    steps.push_back(step);
    rows.push_back(gild::load_actor_checkpoint(path).actor.params.flatten());
  }
  if (rows.empty()) throw gild::ConfigError("no snapshots in " + run.string());
  gild::Tensor x(rows.size(), rows.front().cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(rows[r].data().begin(), rows[r].data().end(), x.row_span(r).begin());
  }
  const auto pca = gild::pca_param_path(x, steps);
  for (const auto& w : pca.warnings) std::cerr << "warning: " << w << "\n";
  gild::write_pca_csv(run / "pca_path.csv", pca);
  write_json(run / "pca_variance.json",
             {{"explained", {pca.explained[0], pca.explained[1]}}, {"rank", pca.rank}, {"warnings", pca.warnings}});
  std::cout << "wrote " << (run / "pca_path.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GILD experiment tool"};
  app.require_subcommand(1);

  std::string env, algo = "td3", out, config, checkpoint;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides, runs;
  double rho = 0.45;
  std::size_t samples = 1000;
  int episodes = 10;

  auto* expert = app.add_subcommand("train-expert", "Train vanilla RL on a dense env and pick a behaviour policy");
  expert->add_option("--env", env, "Dense environment id")->required();
  expert->add_option("--algo", algo, "ddpg, td3 or sac")->required();
  expert->add_option("--seed", seed, "Master seed")->required();
  expert->add_option("--out", out, "Output directory")->required();
  expert->add_option("--config", config, "Base config file");
  expert->add_option("--override", overrides, "key=value config overrides");
  expert->add_option("--rho", rho, "Behaviour return fraction");

  auto* collect = app.add_subcommand("collect-demos", "Roll out a checkpoint and store (s, a) pairs");
  collect->add_option("--checkpoint", checkpoint, "Actor checkpoint")->required();
  collect->add_option("--env", env, "Environment id")->required();
  collect->add_option("--samples", samples, "Number of pairs");
  collect->add_option("--out", out, "Output CSV path")->required();
  collect->add_option("--seed", seed, "Reset seed");

  auto* train = app.add_subcommand("train", "Run one training configuration");
  train->add_option("--config", config, "Config file")->required();
  train->add_option("--override", overrides, "key=value config overrides");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on the dense channel");
  evaluate->add_option("--checkpoint", checkpoint, "Actor checkpoint")->required();
  evaluate->add_option("--env", env, "Environment id")->required();
  evaluate->add_option("--episodes", episodes, "Episodes");
  evaluate->add_option("--seed", seed, "Evaluation seed");

  auto* analyze = app.add_subcommand("analyze", "Post-hoc analysis of a run directory");
  analyze->require_subcommand(1);
  std::string run;
  auto* kl = analyze->add_subcommand("kl", "KL divergence to the behaviour policy per snapshot");
  kl->add_option("--run", run, "Run directory")->required();
  auto* pca = analyze->add_subcommand("pca-path", "PCA projection of the actor parameter path");
  pca->add_option("--run", run, "Run directory")->required();

  auto* plot = app.add_subcommand("plot", "Render SVG charts from run logs");
  plot->add_option("--run", runs, "Run directories")->required();
  plot->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*expert) return cmd_train_expert(env, algo, seed, out, config, overrides, rho);
    if (*collect) return cmd_collect(checkpoint, env, samples, out, seed);
    if (*train) return cmd_train(config, overrides);
    if (*evaluate) return cmd_evaluate(checkpoint, env, episodes, seed);
    if (*kl) return cmd_analyze_kl(run);
    if (*pca) return cmd_analyze_pca(run);
    if (*plot) {
      std::vector<fs::path> dirs(runs.begin(), runs.end());
      for (const auto& p : gild::emit_plots(dirs, out)) std::cout << "wrote " << p.string() << "\n";
      return 0;
    }
  } catch (const gild::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const gild::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
