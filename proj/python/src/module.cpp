#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gild/analysis.hpp"
#include "gild/harness.hpp"

namespace py = pybind11;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

gild::Tensor to_tensor(const Array& a) {
  if (a.ndim() == 1) {
    return gild::Tensor(1, static_cast<std::size_t>(a.shape(0)), std::vector<double>(a.data(), a.data() + a.size()));
  }
  if (a.ndim() != 2) throw gild::ShapeError("expected a 1-D or 2-D array");
  return gild::Tensor(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                      std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const gild::Tensor& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::list eval_rows(const gild::RunLog& log) {
  py::list rows;
  for (const auto& r : log.eval()) rows.append(py::make_tuple(r.step, r.mean_return, r.std_return));
  return rows;
}

py::list train_rows(const gild::RunLog& log) {
  py::list rows;
  for (const auto& r : log.train()) {
    py::dict d;
    d["step"] = r.step;
    d["critic_loss"] = r.critic_loss;
    d["actor_loss"] = r.actor_loss;
    d["gild_loss"] = r.gild_loss;
    d["meta_loss"] = r.meta_loss;
    d["wall_ms"] = r.wall_ms;
    rows.append(d);
  }
  return rows;
}

class PyEnv {
 public:
  explicit PyEnv(const std::string& id, double threshold)
      : spec_(gild::parse_env_id(id)), env_(gild::make_env(id, threshold)) {}

  std::vector<double> reset(std::uint64_t seed) { return env_->reset(seed); }

  py::dict step(const std::vector<double>& action) {
    const auto r = env_->step(action);
    py::dict d;
    d["state"] = r.next_state;
    d["reward"] = gild::training_reward(spec_, r);
    d["reward_dense"] = r.reward_dense;
    d["reward_sparse"] = r.reward_sparse;
    d["done"] = r.done;
    d["terminal"] = r.terminal;
    return d;
  }

  std::size_t state_dim() const { return env_->state_dim(); }
  std::size_t action_dim() const { return env_->action_dim(); }
  double action_bound() const { return env_->action_bound(); }
  int horizon() const { return env_->horizon(); }

 private:
  gild::EnvSpec spec_;
  std::unique_ptr<gild::Env> env_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bindings for the GILD reinforcement-learning library";

  py::register_exception<gild::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<gild::NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<gild::ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<gild::ParseError>(m, "ParseError", PyExc_ValueError);

  py::class_<gild::RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("from_text", &gild::parse_config_text, py::arg("text"))
      .def_static("load", [](const std::filesystem::path& p) { return gild::load_config(p); }, py::arg("path"))
      .def("set", [](gild::RunConfig& c, const std::string& k, const std::string& v) { gild::apply_config_value(c, k, v); },
           py::arg("key"), py::arg("value"))
      .def("to_text", [](const gild::RunConfig& c) { return gild::to_config_text(c); })
      .def("validate", [](const gild::RunConfig& c, bool demos) { c.validate(demos); }, py::arg("demos_supplied") = false)
      .def_readwrite("env_id", &gild::RunConfig::env_id)
      .def_readwrite("total_steps", &gild::RunConfig::total_steps)
      .def_readwrite("eval_interval", &gild::RunConfig::eval_interval)
      .def_readwrite("eval_episodes", &gild::RunConfig::eval_episodes)
      .def_readwrite("seed", &gild::RunConfig::seed)
      .def_readwrite("start_steps", &gild::RunConfig::start_steps)
      .def_readwrite("warm_start_fraction", &gild::RunConfig::warm_start_fraction)
      .def_readwrite("demo_path", &gild::RunConfig::demo_path)
      .def_readwrite("output_dir", &gild::RunConfig::output_dir)
      .def("__repr__", [](const gild::RunConfig& c) { return "<RunConfig " + c.env_id + " seed=" + std::to_string(c.seed) + ">"; });

  m.def("config_keys", &gild::config_keys);

  py::class_<gild::ActorModel>(m, "Actor")
      .def_property_readonly("state_dim", &gild::ActorModel::state_dim)
      .def_property_readonly("action_dim", &gild::ActorModel::action_dim)
      .def_property_readonly("gaussian", [](const gild::ActorModel& a) { return a.kind == gild::PolicyKind::Gaussian; })
      .def("act", [](const gild::ActorModel& a, const Array& states) { return to_array(gild::actor_act(a, to_tensor(states))); },
           py::arg("states"), "Exploit actions for a batch of states (rows).")
      .def("flat_params", [](const gild::ActorModel& a) { return to_array(a.params.flatten()); });

  m.def("load_actor", [](const std::filesystem::path& p) { return gild::load_actor_checkpoint(p).actor; }, py::arg("path"));
  m.def("save_actor",
        [](const std::filesystem::path& p, const gild::ActorModel& a, long step, double eval_return) {
          gild::save_actor_checkpoint(p, {a, step, eval_return, {}});
        },
        py::arg("path"), py::arg("actor"), py::arg("step") = 0, py::arg("eval_return") = 0.0);

  m.def("train",
        [](const gild::RunConfig& cfg) {
          std::optional<gild::DemonstrationSet> demos;
          if (!cfg.demo_path.empty()) demos = gild::load_demos(cfg.demo_path);
          gild::RunResult res;
          {
            py::gil_scoped_release release;
            res = gild::train_run(cfg, demos ? &*demos : nullptr);
          }
          py::dict d;
          d["eval"] = eval_rows(res.log);
          d["train"] = train_rows(res.log);
          d["max_average_return"] = res.log.max_average_return();
          d["actor"] = res.final_actor;
          return d;
        },
        py::arg("config"),
        "Runs one training run. Returns eval rows (step, mean, std), train rows and the final actor.");

  m.def("evaluate",
        [](const gild::ActorModel& a, const std::string& env_id, int episodes, std::uint64_t seed) {
          gild::RngStream rng(seed, gild::streams::kEval);
          const auto s = gild::evaluate_policy(a, env_id, episodes, rng);
          py::dict d;
          d["mean_return"] = s.mean_return;
          d["std_return"] = s.std_return;
          d["goal_rate"] = s.goal_rate;
          d["returns"] = s.returns;
          return d;
        },
        py::arg("actor"), py::arg("env_id"), py::arg("episodes") = 10, py::arg("seed") = 0);

  py::class_<PyEnv>(m, "Env")
      .def(py::init<const std::string&, double>(), py::arg("env_id"), py::arg("sparse_threshold") = 1.0)
      .def("reset", &PyEnv::reset, py::arg("seed") = 0)
      .def("step", &PyEnv::step, py::arg("action"))
      .def_property_readonly("state_dim", &PyEnv::state_dim)
      .def_property_readonly("action_dim", &PyEnv::action_dim)
      .def_property_readonly("action_bound", &PyEnv::action_bound)
      .def_property_readonly("horizon", &PyEnv::horizon);

  m.def("normalized_score", &gild::normalized_score, py::arg("run_max_return"), py::arg("expert_max_return"));
  m.def("kl_to_behavior",
        [](const gild::ActorModel& learning, const gild::ActorModel& behavior, const Array& states) {
          return gild::kl_to_behavior(learning, behavior, to_tensor(states));
        },
        py::arg("learning"), py::arg("behavior"), py::arg("states"));
  m.def("pca_path",
        [](const Array& snapshots, const std::vector<long>& steps) {
          const auto p = gild::pca_param_path(to_tensor(snapshots), steps);
          py::dict d;
          d["coords"] = to_array(p.coords);
          d["components"] = to_array(p.components);
          d["explained"] = py::make_tuple(p.explained[0], p.explained[1]);
          d["rank"] = p.rank;
          d["warnings"] = p.warnings;
          return d;
        },
        py::arg("snapshots"), py::arg("steps"));
}
