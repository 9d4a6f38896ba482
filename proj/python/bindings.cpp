#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ddl/cli.hpp"
#include "ddl/oracle.hpp"
#include "ddl/trainer.hpp"
#include "ddl/verify.hpp"

namespace py = pybind11;
using namespace ddl;

namespace {

TrainerConfig config_from(const std::string& path, const std::map<std::string, std::string>& overrides) {
  TrainerConfig c = path.empty() ? TrainerConfig{} : TrainerConfig::load(path);
  for (const auto& [key, value] : overrides) c.set(key, value);
  c.validate();
  return c;
}

// Owns the environment and provider a Trainer refers to.
class PyTrainer {
 public:
  PyTrainer(const TrainerConfig& config, const std::filesystem::path& base_dir)
      : env_(make_environment(config, base_dir)) {
    if (config.method == Method::DDLfP) provider_ = make_provider(config, *env_);
    trainer_ = std::make_unique<Trainer>(*env_, config, provider_.get());
  }

  std::string run() {
    std::ostringstream metrics;
    {
      py::gil_scoped_release release;
      trainer_->run(&metrics);
    }
    return metrics.str();
  }

  bool step() { return trainer_->step(); }
  EvalResult evaluate(StateId goal, int episodes) { return trainer_->evaluate(goal, episodes); }
  double distance(StateId from, StateId to) const { return trainer_->distance().predict(from, to); }
  ActionId greedy_action(StateId s, StateId goal) const { return trainer_->greedy_action(s, goal); }
  StateId goal() const { return trainer_->goal().state; }
  StateId resolve(const std::string& text) const { return resolve_goal(*env_, text); }
  std::int64_t env_steps() const { return trainer_->env_steps(); }
  int queries_used() const { return trainer_->queries_used(); }
  int state_count() const { return env_->state_count(); }

  std::vector<std::string> records() const {
    std::vector<std::string> out;
    for (const auto& r : trainer_->records()) out.push_back(r.to_json());
    return out;
  }

  std::string heatmap(StateId goal) const {
    const auto* maze = dynamic_cast<const GridMaze*>(env_.get());
    if (!maze) throw Unsupported("heatmap needs a grid environment");
    std::ostringstream out;
    export_heatmap(trainer_->distance(), *maze, goal, out);
    return out.str();
  }

  std::optional<std::pair<int, double>> distance_error(StateId goal) const {
    const auto e = trainer_->distance_error(goal);
    if (!e) return std::nullopt;
    return std::make_pair(e->states, e->mse);
  }

  std::vector<double> bfs_to(StateId goal) const { return oracle::bfs_distance(*env_).to_state(goal); }

 private:
  std::unique_ptr<Environment> env_;
  std::unique_ptr<PreferenceProvider> provider_;
  std::unique_ptr<Trainer> trainer_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Distance learning, goal proposal and exact oracles.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<Unsupported>(m, "Unsupported", PyExc_NotImplementedError);

  py::class_<TrainerConfig>(m, "TrainerConfig")
      .def(py::init(&config_from), py::arg("path") = "",
           py::arg("overrides") = std::map<std::string, std::string>{})
      .def("set", &TrainerConfig::set)
      .def("validate", &TrainerConfig::validate)
      .def("dump", &TrainerConfig::dump)
      .def_static("keys", &TrainerConfig::keys)
      .def_readwrite("seed", &TrainerConfig::seed)
      .def_readwrite("total_env_steps", &TrainerConfig::total_env_steps)
      .def_readwrite("env", &TrainerConfig::env);

  py::class_<EvalResult>(m, "EvalResult")
      .def_readonly("episodes", &EvalResult::episodes)
      .def_readonly("success_rate", &EvalResult::success_rate)
      .def_readonly("mean_steps", &EvalResult::mean_steps);

  py::class_<PyTrainer>(m, "Trainer")
      .def(py::init<const TrainerConfig&, const std::filesystem::path&>(), py::arg("config"),
           py::arg("base_dir") = std::filesystem::path{})
      .def("run", &PyTrainer::run, "Train to the budget; returns the metrics JSON lines.")
      .def("step", &PyTrainer::step)
      .def("evaluate", &PyTrainer::evaluate, py::arg("goal"), py::arg("episodes") = 50)
      .def("distance", &PyTrainer::distance)
      .def("greedy_action", &PyTrainer::greedy_action)
      .def("resolve_goal", &PyTrainer::resolve)
      .def("records", &PyTrainer::records)
      .def("heatmap", &PyTrainer::heatmap)
      .def("distance_error", &PyTrainer::distance_error)
      .def("bfs_to", &PyTrainer::bfs_to)
      .def_property_readonly("goal", &PyTrainer::goal)
      .def_property_readonly("env_steps", &PyTrainer::env_steps)
      .def_property_readonly("queries_used", &PyTrainer::queries_used)
      .def_property_readonly("state_count", &PyTrainer::state_count);

  m.def(
      "make_environment",
      [](const std::string& spec) {
        TrainerConfig c;
        c.env = spec;
        const auto env = make_environment(c);
        return py::make_tuple(env->name(), env->state_count(), env->action_count(), env->deterministic());
      },
      "Name, state count, action count and determinism of an environment spec.");

  m.def(
      "bfs_distances",
      [](const std::string& spec, StateId goal) {
        TrainerConfig c;
        c.env = spec;
        return oracle::bfs_distance(*make_environment(c)).to_state(goal);
      },
      py::arg("env"), py::arg("goal"));

  py::class_<oracle::BranchRow>(m, "BranchRow")
      .def_readonly("p", &oracle::BranchRow::p)
      .def_readonly("greedy", &oracle::BranchRow::greedy)
      .def_readonly("cumulative", &oracle::BranchRow::cumulative)
      .def_readonly("q_risky", &oracle::BranchRow::q_risky)
      .def_readonly("q_safe", &oracle::BranchRow::q_safe);

  m.def(
      "branch_analysis",
      [](const std::vector<double>& p, double gamma, double d_max, int horizon) {
        const auto a = oracle::pathological_branch_analysis(p, gamma, d_max, horizon);
        return py::make_tuple(a.rows, a.crossover);
      },
      py::arg("p_grid"), py::arg("gamma") = 0.99, py::arg("d_max") = 20.0, py::arg("horizon") = 20);

  m.def("suite_names", &verify::suite_names);
  m.def(
      "verify",
      [](const std::string& suite, int seeds, std::uint64_t seed, int mc_samples) {
        verify::SuiteOptions o{seeds, seed, mc_samples};
        verify::SuiteReport r;
        {
          py::gil_scoped_release release;
          r = verify::run_suite(suite, o);
        }
        return py::make_tuple(r.passed(), r.json_lines());
      },
      py::arg("suite"), py::arg("seeds") = 100, py::arg("seed") = 0, py::arg("mc_samples") = 20000,
      "Runs a verification suite; returns (passed, json_lines).");

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "ddl");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      "Runs the command line in-process; returns (exit_code, stdout, stderr).");
}
