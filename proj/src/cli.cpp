#include "ddl/cli.hpp"

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "ddl/serve.hpp"
#include "ddl/trainer.hpp"
#include "ddl/verify.hpp"

namespace ddl::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config,-c", args.config_path, "key=value config file");
  cmd->add_option("--set,-s", args.overrides, "override one key (key=value), repeatable");
  cmd->add_option("--seed", args.seed, "shorthand for --set seed=N");
}

TrainerConfig resolve_config(const ConfigArgs& args) {
  TrainerConfig config = args.config_path.empty() ? TrainerConfig{} : TrainerConfig::load(args.config_path);
  for (const auto& item : args.overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + item + "'");
    config.set(item.substr(0, eq), item.substr(eq + 1));
  }
  if (args.seed) config.seed = *args.seed;
  config.validate();
  return config;
}

fs::path config_dir(const ConfigArgs& args) {
  return args.config_path.empty() ? fs::path{} : fs::path(args.config_path).parent_path();
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

StateId evaluation_goal(const Trainer& trainer) {
  const auto& config = trainer.config();
  switch (config.method) {
    case Method::DDLfP: return resolve_goal(trainer.env(), config.hidden_goal);
    case Method::DDLUS: return trainer.goal().state;
    case Method::FixedGoal: return resolve_goal(trainer.env(), config.goal);
  }
  return kNoState;
}

json eval_json(const EvalResult& r, StateId goal) {
  json j;
  j["goal"] = goal;
  j["episodes"] = r.episodes;
  j["success_rate"] = r.success_rate;
  j["mean_steps"] = r.mean_steps;
  return j;
}

void write_summary(Trainer& trainer, const fs::path& out_dir, std::ostream& out) {
  json summary;
  summary["episodes"] = trainer.episodes();
  summary["env_steps"] = trainer.env_steps();
  summary["distance_steps"] = trainer.distance_steps();
  summary["queries_used"] = trainer.queries_used();
  summary["final_goal"] = trainer.goal().state == kNoState ? json(nullptr) : json(trainer.goal().state);
  const StateId goal = evaluation_goal(trainer);
  if (goal != kNoState) {
    summary["eval"] = eval_json(trainer.evaluate(goal, trainer.config().eval_episodes), goal);
    if (const auto e = trainer.distance_error(goal)) {
      summary["distance_mse"] = e->mse;
      summary["distance_mse_states"] = e->states;
    }
  }
  open_output(out_dir / "summary.json") << summary.dump(2) << '\n';
  out << summary.dump() << '\n';
}

void write_query_log(const Trainer& trainer, const fs::path& path) {
  auto out = open_output(path);
  for (const auto& q : trainer.queries()) {
    json j;
    j["query_id"] = q.query.query_id;
    j["issued_at_env_step"] = q.query.issued_at_env_step;
    j["candidates"] = q.query.candidates;
    j["previous_goal"] = q.query.previous_goal == kNoState ? json(nullptr) : json(q.query.previous_goal);
    j["choice_index"] = q.choice ? json(*q.choice) : json(nullptr);
    j["timed_out"] = q.timed_out;
    j["malformed"] = q.malformed;
    j["goal"] = q.goal.state == kNoState ? json(nullptr) : json(q.goal.state);
    out << j.dump() << '\n';
  }
}

int train_command(const ConfigArgs& args, const fs::path& out_dir, std::ostream& out) {
  const TrainerConfig config = resolve_config(args);
  const auto env = make_environment(config, config_dir(args));
  std::unique_ptr<PreferenceProvider> provider;
  if (config.method == Method::DDLfP) provider = make_provider(config, *env);
  Trainer trainer(*env, config, provider.get());

  fs::create_directories(out_dir);
  open_output(out_dir / "config.cfg") << config.dump();
  auto metrics = open_output(out_dir / "metrics.jsonl");
  trainer.run(&metrics, out_dir / "checkpoints");
  trainer.write_checkpoint(out_dir / "final");
  if (config.method == Method::DDLfP) write_query_log(trainer, out_dir / "queries.jsonl");
  write_summary(trainer, out_dir, out);
  return kExitOk;
}

std::unique_ptr<DistanceModel> load_distance(const TrainerConfig& config, const Environment& env, const fs::path& dir) {
  if (config.distance_kind == DistanceKind::Tabular) {
    std::ifstream in(dir / "distance.csv");
    if (!in) throw ConfigError("checkpoint has no distance.csv: " + dir.string());
    return std::make_unique<TabularDistance>(TabularDistance::load(in, env.state_count(), config.effective_d_max()));
  }
  std::ifstream in(dir / "distance.txt");
  if (!in) throw ConfigError("checkpoint has no distance.txt: " + dir.string());
  auto model = std::make_unique<ParametricDistance>(env, config.effective_d_max(), config.lambda_d,
                                                    std::vector<int>{config.hidden_units, config.hidden_units});
  model->load_parameters(in);
  return model;
}

int eval_command(const ConfigArgs& args, const fs::path& checkpoint, const std::string& goal_text, int episodes,
                 std::ostream& out) {
  const TrainerConfig config = resolve_config(args);
  const auto env = make_environment(config, config_dir(args));
  const StateId goal = resolve_goal(*env, goal_text.empty() ? config.goal : goal_text);
  Rng rng = make_rng(config.seed, 3);
  EvalResult result;
  if (config.baseline == Baseline::Greedy) {
    const auto distance = load_distance(config, *env, checkpoint);
    result = evaluate(*env, [&](StateId s, Rng&) { return greedy_step_baseline(*distance, *env, s, goal); }, goal,
                      episodes, rng);
  } else {
    std::ifstream in(checkpoint / "policy.csv");
    if (!in) throw ConfigError("checkpoint has no policy.csv: " + checkpoint.string());
    const Policy policy = Policy::load(in);
    if (policy.state_count() != env->state_count() || policy.action_count() != env->action_count()) {
      throw ConfigError("policy checkpoint does not match the environment");
    }
    if (!policy.has_goal(goal)) throw ConfigError("policy checkpoint holds no values for goal " + std::to_string(goal));
    result = evaluate(*env, [&](StateId s, Rng&) { return policy.greedy_action(s, goal); }, goal, episodes, rng);
  }
  out << eval_json(result, goal).dump() << '\n';
  return kExitOk;
}

int heatmap_command(const ConfigArgs& args, const fs::path& checkpoint, const std::string& goal_text,
                    const std::string& output, std::ostream& out) {
  const TrainerConfig config = resolve_config(args);
  const auto env = make_environment(config, config_dir(args));
  const auto* maze = dynamic_cast<const GridMaze*>(env.get());
  if (maze == nullptr) throw Unsupported("heatmap needs a grid environment, got '" + env->name() + "'");
  const StateId goal = resolve_goal(*env, goal_text.empty() ? config.goal : goal_text);
  const auto distance = load_distance(config, *env, checkpoint);
  if (output.empty() || output == "-") {
    export_heatmap(*distance, *maze, goal, out);
  } else {
    auto file = open_output(output);
    export_heatmap(*distance, *maze, goal, file);
  }
  return kExitOk;
}

int verify_command(const std::string& suite, const verify::SuiteOptions& options, const std::string& output,
                   std::ostream& out) {
  std::vector<std::string> suites;
  if (suite == "all") suites = verify::suite_names();
  else suites.push_back(suite);
  std::ofstream file;
  if (!output.empty()) file = open_output(output);
  bool passed = true;
  for (const auto& name : suites) {
    const auto report = verify::run_suite(name, options);
    for (const auto& line : report.json_lines()) {
      out << line << '\n';
      if (file.is_open()) file << line << '\n';
    }
    passed = passed && report.passed();
  }
  return passed ? kExitOk : kExitVerification;
}

std::atomic<bool> g_interrupted{false};

extern "C" void on_interrupt(int) { g_interrupted = true; }

int serve_command(const ConfigArgs& args, const fs::path& out_dir, const std::string& host, int port,
                  std::ostream& out, std::ostream& err) {
  TrainerConfig config = resolve_config(args);
  if (config.method != Method::DDLfP) throw ConfigError("serve requires method=DDLfP");
  const auto env = make_environment(config, config_dir(args));
  QueryMailbox mailbox;
  StatusBoard board;
  MailboxPreference provider(mailbox);
  Trainer trainer(*env, config, &provider);
  trainer.on_episode([&board](const EpisodeRecord&, const StatusSnapshot& s) { board.update(s); });
  board.update(trainer.status());

  PreferenceServer server(*env, mailbox, board);
  if (!server.start(host, port)) {
    err << "error: cannot listen on " << host << ":" << port << " (port in use?)\n";
    return kExitConfig;
  }
  out << json{{"listening", host + ":" + std::to_string(server.port())}}.dump() << '\n' << std::flush;

  g_interrupted = false;
  const auto previous_int = std::signal(SIGINT, on_interrupt);
  const auto previous_term = std::signal(SIGTERM, on_interrupt);
  std::atomic<bool> done{false};
  std::thread watcher([&] {
    while (!done) {
      if (g_interrupted) {
        trainer.request_stop();
        mailbox.close();
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  });

  fs::create_directories(out_dir);
  open_output(out_dir / "config.cfg") << config.dump();
  auto metrics = open_output(out_dir / "metrics.jsonl");
  int code = kExitOk;
  try {
    trainer.run(&metrics, out_dir / "checkpoints");
  } catch (...) {
    done = true;
    watcher.join();
    std::signal(SIGINT, previous_int);
    std::signal(SIGTERM, previous_term);
    throw;
  }
  done = true;
  watcher.join();
  std::signal(SIGINT, previous_int);
  std::signal(SIGTERM, previous_term);
  trainer.write_checkpoint(out_dir / "final");
  write_query_log(trainer, out_dir / "queries.jsonl");
  server.stop();
  json summary;
  summary["episodes"] = trainer.episodes();
  summary["env_steps"] = trainer.env_steps();
  summary["queries_used"] = trainer.queries_used();
  summary["answered"] = mailbox.accepted_count();
  summary["interrupted"] = g_interrupted.load();
  out << summary.dump() << '\n';
  return code;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dynamical distance learning at desk scale", "ddl"};
  app.require_subcommand(1);

  ConfigArgs train_args, eval_args, heat_args, serve_args;
  std::string train_out = "runs/latest", serve_out = "runs/serve";
  auto* train = app.add_subcommand("train", "run the training loop and write metrics and checkpoints");
  add_config_options(train, train_args);
  train->add_option("--out,-o", train_out, "output directory");

  std::string eval_checkpoint, eval_goal;
  int eval_episodes = 50;
  auto* eval = app.add_subcommand("eval", "greedy evaluation of a saved policy");
  add_config_options(eval, eval_args);
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint directory")->required();
  eval->add_option("--goal", eval_goal, "goal as x,y or state id (default: config goal)");
  eval->add_option("--episodes", eval_episodes, "evaluation episodes")->check(CLI::PositiveNumber);

  std::string suite = "all", verify_out;
  verify::SuiteOptions options;
  auto* ver = app.add_subcommand("verify", "run oracle property suites; exit 2 on any failure");
  ver->add_option("--suite", suite, "suite name or 'all'")
      ->check(CLI::IsMember([] {
        auto names = verify::suite_names();
        names.push_back("all");
        return names;
      }()));
  ver->add_option("--seeds", options.seeds, "number of seeded instances")->check(CLI::PositiveNumber);
  ver->add_option("--seed", options.seed, "first seed");
  ver->add_option("--mc-samples", options.mc_samples, "Monte Carlo samples per estimate")->check(CLI::PositiveNumber);
  ver->add_option("--out,-o", verify_out, "also write the JSON lines to this file");

  std::string heat_checkpoint, heat_goal, heat_out;
  auto* heat = app.add_subcommand("heatmap", "export d(cell, goal) as a CSV matrix (walls -1)");
  add_config_options(heat, heat_args);
  heat->add_option("--checkpoint", heat_checkpoint, "checkpoint directory")->required();
  heat->add_option("--goal", heat_goal, "goal as x,y or state id (default: config goal)");
  heat->add_option("--out,-o", heat_out, "CSV path (default: stdout)");

  std::string host = "127.0.0.1";
  int port = 8765;
  auto* serve = app.add_subcommand("serve", "interactive DDLfP training with the preference endpoint");
  add_config_options(serve, serve_args);
  serve->add_option("--out,-o", serve_out, "output directory");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port (0 picks a free one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return train_command(train_args, train_out, out);
    if (*eval) return eval_command(eval_args, eval_checkpoint, eval_goal, eval_episodes, out);
    if (*ver) return verify_command(suite, options, verify_out, out);
    if (*heat) return heatmap_command(heat_args, heat_checkpoint, heat_goal, heat_out, out);
    if (*serve) return serve_command(serve_args, serve_out, host, port, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace ddl::cli
