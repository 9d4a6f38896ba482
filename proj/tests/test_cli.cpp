#include "doctest.h"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ddl/cli.hpp"
#include "ddl/serve.hpp"
#include "support.hpp"

using namespace ddl;
using ddl::testing::source_path;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ddl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string maze9() { return source_path("mazes/smaze9.txt").string(); }

}  // namespace

TEST_CASE("train writes metrics and exits 0") {
  const auto dir = fresh_dir("ddl_cli_train");
  const auto r = run_cli({"train", "--set", "env=" + maze9(), "--set", "method=DDLUS", "--set", "total_env_steps=3000",
                          "--set", "N_pi=2", "-o", dir.string()});
  CHECK(r.code == cli::kExitOk);
  CHECK(fs::exists(dir / "metrics.jsonl"));
  CHECK(fs::exists(dir / "final" / "policy.csv"));
  const auto summary = nlohmann::json::parse(read_file(dir / "summary.json"));
  CHECK(summary["env_steps"] == 3000);
  CHECK(summary.contains("eval"));
  fs::remove_all(dir);
}

TEST_CASE("train with a shipped config file resolves paths next to it") {
  const auto dir = fresh_dir("ddl_cli_config");
  const auto r = run_cli({"train", "-c", source_path("configs/smaze15_ddlfp.cfg").string(), "--set",
                          "total_env_steps=12000", "--set", "query_interval_env_steps=4000", "-o", dir.string()});
  CHECK(r.code == cli::kExitOk);
  CHECK(fs::exists(dir / "queries.jsonl"));
  fs::remove_all(dir);
}

TEST_CASE("invalid configuration exits 1 naming the invariant") {
  auto r = run_cli({"train", "--set", "gamma=1.5", "-o", fresh_dir("ddl_cli_bad").string()});
  CHECK(r.code == cli::kExitConfig);
  CHECK(r.err.find("gamma") != std::string::npos);

  r = run_cli({"train", "--set", "no_such_key=1"});
  CHECK(r.code == cli::kExitConfig);
  r = run_cli({"train", "--set", "gamma"});
  CHECK(r.code == cli::kExitConfig);
  r = run_cli({"train", "-c", "/nonexistent/file.cfg"});
  CHECK(r.code == cli::kExitConfig);
  r = run_cli({"bogus"});
  CHECK(r.code == cli::kExitConfig);
  r = run_cli({});
  CHECK(r.code == cli::kExitConfig);
}

TEST_CASE("verify exits 0 on passing suites and 2 on a failed check") {
  auto r = run_cli({"verify", "--suite", "appendixB", "--seeds", "5"});
  CHECK(r.code == cli::kExitOk);
  std::istringstream lines(r.out);
  std::string line, last;
  int count = 0;
  while (std::getline(lines, line)) {
    last = line;
    ++count;
  }
  const auto summary = nlohmann::json::parse(last);
  CHECK(summary["summary"] == true);
  CHECK(summary["passed"] == true);
  CHECK(summary["cases"] == count - 1);

  // Two Monte Carlo samples give standard errors too unreliable for the
  // 4-sigma agreement check on some instances.
  r = run_cli({"verify", "--suite", "eq5", "--mc-samples", "2", "--seed", "2"});
  CHECK(r.code == cli::kExitVerification);

  r = run_cli({"verify", "--suite", "nonsense"});
  CHECK(r.code == cli::kExitConfig);
}

TEST_CASE("eval and heatmap read a checkpoint") {
  const auto dir = fresh_dir("ddl_cli_eval");
  const std::vector<std::string> common{"--set", "env=" + maze9(), "--set", "total_env_steps=30000", "--set", "N_pi=10"};
  auto args = common;
  args.insert(args.begin(), "train");
  args.push_back("-o");
  args.push_back(dir.string());
  REQUIRE(run_cli(args).code == cli::kExitOk);

  args = common;
  args.insert(args.begin(), "eval");
  const std::string final_dir = (dir / "final").string();
  args.insert(args.end(), {"--checkpoint", final_dir, "--episodes", "10"});
  auto r = run_cli(args);
  CHECK(r.code == cli::kExitOk);
  const auto e = nlohmann::json::parse(r.out);
  CHECK(e["episodes"] == 10);
  CHECK(e["success_rate"].get<double>() >= 0.0);

  args = common;
  args.insert(args.begin(), "heatmap");
  args.insert(args.end(), {"--checkpoint", final_dir, "-o", (dir / "heat.csv").string()});
  CHECK(run_cli(args).code == cli::kExitOk);
  const auto csv = read_file(dir / "heat.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
  CHECK(csv.find("-1") != std::string::npos);

  CHECK(run_cli({"eval", "--checkpoint", (dir / "missing").string(), "--set", "env=" + maze9()}).code ==
        cli::kExitConfig);
  CHECK(run_cli({"heatmap", "--checkpoint", (dir / "final").string(), "--set", "env=pathological:0.1"}).code ==
        cli::kExitConfig);
  fs::remove_all(dir);
}

TEST_CASE("serve needs DDLfP and a free port") {
  CHECK(run_cli({"serve", "--set", "env=" + maze9()}).code == cli::kExitConfig);

  QueryMailbox box;
  StatusBoard board;
  const auto maze = GridMaze::corridor(3, 5);
  PreferenceServer holder(maze, box, board);
  REQUIRE(holder.start("127.0.0.1", 0));
  const auto r = run_cli({"serve", "--set", "env=" + maze9(), "--set", "method=DDLfP", "--port",
                          std::to_string(holder.port()), "-o", fresh_dir("ddl_cli_serve").string()});
  CHECK(r.code == cli::kExitConfig);
  CHECK(r.err.find("port") != std::string::npos);
}

TEST_CASE("serve runs to completion when nobody answers") {
  const auto dir = fresh_dir("ddl_cli_serve_run");
  const auto r = run_cli({"serve", "--set", "env=" + maze9(), "--set", "method=DDLfP", "--set", "total_env_steps=3000",
                          "--set", "query_interval_env_steps=1000", "--set", "query_timeout_ms=5", "--set", "N_pi=2",
                          "--port", "0", "-o", dir.string()});
  CHECK(r.code == cli::kExitOk);
  std::istringstream lines(r.out);
  std::string first, second;
  std::getline(lines, first);
  std::getline(lines, second);
  CHECK(nlohmann::json::parse(first).contains("listening"));
  const auto summary = nlohmann::json::parse(second);
  CHECK(summary["env_steps"] == 3000);
  CHECK(summary["answered"] == 0);
  CHECK(fs::exists(dir / "queries.jsonl"));
  fs::remove_all(dir);
}

TEST_CASE("two runs with one seed write identical metrics") {
  const auto a = fresh_dir("ddl_cli_det_a"), b = fresh_dir("ddl_cli_det_b");
  for (const auto& dir : {a, b})
    REQUIRE(run_cli({"train", "--set", "env=" + maze9(), "--set", "method=DDLUS", "--set", "total_env_steps=4000",
                     "--set", "seed=7", "-o", dir.string()})
                .code == cli::kExitOk);
  const auto bytes = read_file(a / "metrics.jsonl");
  CHECK_FALSE(bytes.empty());
  CHECK(bytes == read_file(b / "metrics.jsonl"));
  fs::remove_all(a);
  fs::remove_all(b);
}
