#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ddl::verify {

struct CaseResult {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string details;  // JSON object with suite-specific fields
};

struct SuiteReport {
  std::string suite;
  std::vector<CaseResult> cases;
  double seconds = 0.0;

  bool passed() const;
  int failures() const;
  /// One JSON line per case, then a summary line.
  std::vector<std::string> json_lines() const;
};

struct SuiteOptions {
  int seeds = 100;
  std::uint64_t seed = 0;
  int mc_samples = 20000;
};

/// Exact DDL policy iteration on seeded random deterministic MDPs: pointwise
/// monotone distances every round and shortest-path distances at the fixpoint.
SuiteReport appendix_b(const SuiteOptions& options);
/// Nested vs collapsed objective on 20 (env, policy) pairs.
SuiteReport eq5(const SuiteOptions& options);
/// Greedy and cumulative-objective choices on the two-branch MDP, and the
/// crossover probability.
SuiteReport pathological(const SuiteOptions& options);
/// Central finite differences against the analytic regression gradient.
SuiteReport gradcheck(const SuiteOptions& options);
/// No policy's exact distance falls below the shortest-path distance.
SuiteReport bfs_optimality(const SuiteOptions& options);

const std::vector<std::string>& suite_names();
SuiteReport run_suite(const std::string& name, const SuiteOptions& options);

}  // namespace ddl::verify
