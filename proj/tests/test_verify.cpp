#include "doctest.h"

#include <json.hpp>

#include "ddl/verify.hpp"

using namespace ddl;
using json = nlohmann::json;

TEST_CASE("report bookkeeping") {
  verify::SuiteReport r;
  r.suite = "demo";
  r.cases = {{"demo", "a", true, R"({"x":1})"}, {"demo", "b", false, "{}"}};
  CHECK_FALSE(r.passed());
  CHECK(r.failures() == 1);
  const auto lines = r.json_lines();
  REQUIRE(lines.size() == 3);
  const auto first = json::parse(lines[0]);
  CHECK(first["case"] == "a");
  CHECK(first["details"]["x"] == 1);
  CHECK(first["passed"] == true);
  const auto summary = json::parse(lines.back());
  CHECK(summary["summary"] == true);
  CHECK(summary["failures"] == 1);
  CHECK(summary["passed"] == false);

  r.cases.pop_back();
  CHECK(r.passed());
}

TEST_CASE("every shipped suite passes at small sizes") {
  verify::SuiteOptions o;
  o.seeds = 10;
  o.mc_samples = 4000;
  for (const auto& name : verify::suite_names()) {
    CAPTURE(name);
    const auto r = verify::run_suite(name, o);
    CHECK(r.suite == name);
    CHECK_FALSE(r.cases.empty());
    CHECK(r.passed());
  }
  CHECK_THROWS(verify::run_suite("nonsense", o));
}

TEST_CASE("appendixB covers uniform, random and optimal starts per seed") {
  verify::SuiteOptions o;
  o.seeds = 7;
  const auto r = verify::appendix_b(o);
  int uniform = 0, random = 0, optimal = 0;
  for (const auto& c : r.cases) {
    CHECK(json::parse(c.details).is_object());
    uniform += c.name.rfind("uniform_start_", 0) == 0;
    random += c.name.rfind("random_start_", 0) == 0;
    optimal += c.name.rfind("optimal_start_", 0) == 0;
  }
  CHECK(uniform == 7);
  CHECK(random == 7);
  CHECK(optimal == 7);
  CHECK(r.cases.size() == 21);
}
