#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "lump/io.hpp"
#include "lump/systems.hpp"

namespace {

const char* kMinimal =
    "[dims]\n"
    "n = 2\n"
    "m = 1\n"
    "[vars]\n"
    "names = x, y\n"
    "[vector_field]\n"
    "y\n"
    "-x\n"
    "[lumping]\n"
    "x\n"
    "[domain]\n"
    "lower = -1, -1\n"
    "upper = 1, 1\n";

void expect_error(const std::string& text, const std::string& needle,
                  int line = -1) {
  try {
    lump::parse_problem_text(text, "probe");
    FAIL_CHECK("expected ProblemFileError containing '" << needle << "'");
  } catch (const lump::ProblemFileError& e) {
    std::string what = e.what();
    CHECK_MESSAGE(what.find(needle) != std::string::npos, what);
    CHECK_MESSAGE(what.find("probe") != std::string::npos, what);
    if (line >= 0) CHECK_MESSAGE(e.line == line, what << " at line " << e.line);
  }
}

}  // namespace

TEST_CASE("minimal problem parses with defaults") {
  auto p = lump::parse_problem_text(kMinimal);
  CHECK(p.name == "problem");
  CHECK(p.micro_dim() == 2);
  CHECK(p.macro_dim() == 1);
  CHECK(p.variables == std::vector<std::string>{"x", "y"});
  CHECK_FALSE(p.constraints.has_value());
  CHECK_FALSE(p.fiber_seed.has_value());
  CHECK(p.samples.count == 200);
  CHECK(p.tol.rank_tol == 1e-8);
  CHECK(p.flow.enabled);
  CHECK(p.fiber_pairs == 20);
  auto vx = p.v.map().evaluate(std::vector<double>{0.5, 2.0});
  CHECK(vx[0] == 2.0);
  CHECK(vx[1] == -0.5);
}

TEST_CASE("every option key lands in the right field") {
  std::string text =
      "[problem]\n"
      "name = demo\n"
      "[dims]\n"
      "n = 2\n"
      "m = 1\n"
      "[vars]\n"
      "names = u, w\n"
      "[vector_field]\n"
      "w\n"
      "-u\n"
      "[lumping]\n"
      "u\n"
      "[domain]\n"
      "lower = -2, -2\n"
      "upper = 2, 2\n"
      "keep = u + 2\n"
      "keep = 2 - u\n"
      "[options]\n"
      "samples = 37\n"
      "rank_tol = 1e-7\n"
      "residual_tol = 2e-8\n"
      "constraint_tol = 1e-9\n"
      "flow_tol = 5e-4\n"
      "image_tol = 2e-3\n"
      "flow = false\n"
      "flow_t_end = 2.5\n"
      "flow_points = 11\n"
      "flow_trajectories = 4\n"
      "fiber_seed = 0.1, 0.2\n"
      "fiber_pairs = 7\n";
  auto p = lump::parse_problem_text(text);
  CHECK(p.name == "demo");
  CHECK(p.samples.count == 37);
  CHECK(p.samples.keep.size() == 2);
  CHECK(p.tol.rank_tol == 1e-7);
  CHECK(p.tol.residual_tol == 2e-8);
  CHECK(p.tol.constraint_tol == 1e-9);
  CHECK(p.tol.flow_tol == 5e-4);
  CHECK(p.tol.image_tol == 2e-3);
  CHECK_FALSE(p.flow.enabled);
  CHECK(p.flow.t_end == 2.5);
  CHECK(p.flow.grid_points == 11);
  CHECK(p.flow.trajectories == 4);
  REQUIRE(p.fiber_seed.has_value());
  CHECK(*p.fiber_seed == std::vector<double>{0.1, 0.2});
  CHECK(p.fiber_pairs == 7);
}

TEST_CASE("comments and blank lines are ignored") {
  std::string text =
      "# leading comment\n"
      "\n"
      "[dims]\n"
      "n = 2   # micro\n"
      "m = 1\n"
      "[vars]\n"
      "names = x, y\n"
      "[vector_field]\n"
      "y   # first component\n"
      "-x\n"
      "[lumping]\n"
      "x\n"
      "[domain]\n"
      "lower = -1, -1\n"
      "upper = 1, 1\n";
  auto p = lump::parse_problem_text(text);
  CHECK(p.micro_dim() == 2);
  // inline comment stripped before the expression parser saw it
  auto vx = p.v.map().evaluate(std::vector<double>{1.0, 3.0});
  CHECK(vx[0] == 3.0);
}

TEST_CASE("an empty constraints section means unconstrained") {
  std::string text = std::string(kMinimal) + "[constraints]\n";
  auto p = lump::parse_problem_text(text);
  CHECK_FALSE(p.constraints.has_value());
}

TEST_CASE("parse failures carry the origin and line") {
  expect_error("[bogus]\n", "unknown section", 1);
  expect_error("n = 2\n", "content before any section", 1);
  expect_error("[dims\n", "unterminated section header", 1);
  expect_error(
      "[dims]\nn = 2\nn = 2\nm = 1\n[vars]\nnames = x, y\n[vector_field]\ny\n"
      "-x\n[lumping]\nx\n[domain]\nlower = -1, -1\nupper = 1, 1\n",
      "duplicate key 'n'", 3);
  expect_error(
      "[dims]\nn = 2\nm = 1\n[vars]\nnames = x, y\n[vector_field]\ny\n-x\n"
      "[domain]\nlower = -1, -1\nupper = 1, 1\n",
      "missing section [lumping]");
  expect_error(
      "[dims]\nn = 2\nm = 1\n[vars]\nnames = x\n[vector_field]\ny\n-x\n"
      "[lumping]\nx\n[domain]\nlower = -1, -1\nupper = 1, 1\n",
      "variable names", 5);
  expect_error(
      "[dims]\nn = 2\n[vars]\nnames = x, y\n[vector_field]\ny\n-x\n"
      "[lumping]\nx\n[domain]\nlower = -1, -1\nupper = 1, 1\n",
      "must define n and m");
  expect_error(
      "[dims]\nn = 2\nm = 1\n[vars]\nnames = x, y\n[vector_field]\ny\n"
      "[lumping]\nx\n[domain]\nlower = -1, -1\nupper = 1, 1\n",
      "must list 2 expressions, got 1");
  expect_error(
      "[dims]\nn = 2\nm = 1\n[vars]\nnames = x, y\n[vector_field]\ny\nx +\n"
      "[lumping]\nx\n[domain]\nlower = -1, -1\nupper = 1, 1\n",
      "column 4", 8);
  expect_error(
      "[dims]\nn = 2\nm = 1\n[vars]\nnames = x, y\n[vector_field]\ny\n-x\n"
      "[lumping]\nx\n[domain]\nlower = -1, -1\nupper = 1, 1\nmiddle = 0\n",
      "unknown [domain] key 'middle'", 14);
  expect_error(std::string(kMinimal) + "[options]\nbogus = 1\n",
               "unknown [options] key 'bogus'", 15);
  expect_error(
      "[dims]\nn = 2\nm = 1\n[vars]\nnames = x, y\n[vector_field]\ny\n-x\n"
      "[lumping]\nx\n[domain]\nlower = -1, oops\nupper = 1, 1\n",
      "malformed number", 12);
  expect_error(std::string(kMinimal) + "[options]\nsamples = 1.5\n",
               "malformed integer", 15);
  expect_error(std::string(kMinimal) + "[options]\nflow = maybe\n",
               "malformed boolean", 15);
  // keep expressions report the column of the syntax error too
  expect_error(
      "[dims]\nn = 2\nm = 1\n[vars]\nnames = x, y\n[vector_field]\ny\n-x\n"
      "[lumping]\nx\n[domain]\nlower = -1, -1\nupper = 1, 1\nkeep = x ?\n",
      "column", 14);
  // structural validation failures surface through the same error type
  expect_error(
      "[dims]\nn = 2\nm = 2\n[vars]\nnames = x, y\n[vector_field]\ny\n-x\n"
      "[lumping]\nx\ny\n[domain]\nlower = -1, -1\nupper = 1, 1\n",
      "macro dimension");
}

TEST_CASE("load_problem reads files and reports missing ones") {
  std::string path = "io_test_problem.lmp";
  {
    std::ofstream out(path);
    out << kMinimal;
  }
  auto p = lump::load_problem(path);
  CHECK(p.micro_dim() == 2);
  std::remove(path.c_str());
  CHECK_THROWS_AS(lump::load_problem("no_such_file.lmp"), std::runtime_error);
  // the origin in errors is the file path
  {
    std::ofstream out(path);
    out << "[bogus]\n";
  }
  try {
    lump::load_problem(path);
    FAIL_CHECK("expected ProblemFileError");
  } catch (const lump::ProblemFileError& e) {
    CHECK(std::string(e.what()).find(path) != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("serialization round-trips every builtin byte for byte") {
  for (const auto& name : lump::builtin_names()) {
    auto p = lump::make_builtin(name);
    std::string once = lump::serialize_problem(p);
    auto q = lump::parse_problem_text(once, name);
    std::string twice = lump::serialize_problem(q);
    CHECK_MESSAGE(once == twice, name);
    CHECK(lump::problem_hash(p) == lump::problem_hash(q));
  }
}

TEST_CASE("hash ignores formatting and tracks content") {
  auto a = lump::parse_problem_text(kMinimal);
  std::string spaced =
      "# a comment\n"
      "[dims]\n"
      "  n   =   2\n"
      "m = 1\n\n"
      "[vars]\n"
      "names =  x ,  y\n"
      "[vector_field]\n"
      "y\n"
      "-x\n"
      "[lumping]\n"
      "x\n"
      "[domain]\n"
      "lower = -1, -1\n"
      "upper = 1, 1   # box\n";
  auto b = lump::parse_problem_text(spaced);
  CHECK(lump::problem_hash(a) == lump::problem_hash(b));

  // frozen canary: a change here means serialization or hashing drifted,
  // which silently invalidates stored report hashes
  CHECK(lump::problem_hash(a) == 0xc0393bd5409939c4ULL);

  auto c = lump::parse_problem_text(
      std::string(kMinimal) + "[options]\nsamples = 99\n");
  CHECK(lump::problem_hash(a) != lump::problem_hash(c));
}

TEST_CASE("report json has the documented shape and is deterministic") {
  auto p = lump::logistic_problem({1.0, 1.0});
  p.samples.count = 25;
  p.flow.trajectories = 2;
  p.flow.grid_points = 10;
  auto rep = lump::run_check(p, 5);
  lump::RunOptions opts{.seed = 5, .flow = true};
  auto j = lump::report_to_json(p, rep, opts);

  CHECK(j["schema"] == 1);
  CHECK(j["tool"]["name"] == "lumpcheck");
  CHECK(j["problem"]["name"] == "logistic2");
  CHECK(j["problem"]["n"] == 2);
  CHECK(j["problem"]["m"] == 1);
  CHECK(j["problem"]["constrained"] == false);
  std::string hash = j["problem"]["hash"];
  CHECK(hash.substr(0, 6) == "fnv1a:");
  CHECK(hash.size() == 6 + 16);
  CHECK(j["options"]["seed"] == 5);
  CHECK(j["verdict"] == "lumpable");
  for (const char* k : {"kernel_inclusion", "rank_condition",
                        "wedge_condition", "fiber_constancy"}) {
    CHECK(j["criteria"].contains(k));
    CHECK(j["criteria"][k]["checked"].is_number());
  }
  CHECK(j["first_integral"]["applicable"] == true);
  CHECK(j["first_integral"]["detected"] == false);
  REQUIRE(j["flow_commutation"].is_object());
  CHECK(j["flow_commutation"]["max_error"] == rep.flow->max_error);
  CHECK(j["flow_commutation"]["grade"] == "pass");
  CHECK(j["submersion"]["min_singular_value"].is_number());
  CHECK(j["sampler"]["accepted"] == 25);
  CHECK(j["points"].size() == rep.points.size());
  CHECK(j["points"][0].contains("kernel"));
  CHECK(j["points"][0].contains("rank"));
  CHECK(j["points"][0].contains("wedge"));
  CHECK(j["points"][0]["agree"] == true);
  CHECK(j["notes"].is_array());

  // identical problem and seed: byte-identical document
  auto rep2 = lump::run_check(p, 5);
  auto j2 = lump::report_to_json(p, rep2, opts);
  CHECK(j.dump(2) == j2.dump(2));

  // different seed: same verdict, different sampled points
  auto rep3 = lump::run_check(p, 6);
  auto j3 = lump::report_to_json(p, rep3, {.seed = 6, .flow = true});
  CHECK(j3["verdict"] == "lumpable");
  CHECK(j.dump(2) != j3.dump(2));
}

TEST_CASE("a disabled flow serializes as null") {
  auto p = lump::logistic_problem({1.0, 1.0});
  p.samples.count = 10;
  p.flow.enabled = false;
  auto rep = lump::run_check(p, 1);
  CHECK_FALSE(rep.flow.has_value());
  auto j = lump::report_to_json(p, rep, {.seed = 1, .flow = false});
  CHECK(j["flow_commutation"].is_null());
  CHECK(j["options"]["flow"] == false);
}

TEST_CASE("csv rows print full-precision decimals") {
  CHECK(lump::csv_row(std::vector<double>{1.0, 0.5, -3.0}) == "1,0.5,-3");
  CHECK(lump::csv_row(std::vector<double>{0.1}) == "0.10000000000000001");
  CHECK(lump::csv_row(std::vector<double>{1e300}) ==
        "1.0000000000000001e+300");
  CHECK(lump::csv_row(std::vector<double>{}) == "");
}
