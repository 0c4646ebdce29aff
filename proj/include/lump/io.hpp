#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "lump/lumpability.hpp"

namespace lump {

/// Problem-file rejection, carrying "origin:line" in what().
struct ProblemFileError : std::runtime_error {
  ProblemFileError(const std::string& what, int line)
      : std::runtime_error(what), line(line) {}
  int line;
};

/// Parses the sectioned problem format:
///   [problem]      name = ...
///   [dims]         n = ..., m = ...
///   [vars]         names = x1, x2, ...
///   [vector_field] one expression per line (n of them)
///   [lumping]      one expression per line (m of them)
///   [constraints]  optional, one expression per line
///   [domain]       lower = ..., upper = ..., keep = expr (repeatable)
///   [options]      samples, seed-independent tolerances, flow controls,
///                  fiber_seed, fiber_pairs
/// '#' starts a comment; blank lines are ignored.
LumpingProblem parse_problem_text(std::string_view text,
                                  const std::string& origin = "<string>");

LumpingProblem load_problem(const std::string& path);

/// Canonical text form: fixed section and key order, %.17g numbers,
/// expressions as parsed. parse(serialize(p)) reproduces an equivalent
/// problem with an identical hash.
std::string serialize_problem(const LumpingProblem& p);

/// FNV-1a over the canonical serialization, so formatting-equivalent files
/// hash identically.
std::uint64_t problem_hash(const LumpingProblem& p);

struct RunOptions {
  std::uint64_t seed = 0;
  bool flow = true;
};

/// The check report as an ordered JSON document (schema 1). Key order and
/// number formatting are deterministic: identical problem + seed means
/// byte-identical output.
nlohmann::ordered_json report_to_json(const LumpingProblem& p,
                                      const CheckReport& rep,
                                      const RunOptions& opts);

/// One CSV line, '.' decimal separator, ',' field separator, %.17g.
std::string csv_row(std::span<const double> values);

}  // namespace lump
