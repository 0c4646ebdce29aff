#include "lump/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace lump {
namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_double(const std::string& s, int line) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ProblemFileError("malformed number '" + s + "'", line);
  return v;
}

long parse_long(const std::string& s, int line) {
  long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ProblemFileError("malformed integer '" + s + "'", line);
  return v;
}

std::vector<double> parse_vector(const std::string& s, int line) {
  std::vector<double> out;
  for (const auto& part : split_commas(s)) out.push_back(parse_double(part, line));
  return out;
}

bool parse_bool(const std::string& s, int line) {
  if (s == "true" || s == "1" || s == "on") return true;
  if (s == "false" || s == "0" || s == "off") return false;
  throw ProblemFileError("malformed boolean '" + s + "'", line);
}

struct RawLine {
  int number;
  std::string text;
};

// Parses with bare error messages; parse_problem_text stamps the origin on.
LumpingProblem parse_impl(std::string_view text) {
  std::map<std::string, std::vector<RawLine>> sections;
  std::vector<std::string> section_order;
  std::string current;
  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view raw =
        nl == std::string_view::npos ? text.substr(pos) : text.substr(pos, nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ProblemFileError("unterminated section header", lineno);
      current = trim(line.substr(1, line.size() - 2));
      static const char* known[] = {"problem",     "dims",   "vars",
                                    "vector_field", "lumping", "constraints",
                                    "domain",      "options"};
      bool ok = false;
      for (const char* k : known) ok = ok || current == k;
      if (!ok)
        throw ProblemFileError("unknown section [" + current + "]", lineno);
      if (!sections.count(current)) section_order.push_back(current);
      sections[current];
      continue;
    }
    if (current.empty())
      throw ProblemFileError("content before any section", lineno);
    sections[current].push_back({lineno, line});
  }

  auto kv = [&](const std::string& section) {
    std::map<std::string, std::pair<std::string, int>> out;
    for (const auto& l : sections[section]) {
      std::size_t eq = l.text.find('=');
      if (eq == std::string::npos)
        throw ProblemFileError("expected key = value in [" + section + "]",
                               l.number);
      std::string key = trim(l.text.substr(0, eq));
      std::string val = trim(l.text.substr(eq + 1));
      if (out.count(key) && key != "keep")
        throw ProblemFileError("duplicate key '" + key + "'", l.number);
      out[key] = {val, l.number};
    }
    return out;
  };

  for (const char* required : {"dims", "vars", "vector_field", "lumping", "domain"})
    if (!sections.count(required))
      throw ProblemFileError("missing section [" + std::string(required) + "]", lineno);

  auto dims = kv("dims");
  if (!dims.count("n") || !dims.count("m"))
    throw ProblemFileError("[dims] must define n and m", lineno);
  int n = int(parse_long(dims["n"].first, dims["n"].second));
  int m = int(parse_long(dims["m"].first, dims["m"].second));

  auto vars_kv = kv("vars");
  if (!vars_kv.count("names"))
    throw ProblemFileError("[vars] must define names", lineno);
  std::vector<std::string> vars = split_commas(vars_kv["names"].first);
  if (int(vars.size()) != n)
    throw ProblemFileError("expected " + std::to_string(n) +
                               " variable names, got " +
                               std::to_string(int(vars.size())),
                           vars_kv["names"].second);

  auto parse_exprs = [&](const std::string& section, int expected) {
    std::vector<Expression> out;
    for (const auto& l : sections[section]) {
      try {
        out.push_back(Expression::parse(l.text, vars));
      } catch (const ParseError& e) {
        throw ProblemFileError(std::string(e.what()) + " (column " +
                                   std::to_string(e.offset + 1) + ")",
                               l.number);
      }
    }
    if (expected >= 0 && int(out.size()) != expected)
      throw ProblemFileError("[" + section + "] must list " +
                                 std::to_string(expected) + " expressions, got " +
                                 std::to_string(int(out.size())),
                             lineno);
    return out;
  };

  std::vector<Expression> vexprs = parse_exprs("vector_field", n);
  std::vector<Expression> pexprs = parse_exprs("lumping", m);
  std::optional<SmoothMap> constraints;
  if (sections.count("constraints") && !sections["constraints"].empty())
    constraints = SmoothMap(parse_exprs("constraints", -1));

  SampleSpec samples;
  std::optional<std::vector<double>> fiber_seed;
  Tolerances tol;
  FlowSpec flow;
  int fiber_pairs = 20;
  std::string name = "problem";
  std::uint64_t ignored = 0;
  (void)ignored;

  for (const auto& l : sections["domain"]) {
    std::size_t eq = l.text.find('=');
    if (eq == std::string::npos)
      throw ProblemFileError("expected key = value in [domain]", l.number);
    std::string key = trim(l.text.substr(0, eq));
    std::string val = trim(l.text.substr(eq + 1));
    if (key == "lower") samples.lower = parse_vector(val, l.number);
    else if (key == "upper") samples.upper = parse_vector(val, l.number);
    else if (key == "keep") {
      try {
        samples.keep.push_back(Expression::parse(val, vars));
      } catch (const ParseError& e) {
        throw ProblemFileError(std::string(e.what()) + " (column " +
                                   std::to_string(e.offset + 1) + ")",
                               l.number);
      }
    } else {
      throw ProblemFileError("unknown [domain] key '" + key + "'", l.number);
    }
  }

  if (sections.count("problem")) {
    auto pk = kv("problem");
    if (pk.count("name")) name = pk["name"].first;
    for (const auto& [k, v] : pk)
      if (k != "name")
        throw ProblemFileError("unknown [problem] key '" + k + "'", v.second);
  }

  if (sections.count("options")) {
    for (const auto& l : sections["options"]) {
      std::size_t eq = l.text.find('=');
      if (eq == std::string::npos)
        throw ProblemFileError("expected key = value in [options]", l.number);
      std::string key = trim(l.text.substr(0, eq));
      std::string val = trim(l.text.substr(eq + 1));
      if (key == "samples") samples.count = int(parse_long(val, l.number));
      else if (key == "rank_tol") tol.rank_tol = parse_double(val, l.number);
      else if (key == "residual_tol") tol.residual_tol = parse_double(val, l.number);
      else if (key == "constraint_tol")
        tol.constraint_tol = parse_double(val, l.number);
      else if (key == "flow_tol") tol.flow_tol = parse_double(val, l.number);
      else if (key == "image_tol")
        tol.image_tol = parse_double(val, l.number);
      else if (key == "flow") flow.enabled = parse_bool(val, l.number);
      else if (key == "flow_t_end") flow.t_end = parse_double(val, l.number);
      else if (key == "flow_points") flow.grid_points = int(parse_long(val, l.number));
      else if (key == "flow_trajectories")
        flow.trajectories = int(parse_long(val, l.number));
      else if (key == "fiber_seed") fiber_seed = parse_vector(val, l.number);
      else if (key == "fiber_pairs") fiber_pairs = int(parse_long(val, l.number));
      else
        throw ProblemFileError("unknown [options] key '" + key + "'", l.number);
    }
  }

  LumpingProblem p{
      .name = name,
      .variables = vars,
      .v = VectorField(SmoothMap(std::move(vexprs))),
      .pi = SmoothMap(std::move(pexprs)),
      .constraints = std::move(constraints),
      .samples = std::move(samples),
      .fiber_seed = std::move(fiber_seed),
      .tol = tol,
      .flow = flow,
      .fiber_pairs = fiber_pairs,
  };
  try {
    validate(p);
  } catch (const std::invalid_argument& e) {
    throw ProblemFileError(e.what(), lineno);
  }
  return p;
}

}  // namespace

LumpingProblem parse_problem_text(std::string_view text,
                                  const std::string& origin) {
  try {
    return parse_impl(text);
  } catch (const ProblemFileError& e) {
    throw ProblemFileError(
        origin + ":" + std::to_string(e.line) + ": " + e.what(), e.line);
  }
}

LumpingProblem load_problem(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open problem file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_problem_text(ss.str(), path);
}

std::string serialize_problem(const LumpingProblem& p) {
  std::ostringstream out;
  out << "[problem]\nname = " << p.name << "\n\n";
  out << "[dims]\nn = " << p.micro_dim() << "\nm = " << p.macro_dim() << "\n\n";
  out << "[vars]\nnames = ";
  for (std::size_t i = 0; i < p.variables.size(); ++i) {
    if (i) out << ", ";
    out << p.variables[i];
  }
  out << "\n\n[vector_field]\n";
  for (int i = 0; i < p.micro_dim(); ++i)
    out << p.v.map().component(i).render() << "\n";
  out << "\n[lumping]\n";
  for (int a = 0; a < p.macro_dim(); ++a)
    out << p.pi.component(a).render() << "\n";
  if (p.constraints) {
    out << "\n[constraints]\n";
    for (int a = 0; a < p.constraints->range_dim(); ++a)
      out << p.constraints->component(a).render() << "\n";
  }
  out << "\n[domain]\n";
  auto vec_line = [&](const char* key, std::span<const double> v) {
    out << key << " = ";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out << ", ";
      out << num(v[i]);
    }
    out << "\n";
  };
  vec_line("lower", p.samples.lower);
  vec_line("upper", p.samples.upper);
  for (const auto& k : p.samples.keep) out << "keep = " << k.render() << "\n";
  out << "\n[options]\n";
  out << "samples = " << p.samples.count << "\n";
  out << "rank_tol = " << num(p.tol.rank_tol) << "\n";
  out << "residual_tol = " << num(p.tol.residual_tol) << "\n";
  out << "constraint_tol = " << num(p.tol.constraint_tol) << "\n";
  out << "flow_tol = " << num(p.tol.flow_tol) << "\n";
  out << "image_tol = " << num(p.tol.image_tol) << "\n";
  out << "flow = " << (p.flow.enabled ? "true" : "false") << "\n";
  out << "flow_t_end = " << num(p.flow.t_end) << "\n";
  out << "flow_points = " << p.flow.grid_points << "\n";
  out << "flow_trajectories = " << p.flow.trajectories << "\n";
  if (p.fiber_seed) vec_line("fiber_seed", *p.fiber_seed);
  out << "fiber_pairs = " << p.fiber_pairs << "\n";
  return out.str();
}

std::uint64_t problem_hash(const LumpingProblem& p) {
  std::string canon = serialize_problem(p);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

nlohmann::ordered_json summary_json(const CriterionSummary& s) {
  nlohmann::ordered_json j;
  j["checked"] = s.checked;
  j["passed"] = s.passed;
  j["borderline"] = s.borderline;
  j["failed"] = s.failed;
  j["worst"] = s.worst;
  j["witness"] = s.witness;
  return j;
}

}  // namespace

nlohmann::ordered_json report_to_json(const LumpingProblem& p,
                                      const CheckReport& rep,
                                      const RunOptions& opts) {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["tool"] = {{"name", "lumpcheck"}, {"version", "0.1.0"}};
  char hash[32];
  std::snprintf(hash, sizeof hash, "fnv1a:%016llx",
                (unsigned long long)problem_hash(p));
  j["problem"] = {{"name", p.name},
                  {"hash", hash},
                  {"n", p.micro_dim()},
                  {"m", p.macro_dim()},
                  {"constrained", bool(p.constraints)}};
  j["options"] = {{"seed", opts.seed},
                  {"samples", p.samples.count},
                  {"rank_tol", p.tol.rank_tol},
                  {"residual_tol", p.tol.residual_tol},
                  {"constraint_tol", p.tol.constraint_tol},
                  {"flow_tol", p.tol.flow_tol},
                  {"image_tol", p.tol.image_tol},
                  {"flow", p.flow.enabled && opts.flow}};
  j["verdict"] = to_string(rep.verdict);
  j["criteria"] = {{"kernel_inclusion", summary_json(rep.kernel)},
                   {"rank_condition", summary_json(rep.rank)},
                   {"wedge_condition", summary_json(rep.wedge)},
                   {"fiber_constancy", summary_json(rep.fiber)}};
  j["first_integral"] = {{"applicable", rep.first_integral.applicable},
                         {"detected", rep.first_integral.detected},
                         {"max_pushforward_norm",
                          rep.first_integral.max_pushforward_norm}};
  if (rep.flow) {
    nlohmann::ordered_json f;
    f["max_error"] = rep.flow->max_error;
    f["grade"] = to_string(rep.flow->grade);
    f["micro_constraint_drift"] = rep.flow->micro_constraint_drift;
    nlohmann::ordered_json curve = nlohmann::ordered_json::array();
    for (const auto& [t, e] : rep.flow->worst_curve)
      curve.push_back({t, e});
    f["worst_curve"] = curve;
    nlohmann::ordered_json starts = nlohmann::ordered_json::array();
    for (const auto& s : rep.flow->starts) starts.push_back(s);
    f["starts"] = starts;
    j["flow_commutation"] = f;
  } else {
    j["flow_commutation"] = nullptr;
  }
  j["submersion"] = {{"min_singular_value", rep.min_singular_dpi}};
  j["tangency"] = {{"max_residual", rep.max_tangency_residual}};
  j["sampler"] = {{"requested", rep.sampler.requested},
                  {"accepted", rep.sampler.accepted},
                  {"rejected_keep", rep.sampler.rejected_keep},
                  {"projection_failures", rep.sampler.projection_failures}};
  nlohmann::ordered_json pts = nlohmann::ordered_json::array();
  for (const auto& v : rep.points) {
    nlohmann::ordered_json pj;
    pj["point"] = v.point;
    pj["min_singular_dpi"] = v.min_singular_dpi;
    pj["tangency_residual"] = v.tangency_residual;
    pj["kernel"] = {{"dim", v.kernel.kernel_dim},
                    {"residual", v.kernel.max_residual},
                    {"grade", to_string(v.kernel.grade)}};
    pj["rank"] = {{"dpi", v.rank.rank_dpi},
                  {"stacked", v.rank.rank_stacked},
                  {"ratio", v.rank.offending_ratio},
                  {"grade", to_string(v.rank.grade)}};
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Grade g : v.wedge.rows) rows.push_back(to_string(g));
    pj["wedge"] = {{"rows", rows},
                   {"combined", to_string(v.wedge.combined)},
                   {"ratio", v.wedge.worst_ratio},
                   {"grade", to_string(v.wedge.grade)}};
    pj["agree"] = v.criteria_agree;
    pts.push_back(pj);
  }
  j["points"] = pts;
  j["notes"] = rep.notes;
  return j;
}

std::string csv_row(std::span<const double> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += num(values[i]);
  }
  return out;
}

}  // namespace lump
