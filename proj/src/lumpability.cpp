#include "lump/lumpability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lump {
namespace {

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double t : x) s += t * t;
  return std::sqrt(s);
}

double inf_norm(std::span<const double> x) {
  double m = 0.0;
  for (double t : x) m = std::max(m, std::abs(t));
  return m;
}

}  // namespace

void validate(const LumpingProblem& p) {
  const int n = p.micro_dim(), m = p.macro_dim();
  if (int(p.variables.size()) != n)
    throw std::invalid_argument("problem: variable list does not match n");
  if (m >= n)
    throw std::invalid_argument(
        "problem: macro dimension must be smaller than micro dimension");
  if (p.pi.domain_dim() != n)
    throw std::invalid_argument("problem: lumping map arity mismatch");
  if (p.constraints && p.constraints->domain_dim() != n)
    throw std::invalid_argument("problem: constraint arity mismatch");
  if (int(p.samples.lower.size()) != n || int(p.samples.upper.size()) != n)
    throw std::invalid_argument("problem: sample box must list n bounds");
  for (int i = 0; i < n; ++i) {
    if (!(p.samples.lower[i] < p.samples.upper[i]))
      throw std::invalid_argument("problem: empty sample box");
    if (!std::isfinite(p.samples.lower[i]) || !std::isfinite(p.samples.upper[i]))
      throw std::invalid_argument("problem: non-finite sample box");
  }
  for (const auto& k : p.samples.keep)
    if (k.arity() != n)
      throw std::invalid_argument("problem: keep expression arity mismatch");
  if (p.fiber_seed && int(p.fiber_seed->size()) != n)
    throw std::invalid_argument("problem: fiber seed has wrong dimension");
  if (p.samples.count <= 0)
    throw std::invalid_argument("problem: sample count must be positive");
}

// splitmix64: tiny, well-mixed, and identical everywhere.
Rng::Rng(std::uint64_t seed) : s_(seed) {}

std::uint64_t Rng::next() {
  std::uint64_t z = (s_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform01() {
  return double(next() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform01();
}

double Rng::gaussian() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = uniform01(), u2 = uniform01();
  while (u1 == 0.0) u1 = uniform01();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

namespace {

struct GaussNewtonResult {
  std::vector<double> z;
  double residual = std::numeric_limits<double>::infinity();
  bool converged = false;
  int iterations = 0;
};

// Minimal-norm Gauss-Newton with backtracking; F must shrink every step.
GaussNewtonResult gauss_newton(
    const std::function<std::vector<double>(std::span<const double>)>& f,
    const std::function<Matrix(std::span<const double>)>& jac,
    std::vector<double> z0, double tol, int max_iter = 50) {
  GaussNewtonResult out;
  std::vector<double> z = std::move(z0);
  std::vector<double> r;
  try {
    r = f(z);
  } catch (const EvalError&) {
    return out;
  }
  double rn = norm2(r);
  for (int it = 0; it < max_iter; ++it) {
    if (rn < tol) {
      out.z = z;
      out.residual = rn;
      out.converged = true;
      out.iterations = it;
      return out;
    }
    Matrix p = pseudoinverse(jac(z), 1e-12);
    auto step = matvec(p, r);
    double scale = 1.0;
    bool improved = false;
    for (int half = 0; half < 30; ++half) {
      std::vector<double> zn(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) zn[i] = z[i] - scale * step[i];
      std::vector<double> rn2;
      try {
        rn2 = f(zn);
      } catch (const EvalError&) {
        scale *= 0.5;
        continue;
      }
      double nn = norm2(rn2);
      if (nn < rn) {
        z = std::move(zn);
        r = std::move(rn2);
        rn = nn;
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) {
      out.z = z;
      out.residual = rn;
      out.iterations = it;
      return out;  // stagnation
    }
  }
  out.z = z;
  out.residual = rn;
  out.converged = rn < tol;
  return out;
}

bool keep_ok(const LumpingProblem& p, std::span<const double> x) {
  for (const auto& k : p.samples.keep) {
    double val;
    try {
      val = k.evaluate(x);
    } catch (const EvalError&) {
      return false;
    }
    if (!(val >= 0.0)) return false;
  }
  return true;
}

}  // namespace

std::vector<std::vector<double>> sample_points(const LumpingProblem& p,
                                               std::uint64_t seed,
                                               SamplerStats* stats) {
  validate(p);
  const int n = p.micro_dim();
  Rng rng(seed);
  SamplerStats st;
  st.requested = p.samples.count;
  std::vector<std::vector<double>> pts;
  const int max_attempts = p.samples.count * 50 + 1000;
  int attempts = 0;
  while (int(pts.size()) < p.samples.count && attempts < max_attempts) {
    ++attempts;
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i)
      x[i] = rng.uniform(p.samples.lower[i], p.samples.upper[i]);
    if (p.constraints) {
      const SmoothMap& g = *p.constraints;
      auto res = gauss_newton(
          [&](std::span<const double> z) { return g.evaluate(z); },
          [&](std::span<const double> z) { return jacobian(g, z); }, x,
          p.tol.constraint_tol);
      if (!res.converged) {
        ++st.projection_failures;
        continue;
      }
      x = std::move(res.z);
    }
    if (!keep_ok(p, x)) {
      ++st.rejected_keep;
      continue;
    }
    pts.push_back(std::move(x));
  }
  st.accepted = int(pts.size());
  if (stats) *stats = st;
  return pts;
}

Grade grade_residual(double r, double tol) {
  if (r < tol) return Grade::pass;
  if (r > 10.0 * tol) return Grade::fail;
  return Grade::borderline;
}

Grade worst(Grade a, Grade b) {
  return int(a) > int(b) ? a : b;
}

namespace {

struct Restricted {
  Matrix dpi;        // possibly tangent-restricted
  Matrix pf;         // pushforward_jacobian, same restriction
  double min_singular_dpi = 0.0;
};

Restricted restricted_pair(const LumpingProblem& p, std::span<const double> x) {
  Restricted r;
  Matrix dpi = jacobian(p.pi, x);
  Matrix pf = pushforward_jacobian(p.pi, p.v, x);
  // Submersivity is judged on the ambient Jacobian; the tangent-restricted
  // rank may drop when the image is a lower-dimensional submanifold, and the
  // rank criteria below compare restricted ranks against each other.
  auto s = singular_values(dpi);
  r.min_singular_dpi = s.empty() ? 0.0 : s.back();
  if (rank(dpi, p.tol.rank_tol) < p.macro_dim())
    throw SubmersionError("candidate map is not a submersion at a sample point",
                          r.min_singular_dpi);
  if (p.constraints) {
    Matrix t = tangent_basis(*p.constraints, x, p.tol.rank_tol);
    r.dpi = matmul(dpi, t);
    r.pf = matmul(pf, t);
  } else {
    r.dpi = std::move(dpi);
    r.pf = std::move(pf);
  }
  return r;
}

// Grades "appending rows kept the rank" by the largest singular value that
// the appended rows introduced beyond the base rank.
std::pair<double, Grade> rank_growth_grade(const Matrix& base,
                                           const Matrix& stacked, double tol) {
  int base_rank = rank(base, tol);
  auto s = singular_values(stacked);
  if (int(s.size()) <= base_rank || s.empty() || s.front() == 0.0)
    return {0.0, Grade::pass};
  double ratio = s[base_rank] / s.front();
  return {ratio, grade_residual(ratio, tol)};
}

}  // namespace

KernelInclusion check_kernel_inclusion(const LumpingProblem& p,
                                       std::span<const double> x) {
  KernelInclusion out;
  auto kernel = vertical_kernel(
      p.pi, p.constraints ? &*p.constraints : nullptr, x, p.tol.rank_tol);
  out.kernel_dim = int(kernel.size());
  Matrix pf = pushforward_jacobian(p.pi, p.v, x);
  double denom = 1.0 + frobenius_norm(pf);
  for (const auto& w : kernel) {
    double r = norm2(matvec(pf, w)) / denom;
    out.max_residual = std::max(out.max_residual, r);
  }
  out.grade = grade_residual(out.max_residual, p.tol.residual_tol);
  return out;
}

RankCondition check_rank_condition(const LumpingProblem& p,
                                   std::span<const double> x) {
  RankCondition out;
  Restricted r = restricted_pair(p, x);
  Matrix stacked = stack_rows(r.dpi, r.pf);
  out.rank_dpi = rank(r.dpi, p.tol.rank_tol);
  out.rank_stacked = rank(stacked, p.tol.rank_tol);
  auto [ratio, grade] = rank_growth_grade(r.dpi, stacked, p.tol.rank_tol);
  out.offending_ratio = ratio;
  out.grade = grade;
  return out;
}

WedgeCondition check_wedge_condition(const LumpingProblem& p,
                                     std::span<const double> x) {
  WedgeCondition out;
  Restricted r = restricted_pair(p, x);
  const int m = r.pf.rows;
  out.rows.reserve(m);
  for (int a = 0; a < m; ++a) {
    std::vector<double> row(r.pf.cols);
    for (int c = 0; c < r.pf.cols; ++c) row[c] = r.pf.at(a, c);
    Matrix aug = append_row(r.dpi, row);
    auto [ratio, grade] = rank_growth_grade(r.dpi, aug, p.tol.rank_tol);
    out.worst_ratio = std::max(out.worst_ratio, ratio);
    out.rows.push_back(grade);
    out.grade = worst(out.grade, grade);
  }
  auto [ratio, grade] =
      rank_growth_grade(r.dpi, stack_rows(r.dpi, r.pf), p.tol.rank_tol);
  (void)ratio;
  out.combined = grade;
  return out;
}

PointVerdict check_point(const LumpingProblem& p, std::span<const double> x) {
  PointVerdict out;
  out.point.assign(x.begin(), x.end());
  Restricted r = restricted_pair(p, x);
  out.min_singular_dpi = r.min_singular_dpi;
  if (p.constraints)
    out.tangency_residual = tangency_residual(*p.constraints, p.v, x);
  out.kernel = check_kernel_inclusion(p, x);
  out.rank = check_rank_condition(p, x);
  out.wedge = check_wedge_condition(p, x);
  // The three criteria are equivalent in exact arithmetic; decisive outcomes
  // must coincide. Borderline grades are exempt.
  auto decisive = [](Grade g) { return g != Grade::borderline; };
  if (decisive(out.kernel.grade) && decisive(out.rank.grade) &&
      decisive(out.wedge.grade)) {
    out.criteria_agree = (out.kernel.grade == out.rank.grade) &&
                         (out.rank.grade == out.wedge.grade);
  }
  return out;
}

namespace {

// Targets {pi(z) = y, g(z) = 0}; the stacked residual drives one solve.
GaussNewtonResult solve_fiber_target(const LumpingProblem& p,
                                     std::span<const double> y,
                                     std::vector<double> z0, double tol) {
  auto f = [&](std::span<const double> z) {
    auto piz = p.pi.evaluate(z);
    for (std::size_t a = 0; a < piz.size(); ++a) piz[a] -= y[a];
    if (p.constraints) {
      auto gz = p.constraints->evaluate(z);
      piz.insert(piz.end(), gz.begin(), gz.end());
    }
    return piz;
  };
  auto jac = [&](std::span<const double> z) {
    Matrix j = jacobian(p.pi, z);
    if (p.constraints) j = stack_rows(j, jacobian(*p.constraints, z));
    return j;
  };
  return gauss_newton(f, jac, std::move(z0), tol);
}

}  // namespace

std::vector<std::vector<double>> sample_fiber(const LumpingProblem& p,
                                              std::span<const double> x,
                                              int count, std::uint64_t seed,
                                              int* failures) {
  const int n = p.micro_dim();
  auto y = p.pi.evaluate(x);
  Rng rng(seed);
  int fail = 0;
  std::vector<std::vector<double>> out;
  std::vector<double> cur(x.begin(), x.end());
  double base_step = 0.2 * (1.0 + inf_norm(x));
  const int max_attempts = count * 20 + 50;
  int attempts = 0;
  while (int(out.size()) < count && attempts < max_attempts) {
    ++attempts;
    std::vector<std::vector<double>> kernel;
    try {
      kernel = vertical_kernel(p.pi, p.constraints ? &*p.constraints : nullptr,
                               cur, p.tol.rank_tol);
    } catch (const SubmersionError&) {
      ++fail;
      cur.assign(x.begin(), x.end());
      continue;
    }
    if (kernel.empty()) break;  // zero-dimensional fiber: nothing to walk
    std::vector<double> dir(n, 0.0);
    for (const auto& w : kernel) {
      double c = rng.gaussian();
      for (int i = 0; i < n; ++i) dir[i] += c * w[i];
    }
    double dn = norm2(dir);
    if (dn == 0.0) continue;
    for (int i = 0; i < n; ++i) dir[i] /= dn;

    bool placed = false;
    double step = base_step;
    for (int shrink = 0; shrink < 6 && !placed; ++shrink, step *= 0.5) {
      std::vector<double> trial(n);
      for (int i = 0; i < n; ++i) trial[i] = cur[i] + step * dir[i];
      auto res = solve_fiber_target(p, y, trial, p.tol.constraint_tol);
      if (res.converged) {
        cur = res.z;
        out.push_back(res.z);
        placed = true;
      }
    }
    if (!placed) {
      ++fail;
      cur.assign(x.begin(), x.end());
    }
  }
  if (failures) *failures = fail;
  return out;
}

FiberConstancy check_fiber_constancy(
    const LumpingProblem& p,
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>&
        pairs) {
  FiberConstancy out;
  out.pairs = int(pairs.size());
  for (const auto& [x, xp] : pairs) {
    auto a = pushforward(p.pi, p.v, x);
    auto b = pushforward(p.pi, p.v, xp);
    double num = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      num = std::max(num, std::abs(a[i] - b[i]));
    double r = num / (1.0 + norm2(a));
    if (r > out.worst_residual) {
      out.worst_residual = r;
      out.witness = x;
    }
  }
  out.grade = grade_residual(out.worst_residual, p.tol.residual_tol);
  return out;
}

FirstIntegral detect_first_integral(
    const LumpingProblem& p, const std::vector<std::vector<double>>& points) {
  FirstIntegral out;
  out.applicable = p.macro_dim() == 1;
  if (!out.applicable || points.empty()) return out;
  bool rank_ok = true;
  for (const auto& x : points) {
    auto pf = pushforward(p.pi, p.v, x);
    out.max_pushforward_norm =
        std::max(out.max_pushforward_norm, std::abs(pf[0]));
    if (rank(jacobian(p.pi, x), p.tol.rank_tol) != 1) rank_ok = false;
  }
  out.detected = rank_ok && out.max_pushforward_norm < p.tol.residual_tol;
  return out;
}

struct LumpedField::State {
  explicit State(LumpingProblem p) : problem(std::move(p)) {}
  LumpingProblem problem;
  std::uint64_t seed = 0;
  mutable std::mutex mu;
  mutable std::vector<std::pair<std::vector<double>, std::vector<double>>>
      cache;  // (y, x*) pairs
  mutable std::vector<double> last;
};

LumpedField LumpedField::zero(int macro_dim) {
  LumpedField f;
  f.kind_ = Kind::zero;
  f.dim_ = macro_dim;
  return f;
}

LumpedField LumpedField::fiber_solve(const LumpingProblem& p,
                                     std::uint64_t seed) {
  validate(p);
  LumpedField f;
  f.kind_ = Kind::fiber_solve;
  f.dim_ = p.macro_dim();
  f.state_ = std::make_shared<State>(p);
  f.state_->seed = seed;
  return f;
}

std::vector<double> LumpedField::evaluate(std::span<const double> y) const {
  if (int(y.size()) != dim_)
    throw std::invalid_argument("LumpedField: wrong macro dimension");
  if (kind_ == Kind::zero) return std::vector<double>(dim_, 0.0);

  const LumpingProblem& p = state_->problem;
  const int n = p.micro_dim();

  // Candidate starts: nearest cached solve, declared seed, box center, then
  // a deterministic spread of corners and seeded random draws.
  std::vector<std::vector<double>> starts;
  {
    std::lock_guard<std::mutex> lock(state_->mu);
    double best = std::numeric_limits<double>::infinity();
    const std::vector<double>* nearest = nullptr;
    for (const auto& [yc, xc] : state_->cache) {
      double d = 0.0;
      for (std::size_t i = 0; i < yc.size(); ++i)
        d += (yc[i] - y[i]) * (yc[i] - y[i]);
      if (d < best) {
        best = d;
        nearest = &xc;
      }
    }
    if (nearest) starts.push_back(*nearest);
  }
  if (p.fiber_seed) starts.push_back(*p.fiber_seed);
  std::vector<double> center(n);
  for (int i = 0; i < n; ++i)
    center[i] = 0.5 * (p.samples.lower[i] + p.samples.upper[i]);
  starts.push_back(center);
  for (int i = 0; i < n; ++i) {
    std::vector<double> e(n, 0.0);
    e[i] = 1.0;
    starts.push_back(e);
    e[i] = -1.0;
    starts.push_back(std::move(e));
  }
  Rng rng(state_->seed ^ 0x5eedf1be5ull);
  for (int k = 0; k < 8; ++k) {
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i)
      x[i] = rng.uniform(p.samples.lower[i], p.samples.upper[i]);
    starts.push_back(std::move(x));
  }

  // A stagnated solve still answers the query when its least-squares floor
  // is within image_tol of y: the returned value is the pushforward at the
  // nearest image point, which extends the macro field continuously off a
  // curved image. Larger floors mean y is genuinely outside the image.
  double near_image = p.tol.image_tol * (1.0 + norm2(y));
  double best_residual = std::numeric_limits<double>::infinity();
  for (auto& z0 : starts) {
    auto res = solve_fiber_target(p, y, z0, p.tol.constraint_tol);
    best_residual = std::min(best_residual, res.residual);
    if (res.converged || (!res.z.empty() && res.residual <= near_image)) {
      auto value = pushforward(p.pi, p.v, res.z);
      std::lock_guard<std::mutex> lock(state_->mu);
      state_->cache.emplace_back(std::vector<double>(y.begin(), y.end()),
                                 res.z);
      if (state_->cache.size() > 512)
        state_->cache.erase(state_->cache.begin());
      state_->last = res.z;
      return value;
    }
  }
  throw SolveError(
      "fiber solve stagnated; macro point may be outside the image",
      best_residual);
}

std::vector<double> LumpedField::last_solution() const {
  if (kind_ == Kind::zero) return {};
  std::lock_guard<std::mutex> lock(state_->mu);
  return state_->last;
}

LumpedField construct_lumped_field(const LumpingProblem& p, std::uint64_t seed,
                                   const FirstIntegral* probe) {
  if (probe && probe->detected) return LumpedField::zero(p.macro_dim());
  if (!probe && p.macro_dim() == 1) {
    auto pts = sample_points(p, seed ^ 0xf1b5eedULL);
    auto fi = detect_first_integral(p, pts);
    if (fi.detected) return LumpedField::zero(1);
  }
  return LumpedField::fiber_solve(p, seed);
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::lumpable: return "lumpable";
    case Verdict::not_lumpable: return "not-lumpable";
    default: return "inconclusive";
  }
}

std::string to_string(Grade g) {
  switch (g) {
    case Grade::pass: return "pass";
    case Grade::borderline: return "borderline";
    default: return "fail";
  }
}

namespace {

void tally(CriterionSummary& s, Grade g, double measure,
           const std::vector<double>& point) {
  ++s.checked;
  if (g == Grade::pass) ++s.passed;
  else if (g == Grade::borderline) ++s.borderline;
  else ++s.failed;
  if (measure > s.worst) {
    s.worst = measure;
    s.witness = point;
  }
}

}  // namespace

CheckReport aggregate(const LumpingProblem&,
                      std::vector<PointVerdict> verdicts,
                      const FiberConstancy& fiber, const FirstIntegral& fi,
                      const std::optional<FlowSummary>& flow,
                      const SamplerStats& sampler) {
  CheckReport rep;
  rep.first_integral = fi;
  rep.flow = flow;
  rep.sampler = sampler;
  rep.min_singular_dpi = std::numeric_limits<double>::infinity();

  bool any_fail = false, any_borderline = false, any_disagreement = false;
  for (const auto& v : verdicts) {
    tally(rep.kernel, v.kernel.grade, v.kernel.max_residual, v.point);
    tally(rep.rank, v.rank.grade, v.rank.offending_ratio, v.point);
    tally(rep.wedge, v.wedge.grade, v.wedge.worst_ratio, v.point);
    rep.min_singular_dpi = std::min(rep.min_singular_dpi, v.min_singular_dpi);
    rep.max_tangency_residual =
        std::max(rep.max_tangency_residual, v.tangency_residual);
    for (Grade g : {v.kernel.grade, v.rank.grade, v.wedge.grade}) {
      if (g == Grade::fail) any_fail = true;
      if (g == Grade::borderline) any_borderline = true;
    }
    if (!v.criteria_agree) any_disagreement = true;
  }
  if (verdicts.empty())
    rep.min_singular_dpi = 0.0;

  rep.fiber.checked = fiber.pairs;
  rep.fiber.worst = fiber.worst_residual;
  rep.fiber.witness = fiber.witness;
  if (fiber.pairs > 0) {
    if (fiber.grade == Grade::pass) rep.fiber.passed = fiber.pairs;
    else if (fiber.grade == Grade::fail) { rep.fiber.failed = 1; any_fail = true; }
    else { rep.fiber.borderline = 1; any_borderline = true; }
  }

  if (flow) {
    if (flow->grade == Grade::fail) any_fail = true;
    if (flow->grade == Grade::borderline) any_borderline = true;
  }

  double fail_rate =
      sampler.requested > 0
          ? 1.0 - double(sampler.accepted) / double(sampler.requested)
          : 1.0;
  bool sampler_unhealthy = sampler.accepted == 0 || fail_rate > 0.10;

  if (verdicts.empty()) {
    rep.verdict = Verdict::inconclusive;
    rep.notes.push_back("no sample points were accepted");
    return rep;
  }
  if (any_fail) {
    rep.verdict = Verdict::not_lumpable;
  } else if (any_borderline || any_disagreement || sampler_unhealthy) {
    rep.verdict = Verdict::inconclusive;
    if (any_borderline)
      rep.notes.push_back("borderline residuals within the 10x tolerance band");
    if (any_disagreement)
      rep.notes.push_back(
          "criteria disagreed decisively at a point; flagged, not resolved");
    if (sampler_unhealthy)
      rep.notes.push_back("sampler acceptance below 90%");
  } else {
    rep.verdict = Verdict::lumpable;
  }
  rep.points = std::move(verdicts);
  return rep;
}

CheckReport run_check(const LumpingProblem& p, std::uint64_t seed) {
  validate(p);
  SamplerStats stats;
  auto pts = sample_points(p, seed, &stats);

  std::vector<PointVerdict> verdicts;
  verdicts.reserve(pts.size());
  std::vector<std::string> notes;
  int submersion_failures = 0;
  for (const auto& x : pts) {
    try {
      verdicts.push_back(check_point(p, x));
    } catch (const SubmersionError&) {
      ++submersion_failures;
    }
  }

  // Fiber pairs: walk fibers from the first few accepted points.
  std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs;
  int fiber_failures = 0;
  int bases = std::min<int>(int(pts.size()), std::max(1, p.fiber_pairs / 4));
  for (int b = 0; b < bases && int(pairs.size()) < p.fiber_pairs; ++b) {
    int fails = 0;
    auto mates =
        sample_fiber(p, pts[b], 4, seed ^ (0xabcdef1234ULL + b), &fails);
    fiber_failures += fails;
    for (const auto& m : mates) {
      pairs.emplace_back(pts[b], m);
      if (int(pairs.size()) >= p.fiber_pairs) break;
    }
  }
  FiberConstancy fiber = check_fiber_constancy(p, pairs);
  fiber.failures = fiber_failures;

  FirstIntegral fi = detect_first_integral(p, pts);

  std::optional<FlowSummary> flow;
  if (p.flow.enabled && !pts.empty()) {
    LumpedField lf = construct_lumped_field(p, seed, &fi);
    Rhs macro = [&lf](double, std::span<const double> y) {
      return lf.evaluate(y);
    };
    FlowSummary fs;
    std::vector<double> grid(p.flow.grid_points);
    for (int i = 0; i < p.flow.grid_points; ++i)
      grid[i] = p.flow.t_end * double(i + 1) / double(p.flow.grid_points);
    IntegrateOptions micro_opts;
    if (p.constraints) micro_opts.drift_monitor = &*p.constraints;
    int runs = std::min<int>(p.flow.trajectories, int(pts.size()));
    bool flow_failed = false;
    for (int k = 0; k < runs; ++k) {
      try {
        auto r = flow_commutation_error(p.pi, p.v, macro, pts[k], grid,
                                        micro_opts);
        fs.starts.push_back(pts[k]);
        fs.micro_constraint_drift =
            std::max(fs.micro_constraint_drift, r.micro_constraint_drift);
        if (r.max_error >= fs.max_error) {
          fs.max_error = r.max_error;
          fs.worst_curve = r.curve;
        }
      } catch (const SolveError&) {
        flow_failed = true;
      } catch (const IntegrationError&) {
        flow_failed = true;
      }
    }
    fs.grade = grade_residual(fs.max_error, p.tol.flow_tol);
    if (flow_failed) {
      fs.grade = worst(fs.grade, Grade::borderline);
      notes.push_back("some flow-commutation runs failed to integrate");
    }
    flow = std::move(fs);
  }

  CheckReport rep = aggregate(p, std::move(verdicts), fiber, fi, flow, stats);
  if (submersion_failures > 0) {
    rep.notes.push_back("submersion violated at " +
                        std::to_string(submersion_failures) +
                        " sample point(s)");
    if (rep.verdict == Verdict::lumpable) rep.verdict = Verdict::inconclusive;
  }
  for (auto& nt : notes) rep.notes.push_back(std::move(nt));
  return rep;
}

}  // namespace lump
