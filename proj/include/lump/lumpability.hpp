#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lump/flows.hpp"
#include "lump/geometry.hpp"

namespace lump {

/// A fiber solve could not reach the requested target (residual stagnation,
/// typically a macro point outside the image of pi).
struct SolveError : std::runtime_error {
  SolveError(const std::string& what, double residual)
      : std::runtime_error(what), residual(residual) {}
  double residual;
};

struct Tolerances {
  double rank_tol = 1e-8;        // singular-value threshold, relative
  double residual_tol = 1e-8;    // pointwise residual threshold
  double constraint_tol = 1e-10; // fiber/constraint solve target
  double flow_tol = 1e-4;        // flow commutation threshold
  // A macro point whose fiber solve stagnates within this distance of the
  // image (relative to 1 + |y|) is answered at the nearest image point.
  // Adaptive steppers probe slightly off a curved image; refusing those
  // queries would make every such macro field non-integrable.
  double image_tol = 1e-3;
};

struct SampleSpec {
  std::vector<double> lower, upper;   // box bounds per variable
  std::vector<Expression> keep;       // accepted iff every keep expr >= 0
  int count = 200;
};

struct FlowSpec {
  bool enabled = true;
  double t_end = 1.0;
  int grid_points = 50;
  int trajectories = 3;
};

/// A micro system with a candidate lumping map: everything the criteria need.
struct LumpingProblem {
  std::string name;
  std::vector<std::string> variables;
  VectorField v;
  SmoothMap pi;
  std::optional<SmoothMap> constraints;
  SampleSpec samples;
  std::optional<std::vector<double>> fiber_seed;
  Tolerances tol;
  FlowSpec flow;
  int fiber_pairs = 20;

  int micro_dim() const { return v.dim(); }
  int macro_dim() const { return pi.range_dim(); }
};

/// Validates dimensional coherence (m < n, matching arities, box bounds).
/// Throws std::invalid_argument with a description on any violation.
void validate(const LumpingProblem& p);

/// Deterministic uniform generator: identical streams for identical seeds on
/// every platform (no std::distribution involvement).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  double uniform01();                       // [0, 1)
  double uniform(double lo, double hi);
  double gaussian();                        // Box-Muller
  std::uint64_t next();

 private:
  std::uint64_t s_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

struct SamplerStats {
  int requested = 0;
  int accepted = 0;
  int rejected_keep = 0;
  int projection_failures = 0;
};

/// Draws points from the sample box, projects them onto the constraint set
/// when one is present, and filters by the keep expressions. Deterministic
/// for a fixed seed.
std::vector<std::vector<double>> sample_points(const LumpingProblem& p,
                                               std::uint64_t seed,
                                               SamplerStats* stats = nullptr);

enum class Grade { pass, borderline, fail };

/// pass below tol, fail above 10x tol, borderline between.
Grade grade_residual(double r, double tol);
Grade worst(Grade a, Grade b);

struct KernelInclusion {
  int kernel_dim = 0;
  double max_residual = 0.0;
  Grade grade = Grade::pass;
};

struct RankCondition {
  int rank_dpi = 0;
  int rank_stacked = 0;
  double offending_ratio = 0.0;  // singular value ratio that decides the grade
  Grade grade = Grade::pass;
};

struct WedgeCondition {
  std::vector<Grade> rows;
  Grade combined = Grade::pass;
  double worst_ratio = 0.0;
  Grade grade = Grade::pass;  // worst of rows
};

struct PointVerdict {
  std::vector<double> point;
  double min_singular_dpi = 0.0;
  double tangency_residual = 0.0;
  KernelInclusion kernel;
  RankCondition rank;
  WedgeCondition wedge;
  bool criteria_agree = true;  // decisive pass/fail outcomes coincide
};

/// Fiber directions at x must be annihilated by the derivative of the
/// pushforward: residual = max over kernel basis vectors w of
/// ||pushforward_jacobian * w|| / (1 + ||pushforward_jacobian||_F).
KernelInclusion check_kernel_inclusion(const LumpingProblem& p,
                                       std::span<const double> x);

/// Stacking the pushforward derivative under Dpi must not raise the rank.
/// For constrained problems both matrices are restricted to the constraint
/// tangent space first.
RankCondition check_rank_condition(const LumpingProblem& p,
                                   std::span<const double> x);

/// Row-by-row version of the rank condition: appending each single row of
/// the pushforward derivative to Dpi must preserve rank. `combined` repeats
/// the all-rows test for cross-checking.
WedgeCondition check_wedge_condition(const LumpingProblem& p,
                                     std::span<const double> x);

/// All three pointwise criteria plus submersion and tangency diagnostics.
PointVerdict check_point(const LumpingProblem& p, std::span<const double> x);

/// Random walk along the fiber through x: step in a fiber-tangent direction,
/// then solve back onto {pi = pi(x), g = 0}. Returned points satisfy both
/// residuals below constraint_tol. Failures are counted, not returned.
std::vector<std::vector<double>> sample_fiber(const LumpingProblem& p,
                                              std::span<const double> x,
                                              int count, std::uint64_t seed,
                                              int* failures = nullptr);

struct FiberConstancy {
  int pairs = 0;
  int failures = 0;
  double worst_residual = 0.0;
  std::vector<double> witness;
  Grade grade = Grade::pass;
};

/// The pushforward must agree at fiber-mates: for pairs (x, x') with
/// pi(x) = pi(x'), residual = ||Dpi v(x) - Dpi v(x')|| / (1 + ||Dpi v(x)||).
FiberConstancy check_fiber_constancy(
    const LumpingProblem& p,
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>&
        pairs);

struct FirstIntegral {
  bool applicable = false;  // macro dimension is 1
  bool detected = false;
  double max_pushforward_norm = 0.0;
};

/// A scalar candidate whose pushforward vanishes at every probed point is a
/// first integral; the lumped dynamics are then identically zero.
FirstIntegral detect_first_integral(
    const LumpingProblem& p, const std::vector<std::vector<double>>& points);

/// Macro vector field y -> Dpi(x*) v(x*) with x* the fiber solve of
/// {pi = y, g = 0}. Solves warm-start from the nearest cached solution so
/// repeated evaluations stay on one continuous branch of the fiber bundle.
/// Cache access is mutex-guarded: concurrent evaluate() calls are safe.
class LumpedField {
 public:
  enum class Kind { zero, fiber_solve };

  static LumpedField zero(int macro_dim);
  static LumpedField fiber_solve(const LumpingProblem& p, std::uint64_t seed);

  int dim() const { return dim_; }
  Kind kind() const { return kind_; }

  /// Throws SolveError when no fiber point can be found for y.
  std::vector<double> evaluate(std::span<const double> y) const;

  /// The micro point backing the most recent evaluation (diagnostics).
  std::vector<double> last_solution() const;

 private:
  LumpedField() = default;
  struct State;
  Kind kind_ = Kind::zero;
  int dim_ = 0;
  std::shared_ptr<State> state_;
};

/// Builds the macro field for p. When the problem is a detected first
/// integral (macro dimension 1, vanishing pushforward at the given probe
/// points) the zero field is returned; otherwise a fiber-solving field.
LumpedField construct_lumped_field(const LumpingProblem& p, std::uint64_t seed,
                                   const FirstIntegral* probe = nullptr);

enum class Verdict { lumpable, not_lumpable, inconclusive };

std::string to_string(Verdict v);
std::string to_string(Grade g);

struct CriterionSummary {
  int checked = 0;
  int passed = 0;
  int borderline = 0;
  int failed = 0;
  double worst = 0.0;
  std::vector<double> witness;
};

struct FlowSummary {
  double max_error = 0.0;
  double micro_constraint_drift = 0.0;
  Grade grade = Grade::pass;
  std::vector<std::pair<double, double>> worst_curve;
  std::vector<std::vector<double>> starts;
};

struct CheckReport {
  Verdict verdict = Verdict::inconclusive;
  CriterionSummary kernel, rank, wedge, fiber;
  FirstIntegral first_integral;
  std::optional<FlowSummary> flow;
  double min_singular_dpi = 0.0;
  double max_tangency_residual = 0.0;
  SamplerStats sampler;
  std::vector<PointVerdict> points;
  std::vector<std::string> notes;
};

/// Folds pointwise verdicts, fiber constancy, first-integral detection and
/// the optional flow check into one verdict:
///   lumpable     - every graded check passed;
///   not_lumpable - some check failed decisively (10x beyond tolerance);
///   inconclusive - borderline results, criterion disagreement, or an
///                  unhealthy sampler, with notes explaining which.
CheckReport aggregate(const LumpingProblem& p,
                      std::vector<PointVerdict> verdicts,
                      const FiberConstancy& fiber, const FirstIntegral& fi,
                      const std::optional<FlowSummary>& flow,
                      const SamplerStats& sampler);

/// End-to-end check used by the CLI and tests: sample, run all criteria,
/// fiber pairs, first-integral probe, optional flow commutation, aggregate.
CheckReport run_check(const LumpingProblem& p, std::uint64_t seed);

}  // namespace lump
