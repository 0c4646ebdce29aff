#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "lump/geometry.hpp"

namespace lump {

struct IntegrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StepStats {
  long accepted = 0;
  long rejected = 0;
  double min_step = 0.0;
  double max_step = 0.0;
};

/// Numerically integrated solution curve. States and right-hand-side values
/// are stored at every accepted node so sample() can interpolate with a cubic
/// Hermite segment (locally 3rd order, well below the integration error).
struct Trajectory {
  std::vector<double> times;
  std::vector<std::vector<double>> states;
  std::vector<std::vector<double>> derivs;
  StepStats stats;
  bool blew_up = false;                // ||x|| passed the blow-up bound
  double max_constraint_drift = 0.0;   // max ||g|| seen, when monitored

  std::vector<double> sample(double t) const;
  const std::vector<double>& final_state() const { return states.back(); }
  double final_time() const { return times.back(); }
};

enum class Method { rk4, rkf45 };

struct IntegrateOptions {
  Method method = Method::rkf45;
  double step = 1e-2;        // rk4 step size
  double abs_tol = 1e-9;     // rkf45 error control
  double rel_tol = 1e-9;
  long max_steps = 2000000;
  double blow_up_norm = 1e12;
  const SmoothMap* drift_monitor = nullptr;  // record ||g|| along the way
  bool project_constraints = false;          // pull each node back onto g = 0
  double project_tol = 1e-12;
};

using Rhs =
    std::function<std::vector<double>(double t, std::span<const double> x)>;

/// Integrates x' = f(t, x) from x0 over [0, t_end] (t_end may be negative).
/// Blow-up truncates the trajectory and sets the flag; step underflow and
/// exceeding max_steps raise IntegrationError.
Trajectory integrate(const Rhs& f, std::span<const double> x0, double t_end,
                     const IntegrateOptions& opts = {});

Trajectory integrate(const VectorField& v, std::span<const double> x0,
                     double t_end, const IntegrateOptions& opts = {});

struct FlowCommutationResult {
  double max_error = 0.0;
  std::vector<std::pair<double, double>> curve;  // (t, error)
  double micro_constraint_drift = 0.0;
};

/// Commutation defect between the micro flow pushed through pi and the macro
/// flow of `macro_rhs` started at pi(x0): error(t) = ||pi(Phi_t x0) -
/// Phi~_t(pi(x0))|| on the given time grid.
FlowCommutationResult flow_commutation_error(
    const SmoothMap& pi, const VectorField& v, const Rhs& macro_rhs,
    std::span<const double> x0, std::span<const double> t_grid,
    const IntegrateOptions& micro_opts = {},
    const IntegrateOptions& macro_opts = {});

/// Finite-flow estimate of pushforward_jacobian: integrates the variational
/// system W' = Dv(x(s)) W alongside x' = v(x) and returns
/// [Dpi(Phi_t x) W(t) - Dpi(x)] / t, which converges at rate O(t).
Matrix pushforward_jacobian_via_flow(const SmoothMap& pi, const VectorField& v,
                                     std::span<const double> x, double t);

}  // namespace lump
