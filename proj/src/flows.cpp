#include "lump/flows.hpp"

#include <algorithm>
#include <cmath>

namespace lump {
namespace {

double inf_norm(std::span<const double> x) {
  double m = 0.0;
  for (double t : x) m = std::max(m, std::abs(t));
  return m;
}

std::vector<double> axpy(std::span<const double> x, double h,
                         std::span<const double> d) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + h * d[i];
  return y;
}

void record_node(Trajectory& tr, const IntegrateOptions& opts, double t,
                 std::vector<double> x, std::vector<double> dx) {
  if (opts.drift_monitor) {
    auto g = opts.drift_monitor->evaluate(x);
    tr.max_constraint_drift = std::max(tr.max_constraint_drift, inf_norm(g));
  }
  tr.times.push_back(t);
  tr.states.push_back(std::move(x));
  tr.derivs.push_back(std::move(dx));
}

// Orthogonal pullback onto {g = 0}: Gauss-Newton with pseudoinverse steps.
std::vector<double> project_onto(const SmoothMap& g, std::vector<double> z,
                                 double tol) {
  for (int it = 0; it < 50; ++it) {
    auto r = g.evaluate(z);
    double n = inf_norm(r);
    if (n < tol) return z;
    Matrix p = pseudoinverse(jacobian(g, z), 1e-12);
    auto step = matvec(p, r);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] -= step[i];
  }
  throw IntegrationError("constraint projection did not converge");
}

Trajectory run_rk4(const Rhs& f, std::span<const double> x0, double t_end,
                   const IntegrateOptions& opts) {
  Trajectory tr;
  const double dir = t_end < 0 ? -1.0 : 1.0;
  const double span = std::abs(t_end);
  long nsteps = std::max(1L, long(std::ceil(span / opts.step)));
  if (nsteps > opts.max_steps)
    throw IntegrationError("rk4: step budget exceeded");
  double h = dir * span / double(nsteps);

  std::vector<double> x(x0.begin(), x0.end());
  double t = 0.0;
  record_node(tr, opts, t, x, f(t, x));
  for (long k = 0; k < nsteps; ++k) {
    auto k1 = f(t, x);
    auto k2 = f(t + h / 2, axpy(x, h / 2, k1));
    auto k3 = f(t + h / 2, axpy(x, h / 2, k2));
    auto k4 = f(t + h, axpy(x, h, k3));
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    t = (k + 1 == nsteps) ? t_end : t + h;
    if (opts.project_constraints && opts.drift_monitor)
      x = project_onto(*opts.drift_monitor, x, opts.project_tol);
    ++tr.stats.accepted;
    tr.stats.min_step = tr.stats.min_step == 0.0
                            ? std::abs(h)
                            : std::min(tr.stats.min_step, std::abs(h));
    tr.stats.max_step = std::max(tr.stats.max_step, std::abs(h));
    record_node(tr, opts, t, x, f(t, x));
    if (inf_norm(x) > opts.blow_up_norm) {
      tr.blew_up = true;
      return tr;
    }
  }
  return tr;
}

// Fehlberg 4(5) tableau.
constexpr double kA21 = 1.0 / 4;
constexpr double kA31 = 3.0 / 32, kA32 = 9.0 / 32;
constexpr double kA41 = 1932.0 / 2197, kA42 = -7200.0 / 2197,
                 kA43 = 7296.0 / 2197;
constexpr double kA51 = 439.0 / 216, kA52 = -8.0, kA53 = 3680.0 / 513,
                 kA54 = -845.0 / 4104;
constexpr double kA61 = -8.0 / 27, kA62 = 2.0, kA63 = -3544.0 / 2565,
                 kA64 = 1859.0 / 4104, kA65 = -11.0 / 40;
constexpr double kB1 = 16.0 / 135, kB3 = 6656.0 / 12825, kB4 = 28561.0 / 56430,
                 kB5 = -9.0 / 50, kB6 = 2.0 / 55;
constexpr double kE1 = 16.0 / 135 - 25.0 / 216, kE3 = 6656.0 / 12825 - 1408.0 / 2565,
                 kE4 = 28561.0 / 56430 - 2197.0 / 4104, kE5 = -9.0 / 50 + 1.0 / 5,
                 kE6 = 2.0 / 55;

Trajectory run_rkf45(const Rhs& f, std::span<const double> x0, double t_end,
                     const IntegrateOptions& opts) {
  Trajectory tr;
  const double dir = t_end < 0 ? -1.0 : 1.0;
  const double span = std::abs(t_end);
  const std::size_t n = x0.size();

  std::vector<double> x(x0.begin(), x0.end());
  double t = 0.0;
  double h = dir * std::min(span, 1e-2);
  record_node(tr, opts, t, x, f(t, x));

  long steps = 0;
  while (dir * (t_end - t) > 0.0) {
    if (++steps > opts.max_steps)
      throw IntegrationError("rkf45: step budget exceeded");
    if (std::abs(h) < 1e-14 * std::max(1.0, std::abs(t)))
      throw IntegrationError("rkf45: step size underflow");
    if (dir * (t + h) > dir * t_end) h = t_end - t;

    auto k1 = f(t, x);
    auto k2 = f(t + h * 0.25, axpy(x, h * kA21, k1));
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i)
      y[i] = x[i] + h * (kA31 * k1[i] + kA32 * k2[i]);
    auto k3 = f(t + h * 3.0 / 8, y);
    for (std::size_t i = 0; i < n; ++i)
      y[i] = x[i] + h * (kA41 * k1[i] + kA42 * k2[i] + kA43 * k3[i]);
    auto k4 = f(t + h * 12.0 / 13, y);
    for (std::size_t i = 0; i < n; ++i)
      y[i] = x[i] + h * (kA51 * k1[i] + kA52 * k2[i] + kA53 * k3[i] +
                         kA54 * k4[i]);
    auto k5 = f(t + h, y);
    for (std::size_t i = 0; i < n; ++i)
      y[i] = x[i] + h * (kA61 * k1[i] + kA62 * k2[i] + kA63 * k3[i] +
                         kA64 * k4[i] + kA65 * k5[i]);
    auto k6 = f(t + h * 0.5, y);

    // 5th-order solution and embedded 4th-order error estimate.
    std::vector<double> x5(n);
    double err_ratio = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      x5[i] = x[i] + h * (kB1 * k1[i] + kB3 * k3[i] + kB4 * k4[i] +
                          kB5 * k5[i] + kB6 * k6[i]);
      double err = std::abs(h) * std::abs(kE1 * k1[i] + kE3 * k3[i] +
                                          kE4 * k4[i] + kE5 * k5[i] +
                                          kE6 * k6[i]);
      double scale =
          opts.abs_tol + opts.rel_tol * std::max(std::abs(x[i]), std::abs(x5[i]));
      err_ratio = std::max(err_ratio, err / scale);
    }

    if (err_ratio <= 1.0) {
      t += h;
      x = std::move(x5);
      if (opts.project_constraints && opts.drift_monitor)
        x = project_onto(*opts.drift_monitor, x, opts.project_tol);
      ++tr.stats.accepted;
      tr.stats.min_step = tr.stats.min_step == 0.0
                              ? std::abs(h)
                              : std::min(tr.stats.min_step, std::abs(h));
      tr.stats.max_step = std::max(tr.stats.max_step, std::abs(h));
      record_node(tr, opts, t, x, f(t, x));
      if (inf_norm(x) > opts.blow_up_norm) {
        tr.blew_up = true;
        return tr;
      }
    } else {
      ++tr.stats.rejected;
    }

    double factor = err_ratio > 0.0 ? 0.9 * std::pow(err_ratio, -0.2) : 5.0;
    factor = std::clamp(factor, 0.2, 5.0);
    h *= factor;
  }
  return tr;
}

}  // namespace

std::vector<double> Trajectory::sample(double t) const {
  if (times.empty()) throw IntegrationError("sample: empty trajectory");
  const double dir = times.back() >= times.front() ? 1.0 : -1.0;
  if (dir * t <= dir * times.front()) return states.front();
  if (dir * t >= dir * times.back()) return states.back();
  std::size_t hi = 1;
  while (dir * times[hi] < dir * t) ++hi;
  std::size_t lo = hi - 1;
  double h = times[hi] - times[lo];
  double s = (t - times[lo]) / h;
  // Cubic Hermite in normalized coordinates.
  double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
  double h10 = s * (1 - s) * (1 - s);
  double h01 = s * s * (3 - 2 * s);
  double h11 = s * s * (s - 1);
  std::vector<double> y(states[lo].size());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = h00 * states[lo][i] + h10 * h * derivs[lo][i] +
           h01 * states[hi][i] + h11 * h * derivs[hi][i];
  return y;
}

Trajectory integrate(const Rhs& f, std::span<const double> x0, double t_end,
                     const IntegrateOptions& opts) {
  for (double v : x0)
    if (!std::isfinite(v))
      throw std::invalid_argument("integrate: non-finite initial state");
  if (t_end == 0.0) {
    Trajectory tr;
    std::vector<double> x(x0.begin(), x0.end());
    record_node(tr, opts, 0.0, x, f(0.0, x));
    return tr;
  }
  return opts.method == Method::rk4 ? run_rk4(f, x0, t_end, opts)
                                    : run_rkf45(f, x0, t_end, opts);
}

Trajectory integrate(const VectorField& v, std::span<const double> x0,
                     double t_end, const IntegrateOptions& opts) {
  if (int(x0.size()) != v.dim())
    throw std::invalid_argument("integrate: dimension mismatch");
  Rhs f = [&v](double, std::span<const double> x) { return v.evaluate(x); };
  return integrate(f, x0, t_end, opts);
}

FlowCommutationResult flow_commutation_error(
    const SmoothMap& pi, const VectorField& v, const Rhs& macro_rhs,
    std::span<const double> x0, std::span<const double> t_grid,
    const IntegrateOptions& micro_opts, const IntegrateOptions& macro_opts) {
  if (t_grid.empty())
    throw std::invalid_argument("flow_commutation_error: empty time grid");
  double t_end = t_grid.back();
  Trajectory micro = integrate(v, x0, t_end, micro_opts);
  if (micro.blew_up)
    throw IntegrationError("flow_commutation_error: micro flow blew up");
  auto y0 = pi.evaluate(x0);
  Trajectory macro = integrate(macro_rhs, y0, t_end, macro_opts);
  if (macro.blew_up)
    throw IntegrationError("flow_commutation_error: macro flow blew up");

  FlowCommutationResult out;
  out.micro_constraint_drift = micro.max_constraint_drift;
  for (double t : t_grid) {
    auto xt = micro.sample(t);
    auto yt = macro.sample(t);
    auto pix = pi.evaluate(xt);
    double err = 0.0;
    for (std::size_t i = 0; i < pix.size(); ++i)
      err = std::max(err, std::abs(pix[i] - yt[i]));
    out.curve.emplace_back(t, err);
    out.max_error = std::max(out.max_error, err);
  }
  return out;
}

Matrix pushforward_jacobian_via_flow(const SmoothMap& pi, const VectorField& v,
                                     std::span<const double> x, double t) {
  if (t == 0.0)
    throw std::invalid_argument("pushforward_jacobian_via_flow: t must be nonzero");
  const int n = v.dim();
  // Extended state [x; columns of W], W' = Dv(x) W, W(0) = I.
  std::vector<double> z(std::size_t(n) + std::size_t(n) * n, 0.0);
  std::copy(x.begin(), x.end(), z.begin());
  for (int i = 0; i < n; ++i) z[std::size_t(n) + std::size_t(i) * n + i] = 1.0;

  Rhs f = [&](double, std::span<const double> s) {
    std::span<const double> xs = s.subspan(0, n);
    auto dz = std::vector<double>(s.size());
    auto vx = v.evaluate(xs);
    std::copy(vx.begin(), vx.end(), dz.begin());
    Matrix dv = jacobian(v.map(), xs);
    for (int col = 0; col < n; ++col) {
      std::span<const double> wcol = s.subspan(std::size_t(n) + std::size_t(col) * n, n);
      for (int r = 0; r < n; ++r) {
        double acc = 0.0;
        for (int c = 0; c < n; ++c) acc += dv.at(r, c) * wcol[c];
        dz[std::size_t(n) + std::size_t(col) * n + r] = acc;
      }
    }
    return dz;
  };

  IntegrateOptions opts;
  opts.abs_tol = 1e-11;
  opts.rel_tol = 1e-11;
  Trajectory tr = integrate(f, z, t, opts);
  const auto& zf = tr.final_state();
  std::span<const double> xt(zf.data(), std::size_t(n));
  Matrix w(n, n);
  for (int col = 0; col < n; ++col)
    for (int r = 0; r < n; ++r)
      w.at(r, col) = zf[std::size_t(n) + std::size_t(col) * n + r];

  Matrix flowed = matmul(jacobian(pi, xt), w);
  Matrix base = jacobian(pi, x);
  Matrix out(flowed.rows, flowed.cols);
  for (std::size_t i = 0; i < out.a.size(); ++i)
    out.a[i] = (flowed.a[i] - base.a[i]) / t;
  return out;
}

}  // namespace lump
