#include "lump/systems.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace lump {
namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// c1*x1 + c2*x2 + ... with zero terms dropped; "0" when everything drops.
std::string linear_combination(std::span<const double> coeffs,
                               const std::vector<std::string>& vars) {
  std::string out;
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    if (coeffs[i] == 0.0) continue;
    if (!out.empty()) out += " + ";
    if (coeffs[i] == 1.0) out += vars[i];
    else out += num(coeffs[i]) + "*" + vars[i];
  }
  return out.empty() ? "0" : out;
}

}  // namespace

Quaternion quaternion_mul(const Quaternion& a, const Quaternion& b) {
  return {
      a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
      a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
      a[0] * b[2] + a[2] * b[0] + a[3] * b[1] - a[1] * b[3],
      a[0] * b[3] + a[3] * b[0] + a[1] * b[2] - a[2] * b[1],
  };
}

Quaternion quaternion_conj(const Quaternion& a) {
  return {a[0], -a[1], -a[2], -a[3]};
}

double quaternion_norm(const Quaternion& a) {
  return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2] + a[3] * a[3]);
}

std::array<double, 3> hopf_map(const Quaternion& x) {
  return {
      2.0 * x[0] * x[2] + 2.0 * x[3] * x[1],
      2.0 * x[3] * x[2] - 2.0 * x[0] * x[1],
      x[0] * x[0] - x[1] * x[1] - x[2] * x[2] + x[3] * x[3],
  };
}

Quaternion hopf_u1_action(double t, const Quaternion& x) {
  return quaternion_mul(x, Quaternion{std::cos(t), 0.0, 0.0, std::sin(t)});
}

LumpingProblem hopf_problem(const std::array<double, 3>& c) {
  std::vector<std::string> vars{"x0", "x1", "x2", "x3"};
  // v(x) = c * x componentwise for imaginary c.
  std::vector<std::string> v{
      linear_combination(std::array{0.0, -c[0], -c[1], -c[2]}, vars),
      linear_combination(std::array{c[0], 0.0, -c[2], c[1]}, vars),
      linear_combination(std::array{c[1], c[2], 0.0, -c[0]}, vars),
      linear_combination(std::array{c[2], -c[1], c[0], 0.0}, vars),
  };
  std::vector<std::string> pi{
      "2*x0*x2 + 2*x3*x1",
      "2*x3*x2 - 2*x0*x1",
      "x0^2 - x1^2 - x2^2 + x3^2",
  };
  LumpingProblem p{
      .name = "hopf",
      .variables = vars,
      .v = VectorField(SmoothMap::parse(v, vars)),
      .pi = SmoothMap::parse(pi, vars),
      .constraints = SmoothMap::parse({"x0^2 + x1^2 + x2^2 + x3^2 - 1"}, vars),
      .samples = {.lower = {-1.2, -1.2, -1.2, -1.2},
                  .upper = {1.2, 1.2, 1.2, 1.2},
                  .keep = {},
                  .count = 200},
      .fiber_seed = std::vector<double>{1.0, 0.0, 0.0, 0.0},
      .tol = {},
      .flow = {.enabled = true, .t_end = 1.0, .grid_points = 50,
               .trajectories = 3},
      .fiber_pairs = 20,
  };
  return p;
}

LumpingProblem geodesic_problem() {
  std::vector<std::string> vars{"X1", "X2", "X3", "V1", "V2", "V3"};
  std::string vv = "V1^2 + V2^2 + V3^2";
  std::vector<std::string> v{
      "V1", "V2", "V3",
      "-(" + vv + ")*X1", "-(" + vv + ")*X2", "-(" + vv + ")*X3"};
  LumpingProblem p{
      .name = "geodesic_sphere",
      .variables = vars,
      .v = VectorField(SmoothMap::parse(v, vars)),
      .pi = SmoothMap::parse({vv}, vars),
      .constraints = SmoothMap::parse(
          {"X1^2 + X2^2 + X3^2 - 1", "X1*V1 + X2*V2 + X3*V3"}, vars),
      .samples = {.lower = {-1.5, -1.5, -1.5, -1.5, -1.5, -1.5},
                  .upper = {1.5, 1.5, 1.5, 1.5, 1.5, 1.5},
                  .keep = {Expression::parse(vv + " - 0.01", vars)},
                  .count = 200},
      .fiber_seed = std::vector<double>{1.0, 0.0, 0.0, 0.0, 1.0, 0.0},
      .tol = {},
      .flow = {.enabled = true, .t_end = 10.0, .grid_points = 50,
               .trajectories = 3},
      .fiber_pairs = 20,
  };
  return p;
}

LumpingProblem logistic_problem(const std::vector<double>& a) {
  const int n = int(a.size());
  if (n < 2) throw std::invalid_argument("logistic_problem: need n >= 2");
  std::vector<std::string> vars(n);
  for (int i = 0; i < n; ++i) vars[i] = "x" + std::to_string(i + 1);
  std::string ax = linear_combination(a, vars);
  std::vector<std::string> v(n);
  for (int i = 0; i < n; ++i) v[i] = vars[i] + "*(1 - (" + ax + "))";
  LumpingProblem p{
      .name = "logistic" + std::to_string(n),
      .variables = vars,
      .v = VectorField(SmoothMap::parse(v, vars)),
      .pi = SmoothMap::parse({ax}, vars),
      .constraints = std::nullopt,
      .samples = {.lower = std::vector<double>(n, 0.0),
                  .upper = std::vector<double>(n, 1.0),
                  .keep = {},
                  .count = 200},
      .fiber_seed = std::vector<double>(n, 1.0 / n),
      .tol = {},
      .flow = {.enabled = true, .t_end = 1.0, .grid_points = 50,
               .trajectories = 3},
      .fiber_pairs = 20,
  };
  return p;
}

LumpingProblem linear_problem(const Matrix& a, const Matrix& c) {
  const int n = a.rows;
  if (a.cols != n) throw std::invalid_argument("linear_problem: A must be square");
  if (c.cols != n) throw std::invalid_argument("linear_problem: C column mismatch");
  if (c.rows >= n)
    throw std::invalid_argument("linear_problem: C must have fewer rows than n");
  if (rank(c, 1e-10) < c.rows)
    throw std::invalid_argument("linear_problem: C must have full row rank");
  std::vector<std::string> vars(n);
  for (int i = 0; i < n; ++i) vars[i] = "x" + std::to_string(i + 1);
  std::vector<std::string> v(n), pi(c.rows);
  for (int i = 0; i < n; ++i) {
    std::vector<double> row(n);
    for (int j = 0; j < n; ++j) row[j] = a.at(i, j);
    v[i] = linear_combination(row, vars);
  }
  for (int i = 0; i < c.rows; ++i) {
    std::vector<double> row(n);
    for (int j = 0; j < n; ++j) row[j] = c.at(i, j);
    pi[i] = linear_combination(row, vars);
  }
  LumpingProblem p{
      .name = "linear",
      .variables = vars,
      .v = VectorField(SmoothMap::parse(v, vars)),
      .pi = SmoothMap::parse(pi, vars),
      .constraints = std::nullopt,
      .samples = {.lower = std::vector<double>(n, -2.0),
                  .upper = std::vector<double>(n, 2.0),
                  .keep = {},
                  .count = 200},
      .fiber_seed = std::vector<double>(n, 0.0),
      .tol = {},
      .flow = {.enabled = true, .t_end = 1.0, .grid_points = 50,
               .trajectories = 3},
      .fiber_pairs = 20,
  };
  return p;
}

std::vector<std::string> builtin_names() {
  return {"logistic3", "hopf", "geodesic_sphere", "linear_shear",
          "linear_identity"};
}

LumpingProblem make_builtin(const std::string& name) {
  if (name == "logistic3") return logistic_problem({1.0, 1.0, 1.0});
  if (name == "hopf") return hopf_problem({1.0, 0.0, 0.0});
  if (name == "geodesic_sphere") return geodesic_problem();
  if (name == "linear_shear") {
    LumpingProblem p =
        linear_problem(Matrix{{0, 1}, {0, 0}}, Matrix{{1, 0}});
    p.name = "linear_shear";
    p.flow.t_end = 0.5;
    return p;
  }
  if (name == "linear_identity") {
    LumpingProblem p =
        linear_problem(Matrix{{1, 0}, {0, 1}}, Matrix{{1, 0}});
    p.name = "linear_identity";
    return p;
  }
  throw std::invalid_argument("unknown built-in problem '" + name + "'");
}

std::array<double, 3> utsphere_chart(std::span<const double> xv) {
  if (xv.size() != 6)
    throw std::invalid_argument("utsphere_chart: expected (X, V) in R^6");
  double x1 = xv[0], x2 = xv[1], x3 = xv[2];
  double v1 = xv[3], v2 = xv[4], v3 = xv[5];
  double den = 1.0 + x3;
  if (std::abs(den) < 1e-12)
    throw std::invalid_argument("utsphere_chart: point at the south pole");
  // Stereographic projection from the south pole and its differential.
  double px = x1 / den, py = x2 / den;
  double dvx = v1 / den - x1 * v3 / (den * den);
  double dvy = v2 / den - x2 * v3 / (den * den);
  double alpha = std::atan2(dvy, dvx);
  if (alpha < 0) alpha += 2.0 * 3.14159265358979323846;
  return {px, py, alpha};
}

}  // namespace lump
