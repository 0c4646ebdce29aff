#pragma once

#include <array>
#include <string>
#include <vector>

#include "lump/lumpability.hpp"

namespace lump {

/// Quaternion (q0, q1, q2, q3) = q0 + q1 I + q2 J + q3 K with the Hamilton
/// product convention I*J = K (and cyclic). Components kept as a flat array
/// so points of R^4 pass through unchanged.
using Quaternion = std::array<double, 4>;

Quaternion quaternion_mul(const Quaternion& a, const Quaternion& b);
Quaternion quaternion_conj(const Quaternion& a);  // negates imaginary part
double quaternion_norm(const Quaternion& a);

inline constexpr Quaternion kQuatOne{1, 0, 0, 0};
inline constexpr Quaternion kQuatI{0, 1, 0, 0};
inline constexpr Quaternion kQuatJ{0, 0, 1, 0};
inline constexpr Quaternion kQuatK{0, 0, 0, 1};

/// Quadratic map R^4 -> R^3 whose restriction to the unit sphere is the
/// fibration over S^2: component i equals (x0^2 - xj xj) d_i3
/// + 2 x0 e_ij3 xj + 2 x3 xi; equivalently the imaginary part of x*K*conj(x).
std::array<double, 3> hopf_map(const Quaternion& x);

/// Circle action sweeping the fiber through x: x * exp(K t). Preserves
/// hopf_map exactly; its t-derivative at 0 is the fiber field
/// w(x) = (-x3, x2, -x1, x0).
Quaternion hopf_u1_action(double t, const Quaternion& x);

/// Left-multiplication field v(x) = c * x for an imaginary c, restricted to
/// the unit sphere; lumps through hopf_map onto y' = 2 c x y.
LumpingProblem hopf_problem(const std::array<double, 3>& c_imag);

/// Unit-speed-free geodesic flow on the sphere in ambient coordinates
/// (X, V) in R^6: X' = V, V' = -(V.V) X, constrained to X.X = 1, X.V = 0.
/// The candidate map is the kinetic first integral V.V; the sample domain
/// excludes the ||V|| < 0.1 tube where its differential drops rank.
LumpingProblem geodesic_problem();

/// Replicator-style system x_i' = x_i (1 - a.x) with candidate a.x; lumps
/// onto y' = y (1 - y) for every positive weight vector a.
LumpingProblem logistic_problem(const std::vector<double>& a);

/// Linear system x' = A x with candidate y = C x (C full row rank, fewer
/// rows than columns). Lumpable exactly when the row space of C is invariant
/// under multiplication by A.
LumpingProblem linear_problem(const Matrix& a, const Matrix& c);

/// Names accepted by make_builtin: logistic3, hopf, geodesic_sphere,
/// linear_shear, linear_identity.
std::vector<std::string> builtin_names();
LumpingProblem make_builtin(const std::string& name);

/// Stereographic chart for unit-tangent samples (X, V) on the sphere:
/// (x, y) is the projection of X from the south pole, alpha in [0, 2pi) the
/// direction angle of V pushed into the chart. Used for fiber plot data.
std::array<double, 3> utsphere_chart(std::span<const double> xv);

}  // namespace lump
