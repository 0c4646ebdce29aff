#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lump/expr.hpp"
#include "lump/linalg.hpp"

namespace lump {

/// Dpi lost full row rank at a probed point: the candidate map stops being a
/// submersion there and rank-based verdicts are meaningless.
struct SubmersionError : std::runtime_error {
  SubmersionError(const std::string& what, double min_singular)
      : std::runtime_error(what), min_singular(min_singular) {}
  double min_singular;
};

/// A map R^n -> R^m given componentwise by expressions over one shared
/// variable list. Immutable; evaluation is pure.
class SmoothMap {
 public:
  /// All components must have the same arity. Throws std::invalid_argument
  /// on an arity mismatch or an empty component list.
  explicit SmoothMap(std::vector<Expression> components);

  /// Convenience: parse each source string against `variables`.
  static SmoothMap parse(const std::vector<std::string>& sources,
                         const std::vector<std::string>& variables);

  int domain_dim() const { return components_[0].arity(); }
  int range_dim() const { return int(components_.size()); }
  const Expression& component(int a) const { return components_.at(a); }
  const std::vector<std::string>& variables() const {
    return components_[0].variables();
  }

  std::vector<double> evaluate(std::span<const double> x) const;

 private:
  std::vector<Expression> components_;
};

/// A vector field on R^n: a SmoothMap whose range dimension equals its
/// domain dimension.
class VectorField {
 public:
  explicit VectorField(SmoothMap map);
  int dim() const { return map_.domain_dim(); }
  const SmoothMap& map() const { return map_; }
  std::vector<double> evaluate(std::span<const double> x) const {
    return map_.evaluate(x);
  }

 private:
  SmoothMap map_;
};

/// Jacobian matrix of f at x (range_dim x domain_dim), exact via forward-mode
/// differentiation.
Matrix jacobian(const SmoothMap& f, std::span<const double> x);

/// Dpi(x) * v(x): the candidate macro velocity seen through pi.
std::vector<double> pushforward(const SmoothMap& pi, const VectorField& v,
                                std::span<const double> x);

/// Lie bracket [[v, w]](x) = Dw(x) v(x) - Dv(x) w(x).
std::vector<double> lie_bracket(const VectorField& v, const VectorField& w,
                                std::span<const double> x);

/// Jacobian of the pushforward map x -> Dpi(x) v(x). Entry (a, i) equals
/// sum_j (d_i d_j pi^a) v^j + (d_j pi^a)(d_i v^j). This is the derivative
/// that the lumpability criteria compare against the span of Dpi's rows.
Matrix pushforward_jacobian(const SmoothMap& pi, const VectorField& v,
                            std::span<const double> x);

/// Columns form an orthonormal basis of ker Dg(x), the tangent space of the
/// constraint set {g = 0} at x. Shape n x (n - rank Dg).
Matrix tangent_basis(const SmoothMap& constraints, std::span<const double> x,
                     double tol);

/// Orthonormal basis of the fiber-tangent directions at x: the null space of
/// Dpi stacked over Dg when constraints are present. Throws SubmersionError
/// when the ambient Dpi has rank below the range dimension of pi. The
/// tangent-restricted rank is allowed to be smaller: a constrained image can
/// be a lower-dimensional submanifold.
std::vector<std::vector<double>> vertical_kernel(
    const SmoothMap& pi, const SmoothMap* constraints,
    std::span<const double> x, double tol);

/// ||Dg(x) v(x)|| / (1 + ||v(x)||): how far v is from being tangent to the
/// constraint set at x. Zero (to rounding) is required of every constrained
/// problem before any verdict is meaningful.
double tangency_residual(const SmoothMap& constraints, const VectorField& v,
                         std::span<const double> x);

}  // namespace lump
