#include "lump/geometry.hpp"

#include <cmath>

namespace lump {

SmoothMap::SmoothMap(std::vector<Expression> components)
    : components_(std::move(components)) {
  if (components_.empty())
    throw std::invalid_argument("SmoothMap: no components");
  for (const auto& c : components_) {
    if (c.arity() != components_[0].arity())
      throw std::invalid_argument("SmoothMap: component arity mismatch");
  }
}

SmoothMap SmoothMap::parse(const std::vector<std::string>& sources,
                           const std::vector<std::string>& variables) {
  std::vector<Expression> comps;
  comps.reserve(sources.size());
  for (const auto& s : sources) comps.push_back(Expression::parse(s, variables));
  return SmoothMap(std::move(comps));
}

std::vector<double> SmoothMap::evaluate(std::span<const double> x) const {
  std::vector<double> y(components_.size());
  for (std::size_t a = 0; a < components_.size(); ++a)
    y[a] = components_[a].evaluate(x);
  return y;
}

VectorField::VectorField(SmoothMap map) : map_(std::move(map)) {
  if (map_.domain_dim() != map_.range_dim())
    throw std::invalid_argument(
        "VectorField: component count must equal the variable count");
}

Matrix jacobian(const SmoothMap& f, std::span<const double> x) {
  const int m = f.range_dim(), n = f.domain_dim();
  Matrix j(m, n);
  for (int a = 0; a < m; ++a)
    for (int i = 0; i < n; ++i) j.at(a, i) = f.component(a).derivative(x, i);
  return j;
}

std::vector<double> pushforward(const SmoothMap& pi, const VectorField& v,
                                std::span<const double> x) {
  if (pi.domain_dim() != v.dim())
    throw std::invalid_argument("pushforward: dimension mismatch");
  return matvec(jacobian(pi, x), v.evaluate(x));
}

std::vector<double> lie_bracket(const VectorField& v, const VectorField& w,
                                std::span<const double> x) {
  if (v.dim() != w.dim())
    throw std::invalid_argument("lie_bracket: dimension mismatch");
  auto vx = v.evaluate(x);
  auto wx = w.evaluate(x);
  auto dwv = matvec(jacobian(w.map(), x), vx);
  auto dvw = matvec(jacobian(v.map(), x), wx);
  for (std::size_t i = 0; i < dwv.size(); ++i) dwv[i] -= dvw[i];
  return dwv;
}

Matrix pushforward_jacobian(const SmoothMap& pi, const VectorField& v,
                            std::span<const double> x) {
  const int m = pi.range_dim(), n = pi.domain_dim();
  if (n != v.dim())
    throw std::invalid_argument("pushforward_jacobian: dimension mismatch");
  auto vx = v.evaluate(x);
  Matrix dv = jacobian(v.map(), x);
  Matrix out(m, n);
  for (int a = 0; a < m; ++a) {
    const Expression& pa = pi.component(a);
    // First-derivative part: (d_j pi^a)(d_i v^j).
    std::vector<double> grad(n);
    for (int j = 0; j < n; ++j) grad[j] = pa.derivative(x, j);
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += grad[j] * dv.at(j, i);
      // Second-derivative part: (d_i d_j pi^a) v^j.
      for (int j = 0; j < n; ++j)
        s += pa.second_derivative(x, i, j) * vx[j];
      out.at(a, i) = s;
    }
  }
  return out;
}

Matrix tangent_basis(const SmoothMap& constraints, std::span<const double> x,
                     double tol) {
  auto basis = nullspace(jacobian(constraints, x), tol);
  Matrix t(constraints.domain_dim(), int(basis.size()));
  for (int j = 0; j < t.cols; ++j)
    for (int i = 0; i < t.rows; ++i) t.at(i, j) = basis[j][i];
  return t;
}

std::vector<std::vector<double>> vertical_kernel(
    const SmoothMap& pi, const SmoothMap* constraints,
    std::span<const double> x, double tol) {
  Matrix dpi = jacobian(pi, x);
  // Submersivity is an ambient condition on the m x n Jacobian; the rank of
  // the tangent-restricted map may legitimately be smaller (the image can be
  // a lower-dimensional submanifold of R^m).
  auto s = singular_values(dpi);
  if (rank(dpi, tol) < pi.range_dim())
    throw SubmersionError("vertical_kernel: candidate map is not a submersion",
                          s.empty() ? 0.0 : s.back());
  Matrix stacked = dpi;
  if (constraints) {
    if (constraints->domain_dim() != pi.domain_dim())
      throw std::invalid_argument("vertical_kernel: dimension mismatch");
    stacked = stack_rows(dpi, jacobian(*constraints, x));
  }
  return nullspace(stacked, tol);
}

double tangency_residual(const SmoothMap& constraints, const VectorField& v,
                         std::span<const double> x) {
  auto vx = v.evaluate(x);
  auto gv = matvec(jacobian(constraints, x), vx);
  double num = 0.0, den = 0.0;
  for (double t : gv) num += t * t;
  for (double t : vx) den += t * t;
  return std::sqrt(num) / (1.0 + std::sqrt(den));
}

}  // namespace lump
