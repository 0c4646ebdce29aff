#include "lump/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lump {

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rws) {
  rows = int(rws.size());
  cols = rows ? int(rws.begin()->size()) : 0;
  a.reserve(std::size_t(rows) * cols);
  for (const auto& r : rws) {
    if (int(r.size()) != cols)
      throw std::invalid_argument("Matrix: ragged initializer");
    a.insert(a.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols, m.rows);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) t.at(c, r) = m.at(r, c);
  return t;
}

Matrix matmul(const Matrix& x, const Matrix& y) {
  if (x.cols != y.rows) throw std::invalid_argument("matmul: shape mismatch");
  Matrix z(x.rows, y.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int k = 0; k < x.cols; ++k) {
      double xik = x.at(i, k);
      if (xik == 0.0) continue;
      for (int j = 0; j < y.cols; ++j) z.at(i, j) += xik * y.at(k, j);
    }
  return z;
}

std::vector<double> matvec(const Matrix& m, std::span<const double> x) {
  if (int(x.size()) != m.cols)
    throw std::invalid_argument("matvec: shape mismatch");
  std::vector<double> y(m.rows, 0.0);
  for (int i = 0; i < m.rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < m.cols; ++j) s += m.at(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

Matrix stack_rows(const Matrix& top, const Matrix& bottom) {
  if (top.cols != bottom.cols)
    throw std::invalid_argument("stack_rows: column mismatch");
  Matrix z(top.rows + bottom.rows, top.cols);
  std::copy(top.a.begin(), top.a.end(), z.a.begin());
  std::copy(bottom.a.begin(), bottom.a.end(),
            z.a.begin() + std::ptrdiff_t(top.a.size()));
  return z;
}

Matrix append_row(const Matrix& m, std::span<const double> row) {
  if (int(row.size()) != m.cols)
    throw std::invalid_argument("append_row: column mismatch");
  Matrix z(m.rows + 1, m.cols);
  std::copy(m.a.begin(), m.a.end(), z.a.begin());
  std::copy(row.begin(), row.end(), z.a.begin() + std::ptrdiff_t(m.a.size()));
  return z;
}

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double x : m.a) s += x * x;
  return std::sqrt(s);
}

double max_abs(const Matrix& m) {
  double s = 0.0;
  for (double x : m.a) s = std::max(s, std::abs(x));
  return s;
}

Svd svd(const Matrix& m) {
  // Work on a square-or-tall copy: padding zero rows changes nothing about
  // sigma or the right singular vectors and lets one column-oriented sweep
  // handle wide inputs too.
  const int n = m.cols;
  const int r = std::max(m.rows, n);
  Matrix w(r, n);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < n; ++j) w.at(i, j) = m.at(i, j);
  Matrix v = Matrix::identity(n);

  // One-sided Jacobi: orthogonalize column pairs in a fixed lexicographic
  // order until every pair is numerically orthogonal.
  const double eps = 1e-15;
  const int max_sweeps = 60;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (int i = 0; i < r; ++i) {
          double wp = w.at(i, p), wq = w.at(i, q);
          alpha += wp * wp;
          beta += wq * wq;
          gamma += wp * wq;
        }
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        double zeta = (beta - alpha) / (2.0 * gamma);
        double t = (zeta >= 0 ? 1.0 : -1.0) /
                   (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = c * t;
        for (int i = 0; i < r; ++i) {
          double wp = w.at(i, p), wq = w.at(i, q);
          w.at(i, p) = c * wp - s * wq;
          w.at(i, q) = s * wp + c * wq;
        }
        for (int i = 0; i < n; ++i) {
          double vp = v.at(i, p), vq = v.at(i, q);
          v.at(i, p) = c * vp - s * vq;
          v.at(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n, 0.0);
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < r; ++i) s += w.at(i, j) * w.at(i, j);
    sigma[j] = std::sqrt(s);
  }

  // Descending order, ties broken by original column index.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return sigma[x] > sigma[y]; });

  Svd out;
  out.sigma.resize(n);
  out.u = Matrix(m.rows, n);
  out.v = Matrix(n, n);
  for (int jj = 0; jj < n; ++jj) {
    int j = order[jj];
    out.sigma[jj] = sigma[j];
    // Fixed sign convention: the largest-magnitude entry of each right
    // singular vector is positive (first such entry on ties).
    int pivot = 0;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
      double av = std::abs(v.at(i, j));
      if (av > best) {
        best = av;
        pivot = i;
      }
    }
    double flip = v.at(pivot, j) < 0.0 ? -1.0 : 1.0;
    for (int i = 0; i < n; ++i) out.v.at(i, jj) = flip * v.at(i, j);
    if (sigma[j] > 0.0) {
      for (int i = 0; i < m.rows; ++i)
        out.u.at(i, jj) = flip * w.at(i, j) / sigma[j];
    }
  }
  return out;
}

std::vector<double> singular_values(const Matrix& m) {
  std::vector<double> s = svd(m).sigma;
  s.resize(std::min(m.rows, m.cols));
  return s;
}

namespace {
double rank_threshold(const std::vector<double>& sigma, double tol) {
  double s1 = sigma.empty() ? 0.0 : sigma.front();
  return s1 > 0.0 ? tol * s1 : tol;
}
}  // namespace

int rank(const Matrix& m, double tol) {
  auto s = singular_values(m);
  double thresh = rank_threshold(s, tol);
  int r = 0;
  for (double x : s)
    if (x > thresh) ++r;
  return r;
}

std::vector<std::vector<double>> nullspace(const Matrix& m, double tol) {
  Svd d = svd(m);
  double thresh = rank_threshold(d.sigma, tol);
  std::vector<std::vector<double>> basis;
  for (int j = 0; j < m.cols; ++j) {
    if (d.sigma[j] > thresh) continue;
    std::vector<double> col(m.cols);
    for (int i = 0; i < m.cols; ++i) col[i] = d.v.at(i, j);
    basis.push_back(std::move(col));
  }
  return basis;
}

Matrix pseudoinverse(const Matrix& m, double tol) {
  Svd d = svd(m);
  double thresh = rank_threshold(d.sigma, tol);
  Matrix p(m.cols, m.rows);
  for (int j = 0; j < m.cols; ++j) {
    if (d.sigma[j] <= thresh) continue;
    double inv = 1.0 / d.sigma[j];
    for (int i = 0; i < m.cols; ++i) {
      double vij = d.v.at(i, j);
      if (vij == 0.0) continue;
      for (int k = 0; k < m.rows; ++k)
        p.at(i, k) += vij * inv * d.u.at(k, j);
    }
  }
  return p;
}

bool augmented_rank_preserved(const Matrix& base, std::span<const double> row,
                              double tol) {
  int base_rank = rank(base, tol);
  if (base_rank < base.rows)
    throw std::invalid_argument(
        "augmented_rank_preserved: base matrix is row-rank-deficient");
  return rank(append_row(base, row), tol) == base_rank;
}

}  // namespace lump
