#pragma once

#include <initializer_list>
#include <span>
#include <vector>

namespace lump {

/// Dense row-major matrix of doubles. Sized for the small Jacobians this
/// project works with (a few rows and columns), not for large problems.
struct Matrix {
  int rows = 0, cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(std::size_t(r) * c, 0.0) {}
  Matrix(std::initializer_list<std::initializer_list<double>> rws);

  double& at(int r, int c) { return a[std::size_t(r) * cols + c]; }
  double at(int r, int c) const { return a[std::size_t(r) * cols + c]; }

  static Matrix identity(int n);
};

Matrix transpose(const Matrix& m);
Matrix matmul(const Matrix& x, const Matrix& y);
std::vector<double> matvec(const Matrix& m, std::span<const double> x);
Matrix stack_rows(const Matrix& top, const Matrix& bottom);
Matrix append_row(const Matrix& m, std::span<const double> row);
double frobenius_norm(const Matrix& m);
double max_abs(const Matrix& m);

/// Thin singular value decomposition, m = u * diag(sigma) * transpose(v).
///
/// sigma has length cols and is sorted descending (entries beyond
/// min(rows, cols) are structurally zero). v is cols x cols orthogonal; u is
/// rows x cols with orthonormal columns wherever sigma > 0 (zero columns
/// elsewhere). Computed by one-sided Jacobi rotations with a fixed
/// lexicographic sweep order and a fixed sign convention, so results are
/// reproducible bit for bit across runs.
struct Svd {
  std::vector<double> sigma;
  Matrix u, v;
};

Svd svd(const Matrix& m);

/// Singular values, descending, length min(rows, cols).
std::vector<double> singular_values(const Matrix& m);

/// Number of singular values above tol * sigma_max (above tol absolute when
/// sigma_max is zero).
int rank(const Matrix& m, double tol);

/// Orthonormal basis of the right null space: the right singular vectors
/// whose singular values fall at or below the rank threshold.
std::vector<std::vector<double>> nullspace(const Matrix& m, double tol);

/// Moore-Penrose pseudoinverse via the SVD, inverting singular values above
/// the rank threshold.
Matrix pseudoinverse(const Matrix& m, double tol);

/// True when appending `row` to `base` leaves the rank unchanged, i.e. the
/// row already lies in the span of the base rows. Throws std::invalid_argument
/// if base itself is row-rank-deficient (the caller is expected to have a
/// full-row-rank base).
bool augmented_rank_preserved(const Matrix& base, std::span<const double> row,
                              double tol);

}  // namespace lump
