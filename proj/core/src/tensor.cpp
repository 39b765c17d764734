#include "spam/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Core>

#include "spam/error.hpp"

namespace spam {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) { return ConstMap(m.data(), m.rows(), m.cols()); }
MutMap view(Matrix& m) { return MutMap(m.data(), m.rows(), m.cols()); }

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw StructuralError(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw StructuralError("Matrix: data length " + std::to_string(data_.size()) + " != " +
                          std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> d) {
  Matrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

std::vector<double> Matrix::diag() const {
  std::vector<double> d(std::min(rows_, cols_));
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = (*this)(i, i);
  return d;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw StructuralError("matmul: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  if (c.empty() || a.cols() == 0) return c;
  view(c).noalias() = view(a) * view(b);
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw StructuralError("matmul_tn: row counts differ");
  Matrix c(a.cols(), b.cols());
  if (c.empty() || a.rows() == 0) return c;
  view(c).noalias() = view(a).transpose() * view(b);
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw StructuralError("matmul_nt: column counts differ");
  Matrix c(a.rows(), b.rows());
  if (c.empty() || a.cols() == 0) return c;
  view(c).noalias() = view(a) * view(b).transpose();
  return c;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> v) {
  if (a.cols() != v.size()) throw StructuralError("matvec: length mismatch");
  std::vector<double> out(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto r = a.row(i);
    out[i] = std::inner_product(r.begin(), r.end(), v.begin(), 0.0);
  }
  return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "operator+");
  Matrix c = a;
  for (std::size_t k = 0; k < c.size(); ++k) c.data()[k] += b.data()[k];
  return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "operator-");
  Matrix c = a;
  for (std::size_t k = 0; k < c.size(); ++k) c.data()[k] -= b.data()[k];
  return c;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix c = a;
  for (auto& x : c.values()) x *= s;
  return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix c = a;
  for (std::size_t k = 0; k < c.size(); ++k) c.data()[k] *= b.data()[k];
  return c;
}

Matrix squared(const Matrix& a) { return hadamard(a, a); }

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double x : a.values()) m = std::max(m, std::abs(x));
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
  return m;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double x : a.values()) s += x * x;
  return std::sqrt(s);
}

bool is_symmetric(const Matrix& a, double tol) {
  if (a.rows() != a.cols()) return false;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j)
      if (std::abs(a(i, j) - a(j, i)) > tol) return false;
  return true;
}

Matrix symmetrized(const Matrix& a) {
  if (a.rows() != a.cols()) throw StructuralError("symmetrized: matrix is not square");
  Matrix s = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j) {
      const double v = 0.5 * (a(i, j) + a(j, i));
      s(i, j) = v;
      s(j, i) = v;
    }
  return s;
}

Matrix SymEig::reconstruct() const {
  Matrix scaled = eigenvectors;
  for (std::size_t i = 0; i < scaled.rows(); ++i)
    for (std::size_t j = 0; j < scaled.cols(); ++j) scaled(i, j) *= eigenvalues[j];
  return matmul_nt(scaled, eigenvectors);
}

SymEig sym_eig(const Matrix& m) {
  const std::size_t n = m.rows();
  if (m.cols() != n) throw StructuralError("sym_eig: matrix is not square");
  if (!is_symmetric(m, 1e-10)) throw StructuralError("sym_eig: matrix is not symmetric");

  // Only the strict upper triangle of `a` is read or updated below.
  Matrix a = m;
  Matrix v = Matrix::identity(n);
  std::vector<double> d = a.diag();
  std::vector<double> b = d;
  std::vector<double> z(n, 0.0);

  constexpr int kMaxSweeps = 60;
  bool converged = n <= 1;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += std::abs(a(p, q));
    if (off == 0.0) {
      converged = true;
      break;
    }
    // Early sweeps only rotate sizeable elements.
    const double thresh = sweep < 3 ? 0.2 * off / static_cast<double>(n * n) : 0.0;

    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        const double g = 100.0 * std::abs(apq);
        if (sweep > 3 && std::abs(d[p]) + g == std::abs(d[p]) && std::abs(d[q]) + g == std::abs(d[q])) {
          a(p, q) = 0.0;
          a(q, p) = 0.0;
          continue;
        }
        if (std::abs(apq) <= thresh || apq == 0.0) continue;

        double h = d[q] - d[p];
        double t;
        if (std::abs(h) + g == std::abs(h)) {
          t = apq / h;
        } else {
          const double theta = 0.5 * h / apq;
          t = 1.0 / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
          if (theta < 0.0) t = -t;
        }
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        const double tau = s / (1.0 + c);
        h = t * apq;
        z[p] -= h;
        z[q] += h;
        d[p] -= h;
        d[q] += h;
        a(p, q) = 0.0;
        a(q, p) = 0.0;

        auto rotate = [&](double& x, double& y) {
          const double gx = x;
          const double hy = y;
          x = gx - s * (hy + gx * tau);
          y = hy + s * (gx - hy * tau);
        };
        for (std::size_t j = 0; j < p; ++j) rotate(a(j, p), a(j, q));
        for (std::size_t j = p + 1; j < q; ++j) rotate(a(p, j), a(j, q));
        for (std::size_t j = q + 1; j < n; ++j) rotate(a(p, j), a(q, j));
        for (std::size_t j = 0; j < n; ++j) rotate(v(j, p), v(j, q));
      }
    }
    for (std::size_t p = 0; p < n; ++p) {
      b[p] += z[p];
      d[p] = b[p];
      z[p] = 0.0;
    }
  }
  if (!converged) {
    throw NumericalError("sym_eig: Jacobi iteration did not converge for a " + std::to_string(n) + "x" +
                         std::to_string(n) + " matrix");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return d[i] < d[j]; });

  SymEig out;
  out.eigenvalues.resize(n);
  out.eigenvectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.eigenvalues[k] = d[order[k]];
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, k) = v(i, order[k]);
  }
  return out;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  constexpr std::size_t kMax = std::numeric_limits<std::size_t>::max();
  if ((a.rows() != 0 && b.rows() > kMax / a.rows()) || (a.cols() != 0 && b.cols() > kMax / a.cols())) {
    throw StructuralError("kron: result dimensions overflow");
  }
  const std::size_t r = a.rows() * b.rows();
  const std::size_t c = a.cols() * b.cols();
  if (c != 0 && r > kMax / c) throw StructuralError("kron: result size overflows");
  Matrix out(r, c);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double aij = a(i, j);
      for (std::size_t k = 0; k < b.rows(); ++k)
        for (std::size_t l = 0; l < b.cols(); ++l) out(i * b.rows() + k, j * b.cols() + l) = aij * b(k, l);
    }
  return out;
}

std::vector<double> kron_mat_vec(const Matrix& a, const Matrix& b, std::span<const double> v) {
  if (v.size() != a.cols() * b.cols()) {
    throw StructuralError("kron_mat_vec: vector length " + std::to_string(v.size()) + " != " +
                          std::to_string(a.cols() * b.cols()));
  }
  const Matrix x = mat(v, b.cols(), a.cols());
  return vec(matmul_nt(matmul(b, x), a));
}

Matrix mat(std::span<const double> v, std::size_t rows, std::size_t cols) {
  if (v.size() != rows * cols) {
    throw StructuralError("mat: vector length " + std::to_string(v.size()) + " != " + std::to_string(rows) +
                          "x" + std::to_string(cols));
  }
  Matrix m(rows, cols);
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = 0; i < rows; ++i) m(i, j) = v[j * rows + i];
  return m;
}

std::vector<double> vec(const Matrix& m) {
  std::vector<double> v(m.size());
  for (std::size_t j = 0; j < m.cols(); ++j)
    for (std::size_t i = 0; i < m.rows(); ++i) v[j * m.rows() + i] = m(i, j);
  return v;
}

}  // namespace spam
