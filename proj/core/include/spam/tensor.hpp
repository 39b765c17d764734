#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace spam {

// Dense real matrix, row-major.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> d);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  Matrix transposed() const;
  std::vector<double> diag() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
std::vector<double> matvec(const Matrix& a, std::span<const double> v);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix squared(const Matrix& a);

double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);
bool is_symmetric(const Matrix& a, double tol = 1e-10);
// (a + a^T) / 2
Matrix symmetrized(const Matrix& a);

// Symmetric eigendecomposition m = Q diag(eigenvalues) Q^T.
// Eigenvalues ascending; eigenvectors are the columns of Q.
struct SymEig {
  std::vector<double> eigenvalues;
  Matrix eigenvectors;

  Matrix reconstruct() const;
};

// Cyclic Jacobi. Throws StructuralError for non-square or asymmetric input
// (1e-10 max-abs) and NumericalError if the sweeps fail to converge.
SymEig sym_eig(const Matrix& m);

// Kronecker product a (x) b.
Matrix kron(const Matrix& a, const Matrix& b);

// (a (x) b) v computed as vec(b * mat(v) * a^T) without forming the product.
std::vector<double> kron_mat_vec(const Matrix& a, const Matrix& b, std::span<const double> v);

// Column-major reshape: mat(v, rows, cols)(i, j) = v[j * rows + i].
// With rows = D_out and cols = D_in, column j holds the parameters fed by
// input j, which is exactly the per-layer parameter layout of Network.
Matrix mat(std::span<const double> v, std::size_t rows, std::size_t cols);
std::vector<double> vec(const Matrix& m);

}  // namespace spam
