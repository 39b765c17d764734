#include <gtest/gtest.h>

#include "oracles.hpp"
#include "spam/error.hpp"
#include "spam/tensor.hpp"

using namespace spam;

TEST(Matrix, ConstructorChecksSize) {
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), StructuralError);
  Matrix m(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m(1, 0), 4.0);
  EXPECT_EQ(m.transposed()(2, 1), 6.0);
}

TEST(Matrix, ProductsAgreeWithLoops) {
  Rng rng(1);
  const Matrix a = oracle::random_matrix(rng, 4, 3);
  const Matrix b = oracle::random_matrix(rng, 3, 5);
  const Matrix c = matmul(a, b);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += a(i, k) * b(k, j);
      EXPECT_NEAR(c(i, j), s, 1e-13);
    }
  EXPECT_LE(max_abs_diff(matmul_tn(a.transposed(), b), c), 1e-13);
  EXPECT_LE(max_abs_diff(matmul_nt(a, b.transposed()), c), 1e-13);
  EXPECT_THROW(matmul(a, a), StructuralError);
}

TEST(Matrix, IdentityIsNeutral) {
  Rng rng(2);
  const Matrix a = oracle::random_matrix(rng, 3, 3);
  EXPECT_EQ(matmul(Matrix::identity(3), a), a);
}

TEST(VecMat, ColumnMajorRoundTrip) {
  const std::vector<double> v{1, 2, 3, 4, 5, 6};
  const Matrix m = mat(v, 2, 3);
  EXPECT_EQ(m(0, 0), 1.0);
  EXPECT_EQ(m(1, 0), 2.0);
  EXPECT_EQ(m(0, 1), 3.0);
  EXPECT_EQ(vec(m), v);
}

TEST(Kron, SmallCaseByHand) {
  const Matrix a(2, 2, std::vector<double>{1, 2, 3, 4});
  const Matrix b(1, 2, std::vector<double>{0, 5});
  const Matrix k = kron(a, b);
  ASSERT_EQ(k.rows(), 2u);
  ASSERT_EQ(k.cols(), 4u);
  EXPECT_EQ(k(0, 1), 5.0);
  EXPECT_EQ(k(0, 3), 10.0);
  EXPECT_EQ(k(1, 3), 20.0);
}

TEST(Kron, MatVecMatchesDenseProduct) {
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    const Matrix a = oracle::random_matrix(rng, 3, 4);
    const Matrix b = oracle::random_matrix(rng, 2, 5);
    std::vector<double> v(20);
    for (auto& x : v) x = rng.normal();
    const auto dense = matvec(kron(a, b), v);
    const auto fast = kron_mat_vec(a, b, v);
    for (std::size_t i = 0; i < dense.size(); ++i) EXPECT_NEAR(fast[i], dense[i], 1e-12);
  }
}

TEST(SymEig, ReconstructsAndMatchesReferenceSpectrum) {
  Rng rng(4);
  for (std::size_t n : {1u, 2u, 5u, 12u, 30u}) {
    const Matrix s = oracle::random_spd(rng, n);
    const SymEig e = sym_eig(s);
    EXPECT_LE(max_abs_diff(e.reconstruct(), s), 1e-10 * (1.0 + max_abs(s)));
    const auto [ref, vecs] = oracle::eigen_sym(s);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(e.eigenvalues[i], ref[i], 1e-10 * (1.0 + std::abs(ref[i])));
    EXPECT_LE(max_abs_diff(matmul_tn(e.eigenvectors, e.eigenvectors), Matrix::identity(n)), 1e-12);
    for (std::size_t i = 1; i < n; ++i) EXPECT_LE(e.eigenvalues[i - 1], e.eigenvalues[i]);
  }
}

TEST(SymEig, DiagonalInputIsAlreadySolved) {
  const SymEig e = sym_eig(Matrix::diagonal(std::vector<double>{3, 1, 2}));
  EXPECT_EQ(e.eigenvalues, (std::vector<double>{1, 2, 3}));
}

TEST(SymEig, RejectsBadInput) {
  EXPECT_THROW(sym_eig(Matrix(2, 3)), StructuralError);
  EXPECT_THROW(sym_eig(Matrix(2, 2, std::vector<double>{1, 2, 0, 1})), StructuralError);
}

TEST(Matrix, SymmetryHelpers) {
  Matrix a(2, 2, std::vector<double>{1, 2, 2.5, 1});
  EXPECT_FALSE(is_symmetric(a));
  EXPECT_TRUE(is_symmetric(symmetrized(a)));
  EXPECT_DOUBLE_EQ(symmetrized(a)(0, 1), 2.25);
}
