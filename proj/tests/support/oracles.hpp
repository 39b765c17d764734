#pragma once

// Reference computations for tests. Everything here is dense and slow on
// purpose and leans on Eigen's factorizations rather than on spam's own
// numerical routines.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "spam/data.hpp"
#include "spam/likelihood.hpp"
#include "spam/network.hpp"
#include "spam/rng.hpp"
#include "spam/tensor.hpp"

namespace spam::oracle {

// sum_n J_n^T Lambda_n J_n from full per-sample Jacobians.
Matrix dense_ggn(const Network& net, const Likelihood& lik, const Dataset& data);

// Per-sample NLL gradients by central differences.
std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                                double h = 1e-6);

// log |M| via Cholesky; M must be SPD.
double logdet_spd(const Matrix& m);
Matrix inverse_spd(const Matrix& m);
// Eigen's self-adjoint solver: eigenvalues ascending, vectors as columns.
std::pair<std::vector<double>, Matrix> eigen_sym(const Matrix& m);

// log N(y; 0, sigma2 I + X X^T / delta) for y = X w + noise, w ~ N(0, I / delta).
double linear_gaussian_evidence(const Matrix& x, std::span<const double> y, double sigma2, double delta);
// Posterior mean (X^T X / sigma2 + delta I)^-1 X^T y / sigma2.
std::vector<double> linear_gaussian_mode(const Matrix& x, std::span<const double> y, double sigma2, double delta);

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0);
// B B^T + eps I with B random.
Matrix random_spd(Rng& rng, std::size_t n, double eps = 0.1);
Dataset random_classification(Rng& rng, std::size_t n, std::size_t d, std::size_t classes);
Dataset random_regression(Rng& rng, std::size_t n, std::size_t d, std::size_t outputs);
Network random_network(Rng& rng, std::vector<std::size_t> widths, Activation act = Activation::Tanh,
                       bool bias = true, double scale = 0.7);

// Relative error |a - b| / max(|b|, floor) maximized over entries.
double max_rel_error(std::span<const double> a, std::span<const double> b, double floor = 1e-12);

}  // namespace spam::oracle
