#pragma once

#include <span>
#include <vector>

#include "spam/rng.hpp"
#include "spam/tensor.hpp"

namespace spam {

// Observation model p(y | f). Categorical targets are class indices stored
// as a single real per sample; Gaussian targets are real vectors.
struct Likelihood {
  enum class Kind { Categorical, Gaussian };

  Kind kind = Kind::Categorical;
  double sigma2 = 1.0;  // Gaussian noise variance

  static Likelihood categorical() { return {Kind::Categorical, 1.0}; }
  static Likelihood gaussian(double sigma2);

  bool is_categorical() const { return kind == Kind::Categorical; }
  // Number of target columns per sample for an output of width `outputs`.
  std::size_t target_width(std::size_t outputs) const { return is_categorical() ? 1 : outputs; }
};

std::vector<double> softmax(std::span<const double> f);
double log_sum_exp(std::span<const double> f);

double nll(const Likelihood& lik, std::span<const double> f, std::span<const double> y);
std::vector<double> output_grad(const Likelihood& lik, std::span<const double> f, std::span<const double> y);
Matrix output_hessian(const Likelihood& lik, std::span<const double> f, std::span<const double> y);

// L with L L^T = output_hessian. Categorical uses a Cholesky factorization
// with pivot tolerance 1e-12 and falls back to a clipped eigendecomposition;
// NumericalError if the Hessian is genuinely indefinite.
Matrix hessian_factor(const Likelihood& lik, std::span<const double> f, std::span<const double> y);

// Draws y ~ p(y | f).
std::vector<double> sample_target(const Likelihood& lik, std::span<const double> f, Rng& rng);

// Batched helpers over N x C outputs and N x target_width targets.
double total_nll(const Likelihood& lik, const Matrix& f, const Matrix& y);
Matrix output_grads(const Likelihood& lik, const Matrix& f, const Matrix& y);

}  // namespace spam
