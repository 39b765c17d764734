#include "spam/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "spam/error.hpp"

namespace spam {

namespace {

std::size_t class_label(std::span<const double> f, std::span<const double> y) {
  if (y.size() != 1) throw StructuralError("categorical target must be a single class index");
  const double v = y[0];
  if (!(v >= 0.0) || v != std::floor(v) || v >= static_cast<double>(f.size())) {
    throw StructuralError("invalid class label " + std::to_string(v) + " for " + std::to_string(f.size()) + " classes");
  }
  return static_cast<std::size_t>(v);
}

void check_regression(std::span<const double> f, std::span<const double> y) {
  if (f.size() != y.size()) throw StructuralError("Gaussian target width does not match output width");
}

}  // namespace

Likelihood Likelihood::gaussian(double sigma2) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw StructuralError("Gaussian likelihood needs sigma2 > 0");
  return {Kind::Gaussian, sigma2};
}

double log_sum_exp(std::span<const double> f) {
  const double m = *std::max_element(f.begin(), f.end());
  double s = 0.0;
  for (double v : f) s += std::exp(v - m);
  return m + std::log(s);
}

std::vector<double> softmax(std::span<const double> f) {
  const double m = *std::max_element(f.begin(), f.end());
  std::vector<double> p(f.size());
  double s = 0.0;
  for (std::size_t c = 0; c < f.size(); ++c) s += (p[c] = std::exp(f[c] - m));
  for (auto& v : p) v /= s;
  return p;
}

double nll(const Likelihood& lik, std::span<const double> f, std::span<const double> y) {
  if (lik.is_categorical()) {
    const std::size_t k = class_label(f, y);
    // log1p form keeps tiny losses accurate when the target logit dominates.
    const double m = *std::max_element(f.begin(), f.end());
    if (f[k] == m) {
      double rest = 0.0;
      for (std::size_t c = 0; c < f.size(); ++c)
        if (c != k) rest += std::exp(f[c] - m);
      return std::log1p(rest);
    }
    return log_sum_exp(f) - f[k];
  }
  check_regression(f, y);
  double sq = 0.0;
  for (std::size_t c = 0; c < f.size(); ++c) sq += (y[c] - f[c]) * (y[c] - f[c]);
  return 0.5 * sq / lik.sigma2 + 0.5 * static_cast<double>(f.size()) * std::log(2.0 * std::numbers::pi * lik.sigma2);
}

std::vector<double> output_grad(const Likelihood& lik, std::span<const double> f, std::span<const double> y) {
  if (lik.is_categorical()) {
    const std::size_t k = class_label(f, y);
    auto g = softmax(f);
    g[k] -= 1.0;
    return g;
  }
  check_regression(f, y);
  std::vector<double> g(f.size());
  for (std::size_t c = 0; c < f.size(); ++c) g[c] = (f[c] - y[c]) / lik.sigma2;
  return g;
}

Matrix output_hessian(const Likelihood& lik, std::span<const double> f, std::span<const double> y) {
  const std::size_t c = f.size();
  if (lik.is_categorical()) {
    class_label(f, y);
    const auto p = softmax(f);
    Matrix h(c, c);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < c; ++j) h(i, j) = (i == j ? p[i] : 0.0) - p[i] * p[j];
    return h;
  }
  check_regression(f, y);
  return (1.0 / lik.sigma2) * Matrix::identity(c);
}

Matrix hessian_factor(const Likelihood& lik, std::span<const double> f, std::span<const double> y) {
  const std::size_t c = f.size();
  if (!lik.is_categorical()) {
    check_regression(f, y);
    return (1.0 / std::sqrt(lik.sigma2)) * Matrix::identity(c);
  }
  const Matrix h = output_hessian(lik, f, y);
  constexpr double kPivotTol = 1e-12;

  // Cholesky; pivots below the tolerance (the softmax Hessian is singular)
  // zero their column.
  Matrix l(c, c);
  bool ok = true;
  for (std::size_t j = 0; j < c && ok; ++j) {
    double d = h(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (d <= kPivotTol) {
      if (d < -1e-10) ok = false;
      continue;
    }
    const double root = std::sqrt(d);
    l(j, j) = root;
    for (std::size_t i = j + 1; i < c; ++i) {
      double s = h(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / root;
    }
  }
  if (ok && max_abs_diff(matmul_nt(l, l), h) <= 1e-11) return l;

  // Clipped eigendecomposition fallback.
  const SymEig eig = sym_eig(symmetrized(h));
  const double scale = std::max(1.0, max_abs(h));
  Matrix q = eig.eigenvectors;
  for (std::size_t k = 0; k < c; ++k) {
    double lam = eig.eigenvalues[k];
    if (lam < -1e-8 * scale) throw NumericalError("hessian_factor: output Hessian is indefinite");
    lam = std::max(lam, 0.0);
    const double r = std::sqrt(lam);
    for (std::size_t i = 0; i < c; ++i) q(i, k) *= r;
  }
  return q;
}

std::vector<double> sample_target(const Likelihood& lik, std::span<const double> f, Rng& rng) {
  if (lik.is_categorical()) {
    const auto p = softmax(f);
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t k = p.size() - 1;
    for (std::size_t c = 0; c < p.size(); ++c) {
      acc += p[c];
      if (u < acc) {
        k = c;
        break;
      }
    }
    return {static_cast<double>(k)};
  }
  std::vector<double> y(f.begin(), f.end());
  const double sd = std::sqrt(lik.sigma2);
  for (auto& v : y) v += sd * rng.normal();
  return y;
}

double total_nll(const Likelihood& lik, const Matrix& f, const Matrix& y) {
  if (f.rows() != y.rows()) throw StructuralError("total_nll: row mismatch");
  double s = 0.0;
  for (std::size_t n = 0; n < f.rows(); ++n) s += nll(lik, f.row(n), y.row(n));
  return s;
}

Matrix output_grads(const Likelihood& lik, const Matrix& f, const Matrix& y) {
  if (f.rows() != y.rows()) throw StructuralError("output_grads: row mismatch");
  Matrix g(f.rows(), f.cols());
  for (std::size_t n = 0; n < f.rows(); ++n) {
    const auto r = output_grad(lik, f.row(n), y.row(n));
    std::copy(r.begin(), r.end(), g.row(n).begin());
  }
  return g;
}

}  // namespace spam
