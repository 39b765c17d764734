#include "spam/laplace.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <string>
#include <algorithm>
#include <variant>

#include "spam/error.hpp"
#include "spam/prior.hpp"

namespace spam {

std::uint64_t params_fingerprint(std::span<const double> params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : params) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

namespace {

Matrix squared_entries(const Matrix& q) { return squared(q); }

// vec(Q_G^2 mat(v) (Q_A^2)^T), the adjoint of the correction map.
std::vector<double> conjugate_diag(const KfacFactors& f, std::span<const double> v) {
  const Matrix qa2 = squared_entries(f.eig_a.eigenvectors);
  const Matrix qg2 = squared_entries(f.eig_g.eigenvectors);
  return vec(matmul_nt(matmul(qg2, mat(v, qg2.rows(), qa2.rows())), qa2));
}

}  // namespace

std::vector<double> kfac_prior_correction(const SymEig& eig_a, const SymEig& eig_g, std::span<const double> delta_layer,
                                          double curvature_scale) {
  const std::size_t da = eig_a.eigenvalues.size();
  const std::size_t dg = eig_g.eigenvalues.size();
  if (delta_layer.size() != da * dg) {
    throw StructuralError("kfac_prior_correction: delta has " + std::to_string(delta_layer.size()) +
                          " entries, layer has " + std::to_string(da * dg));
  }
  const Matrix qa2 = squared_entries(eig_a.eigenvectors);
  const Matrix qg2 = squared_entries(eig_g.eigenvectors);
  // (Q_G^T)^2 mat(delta) Q_A^2
  const std::vector<double> delta_hat = vec(matmul(matmul_tn(qg2, mat(delta_layer, dg, da)), qa2));
  std::vector<double> lam(da * dg);
  for (std::size_t i = 0; i < da; ++i)
    for (std::size_t j = 0; j < dg; ++j) {
      const std::size_t k = i * dg + j;
      lam[k] = curvature_scale * eig_a.eigenvalues[i] * eig_g.eigenvalues[j] + delta_hat[k];
      if (!(lam[k] > 0.0)) {
        throw NumericalError("kfac_prior_correction: corrected eigenvalue " + std::to_string(k) + " is " +
                             std::to_string(lam[k]));
      }
    }
  return lam;
}

PosteriorState::PosteriorState(const Network& net, CurvatureEstimate curvature, std::vector<double> delta,
                               double temperature)
    : layers_(net.layers()),
      curvature_(std::move(curvature)),
      delta_(std::move(delta)),
      theta_(net.effective_params()),
      temperature_(temperature) {
  for (std::size_t l = 0; l < net.num_layers(); ++l) offsets_.push_back(net.layer_offset(l));
  if (!(temperature_ >= 1.0)) throw StructuralError("PosteriorState: temperature must be >= 1");
  snapshot_id_ = params_fingerprint(theta_);
  build();
}

PosteriorState PosteriorState::with_delta(std::vector<double> delta) const {
  PosteriorState copy = *this;
  copy.delta_ = std::move(delta);
  copy.build();
  return copy;
}

void PosteriorState::build() {
  const std::size_t p = theta_.size();
  if (delta_.size() != p) throw StructuralError("PosteriorState: delta length does not match the parameter count");
  for (std::size_t k = 0; k < p; ++k)
    if (!(delta_[k] > 0.0) || !std::isfinite(delta_[k])) {
      throw NumericalError("PosteriorState: prior precision " + std::to_string(k) + " is not positive and finite");
    }
  lambda_hat_.clear();
  if (const auto* d = std::get_if<DiagCurvature>(&curvature_)) {
    if (d->h.size() != p) throw StructuralError("PosteriorState: curvature length does not match the parameter count");
    return;
  }
  const auto& k = std::get<KfacCurvature>(curvature_);
  if (k.layers.size() != layers_.size()) throw StructuralError("PosteriorState: KFAC layer count mismatch");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto block = std::span<const double>(delta_).subspan(offsets_[l], layers_[l].param_count());
    try {
      lambda_hat_.push_back(kfac_prior_correction(k.layers[l].eig_a, k.layers[l].eig_g, block, 1.0 / temperature_));
    } catch (const NumericalError& e) {
      throw NumericalError("layer " + std::to_string(l) + ": " + e.what());
    }
  }
}

double log_det(const PosteriorState& ps) {
  double s = 0.0;
  if (const auto* d = std::get_if<DiagCurvature>(&ps.curvature_)) {
    const double scale = 1.0 / ps.temperature_;
    for (std::size_t k = 0; k < d->h.size(); ++k) {
      const double v = scale * d->h[k] + ps.delta_[k];
      if (!(v > 0.0)) throw NumericalError("log_det: non-positive posterior precision at parameter " + std::to_string(k));
      s += std::log(v);
    }
    return s;
  }
  for (std::size_t l = 0; l < ps.lambda_hat_.size(); ++l)
    for (double v : ps.lambda_hat_[l]) {
      if (!(v > 0.0)) throw NumericalError("log_det: non-positive eigenvalue in layer " + std::to_string(l));
      s += std::log(v);
    }
  return s;
}

MargLikValue log_marglik(const PosteriorState& ps, double total_nll) {
  MargLikValue out;
  out.log_joint = -total_nll / ps.temperature() + log_prior(ps.delta(), ps.theta_star());
  const double p = static_cast<double>(ps.num_params());
  out.half_logdet_term = 0.5 * (log_det(ps) - p * std::log(2.0 * std::numbers::pi));
  out.total = out.log_joint - out.half_logdet_term;
  if (!std::isfinite(out.total)) throw NumericalError("log_marglik: non-finite value");
  return out;
}

MargLikValue log_marglik(const Network& net, const Likelihood& lik, const Dataset& data, const PosteriorState& ps) {
  if (net.num_params() != ps.num_params()) throw StructuralError("log_marglik: network does not match the posterior");
  double total = 0.0;
  if (!data.empty()) {
    constexpr std::size_t kChunk = 1024;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += kChunk) {
      idx.clear();
      for (std::size_t r = start; r < std::min(data.size(), start + kChunk); ++r) idx.push_back(r);
      total += total_nll(lik, forward(net, gather_rows(data.features, idx)), gather_rows(data.targets, idx));
    }
  }
  return log_marglik(ps, total);
}

std::vector<double> marglik_grad_delta(const PosteriorState& ps) {
  const std::size_t p = ps.num_params();
  std::vector<double> inv_post(p);
  if (const auto* d = std::get_if<DiagCurvature>(&ps.curvature_)) {
    const double scale = 1.0 / ps.temperature_;
    for (std::size_t k = 0; k < p; ++k) inv_post[k] = 1.0 / (scale * d->h[k] + ps.delta_[k]);
  } else {
    // d/d delta of sum log lambda_hat, through the linear correction map.
    const auto& kf = std::get<KfacCurvature>(ps.curvature_);
    for (std::size_t l = 0; l < ps.layers_.size(); ++l) {
      std::vector<double> r(ps.lambda_hat_[l].size());
      for (std::size_t k = 0; k < r.size(); ++k) r[k] = 1.0 / ps.lambda_hat_[l][k];
      const auto g = conjugate_diag(kf.layers[l], r);
      std::copy(g.begin(), g.end(), inv_post.begin() + static_cast<std::ptrdiff_t>(ps.offsets_[l]));
    }
  }
  std::vector<double> grad(p);
  for (std::size_t k = 0; k < p; ++k)
    grad[k] = 0.5 * (1.0 / ps.delta_[k] - ps.theta_[k] * ps.theta_[k] - inv_post[k]);
  return grad;
}

std::vector<double> posterior_diag(const PosteriorState& ps) {
  const std::size_t p = ps.num_params();
  std::vector<double> out(p);
  if (const auto* d = std::get_if<DiagCurvature>(&ps.curvature_)) {
    const double scale = 1.0 / ps.temperature_;
    for (std::size_t k = 0; k < p; ++k) out[k] = scale * d->h[k] + ps.delta_[k];
    return out;
  }
  const auto& kf = std::get<KfacCurvature>(ps.curvature_);
  for (std::size_t l = 0; l < ps.layers_.size(); ++l) {
    const auto g = conjugate_diag(kf.layers[l], ps.lambda_hat_[l]);
    std::copy(g.begin(), g.end(), out.begin() + static_cast<std::ptrdiff_t>(ps.offsets_[l]));
  }
  return out;
}

}  // namespace spam
