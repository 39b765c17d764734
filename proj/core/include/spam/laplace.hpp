#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "spam/curvature.hpp"
#include "spam/data.hpp"
#include "spam/likelihood.hpp"
#include "spam/network.hpp"

namespace spam {

// FNV-1a over the bytes of a parameter vector; identifies the point a
// posterior was built at.
std::uint64_t params_fingerprint(std::span<const double> params);

// Eigenvalues of the KFAC posterior block with a diagonal prior added in the
// Frobenius-optimal way:
//   lambda_hat = s * (Lambda_A (x) Lambda_G) + delta_hat,
//   mat(delta_hat) = (Q_G^T)^2 mat(delta) Q_A^2   (element-wise squares).
// Ordered like the layer parameters (index i * D_G + j). `curvature_scale`
// multiplies the curvature eigenvalues (1 / temperature). Throws
// NumericalError on a non-positive entry.
std::vector<double> kfac_prior_correction(const SymEig& eig_a, const SymEig& eig_g, std::span<const double> delta_layer,
                                          double curvature_scale = 1.0);

// Laplace posterior precision P = H / T + diag(delta) at theta_star.
class PosteriorState {
 public:
  PosteriorState() = default;
  // theta_star is the network's effective (masked) parameter vector.
  PosteriorState(const Network& net, CurvatureEstimate curvature, std::vector<double> delta, double temperature = 1.0);

  // Same curvature and expansion point, new prior precisions.
  PosteriorState with_delta(std::vector<double> delta) const;

  bool is_kfac() const { return std::holds_alternative<KfacCurvature>(curvature_); }
  const CurvatureEstimate& curvature() const { return curvature_; }
  std::span<const double> delta() const { return delta_; }
  std::span<const double> theta_star() const { return theta_; }
  double temperature() const { return temperature_; }
  std::uint64_t snapshot_id() const { return snapshot_id_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t num_params() const { return theta_.size(); }
  // Per-layer lambda_hat (KFAC only; empty otherwise).
  const std::vector<std::vector<double>>& corrected_eigenvalues() const { return lambda_hat_; }

 private:
  void build();

  std::vector<LayerSpec> layers_;
  std::vector<std::size_t> offsets_;
  CurvatureEstimate curvature_;
  std::vector<double> delta_;
  std::vector<double> theta_;
  double temperature_ = 1.0;
  std::uint64_t snapshot_id_ = 0;
  std::vector<std::vector<double>> lambda_hat_;

  friend std::vector<double> posterior_diag(const PosteriorState&);
  friend std::vector<double> marglik_grad_delta(const PosteriorState&);
  friend double log_det(const PosteriorState&);
};

// log |P|. Diag: sum log(h/T + delta); KFAC: sum of log lambda_hat.
double log_det(const PosteriorState& ps);

struct MargLikValue {
  double log_joint = 0.0;         // -(1/T) sum nll + log prior
  double half_logdet_term = 0.0;  // 1/2 (log|P| - P log 2 pi) = 1/2 log|P / 2 pi|
  double total = 0.0;             // log_joint - half_logdet_term
};

// Laplace log marginal likelihood with the data term evaluated on `data`.
MargLikValue log_marglik(const Network& net, const Likelihood& lik, const Dataset& data, const PosteriorState& ps);
// Same, with sum_n nll_n already known.
MargLikValue log_marglik(const PosteriorState& ps, double total_nll);

// d total / d delta_p for every parameter.
std::vector<double> marglik_grad_delta(const PosteriorState& ps);

// Diagonal of the posterior precision.
std::vector<double> posterior_diag(const PosteriorState& ps);

}  // namespace spam
