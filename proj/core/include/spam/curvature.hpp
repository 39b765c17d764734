#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "spam/data.hpp"
#include "spam/likelihood.hpp"
#include "spam/network.hpp"
#include "spam/tensor.hpp"

namespace spam {

// Diagonal of the negative log-likelihood Hessian approximation, one h_p >= 0
// per parameter.
struct DiagCurvature {
  std::vector<double> h;
};

// Per-layer Kronecker factors H_l ~ A_l (x) G_l.
//
// A_l is (D_in + has_bias) square: the mean of a a^T over samples, with a
// trailing constant 1 for the bias. G_l is D_out square: the SUM of g g^T
// over samples, so A (x) G totals a sum over data. With the layer layout of
// Network, diag(A (x) G)[i * D_out + j] belongs to weight (i -> j), and the
// bias of unit j sits at i = D_in.
struct KfacFactors {
  Matrix a;
  Matrix g;
  SymEig eig_a;
  SymEig eig_g;
};

struct KfacCurvature {
  std::vector<KfacFactors> layers;
};

using CurvatureEstimate = std::variant<DiagCurvature, KfacCurvature>;

enum class KfacMode {
  EmpiricalFisher,  // g from the gradient at the observed target
  GgnSampled,       // g from the gradient at a target sampled from the model
  GgnExact,         // one g per column of the output-Hessian factor
};

std::string to_string(KfacMode m);

// Exact diagonal of sum_n J_n^T Lambda_n J_n.
DiagCurvature ggn_diag(const Network& net, const Likelihood& lik, const Dataset& data, std::size_t chunk = 512);

// Sum over samples of squared per-sample NLL gradients.
DiagCurvature ef_diag(const Network& net, const Likelihood& lik, const Dataset& data, std::size_t chunk = 512);

// `seed` drives target sampling in GgnSampled mode.
KfacCurvature kfac(const Network& net, const Likelihood& lik, const Dataset& data, KfacMode mode,
                   std::uint64_t seed = 0, std::size_t chunk = 512);

// diag(A_l (x) G_l) in the layer's parameter order.
std::vector<double> kfac_diag(const KfacCurvature& k, std::size_t layer);

}  // namespace spam
