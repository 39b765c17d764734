#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "spam/network.hpp"

namespace spam {

enum class PriorKind { Scalar, LayerWise, UnitWise, ParameterWise };

std::string to_string(PriorKind k);
PriorKind prior_kind_from_string(const std::string& name);

// Gaussian prior precisions, stored as log-precisions.
//
// Hyperparameter layout by kind:
//   Scalar        1 entry
//   LayerWise     one entry per layer
//   UnitWise      one group per unit layer: group 0 holds the network inputs
//                 (M_0 = input dim), group l+1 the outputs of layer l.
//                 Weight (i -> j) of layer l has precision
//                 delta[l][i] * delta[l+1][j]; bias j has delta[l+1][j].
//   ParameterWise one entry per parameter
struct PriorSpec {
  PriorKind kind = PriorKind::Scalar;
  std::vector<double> log_delta;

  // Every log-hyperparameter set to log(delta0). For UnitWise this gives
  // weights delta0^2 and biases delta0.
  static PriorSpec uniform(PriorKind kind, const Network& net, double delta0 = 1.0);
  static std::size_t hyper_count(PriorKind kind, const Network& net);
};

// Offsets of each UnitWise group inside log_delta (size num_layers + 2).
std::vector<std::size_t> unit_group_offsets(const Network& net);

// One precision per parameter.
std::vector<double> expand(const PriorSpec& spec, const Network& net);

// log N(theta; 0, diag(delta)^-1) = 1/2 sum_p (log delta_p - delta_p theta_p^2 - log 2 pi)
double log_prior(std::span<const double> delta, std::span<const double> theta);

// Chain rule from d/d(delta_p) to d/d(log-hyperparameters).
std::vector<double> chain_to_hypers(const PriorSpec& spec, const Network& net, std::span<const double> grad_wrt_delta);

}  // namespace spam
