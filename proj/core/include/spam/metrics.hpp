#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "spam/data.hpp"
#include "spam/likelihood.hpp"
#include "spam/network.hpp"

namespace spam {

// Classification metrics; for a Gaussian likelihood only nll is defined and
// accuracy/ece/brier are NaN.
struct EvalResult {
  double accuracy = 0.0;
  double nll = 0.0;  // mean per sample
  double ece = 0.0;
  double brier = 0.0;
  std::size_t n = 0;
};

inline constexpr std::size_t kEceBins = 15;

// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> v);

// Metrics from an N x C matrix of class probabilities.
EvalResult evaluate_probabilities(const Matrix& probs, std::span<const std::size_t> labels);

// Expected calibration error with equal-width bins (lo, hi] on the max
// probability. Empty bins are skipped.
double expected_calibration_error(std::span<const double> confidence, std::span<const std::uint8_t> correct,
                                  std::size_t bins = kEceBins);

EvalResult evaluate(const Network& net, const Likelihood& lik, const Dataset& data);

}  // namespace spam
