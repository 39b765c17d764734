#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spam/data.hpp"
#include "spam/laplace.hpp"
#include "spam/likelihood.hpp"
#include "spam/network.hpp"
#include "spam/rng.hpp"

namespace spam {

enum class Criterion { Opd, Magnitude, Random, Snip, Grasp, Synflow };

std::string to_string(Criterion c);
Criterion criterion_from_string(const std::string& name);

enum class Scope { Global, Uniform };

std::string to_string(Scope s);
Scope scope_from_string(const std::string& name);

// A hidden or output unit: output `unit` of layer `layer`.
struct UnitRef {
  std::size_t layer = 0;
  std::size_t unit = 0;
  bool operator==(const UnitRef&) const = default;
};

struct ScoreVector {
  std::vector<double> values;  // over parameters, or over `units` when structured
  Criterion criterion = Criterion::Magnitude;
  bool structured = false;
  std::vector<UnitRef> units;
  std::uint64_t snapshot_id = 0;  // posterior the scores came from (OPD)
  std::uint64_t batch_id = 0;     // scoring batch (SNIP, GraSP)
};

// P_pp * theta_p^2. Throws StalenessError unless `ps` was built at the
// network's current effective parameters.
ScoreVector score_opd(const Network& net, const PosteriorState& ps);
ScoreVector score_magnitude(const Network& net);
ScoreVector score_random(const Network& net, Rng& rng);
// |theta * dL/dtheta| with L the batch-mean NLL.
ScoreVector score_snip(const Network& net, const Likelihood& lik, const Dataset& batch);
// |theta * (H g)| with g the gradient of the batch-mean NLL.
ScoreVector score_grasp(const Network& net, const Likelihood& lik, const Dataset& batch);
ScoreVector score_synflow(const Network& net);

using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

// H v by central differences of `grad` along v / |v|, rescaled by |v|.
// The step is 1e-3 * (1 + max|theta|).
std::vector<double> hvp_central_difference(const GradientFn& grad, std::span<const double> theta,
                                           std::span<const double> v);

// Gradient of the batch-mean NLL at the network's parameters.
std::vector<double> mean_nll_gradient(const Network& net, const Likelihood& lik, const Dataset& batch);

// Sum of parameter scores over each unit's incoming row and bias. Units of
// the output layer are left out when `exempt_last`.
ScoreVector score_structured(const ScoreVector& scores, const Network& net, bool exempt_last = true);

struct MaskOptions {
  double sparsity = 0.0;
  Scope scope = Scope::Global;
  bool exempt_last = true;  // structured only
};

struct PruneMask {
  std::vector<std::uint8_t> bits;  // 1 = keep
  double sparsity = 0.0;           // realized fraction of zero bits
  double requested = 0.0;
  Scope scope = Scope::Global;
  bool structured = false;
  bool exempt_last = true;
  std::vector<UnitRef> removed_units;
  std::vector<std::string> warnings;
};

// Prunes the lowest scores, ties by ascending index. Unstructured: exactly
// floor(s * P) zeros (global) or sum_l floor(s * P_l) (uniform); entries the
// network already masks are taken first. Structured scores remove whole
// units and expand to their incoming rows, biases and the outgoing columns
// of the next layer. Throws StructuralError("layer collapse") when a layer
// would keep at most one unit under uniform structured pruning, or none
// under global structured pruning.
PruneMask make_mask(const ScoreVector& scores, const Network& net, const MaskOptions& opts);

// Stores mask AND any existing mask on the network and zeroes the pruned
// parameters.
void apply_mask(Network& net, const PruneMask& mask);
void apply_mask(Network& net, std::span<const std::uint8_t> bits);

// Fraction of zero bits.
double mask_sparsity(std::span<const std::uint8_t> bits);

// Fixed seeded scoring batch of min(size, n) rows.
Dataset scoring_batch(const Dataset& data, std::size_t size, std::uint64_t seed);

// Dispatch on a criterion; `ps` is required for OPD, `batch` for SNIP/GraSP.
ScoreVector compute_scores(Criterion c, const Network& net, const Likelihood& lik, const PosteriorState* ps,
                           const Dataset* batch, Rng& rng);

}  // namespace spam
