#pragma once

#include <cstddef>
#include <vector>

#include "spam/data.hpp"
#include "spam/laplace.hpp"
#include "spam/likelihood.hpp"
#include "spam/network.hpp"
#include "spam/pruning.hpp"
#include "spam/report.hpp"
#include "spam/training.hpp"

namespace spam {

// Units kept per layer (ascending old indices; position = new index).
struct CompactionPlan {
  std::vector<std::vector<std::size_t>> kept_units;
  std::vector<LayerSpec> layers;
  std::size_t removed = 0;
};

// A hidden unit counts as removed when its incoming row and bias are all
// masked. Output units are always kept. Throws StructuralError("layer
// collapse") if a hidden layer would lose every unit.
CompactionPlan plan(const Network& net);

// Dense smaller network with weights gathered from the effective parameters.
// Remaining unstructured mask bits are carried over.
Network compact(const Network& net, const CompactionPlan& plan);

// flops = sum_l 2 in out + out (bias) + out (activation), bytes = 8 * params.
CostReport cost(const std::vector<LayerSpec>& layers);
// Also counts nonzero effective parameters.
CostReport cost(const Network& net);
CostReport cost(const CompactionPlan& plan);

struct StructuredPipelineConfig {
  Criterion criterion = Criterion::Opd;
  double target = 0.0;  // fraction of hidden units removed per layer
  TrainConfig finetune;  // MapMode; epochs = 0 skips fine-tuning
  std::size_t score_batch = 128;
  std::uint64_t seed = 0;
};

struct StructuredOutcome {
  Network compact_net;
  CompactionPlan plan;
  PruneMask mask;
  PruneRecord record;  // seed and training tag left for the caller
};

// score -> uniform structured mask (output layer exempt) -> apply ->
// fine-tune -> plan -> compact -> evaluate on `test`.
StructuredOutcome structured_pipeline(const Network& net, const Likelihood& lik, const Dataset& train,
                                      const Dataset& test, const PosteriorState* ps,
                                      const StructuredPipelineConfig& cfg);

}  // namespace spam
