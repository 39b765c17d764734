#include "spam/compaction.hpp"

#include <algorithm>
#include <chrono>

#include "spam/error.hpp"
#include "spam/metrics.hpp"

namespace spam {

CompactionPlan plan(const Network& net) {
  CompactionPlan p;
  const std::size_t layers = net.num_layers();
  p.kept_units.resize(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t j = 0; j < net.unit_count(l); ++j) {
      bool removed = false;
      if (l + 1 < layers && net.has_mask()) {
        const auto& mask = *net.mask();
        const auto params = net.structure_params(l, j);
        removed = std::all_of(params.begin(), params.end(), [&](std::size_t q) { return mask[q] == 0; });
      }
      if (removed) {
        ++p.removed;
      } else {
        p.kept_units[l].push_back(j);
      }
    }
    if (p.kept_units[l].empty())
      throw StructuralError("layer collapse: every unit of layer " + std::to_string(l) + " is masked");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    LayerSpec s = net.layer(l);
    s.in_dim = l == 0 ? net.input_dim() : p.kept_units[l - 1].size();
    s.out_dim = p.kept_units[l].size();
    p.layers.push_back(s);
  }
  return p;
}

Network compact(const Network& net, const CompactionPlan& plan) {
  if (plan.kept_units.size() != net.num_layers() || plan.layers.size() != net.num_layers())
    throw StructuralError("compact: plan has a different layer count");
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto& kept = plan.kept_units[l];
    if (!std::is_sorted(kept.begin(), kept.end()) || kept.empty() || kept.back() >= net.unit_count(l))
      throw StructuralError("compact: plan does not fit layer " + std::to_string(l));
  }
  if (plan.kept_units.back().size() != net.output_dim())
    throw StructuralError("compact: the output layer must be kept in full");
  Network out(plan.layers);
  const auto theta = net.effective_params();
  std::vector<double> w(out.num_params());
  std::vector<std::uint8_t> bits(out.num_params(), 1);
  bool any_masked = false;
  auto copy = [&](std::size_t to, std::size_t from) {
    w[to] = theta[from];
    if (net.has_mask() && (*net.mask())[from] == 0) {
      bits[to] = 0;
      any_masked = true;
    }
  };
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto& outs = plan.kept_units[l];
    const std::size_t in_new = plan.layers[l].in_dim;
    for (std::size_t i = 0; i < in_new; ++i) {
      const std::size_t i_old = l == 0 ? i : plan.kept_units[l - 1][i];
      for (std::size_t j = 0; j < outs.size(); ++j) copy(out.weight_index(l, j, i), net.weight_index(l, outs[j], i_old));
    }
    if (plan.layers[l].has_bias)
      for (std::size_t j = 0; j < outs.size(); ++j) copy(out.bias_index(l, j), net.bias_index(l, outs[j]));
  }
  out.set_params(std::move(w));
  if (any_masked) out.set_mask(std::move(bits));
  return out;
}

CostReport cost(const std::vector<LayerSpec>& layers) {
  CostReport c;
  for (const auto& s : layers) {
    c.params_total += s.param_count();
    c.flops += 2 * s.in_dim * s.out_dim + (s.has_bias ? s.out_dim : 0) + s.out_dim;
  }
  c.params_nonzero = c.params_total;
  c.bytes = c.params_total * sizeof(double);
  return c;
}

CostReport cost(const Network& net) {
  CostReport c = cost(net.layers());
  const auto theta = net.effective_params();
  c.params_nonzero = static_cast<std::size_t>(std::count_if(theta.begin(), theta.end(), [](double v) { return v != 0.0; }));
  return c;
}

CostReport cost(const CompactionPlan& plan) { return cost(plan.layers); }

StructuredOutcome structured_pipeline(const Network& net, const Likelihood& lik, const Dataset& train,
                                      const Dataset& test, const PosteriorState* ps,
                                      const StructuredPipelineConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng = Rng(cfg.seed).fork(5);
  std::optional<Dataset> batch;
  if (cfg.criterion == Criterion::Snip || cfg.criterion == Criterion::Grasp)
    batch = scoring_batch(train, cfg.score_batch, cfg.seed);
  const auto scores = compute_scores(cfg.criterion, net, lik, ps, batch ? &*batch : nullptr, rng);
  StructuredOutcome out;
  out.mask = make_mask(score_structured(scores, net, true), net, MaskOptions{cfg.target, Scope::Uniform, true});
  Network masked = net;
  apply_mask(masked, out.mask);
  if (cfg.finetune.epochs > 0) masked = finetune(std::move(masked), lik, train, cfg.finetune);
  out.plan = plan(masked);
  out.compact_net = compact(masked, out.plan);
  out.record.criterion = to_string(cfg.criterion);
  out.record.sparsity = cfg.target;
  out.record.realized_sparsity = out.mask.sparsity;
  out.record.eval = evaluate(out.compact_net, lik, test);
  out.record.cost = cost(out.compact_net);
  out.record.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace spam
