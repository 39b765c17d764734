#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"
#include "spam/compaction.hpp"
#include "spam/error.hpp"
#include "spam/pruning.hpp"

using namespace spam;

namespace {

// Counts arithmetic by walking a forward pass: one multiply and one add per
// weight, one add per bias, one activation evaluation per unit.
std::size_t counted_flops(const std::vector<LayerSpec>& layers) {
  std::size_t ops = 0;
  for (const auto& s : layers)
    for (std::size_t j = 0; j < s.out_dim; ++j) {
      for (std::size_t i = 0; i < s.in_dim; ++i) ops += 2;
      if (s.has_bias) ops += 1;
      ops += 1;
    }
  return ops;
}

Network structured_pruned(const Network& net, double target) {
  Network out = net;
  const auto s = score_structured(score_magnitude(net), net);
  apply_mask(out, make_mask(s, net, {target, Scope::Uniform}));
  return out;
}

}  // namespace

TEST(Compaction, IdentityPlan) {
  Rng rng(1);
  const Network net = oracle::random_network(rng, {3, 4, 2});
  const CompactionPlan p = plan(net);
  EXPECT_EQ(p.removed, 0u);
  EXPECT_EQ(p.layers, net.layers());
  const Network c = compact(net, p);
  const Matrix x = oracle::random_matrix(rng, 6, 3);
  EXPECT_EQ(forward(c, x), forward(net, x));
}

TEST(Compaction, RemovesMaskedMiddleUnit) {
  Rng rng(2);
  Network net = oracle::random_network(rng, {2, 3, 2});
  std::vector<std::uint8_t> bits(net.num_params(), 1);
  for (auto p : net.structure_params(0, 1)) bits[p] = 0;
  for (std::size_t j = 0; j < 2; ++j) bits[net.weight_index(1, j, 1)] = 0;
  apply_mask(net, bits);
  const CompactionPlan p = plan(net);
  EXPECT_EQ(p.kept_units[0], (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(p.layers[0].out_dim, 2u);
  EXPECT_EQ(p.layers[1].in_dim, 2u);
  EXPECT_EQ(p.removed, 1u);
  const Network c = compact(net, p);
  const Matrix x = oracle::random_matrix(rng, 5, 2);
  EXPECT_LE(max_abs_diff(forward(c, x), forward(net, x)), 1e-12);
  // Provenance: kept weights are copied exactly.
  for (std::size_t nj = 0; nj < 2; ++nj) {
    const std::size_t oj = p.kept_units[0][nj];
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(c.params()[c.weight_index(0, nj, i)], net.params()[net.weight_index(0, oj, i)]);
    for (std::size_t k = 0; k < 2; ++k)
      EXPECT_EQ(c.params()[c.weight_index(1, k, nj)], net.params()[net.weight_index(1, k, oj)]);
  }
}

TEST(Compaction, DeadUnitRemovalIsExact) {
  Rng rng(3);
  Network net = oracle::random_network(rng, {3, 4, 2});
  std::vector<double> w(net.params().begin(), net.params().end());
  for (auto p : net.structure_params(0, 2)) w[p] = 0.0;
  net.set_params(w);
  std::vector<std::uint8_t> bits(net.num_params(), 1);
  for (auto p : net.structure_params(0, 2)) bits[p] = 0;
  apply_mask(net, bits);
  const Network c = compact(net, plan(net));
  const Matrix x = oracle::random_matrix(rng, 8, 3);
  EXPECT_LE(max_abs_diff(forward(c, x), forward(net, x)), 1e-12);
}

TEST(Compaction, RandomStructuredPruningIsEquivalent) {
  Rng rng(4);
  for (auto act : {Activation::ReLU, Activation::Tanh}) {
    Network net = oracle::random_network(rng, {30, 100, 100, 2}, act);
    ScoreVector s = score_structured(score_random(net, rng), net);
    apply_mask(net, make_mask(s, net, {0.6, Scope::Uniform}));
    const CompactionPlan p = plan(net);
    EXPECT_EQ(p.layers[0].out_dim, 40u);
    EXPECT_EQ(p.layers[1].out_dim, 40u);
    // Provenance is a bijection onto the kept units.
    for (const auto& kept : p.kept_units) {
      std::set<std::size_t> u(kept.begin(), kept.end());
      EXPECT_EQ(u.size(), kept.size());
      EXPECT_TRUE(std::is_sorted(kept.begin(), kept.end()));
    }
    const Network c = compact(net, p);
    const Matrix x = oracle::random_matrix(rng, 100, 30, 2.0);
    EXPECT_LE(max_abs_diff(forward(c, x), forward(net, x)), 1e-12);
  }
}

TEST(Compaction, LayerCollapseIsError) {
  Rng rng(5);
  Network net = oracle::random_network(rng, {2, 2, 2});
  std::vector<std::uint8_t> bits(net.num_params(), 1);
  for (std::size_t u = 0; u < 2; ++u)
    for (auto p : net.structure_params(0, u)) bits[p] = 0;
  apply_mask(net, bits);
  EXPECT_THROW(plan(net), StructuralError);
}

TEST(Compaction, PlanMismatchIsError) {
  Rng rng(6);
  const Network a = oracle::random_network(rng, {2, 3, 2});
  const Network b = oracle::random_network(rng, {2, 4, 2});
  EXPECT_THROW(compact(a, plan(b)), StructuralError);
}

TEST(Compaction, CostOfMnistNetwork) {
  const std::vector<std::size_t> w{784, 256, 10};
  const auto layers = mlp_layers(w);
  const CostReport c = cost(layers);
  EXPECT_EQ(c.params_total, 203530u);
  EXPECT_EQ(c.bytes, 8u * 203530u);
  EXPECT_EQ(c.flops, counted_flops(layers));
}

TEST(Compaction, CancerFlopsMatchCountingPass) {
  const std::vector<std::size_t> w{30, 100, 100, 2};
  const auto layers = mlp_layers(w);
  EXPECT_EQ(cost(layers).flops, counted_flops(layers));
  EXPECT_EQ(cost(layers).flops, 26804u);
  const std::vector<std::size_t> half{30, 50, 50, 2};
  const auto hl = mlp_layers(half);
  EXPECT_EQ(hl[1].weight_count() * 2, layers[1].weight_count() / 2);
  EXPECT_EQ(cost(hl).flops, counted_flops(hl));
}

TEST(Compaction, NonzeroCountFollowsMask) {
  Rng rng(7);
  Network net = oracle::random_network(rng, {3, 4, 2});
  std::vector<std::uint8_t> bits(net.num_params(), 1);
  bits[0] = bits[5] = 0;
  apply_mask(net, bits);
  EXPECT_EQ(cost(net).params_nonzero, net.num_params() - 2);
  EXPECT_EQ(cost(net).params_total, net.num_params());
}

TEST(Compaction, CostIsMonotoneInTarget) {
  Rng rng(8);
  const Network net = oracle::random_network(rng, {10, 20, 20, 3});
  CostReport prev = cost(plan(net));
  for (double t : {0.2, 0.4, 0.6, 0.9}) {
    const CostReport c = cost(plan(structured_pruned(net, t)));
    EXPECT_LE(c.params_total, prev.params_total);
    EXPECT_LE(c.params_nonzero, prev.params_nonzero);
    EXPECT_LE(c.flops, prev.flops);
    EXPECT_LE(c.bytes, prev.bytes);
    prev = c;
  }
}

TEST(Compaction, PipelineHalvesCancerHiddenLayers) {
  Rng rng(9);
  const Dataset ds = synth_blobs(rng, 120, 30, 2, 1.0);
  const std::vector<std::size_t> w{30, 100, 100, 2};
  const Network net = Network::initialized(mlp_layers(w), rng);
  StructuredPipelineConfig cfg;
  cfg.criterion = Criterion::Magnitude;
  cfg.target = 0.5;
  cfg.finetune.epochs = 0;
  const auto out = structured_pipeline(net, Likelihood::categorical(), ds, ds, nullptr, cfg);
  EXPECT_EQ(out.compact_net.layer(0).out_dim, 50u);
  EXPECT_EQ(out.compact_net.layer(1).out_dim, 50u);
  EXPECT_EQ(out.compact_net.layer(1).weight_count() * 4, net.layer(1).weight_count());
  EXPECT_EQ(out.record.cost, cost(out.compact_net));
  EXPECT_EQ(out.record.criterion, "magnitude");
  EXPECT_EQ(out.record.eval.n, ds.size());
  EXPECT_GT(out.record.realized_sparsity, 0.0);

  cfg.target = 0.0;
  const auto same = structured_pipeline(net, Likelihood::categorical(), ds, ds, nullptr, cfg);
  EXPECT_EQ(same.compact_net.layers(), net.layers());
  EXPECT_TRUE(std::equal(same.compact_net.params().begin(), same.compact_net.params().end(), net.params().begin()));
}
