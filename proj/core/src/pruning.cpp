#include "spam/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spam/error.hpp"

namespace spam {

std::string to_string(Criterion c) {
  switch (c) {
    case Criterion::Opd: return "opd";
    case Criterion::Magnitude: return "magnitude";
    case Criterion::Random: return "random";
    case Criterion::Snip: return "snip";
    case Criterion::Grasp: return "grasp";
    case Criterion::Synflow: return "synflow";
  }
  return "?";
}

Criterion criterion_from_string(const std::string& name) {
  for (auto c : {Criterion::Opd, Criterion::Magnitude, Criterion::Random, Criterion::Snip, Criterion::Grasp,
                 Criterion::Synflow})
    if (to_string(c) == name) return c;
  throw ConfigError("unknown pruning criterion '" + name + "'");
}

std::string to_string(Scope s) { return s == Scope::Global ? "global" : "uniform"; }

Scope scope_from_string(const std::string& name) {
  if (name == "global") return Scope::Global;
  if (name == "uniform") return Scope::Uniform;
  throw ConfigError("unknown pruning scope '" + name + "'");
}

namespace {

ScoreVector unstructured(Criterion c, std::vector<double> values) {
  ScoreVector s;
  s.criterion = c;
  s.values = std::move(values);
  return s;
}

std::uint64_t batch_fingerprint(const Dataset& batch) {
  return params_fingerprint(batch.features.values()) ^ mix64(params_fingerprint(batch.targets.values()));
}

}  // namespace

ScoreVector score_opd(const Network& net, const PosteriorState& ps) {
  const auto theta = net.effective_params();
  if (ps.num_params() != theta.size() || ps.snapshot_id() != params_fingerprint(theta)) {
    throw StalenessError("score_opd: posterior snapshot does not match the network's current parameters");
  }
  auto values = posterior_diag(ps);
  for (std::size_t p = 0; p < values.size(); ++p) values[p] *= theta[p] * theta[p];
  auto s = unstructured(Criterion::Opd, std::move(values));
  s.snapshot_id = ps.snapshot_id();
  return s;
}

ScoreVector score_magnitude(const Network& net) {
  auto values = net.effective_params();
  for (double& v : values) v = std::abs(v);
  return unstructured(Criterion::Magnitude, std::move(values));
}

ScoreVector score_random(const Network& net, Rng& rng) {
  std::vector<double> values(net.num_params());
  for (double& v : values) v = rng.uniform();
  return unstructured(Criterion::Random, std::move(values));
}

std::vector<double> mean_nll_gradient(const Network& net, const Likelihood& lik, const Dataset& batch) {
  if (batch.empty()) throw StructuralError("scoring batch is empty");
  const auto cache = forward_cached(net, batch.features);
  auto g = backward(net, cache, output_grads(lik, cache.output, batch.targets)).gradient;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& v : g) v *= inv;
  return g;
}

ScoreVector score_snip(const Network& net, const Likelihood& lik, const Dataset& batch) {
  const auto theta = net.effective_params();
  auto g = mean_nll_gradient(net, lik, batch);
  for (std::size_t p = 0; p < g.size(); ++p) g[p] = std::abs(theta[p] * g[p]);
  auto s = unstructured(Criterion::Snip, std::move(g));
  s.batch_id = batch_fingerprint(batch);
  return s;
}

std::vector<double> hvp_central_difference(const GradientFn& grad, std::span<const double> theta,
                                           std::span<const double> v) {
  const std::size_t n = theta.size();
  if (v.size() != n) throw StructuralError("hvp: vector length mismatch");
  double norm = 0.0, theta_max = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    norm += v[p] * v[p];
    theta_max = std::max(theta_max, std::abs(theta[p]));
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) return std::vector<double>(n, 0.0);
  const double eps = 1e-3 * (1.0 + theta_max);
  std::vector<double> plus(theta.begin(), theta.end()), minus(theta.begin(), theta.end());
  for (std::size_t p = 0; p < n; ++p) {
    plus[p] += eps * v[p] / norm;
    minus[p] -= eps * v[p] / norm;
  }
  const auto gp = grad(plus);
  const auto gm = grad(minus);
  std::vector<double> hv(n);
  for (std::size_t p = 0; p < n; ++p) {
    hv[p] = (gp[p] - gm[p]) / (2.0 * eps) * norm;
    if (!std::isfinite(hv[p])) throw NumericalError("hvp: non-finite Hessian-vector product");
  }
  return hv;
}

ScoreVector score_grasp(const Network& net, const Likelihood& lik, const Dataset& batch) {
  const auto theta = net.effective_params();
  const auto g = mean_nll_gradient(net, lik, batch);
  Network probe = net;
  const GradientFn grad = [&](std::span<const double> w) {
    probe.set_params(std::vector<double>(w.begin(), w.end()));
    return mean_nll_gradient(probe, lik, batch);
  };
  auto hg = hvp_central_difference(grad, theta, g);
  for (std::size_t p = 0; p < hg.size(); ++p) hg[p] = std::abs(theta[p] * hg[p]);
  auto s = unstructured(Criterion::Grasp, std::move(hg));
  s.batch_id = batch_fingerprint(batch);
  return s;
}

ScoreVector score_synflow(const Network& net) {
  const auto theta = net.effective_params();
  Network probe(net.layers());
  std::vector<double> w(theta.size());
  for (std::size_t p = 0; p < w.size(); ++p) w[p] = net.coord(p).is_bias ? 0.0 : std::abs(theta[p]);
  probe.set_params(std::move(w));
  const Matrix ones(1, net.input_dim(), 1.0);
  const Matrix up(1, net.output_dim(), 1.0);
  auto g = backward(probe, ones, up).gradient;
  for (std::size_t p = 0; p < g.size(); ++p) g[p] = std::abs(theta[p] * g[p]);
  return unstructured(Criterion::Synflow, std::move(g));
}

ScoreVector score_structured(const ScoreVector& scores, const Network& net, bool exempt_last) {
  if (scores.structured) throw StructuralError("score_structured: scores are already structured");
  if (scores.values.size() != net.num_params()) throw StructuralError("score_structured: score length mismatch");
  ScoreVector out;
  out.criterion = scores.criterion;
  out.structured = true;
  out.snapshot_id = scores.snapshot_id;
  out.batch_id = scores.batch_id;
  const std::size_t layers = exempt_last ? net.num_layers() - 1 : net.num_layers();
  for (std::size_t l = 0; l < layers; ++l)
    for (std::size_t j = 0; j < net.unit_count(l); ++j) {
      double s = 0.0;
      for (std::size_t p : net.structure_params(l, j)) s += scores.values[p];
      out.units.push_back({l, j});
      out.values.push_back(s);
    }
  return out;
}

namespace {

// Indices of the k smallest (priority, score, index) triples.
std::vector<std::size_t> lowest(std::span<const std::size_t> candidates, std::span<const double> values,
                                std::span<const std::uint8_t> first, std::size_t k) {
  std::vector<std::size_t> order(candidates.begin(), candidates.end());
  auto less = [&](std::size_t a, std::size_t b) {
    const int fa = first.empty() ? 0 : (first[a] ? 0 : -1);
    const int fb = first.empty() ? 0 : (first[b] ? 0 : -1);
    if (fa != fb) return fa < fb;
    if (values[a] != values[b]) return values[a] < values[b];
    return a < b;
  };
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), less);
  order.resize(k);
  return order;
}

void check_scores(std::span<const double> values) {
  for (double v : values)
    if (!std::isfinite(v) || v < 0.0) throw NumericalError("make_mask: scores must be finite and nonnegative");
}

std::size_t floor_count(double s, std::size_t n) {
  return static_cast<std::size_t>(std::floor(s * static_cast<double>(n)));
}

}  // namespace

PruneMask make_mask(const ScoreVector& scores, const Network& net, const MaskOptions& opts) {
  if (!(opts.sparsity >= 0.0 && opts.sparsity < 1.0)) throw ConfigError("make_mask: sparsity must lie in [0, 1)");
  check_scores(scores.values);
  const std::size_t total = net.num_params();
  PruneMask m;
  m.bits.assign(total, 1);
  m.requested = opts.sparsity;
  m.scope = opts.scope;
  m.structured = scores.structured;
  m.exempt_last = opts.exempt_last;

  if (!scores.structured) {
    if (scores.values.size() != total) throw StructuralError("make_mask: score length mismatch");
    std::span<const std::uint8_t> existing;
    if (net.has_mask()) existing = *net.mask();
    if (opts.scope == Scope::Global) {
      std::vector<std::size_t> all(total);
      std::iota(all.begin(), all.end(), 0);
      for (std::size_t p : lowest(all, scores.values, existing, floor_count(opts.sparsity, total))) m.bits[p] = 0;
    } else {
      for (std::size_t l = 0; l < net.num_layers(); ++l) {
        std::vector<std::size_t> block(net.layer_param_count(l));
        std::iota(block.begin(), block.end(), net.layer_offset(l));
        for (std::size_t p : lowest(block, scores.values, existing, floor_count(opts.sparsity, block.size())))
          m.bits[p] = 0;
      }
    }
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      const auto off = net.layer_offset(l);
      const auto cnt = net.layer_param_count(l);
      if (std::all_of(m.bits.begin() + static_cast<std::ptrdiff_t>(off),
                      m.bits.begin() + static_cast<std::ptrdiff_t>(off + cnt), [](auto b) { return b == 0; }))
        m.warnings.push_back("layer " + std::to_string(l) + " is pruned entirely");
    }
    m.sparsity = mask_sparsity(m.bits);
    return m;
  }

  if (scores.values.size() != scores.units.size()) throw StructuralError("make_mask: structured scores lack units");
  const std::size_t last = net.num_layers() - 1;
  std::vector<std::vector<std::size_t>> by_layer(net.num_layers());
  for (std::size_t k = 0; k < scores.units.size(); ++k) {
    const auto& u = scores.units[k];
    if (u.layer >= net.num_layers() || u.unit >= net.unit_count(u.layer))
      throw StructuralError("make_mask: unit out of range");
    if (opts.exempt_last && u.layer == last) continue;
    by_layer[u.layer].push_back(k);
  }
  std::vector<std::size_t> removed;
  if (opts.scope == Scope::Uniform) {
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      if (by_layer[l].empty()) continue;
      const double units = static_cast<double>(net.unit_count(l));
      if (opts.sparsity > 0.0 && opts.sparsity >= 1.0 - 1.0 / units)
        throw StructuralError("layer collapse: sparsity " + std::to_string(opts.sparsity) + " leaves layer " +
                              std::to_string(l) + " with at most one unit");
      for (std::size_t k : lowest(by_layer[l], scores.values, {}, floor_count(opts.sparsity, by_layer[l].size())))
        removed.push_back(k);
    }
  } else {
    std::vector<std::size_t> all;
    for (const auto& v : by_layer) all.insert(all.end(), v.begin(), v.end());
    removed = lowest(all, scores.values, {}, floor_count(opts.sparsity, all.size()));
    std::vector<std::size_t> gone(net.num_layers(), 0);
    for (std::size_t k : removed) ++gone[scores.units[k].layer];
    for (std::size_t l = 0; l < net.num_layers(); ++l)
      if (gone[l] == net.unit_count(l))
        throw StructuralError("layer collapse: every unit of layer " + std::to_string(l) + " would be removed");
  }
  std::sort(removed.begin(), removed.end(), [&](std::size_t a, std::size_t b) {
    const auto& ua = scores.units[a];
    const auto& ub = scores.units[b];
    return ua.layer != ub.layer ? ua.layer < ub.layer : ua.unit < ub.unit;
  });
  for (std::size_t k : removed) {
    const auto u = scores.units[k];
    m.removed_units.push_back(u);
    for (std::size_t p : net.structure_params(u.layer, u.unit)) m.bits[p] = 0;
    if (u.layer + 1 < net.num_layers()) {
      // Outgoing column: weights (unit -> k) of the next layer are contiguous.
      const auto& next = net.layer(u.layer + 1);
      const std::size_t start = net.layer_offset(u.layer + 1) + u.unit * next.out_dim;
      std::fill_n(m.bits.begin() + static_cast<std::ptrdiff_t>(start), next.out_dim, 0);
    }
  }
  m.sparsity = mask_sparsity(m.bits);
  return m;
}

double mask_sparsity(std::span<const std::uint8_t> bits) {
  if (bits.empty()) return 0.0;
  const auto zeros = static_cast<double>(std::count(bits.begin(), bits.end(), 0));
  return zeros / static_cast<double>(bits.size());
}

void apply_mask(Network& net, std::span<const std::uint8_t> bits) {
  if (bits.size() != net.num_params()) throw StructuralError("apply_mask: mask length does not match the network");
  std::vector<std::uint8_t> merged(bits.begin(), bits.end());
  for (auto& b : merged) b = b ? 1 : 0;
  if (net.has_mask())
    for (std::size_t p = 0; p < merged.size(); ++p) merged[p] &= (*net.mask())[p];
  net.set_mask(std::move(merged));
}

void apply_mask(Network& net, const PruneMask& mask) { apply_mask(net, mask.bits); }

Dataset scoring_batch(const Dataset& data, std::size_t size, std::uint64_t seed) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(idx));
  idx.resize(std::min(size, idx.size()));
  std::sort(idx.begin(), idx.end());
  return data.subset(idx);
}

ScoreVector compute_scores(Criterion c, const Network& net, const Likelihood& lik, const PosteriorState* ps,
                           const Dataset* batch, Rng& rng) {
  auto need_batch = [&]() -> const Dataset& {
    if (batch == nullptr || batch->empty()) throw ConfigError(to_string(c) + " scoring needs a data batch");
    return *batch;
  };
  switch (c) {
    case Criterion::Opd:
      if (ps == nullptr) throw ConfigError("opd scoring needs a posterior; train with spam first");
      return score_opd(net, *ps);
    case Criterion::Magnitude: return score_magnitude(net);
    case Criterion::Random: return score_random(net, rng);
    case Criterion::Snip: return score_snip(net, lik, need_batch());
    case Criterion::Grasp: return score_grasp(net, lik, need_batch());
    case Criterion::Synflow: return score_synflow(net);
  }
  throw ConfigError("unknown criterion");
}

}  // namespace spam
