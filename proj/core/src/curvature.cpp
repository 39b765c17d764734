#include "spam/curvature.hpp"

#include <algorithm>
#include <numeric>

#include "spam/error.hpp"

namespace spam {

std::string to_string(KfacMode m) {
  switch (m) {
    case KfacMode::EmpiricalFisher: return "ef";
    case KfacMode::GgnSampled: return "ggn-sampled";
    case KfacMode::GgnExact: return "ggn-exact";
  }
  return "unknown";
}

namespace {

void check_compatible(const Network& net, const Likelihood& lik, const Dataset& data) {
  if (data.dim() != net.input_dim()) throw StructuralError("curvature: data feature count does not match the network");
  if (data.targets.cols() != lik.target_width(net.output_dim())) {
    throw StructuralError("curvature: target width does not match the likelihood");
  }
}

// h += sum over rows of squared per-row gradients, for every layer.
void accumulate_squared(const Network& net, const BatchActivations& act, std::vector<double>& h) {
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto& s = net.layer(l);
    const Matrix g2 = squared(act.output_grads[l]);
    const Matrix w = matmul_tn(squared(act.inputs[l]), g2);  // D_in x D_out == layer layout
    const std::size_t off = net.layer_offset(l);
    for (std::size_t k = 0; k < w.size(); ++k) h[off + k] += w.data()[k];
    if (s.has_bias) {
      double* hb = h.data() + off + s.weight_count();
      for (std::size_t r = 0; r < g2.rows(); ++r) {
        const auto row = g2.row(r);
        for (std::size_t j = 0; j < s.out_dim; ++j) hb[j] += row[j];
      }
    }
  }
}

template <typename Fn>
void for_each_chunk(std::size_t n, std::size_t chunk, Fn&& fn) {
  if (chunk == 0) chunk = n;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t end = std::min(n, start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    fn(idx);
  }
}

// Upstream matrices, one per column of the per-sample output-Hessian factor.
std::vector<Matrix> factor_upstreams(const Likelihood& lik, const Matrix& f, const Matrix& y) {
  const std::size_t n = f.rows();
  const std::size_t c = f.cols();
  std::vector<Matrix> ups(c, Matrix(n, c));
  for (std::size_t r = 0; r < n; ++r) {
    const Matrix l = hessian_factor(lik, f.row(r), y.row(r));
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t i = 0; i < c; ++i) ups[k](r, i) = l(i, k);
  }
  return ups;
}

}  // namespace

DiagCurvature ggn_diag(const Network& net, const Likelihood& lik, const Dataset& data, std::size_t chunk) {
  check_compatible(net, lik, data);
  DiagCurvature out{std::vector<double>(net.num_params(), 0.0)};
  for_each_chunk(data.size(), chunk, [&](const std::vector<std::size_t>& idx) {
    const Matrix x = gather_rows(data.features, idx);
    const Matrix y = gather_rows(data.targets, idx);
    const ForwardCache cache = forward_cached(net, x);
    for (const Matrix& up : factor_upstreams(lik, cache.output, y))
      accumulate_squared(net, backward(net, cache, up).activations, out.h);
  });
  return out;
}

DiagCurvature ef_diag(const Network& net, const Likelihood& lik, const Dataset& data, std::size_t chunk) {
  check_compatible(net, lik, data);
  DiagCurvature out{std::vector<double>(net.num_params(), 0.0)};
  for_each_chunk(data.size(), chunk, [&](const std::vector<std::size_t>& idx) {
    const Matrix x = gather_rows(data.features, idx);
    const Matrix y = gather_rows(data.targets, idx);
    const ForwardCache cache = forward_cached(net, x);
    accumulate_squared(net, backward(net, cache, output_grads(lik, cache.output, y)).activations, out.h);
  });
  return out;
}

KfacCurvature kfac(const Network& net, const Likelihood& lik, const Dataset& data, KfacMode mode, std::uint64_t seed,
                   std::size_t chunk) {
  check_compatible(net, lik, data);
  Rng rng(seed);
  KfacCurvature out;
  for (const auto& s : net.layers()) {
    const std::size_t da = s.in_dim + (s.has_bias ? 1 : 0);
    out.layers.push_back({Matrix(da, da), Matrix(s.out_dim, s.out_dim), {}, {}});
  }

  auto add_g = [&](const BatchActivations& act) {
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      const Matrix gg = matmul_tn(act.output_grads[l], act.output_grads[l]);
      out.layers[l].g = out.layers[l].g + gg;
    }
  };

  for_each_chunk(data.size(), chunk, [&](const std::vector<std::size_t>& idx) {
    const Matrix x = gather_rows(data.features, idx);
    const Matrix y = gather_rows(data.targets, idx);
    const ForwardCache cache = forward_cached(net, x);

    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      const auto& s = net.layer(l);
      Matrix a = cache.inputs[l];
      if (s.has_bias) {
        Matrix aug(a.rows(), a.cols() + 1, 1.0);
        for (std::size_t r = 0; r < a.rows(); ++r) std::copy(a.row(r).begin(), a.row(r).end(), aug.row(r).begin());
        a = std::move(aug);
      }
      out.layers[l].a = out.layers[l].a + matmul_tn(a, a);
    }

    switch (mode) {
      case KfacMode::EmpiricalFisher:
        add_g(backward(net, cache, output_grads(lik, cache.output, y)).activations);
        break;
      case KfacMode::GgnSampled: {
        Matrix sampled(y.rows(), y.cols());
        for (std::size_t r = 0; r < y.rows(); ++r) {
          const auto t = sample_target(lik, cache.output.row(r), rng);
          std::copy(t.begin(), t.end(), sampled.row(r).begin());
        }
        add_g(backward(net, cache, output_grads(lik, cache.output, sampled)).activations);
        break;
      }
      case KfacMode::GgnExact:
        for (const Matrix& up : factor_upstreams(lik, cache.output, y)) add_g(backward(net, cache, up).activations);
        break;
    }
  });

  const double inv_n = data.empty() ? 0.0 : 1.0 / static_cast<double>(data.size());
  for (auto& f : out.layers) {
    f.a = symmetrized(inv_n * f.a);
    f.g = symmetrized(f.g);
    f.eig_a = sym_eig(f.a);
    f.eig_g = sym_eig(f.g);
  }
  return out;
}

std::vector<double> kfac_diag(const KfacCurvature& k, std::size_t layer) {
  if (layer >= k.layers.size()) throw StructuralError("kfac_diag: layer out of range");
  const auto& f = k.layers[layer];
  const std::size_t da = f.a.rows();
  const std::size_t dg = f.g.rows();
  std::vector<double> d(da * dg);
  for (std::size_t i = 0; i < da; ++i)
    for (std::size_t j = 0; j < dg; ++j) d[i * dg + j] = f.a(i, i) * f.g(j, j);
  return d;
}

}  // namespace spam
