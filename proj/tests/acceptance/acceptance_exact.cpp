// Exact and property criteria 1-8. Every check is deterministic.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "harness.hpp"
#include "oracles.hpp"
#include "spam/compaction.hpp"
#include "spam/curvature.hpp"
#include "spam/laplace.hpp"
#include "spam/prior.hpp"
#include "spam/pruning.hpp"

using namespace spam;
using acceptance::fmt;
using acceptance::Verdicts;

namespace {

std::vector<double> random_positive(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = std::exp(rng.normal());
  return v;
}

std::vector<std::size_t> stable_argsort(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  return idx;
}

void conjugate_exactness(Verdicts& v, int id) {
  Rng rng(101);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t d = 1 + rng.index(10);
    const std::size_t n = d + 1 + rng.index(50 - d);
    const double sigma2 = std::exp(rng.normal());
    const double delta = std::exp(rng.normal());
    const Dataset ds = oracle::random_regression(rng, n, d, 1);
    Network net(mlp_layers(std::vector<std::size_t>{d, 1}, Activation::Identity, false));
    net.set_params(oracle::linear_gaussian_mode(ds.features, ds.targets.values(), sigma2, delta));
    const auto lik = Likelihood::gaussian(sigma2);
    const PosteriorState ps(net, kfac(net, lik, ds, KfacMode::GgnExact), std::vector<double>(d, delta));
    const double got = log_marglik(net, lik, ds, ps).total;
    const double want = oracle::linear_gaussian_evidence(ds.features, ds.targets.values(), sigma2, delta);
    worst = std::max(worst, std::abs(got - want) / std::abs(want));
  }
  v.record(id, worst <= 1e-6, "max rel error " + fmt(worst) + " over 20 instances (tol 1e-6)");
}

void correction_oracle(Verdicts& v, int id) {
  Rng rng(102);
  double worst = 0.0, worst_resid = 0.0;
  for (int t = 0; t < 20; ++t) {
    const SymEig a = sym_eig(oracle::random_spd(rng, 3));
    const SymEig g = sym_eig(oracle::random_spd(rng, 4));
    const auto d = random_positive(rng, 12);
    const auto lam = kfac_prior_correction(a, g, d);
    const Matrix q = kron(a.eigenvectors, g.eigenvectors);
    const Matrix conj = matmul(matmul_tn(q, Matrix::diagonal(d)), q);
    std::vector<double> dhat(12);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        dhat[i * 4 + j] = lam[i * 4 + j] - a.eigenvalues[i] * g.eigenvalues[j];
    const Matrix resid = conj - Matrix::diagonal(dhat);
    for (std::size_t p = 0; p < 12; ++p) {
      worst = std::max(worst, std::abs(dhat[p] - conj(p, p)));
      worst_resid = std::max(worst_resid, std::abs(resid(p, p)));
    }
  }
  v.record(id, worst <= 1e-10 && worst_resid <= 1e-10,
           "max-abs diagonal error " + fmt(worst) + ", residual diagonal " + fmt(worst_resid) + " (tol 1e-10)");
}

void kfac_logdet(Verdicts& v, int id) {
  Rng rng(103);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t in = 1 + rng.index(4), out = 1 + rng.index(4);
    const Network net = oracle::random_network(rng, {in, out}, Activation::Tanh, rng.uniform() < 0.5);
    KfacCurvature k;
    KfacFactors f;
    f.a = oracle::random_spd(rng, net.layer(0).in_dim + (net.layer(0).has_bias ? 1 : 0));
    f.g = oracle::random_spd(rng, out);
    f.eig_a = sym_eig(f.a);
    f.eig_g = sym_eig(f.g);
    k.layers.push_back(f);
    const PosteriorState ps(net, k, random_positive(rng, net.num_params()));
    const Matrix q = kron(f.eig_a.eigenvectors, f.eig_g.eigenvectors);
    const Matrix p = matmul_nt(matmul(q, Matrix::diagonal(ps.corrected_eigenvalues()[0])), q);
    const double want = oracle::logdet_spd(symmetrized(p));
    worst = std::max(worst, std::abs(log_det(ps) - want) / std::max(1.0, std::abs(want)));
  }
  v.record(id, worst <= 1e-8, "max rel error " + fmt(worst) + " over 20 layers (tol 1e-8)");
}

void marglik_gradient(Verdicts& v, int id) {
  Rng rng(104);
  const auto lik = Likelihood::categorical();
  const Network net = oracle::random_network(rng, {2, 4, 3}, Activation::Tanh);
  const Dataset ds = oracle::random_classification(rng, 10, 2, 3);
  const double nll = total_nll(lik, forward(net, ds.features), ds.targets);
  const std::vector<std::pair<std::string, CurvatureEstimate>> curvatures{
      {"diag", ggn_diag(net, lik, ds)}, {"kfac", kfac(net, lik, ds, KfacMode::GgnExact)}};
  double worst = 0.0;
  std::string where;
  for (const auto& [cname, curv] : curvatures)
    for (auto kind : {PriorKind::Scalar, PriorKind::LayerWise, PriorKind::UnitWise, PriorKind::ParameterWise}) {
      PriorSpec spec = PriorSpec::uniform(kind, net, 1.0);
      for (auto& u : spec.log_delta) u = 0.5 * rng.normal();
      const PosteriorState ps(net, curv, expand(spec, net));
      const auto g = chain_to_hypers(spec, net, marglik_grad_delta(ps));
      const auto ref = oracle::fd_gradient(
          [&](std::span<const double> u) {
            PriorSpec s = spec;
            s.log_delta.assign(u.begin(), u.end());
            return log_marglik(ps.with_delta(expand(s, net)), nll).total;
          },
          spec.log_delta, 1e-5);
      const double e = oracle::max_rel_error(g, ref, 1e-3);
      if (e > worst) {
        worst = e;
        where = cname + "/" + to_string(kind);
      }
    }
  v.record(id, worst <= 1e-4, "max rel error " + fmt(worst) + " (worst " + where + ", tol 1e-4)");
}

void ggn_diagonal(Verdicts& v, int id) {
  Rng rng(105);
  const auto lik = Likelihood::categorical();
  const std::vector<std::vector<std::size_t>> shapes{{2, 2, 2}, {3, 5, 4}, {4, 8, 6, 3}, {5, 10, 8, 3}};
  double worst = 0.0;
  std::size_t largest = 0;
  for (const auto& w : shapes)
    for (auto act : {Activation::Tanh, Activation::ReLU}) {
      const Network net = oracle::random_network(rng, w, act);
      largest = std::max(largest, net.num_params());
      const Dataset ds = oracle::random_classification(rng, 12, w.front(), w.back());
      const auto h = ggn_diag(net, lik, ds, 5).h;
      const auto ref = oracle::dense_ggn(net, lik, ds).diag();
      for (std::size_t p = 0; p < h.size(); ++p) worst = std::max(worst, std::abs(h[p] - ref[p]));
    }
  v.record(id, worst <= 1e-8 && largest <= 200,
           "max-abs error " + fmt(worst) + " on nets up to " + std::to_string(largest) + " params (tol 1e-8)");
}

void compaction_equivalence(Verdicts& v, int id) {
  Rng rng(106);
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    Network net = oracle::random_network(rng, {30, 100, 100, 2}, t % 2 ? Activation::Tanh : Activation::ReLU);
    const double target = rng.uniform(0.05, 0.95);
    apply_mask(net, make_mask(score_structured(score_random(net, rng), net), net, {target, Scope::Uniform}));
    const Network c = compact(net, plan(net));
    const Matrix x = oracle::random_matrix(rng, 100, 30, 2.0);
    worst = std::max(worst, max_abs_diff(forward(c, x), forward(net, x)));
  }
  v.record(id, worst <= 1e-12, "max-abs output difference " + fmt(worst) + " over 10 masks (tol 1e-12)");
}

void mask_exactness(Verdicts& v, int id) {
  Rng rng(107);
  std::size_t bad = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::vector<std::size_t> w{1 + rng.index(8), 1 + rng.index(8), 1 + rng.index(5)};
    const Network net(mlp_layers(w, Activation::ReLU, rng.uniform() < 0.7));
    ScoreVector s;
    s.values.resize(net.num_params());
    // Coarse values force plenty of ties.
    for (auto& x : s.values) x = std::floor(5 * rng.uniform());
    const double sp = rng.uniform(0.0, 0.999);
    const auto zeros = [](const PruneMask& m) { return std::count(m.bits.begin(), m.bits.end(), 0); };
    const auto g = make_mask(s, net, {sp, Scope::Global});
    bad += zeros(g) != static_cast<long>(std::floor(sp * net.num_params()));
    long want = 0;
    for (std::size_t l = 0; l < net.num_layers(); ++l) want += static_cast<long>(std::floor(sp * net.layer_param_count(l)));
    bad += zeros(make_mask(s, net, {sp, Scope::Uniform})) != want;
  }
  v.record(id, bad == 0, std::to_string(bad) + " mismatches over 1000 score vectors x 2 scopes");
}

void opd_magnitude_identity(Verdicts& v, int id) {
  Rng rng(108);
  std::size_t bad = 0;
  for (int t = 0; t < 100; ++t) {
    const std::vector<std::size_t> w{2 + rng.index(6), 2 + rng.index(10), 2 + rng.index(4)};
    const Network net = oracle::random_network(rng, w, Activation::ReLU, true, 1.0);
    const std::size_t p = net.num_params();
    const PosteriorState ps(net, DiagCurvature{std::vector<double>(p, 0.0)},
                            std::vector<double>(p, std::exp(rng.normal())));
    bad += stable_argsort(score_opd(net, ps).values) != stable_argsort(score_magnitude(net).values);
  }
  v.record(id, bad == 0, std::to_string(bad) + " ordering mismatches over 100 nets");
}

}  // namespace

int main() {
  Verdicts v;
  v.check(1, conjugate_exactness);
  v.check(2, correction_oracle);
  v.check(3, kfac_logdet);
  v.check(4, marglik_gradient);
  v.check(5, ggn_diagonal);
  v.check(6, compaction_equivalence);
  v.check(7, mask_exactness);
  v.check(8, opd_magnitude_identity);
  return v.finish() == 0 ? 0 : 1;
}
