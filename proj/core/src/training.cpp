#include "spam/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "spam/error.hpp"
#include "spam/metrics.hpp"

namespace spam {

std::string to_string(CurvatureKind k) {
  switch (k) {
    case CurvatureKind::DiagGgn: return "diag_ggn";
    case CurvatureKind::DiagEf: return "diag_ef";
    case CurvatureKind::KfacEf: return "kfac_ef";
    case CurvatureKind::KfacGgn: return "kfac_ggn";
    case CurvatureKind::KfacGgnExact: return "kfac_ggn_exact";
  }
  return "?";
}

CurvatureKind curvature_kind_from_string(const std::string& name) {
  for (auto k : {CurvatureKind::DiagGgn, CurvatureKind::DiagEf, CurvatureKind::KfacEf, CurvatureKind::KfacGgn,
                 CurvatureKind::KfacGgnExact})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown curvature '" + name + "'");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(min_lr >= 0.0) || min_lr > lr) throw ConfigError("min_lr must lie in [0, lr]");
  if (const auto* s = std::get_if<SgdOptions>(&optimizer); s && !(s->momentum >= 0.0 && s->momentum < 1.0))
    throw ConfigError("momentum must lie in [0, 1)");
  if (const auto* m = std::get_if<MapMode>(&mode); m && !m->prior && !(m->delta >= 0.0))
    throw ConfigError("prior precision must be nonnegative");
  if (const auto* l = std::get_if<L1Mode>(&mode); l && !(l->lambda >= 0.0))
    throw ConfigError("l1 lambda must be nonnegative");
  if (const auto* s = std::get_if<SpamMode>(&mode)) {
    if (s->frequency == 0) throw ConfigError("marglik_frequency must be at least 1");
    if (!(s->hyper_lr > 0.0)) throw ConfigError("hyper_lr must be positive");
    if (!(s->prior_init > 0.0)) throw ConfigError("prior_init must be positive");
    if (!(s->temperature >= 1.0)) throw ConfigError("temperature must be at least 1");
  }
}

std::string TrainLog::to_jsonl() const {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : nlohmann::json(nullptr); };
  std::ostringstream out;
  for (const auto& r : epochs) {
    nlohmann::json j = {{"epoch", r.epoch},
                        {"lr", r.lr},
                        {"train_loss", num(r.train_loss)},
                        {"train_accuracy", num(r.train_accuracy)},
                        {"val_accuracy", opt(r.val_accuracy)},
                        {"log_marglik", opt(r.log_marglik)},
                        {"delta_min", r.delta_min},
                        {"delta_median", r.delta_median},
                        {"delta_max", r.delta_max},
                        {"sparsity", r.sparsity},
                        {"elapsed_s", r.elapsed_s}};
    out << j.dump() << '\n';
  }
  return out.str();
}

bool TrainLog::same_trajectory(const TrainLog& other) const {
  if (epochs.size() != other.epochs.size()) return false;
  auto eq = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
  auto eq_opt = [&](const std::optional<double>& a, const std::optional<double>& b) {
    return a.has_value() == b.has_value() && (!a || eq(*a, *b));
  };
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto& a = epochs[i];
    const auto& b = other.epochs[i];
    if (a.epoch != b.epoch || !eq(a.lr, b.lr) || !eq(a.train_loss, b.train_loss) ||
        !eq(a.train_accuracy, b.train_accuracy) || !eq_opt(a.val_accuracy, b.val_accuracy) ||
        !eq_opt(a.log_marglik, b.log_marglik) || !eq(a.delta_min, b.delta_min) ||
        !eq(a.delta_median, b.delta_median) || !eq(a.delta_max, b.delta_max) || !eq(a.sparsity, b.sparsity))
      return false;
  }
  return true;
}

double ramp_sparsity(const OnlinePruneConfig& p, std::size_t epoch, std::size_t burnin, std::size_t epochs) {
  if (epoch < burnin) return 0.0;
  if (epochs <= burnin) return p.target;
  const double t = std::min(1.0, static_cast<double>(epoch - burnin) / static_cast<double>(epochs - burnin));
  const double frac = p.ramp == Ramp::Linear ? t : 1.0 - std::pow(1.0 - t, 3);
  return p.target * frac;
}

CurvatureEstimate estimate_curvature(CurvatureKind kind, const Network& net, const Likelihood& lik,
                                     const Dataset& data, std::uint64_t seed) {
  switch (kind) {
    case CurvatureKind::DiagGgn: return ggn_diag(net, lik, data);
    case CurvatureKind::DiagEf: return ef_diag(net, lik, data);
    case CurvatureKind::KfacEf: return kfac(net, lik, data, KfacMode::EmpiricalFisher, seed);
    case CurvatureKind::KfacGgn: return kfac(net, lik, data, KfacMode::GgnSampled, seed);
    case CurvatureKind::KfacGgnExact: return kfac(net, lik, data, KfacMode::GgnExact, seed);
  }
  throw ConfigError("unknown curvature kind");
}

namespace {

using Clock = std::chrono::steady_clock;

// Log-hyperparameters are kept in this range so exp() stays well inside
// double precision even when a precision keeps growing for a dead weight.
constexpr double kLogDeltaBound = 20.0;

class Optimizer {
 public:
  explicit Optimizer(OptimizerOptions opts) : opts_(opts) {}

  void step(std::span<double> theta, std::span<const double> grad, double lr) {
    if (m_.size() != theta.size()) {
      m_.assign(theta.size(), 0.0);
      v_.assign(theta.size(), 0.0);
    }
    if (const auto* a = std::get_if<AdamOptions>(&opts_)) {
      ++t_;
      const double c1 = 1.0 - std::pow(a->beta1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(a->beta2, static_cast<double>(t_));
      for (std::size_t p = 0; p < theta.size(); ++p) {
        m_[p] = a->beta1 * m_[p] + (1.0 - a->beta1) * grad[p];
        v_[p] = a->beta2 * v_[p] + (1.0 - a->beta2) * grad[p] * grad[p];
        theta[p] -= lr * (m_[p] / c1) / (std::sqrt(v_[p] / c2) + a->eps);
      }
      return;
    }
    const double mu = std::get<SgdOptions>(opts_).momentum;
    for (std::size_t p = 0; p < theta.size(); ++p) {
      m_[p] = mu * m_[p] + grad[p];
      theta[p] -= lr * m_[p];
    }
  }

 private:
  OptimizerOptions opts_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

// Penalty added to the summed NLL: 1/2 sum delta theta^2, or lambda sum |theta|.
struct Penalty {
  bool l1 = false;
  double lambda = 0.0;
  std::vector<double> delta;

  double value(std::span<const double> theta) const {
    double s = 0.0;
    if (l1) {
      for (double t : theta) s += std::abs(t);
      return lambda * s;
    }
    for (std::size_t p = 0; p < theta.size(); ++p) s += delta[p] * theta[p] * theta[p];
    return 0.5 * s;
  }

  // Adds scale * d(penalty)/d(theta) to grad.
  void add_gradient(std::span<const double> theta, double scale, std::span<double> grad) const {
    if (l1) {
      for (std::size_t p = 0; p < theta.size(); ++p)
        if (theta[p] != 0.0) grad[p] += scale * lambda * (theta[p] > 0.0 ? 1.0 : -1.0);
      return;
    }
    for (std::size_t p = 0; p < theta.size(); ++p) grad[p] += scale * delta[p] * theta[p];
  }
};

struct DeltaStats {
  double min = 0.0, median = 0.0, max = 0.0;
};

DeltaStats delta_stats(const Penalty& pen, std::size_t count) {
  if (pen.l1) return {pen.lambda, pen.lambda, pen.lambda};
  if (count == 0) return {};
  std::vector<double> d = pen.delta;
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  DeltaStats s{*lo, 0.0, *hi};
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  s.median = d[mid];
  if (d.size() % 2 == 0) {
    const double below = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
    s.median = 0.5 * (s.median + below);
  }
  return s;
}

double epoch_lr(const TrainConfig& cfg, std::size_t epoch0) {
  if (!cfg.cosine || cfg.epochs == 0) return cfg.lr;
  const double t = static_cast<double>(epoch0) / static_cast<double>(cfg.epochs);
  return cfg.min_lr + (cfg.lr - cfg.min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

// Everything a training loop carries between epochs.
class Trainer {
 public:
  Trainer(Network& net, const Likelihood& lik, const Dataset& data, const TrainConfig& cfg, const Dataset* val)
      : net_(net), lik_(lik), data_(data), cfg_(cfg), val_(val), opt_(cfg.optimizer),
        shuffle_rng_(Rng(cfg.seed).fork(1)), start_(Clock::now()) {
    cfg.validate();
    if (data.empty()) throw StructuralError("training data is empty");
    if (data.dim() != net.input_dim()) throw StructuralError("training data width does not match the network input");
  }

  // One pass over the data; returns the record without timing.
  EpochRecord run_epoch(std::size_t epoch0, const Penalty& pen) {
    EpochRecord rec;
    rec.epoch = epoch0 + 1;
    rec.lr = epoch_lr(cfg_, epoch0);
    const double n = static_cast<double>(data_.size());
    BatchIterator it(data_.size(), cfg_.batch_size, &shuffle_rng_, true);
    std::vector<std::size_t> idx;
    double loss_sum = 0.0, hits = 0.0;
    std::size_t batches = 0;
    while (it.next(idx)) {
      const Matrix x = gather_rows(data_.features, idx);
      const Matrix y = gather_rows(data_.targets, idx);
      const auto cache = forward_cached(net_, x);
      const double b = static_cast<double>(idx.size());
      const double batch_nll = total_nll(lik_, cache.output, y);
      const auto& theta = cache.weights;
      const double loss = batch_nll / b + pen.value(theta) / n;
      if (!std::isfinite(loss)) {
        throw NumericalError("training diverged: non-finite loss in epoch " + std::to_string(rec.epoch));
      }
      loss_sum += loss;
      ++batches;
      if (lik_.is_categorical())
        for (std::size_t r = 0; r < idx.size(); ++r) hits += argmax(cache.output.row(r)) == y(r, 0) ? 1.0 : 0.0;
      auto grad = backward(net_, cache, output_grads(lik_, cache.output, y)).gradient;
      for (double& g : grad) g /= b;
      pen.add_gradient(theta, 1.0 / n, grad);
      if (net_.has_mask()) {
        const auto& mask = *net_.mask();
        for (std::size_t p = 0; p < grad.size(); ++p)
          if (!mask[p]) grad[p] = 0.0;
      }
      opt_.step(net_.params(), grad, rec.lr);
      net_.enforce_mask();
    }
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.train_accuracy = lik_.is_categorical() ? hits / n : std::numeric_limits<double>::quiet_NaN();
    if (val_ != nullptr && !val_->empty() && lik_.is_categorical()) rec.val_accuracy = evaluate(net_, lik_, *val_).accuracy;
    const auto stats = delta_stats(pen, net_.num_params());
    rec.delta_min = stats.min;
    rec.delta_median = stats.median;
    rec.delta_max = stats.max;
    rec.sparsity = net_.has_mask() ? mask_sparsity(*net_.mask()) : 0.0;
    return rec;
  }

  // Validation accuracy after the parameters changed outside the epoch loop.
  void revalidate(EpochRecord& rec) {
    if (val_ != nullptr && !val_->empty() && lik_.is_categorical()) rec.val_accuracy = evaluate(net_, lik_, *val_).accuracy;
  }

  void finish(EpochRecord& rec, TrainLog& log) {
    rec.elapsed_s = std::chrono::duration<double>(Clock::now() - start_).count();
    log.epochs.push_back(rec);
  }

 private:
  Network& net_;
  const Likelihood& lik_;
  const Dataset& data_;
  const TrainConfig& cfg_;
  const Dataset* val_;
  Optimizer opt_;
  Rng shuffle_rng_;
  Clock::time_point start_;
};

Penalty gaussian_penalty(const MapMode& m, const Network& net) {
  Penalty pen;
  if (m.prior) {
    pen.delta = expand(*m.prior, net);
  } else {
    pen.delta.assign(net.num_params(), m.delta);
  }
  return pen;
}

TrainResult run_fixed(Network net, const Likelihood& lik, const Dataset& data, const TrainConfig& cfg,
                      const Dataset* val, const Penalty& pen) {
  Trainer tr(net, lik, data, cfg, val);
  TrainLog log;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    auto rec = tr.run_epoch(e, pen);
    tr.finish(rec, log);
  }
  return {std::move(net), std::move(log)};
}

double data_nll(const Network& net, const Likelihood& lik, const Dataset& data) {
  constexpr std::size_t kChunk = 1024;
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    idx.clear();
    for (std::size_t r = start; r < std::min(data.size(), start + kChunk); ++r) idx.push_back(r);
    total += total_nll(lik, forward(net, gather_rows(data.features, idx)), gather_rows(data.targets, idx));
  }
  return total;
}

// Hyperparameter ascent on the Laplace evidence with curvature held fixed.
class HyperLearner {
 public:
  HyperLearner(const SpamMode& mode, PriorSpec prior) : mode_(mode), prior_(std::move(prior)), opt_(AdamOptions{}) {}

  const PriorSpec& prior() const { return prior_; }

  PosteriorState posterior(const Network& net, const Likelihood& lik, const Dataset& data, std::uint64_t seed) const {
    return PosteriorState(net, estimate_curvature(mode_.curvature, net, lik, data, seed), expand(prior_, net),
                          mode_.temperature);
  }

  // Runs the inner steps and returns the updated posterior and its evidence.
  std::pair<PosteriorState, double> update(const Network& net, const Likelihood& lik, const Dataset& data,
                                           std::uint64_t seed) {
    PosteriorState ps = posterior(net, lik, data, seed);
    for (std::size_t s = 0; s < mode_.hyper_steps; ++s) {
      const auto grad = chain_to_hypers(prior_, net, marglik_grad_delta(ps));
      std::vector<double> descent(grad.size());
      for (std::size_t k = 0; k < grad.size(); ++k) descent[k] = -grad[k];
      opt_.step(prior_.log_delta, descent, mode_.hyper_lr);
      for (double& u : prior_.log_delta) u = std::clamp(u, -kLogDeltaBound, kLogDeltaBound);
      ps = rebuild(ps, net);
    }
    double lml = 0.0;
    try {
      lml = log_marglik(ps, data_nll(net, lik, data)).total;
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + diagnostics(ps));
    }
    return {std::move(ps), lml};
  }

 private:
  PosteriorState rebuild(const PosteriorState& ps, const Network& net) const {
    try {
      return ps.with_delta(expand(prior_, net));
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + diagnostics(ps));
    }
  }

  static std::string diagnostics(const PosteriorState& ps) {
    double min_delta = std::numeric_limits<double>::infinity();
    for (double d : ps.delta()) min_delta = std::min(min_delta, d);
    double min_lambda = std::numeric_limits<double>::infinity();
    for (const auto& layer : ps.corrected_eigenvalues())
      for (double v : layer) min_lambda = std::min(min_lambda, v);
    std::ostringstream s;
    s << " (min delta " << min_delta;
    if (ps.is_kfac()) s << ", min corrected eigenvalue " << min_lambda;
    s << ")";
    return s.str();
  }

  SpamMode mode_;
  PriorSpec prior_;
  Optimizer opt_;
};

bool is_event(std::size_t epoch, const SpamMode& m) {
  return epoch >= m.burnin && (epoch - m.burnin) % m.frequency == 0;
}

std::uint64_t curvature_seed(const TrainConfig& cfg, std::size_t epoch) {
  return mix64(cfg.seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1)));
}

}  // namespace

TrainResult train_map(Network net, const Likelihood& lik, const Dataset& data, const TrainConfig& cfg,
                      const Dataset* val) {
  const auto* m = std::get_if<MapMode>(&cfg.mode);
  if (m == nullptr) throw ConfigError("train_map needs a MAP weight mode");
  const Penalty pen = gaussian_penalty(*m, net);
  return run_fixed(std::move(net), lik, data, cfg, val, pen);
}

TrainResult train_l1(Network net, const Likelihood& lik, const Dataset& data, const TrainConfig& cfg,
                     const Dataset* val) {
  const auto* m = std::get_if<L1Mode>(&cfg.mode);
  if (m == nullptr) throw ConfigError("train_l1 needs an L1 weight mode");
  Penalty pen;
  pen.l1 = true;
  pen.lambda = m->lambda;
  return run_fixed(std::move(net), lik, data, cfg, val, pen);
}

Network finetune(Network net, const Likelihood& lik, const Dataset& data, const TrainConfig& cfg) {
  if (!net.has_mask()) throw StructuralError("finetune: network carries no mask");
  const auto* m = std::get_if<MapMode>(&cfg.mode);
  if (m == nullptr) throw ConfigError("finetune needs a MAP weight mode");
  const Penalty pen = gaussian_penalty(*m, net);
  return run_fixed(std::move(net), lik, data, cfg, nullptr, pen).net;
}

namespace {

struct SpamRun {
  Network net;
  PriorSpec prior;
  std::optional<PosteriorState> posterior;
  std::optional<PruneMask> mask;
  TrainLog log;
};

SpamRun run_spam(Network net, const Likelihood& lik, const Dataset& data, const TrainConfig& cfg,
                 const OnlinePruneConfig* prune, const Dataset* val) {
  const auto* mode = std::get_if<SpamMode>(&cfg.mode);
  if (mode == nullptr) throw ConfigError("spam training needs a SpaM weight mode");
  Trainer tr(net, lik, data, cfg, val);
  HyperLearner hyper(*mode, PriorSpec::uniform(mode->prior, net, mode->prior_init));
  Rng score_rng = Rng(cfg.seed).fork(3);
  SpamRun out;
  TrainLog log;
  std::optional<PosteriorState> ps;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    Penalty pen;
    pen.delta = expand(hyper.prior(), net);
    auto rec = tr.run_epoch(e, pen);
    ps.reset();
    const std::size_t epoch = e + 1;
    const bool last = epoch == cfg.epochs;
    // Online pruning always gets a final event so the ramp reaches its target.
    if (is_event(epoch, *mode) || (prune != nullptr && prune->target > 0.0 && last && epoch >= mode->burnin)) {
      auto [post, lml] = hyper.update(net, lik, data, curvature_seed(cfg, epoch));
      ps = std::move(post);
      rec.log_marglik = lml;
      const auto d = expand(hyper.prior(), net);
      Penalty now;
      now.delta = d;
      const auto stats = delta_stats(now, d.size());
      rec.delta_min = stats.min;
      rec.delta_median = stats.median;
      rec.delta_max = stats.max;
      if (prune != nullptr) {
        const double s = ramp_sparsity(*prune, epoch, mode->burnin, cfg.epochs);
        if (s > 0.0) {
          std::optional<Dataset> batch;
          if (prune->criterion == Criterion::Snip || prune->criterion == Criterion::Grasp)
            batch = scoring_batch(data, prune->score_batch, curvature_seed(cfg, epoch));
          const auto scores = compute_scores(prune->criterion, net, lik, &*ps, batch ? &*batch : nullptr, score_rng);
          auto mask = make_mask(scores, net, MaskOptions{s, prune->scope, true});
          apply_mask(net, mask);
          mask.bits = *net.mask();
          mask.sparsity = mask_sparsity(mask.bits);
          out.mask = std::move(mask);
          rec.sparsity = out.mask->sparsity;
          tr.revalidate(rec);
          ps.reset();
        }
      }
    }
    tr.finish(rec, log);
  }
  if (!ps) ps = hyper.posterior(net, lik, data, curvature_seed(cfg, cfg.epochs + 1));
  out.net = std::move(net);
  out.prior = hyper.prior();
  out.posterior = std::move(ps);
  out.log = std::move(log);
  return out;
}

}  // namespace

SpamResult train_spam(Network net, const Likelihood& lik, const Dataset& data, const TrainConfig& cfg,
                      const Dataset* val) {
  auto run = run_spam(std::move(net), lik, data, cfg, nullptr, val);
  return {std::move(run.net), std::move(run.prior), std::move(*run.posterior), std::move(run.log)};
}

OnlineResult train_online_spam(Network net, const Likelihood& lik, const Dataset& data, const TrainConfig& cfg,
                               const OnlinePruneConfig& prune, const Dataset* val) {
  if (!(prune.target >= 0.0 && prune.target < 1.0)) throw ConfigError("online target sparsity must lie in [0, 1)");
  auto run = run_spam(std::move(net), lik, data, cfg, &prune, val);
  OnlineResult out;
  if (run.mask) {
    out.mask = std::move(*run.mask);
  } else {
    out.mask.bits.assign(run.net.num_params(), 1);
  }
  out.mask.requested = prune.target;
  out.mask.scope = prune.scope;
  out.net = std::move(run.net);
  out.prior = std::move(run.prior);
  out.log = std::move(run.log);
  return out;
}

}  // namespace spam
