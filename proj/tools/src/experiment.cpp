#include "experiment.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <set>

#include "spam/error.hpp"
#include "spam/metrics.hpp"

#ifndef SPAM_DEFAULT_DATA_DIR
#define SPAM_DEFAULT_DATA_DIR "data"
#endif

namespace spam::cli {

using nlohmann::json;

namespace {

// Reads the members of one JSON object and rejects any it did not consume.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(label() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(label(key) + " has the wrong type");
    }
  }

  template <typename F>
  void parse(const char* key, F&& f) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      f(j_.at(key));
    } catch (const json::exception&) {
      throw ConfigError(label(key) + " has the wrong type");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key '" + label(k.c_str()) + "'");
  }

  std::string label(const char* key = nullptr) const {
    if (key == nullptr) return where_.empty() ? "config" : where_;
    return where_.empty() ? std::string(key) : where_ + "." + key;
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void parse_dataset(const json& j, DatasetConfig& d) {
  Fields f(j, "dataset");
  f.get("kind", d.kind);
  f.get("train_limit", d.train_limit);
  f.get("test_limit", d.test_limit);
  f.get("path", d.path);
  f.get("label_column", d.label_column);
  f.get("num_features", d.num_features);
  f.get("test_fraction", d.test_fraction);
  f.get("seed", d.seed);
  f.get("n", d.n);
  f.get("d", d.d);
  f.get("d_noise", d.d_noise);
  f.get("classes", d.classes);
  f.get("noise", d.noise);
  f.get("separation", d.separation);
  f.finish();
  static const std::set<std::string> kinds{"mnist", "cancer", "csv", "blobs", "noise_features"};
  if (!kinds.count(d.kind)) throw ConfigError("dataset.kind '" + d.kind + "' is not one of mnist, cancer, csv, blobs, noise_features");
  if (!(d.test_fraction > 0.0 && d.test_fraction < 1.0)) throw ConfigError("dataset.test_fraction must lie in (0, 1)");
  if (d.n == 0 || d.d == 0 || d.classes == 0) throw ConfigError("dataset n, d and classes must be positive");
}

void parse_arch(const json& j, ArchConfig& a) {
  Fields f(j, "architecture");
  f.get("hidden", a.hidden);
  f.parse("activation", [&](const json& v) { a.activation = activation_from_string(v.get<std::string>()); });
  f.get("bias", a.bias);
  f.finish();
  for (auto w : a.hidden)
    if (w == 0) throw ConfigError("architecture.hidden widths must be positive");
}

void parse_likelihood(const json& j, Likelihood& lik) {
  Fields f(j, "likelihood");
  std::string kind = "categorical";
  double sigma2 = 1.0;
  f.get("kind", kind);
  f.get("sigma2", sigma2);
  f.finish();
  if (kind == "categorical") {
    lik = Likelihood::categorical();
  } else if (kind == "gaussian") {
    if (!(sigma2 > 0.0)) throw ConfigError("likelihood.sigma2 must be positive");
    lik = Likelihood::gaussian(sigma2);
  } else {
    throw ConfigError("likelihood.kind '" + kind + "' is not categorical or gaussian");
  }
}

void parse_spam(const json& j, SpamMode& s) {
  Fields f(j, "train.spam");
  f.parse("prior", [&](const json& v) { s.prior = prior_kind_from_string(v.get<std::string>()); });
  f.get("prior_init", s.prior_init);
  f.get("hyper_lr", s.hyper_lr);
  f.get("hyper_steps", s.hyper_steps);
  f.get("burnin", s.burnin);
  f.get("frequency", s.frequency);
  f.get("temperature", s.temperature);
  f.parse("curvature", [&](const json& v) { s.curvature = curvature_kind_from_string(v.get<std::string>()); });
  f.finish();
}

void parse_online(const json& j, OnlineSettings& o) {
  Fields f(j, "train.online");
  f.parse("criterion", [&](const json& v) { o.criterion = criterion_from_string(v.get<std::string>()); });
  f.get("target", o.target);
  f.parse("ramp", [&](const json& v) {
    const auto r = v.get<std::string>();
    if (r == "linear") {
      o.ramp = Ramp::Linear;
    } else if (r == "cubic") {
      o.ramp = Ramp::Cubic;
    } else {
      throw ConfigError("train.online.ramp must be linear or cubic");
    }
  });
  f.finish();
  if (!(o.target >= 0.0 && o.target < 1.0)) throw ConfigError("train.online.target must lie in [0, 1)");
}

void parse_train(const json& j, ExperimentConfig& c) {
  Fields f(j, "train");
  TrainConfig& t = c.train;
  f.get("epochs", t.epochs);
  f.get("batch_size", t.batch_size);
  f.get("lr", t.lr);
  f.get("min_lr", t.min_lr);
  f.get("cosine", t.cosine);
  std::string opt = "adam";
  AdamOptions adam;
  SgdOptions sgd;
  f.get("optimizer", opt);
  f.get("momentum", sgd.momentum);
  f.get("beta1", adam.beta1);
  f.get("beta2", adam.beta2);
  f.get("eps", adam.eps);
  if (opt == "adam") {
    t.optimizer = adam;
  } else if (opt == "sgd") {
    t.optimizer = sgd;
  } else {
    throw ConfigError("train.optimizer must be adam or sgd");
  }
  f.get("delta", c.map.delta);
  f.get("l1_lambda", c.l1.lambda);
  f.parse("spam", [&](const json& v) { parse_spam(v, c.spam); });
  f.parse("online", [&](const json& v) { parse_online(v, c.online); });
  f.finish();
}

void parse_prune(const json& j, PruneSettings& p) {
  Fields f(j, "prune");
  f.parse("criteria", [&](const json& v) {
    p.criteria.clear();
    for (const auto& c : v) p.criteria.push_back(criterion_from_string(c.get<std::string>()));
  });
  f.get("sparsities", p.sparsities);
  f.parse("scope", [&](const json& v) { p.scope = scope_from_string(v.get<std::string>()); });
  f.get("structured", p.structured);
  f.get("finetune_epochs", p.finetune_epochs);
  f.get("score_batch", p.score_batch);
  f.parse("curvature", [&](const json& v) {
    if (v.is_null()) {
      p.curvature.reset();
    } else {
      p.curvature = curvature_kind_from_string(v.get<std::string>());
    }
  });
  f.finish();
  for (double s : p.sparsities)
    if (!(s >= 0.0 && s < 1.0)) throw ConfigError("prune.sparsities must lie in [0, 1)");
  if (p.score_batch == 0) throw ConfigError("prune.score_batch must be positive");
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig c;
  c.source = doc;
  Fields f(doc, "");
  f.parse("dataset", [&](const json& v) { parse_dataset(v, c.dataset); });
  f.parse("architecture", [&](const json& v) { parse_arch(v, c.arch); });
  f.parse("likelihood", [&](const json& v) { parse_likelihood(v, c.likelihood); });
  f.parse("train", [&](const json& v) { parse_train(v, c); });
  f.parse("prune", [&](const json& v) { parse_prune(v, c.prune); });
  f.get("trainings", c.trainings);
  f.get("seeds", c.seeds);
  f.get("out", c.out);
  f.finish();
  static const std::set<std::string> tags{"map", "spam", "l1", "online"};
  for (const auto& t : c.trainings)
    if (!tags.count(t)) throw ConfigError("training '" + t + "' is not one of map, spam, l1, online");
  if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
  if (c.likelihood.is_categorical() && c.dataset.kind != "mnist" && c.dataset.kind != "cancer" &&
      c.dataset.kind != "csv" && c.dataset.classes < 2)
    throw ConfigError("classification needs at least two classes");
  for (const auto& t : c.trainings) train_config_for(c, t, 0).validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

std::filesystem::path data_dir() {
  if (const char* env = std::getenv("SPAM_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return SPAM_DEFAULT_DATA_DIR;
}

namespace {

std::filesystem::path existing(const std::filesystem::path& base) {
  if (std::filesystem::exists(base)) return base;
  auto gz = base;
  gz += ".gz";
  if (std::filesystem::exists(gz)) return gz;
  throw ResourceError("missing data file " + base.string() + "[.gz]");
}

Split split_and_standardize(const Dataset& all, const DatasetConfig& cfg) {
  Rng rng(cfg.seed);
  auto [train, test] = train_test_split(all, 1.0 - cfg.test_fraction, rng);
  const auto st = Standardizer::fit(train);
  st.apply(train);
  st.apply(test);
  return {std::move(train), std::move(test)};
}

}  // namespace

Split load_data(const DatasetConfig& cfg, const std::filesystem::path& dir) {
  if (cfg.kind == "mnist") {
    Split s;
    s.train = load_mnist_idx(existing(dir / "mnist" / "train-images-idx3-ubyte"),
                             existing(dir / "mnist" / "train-labels-idx1-ubyte"), cfg.train_limit);
    s.test = load_mnist_idx(existing(dir / "mnist" / "t10k-images-idx3-ubyte"),
                            existing(dir / "mnist" / "t10k-labels-idx1-ubyte"), cfg.test_limit);
    s.train.split = "train";
    s.test.split = "test";
    return s;
  }
  if (cfg.kind == "cancer" || cfg.kind == "csv") {
    std::filesystem::path p = cfg.kind == "cancer" && cfg.path.empty() ? "breast_cancer.csv" : cfg.path;
    if (p.is_relative()) p = dir / p;
    return split_and_standardize(load_csv(p, CsvSchema{cfg.num_features, cfg.label_column}), cfg);
  }
  Rng rng = Rng(cfg.seed).fork(11);
  const Dataset all = cfg.kind == "blobs"
                          ? synth_blobs(rng, cfg.n, cfg.d, cfg.classes, cfg.noise, cfg.separation)
                          : synth_noise_features(rng, cfg.n, cfg.d, cfg.d_noise, cfg.classes, cfg.noise, cfg.separation);
  Split s = split_and_standardize(all, cfg);
  s.train.noise_features = s.test.noise_features = all.noise_features;
  return s;
}

Network init_network(const ExperimentConfig& cfg, const Split& data, std::uint64_t seed) {
  std::vector<std::size_t> widths{data.train.dim()};
  widths.insert(widths.end(), cfg.arch.hidden.begin(), cfg.arch.hidden.end());
  widths.push_back(cfg.likelihood.is_categorical() ? data.train.num_classes : data.train.targets.cols());
  Rng rng = Rng(seed).fork(0);
  return Network::initialized(mlp_layers(widths, cfg.arch.activation, cfg.arch.bias), rng);
}

TrainConfig train_config_for(const ExperimentConfig& cfg, const std::string& training, std::uint64_t seed) {
  TrainConfig t = cfg.train;
  t.seed = seed;
  if (training == "map") {
    t.mode = cfg.map;
  } else if (training == "spam" || training == "online") {
    t.mode = cfg.spam;
  } else if (training == "l1") {
    t.mode = cfg.l1;
  } else {
    throw ConfigError("unknown training '" + training + "'");
  }
  return t;
}

TrainedModel train_model(const ExperimentConfig& cfg, const Split& data, const std::string& training,
                         std::uint64_t seed) {
  TrainedModel m;
  m.training = training;
  m.seed = seed;
  Network net = init_network(cfg, data, seed);
  const TrainConfig tc = train_config_for(cfg, training, seed);
  if (training == "map") {
    auto r = train_map(std::move(net), cfg.likelihood, data.train, tc, &data.test);
    m.net = std::move(r.net);
    m.log = std::move(r.log);
    if (cfg.map.prior) m.prior = cfg.map.prior;
  } else if (training == "l1") {
    auto r = train_l1(std::move(net), cfg.likelihood, data.train, tc, &data.test);
    m.net = std::move(r.net);
    m.log = std::move(r.log);
  } else if (training == "spam") {
    auto r = train_spam(std::move(net), cfg.likelihood, data.train, tc, &data.test);
    m.net = std::move(r.net);
    m.prior = std::move(r.prior);
    m.posterior = std::move(r.posterior);
    m.log = std::move(r.log);
  } else {
    OnlinePruneConfig p;
    p.criterion = cfg.online.criterion;
    p.target = cfg.online.target;
    p.ramp = cfg.online.ramp;
    p.scope = cfg.prune.scope;
    p.score_batch = cfg.prune.score_batch;
    auto r = train_online_spam(std::move(net), cfg.likelihood, data.train, tc, p, &data.test);
    m.net = std::move(r.net);
    m.prior = std::move(r.prior);
    m.mask = std::move(r.mask);
    m.log = std::move(r.log);
  }
  return m;
}

PosteriorState posterior_for(const ExperimentConfig& cfg, const Split& data, const TrainedModel& model) {
  if (model.posterior && model.posterior->num_params() == model.net.num_params() &&
      model.posterior->snapshot_id() == params_fingerprint(model.net.effective_params()))
    return *model.posterior;
  if (!cfg.prune.curvature)
    throw ConfigError("OPD needs a posterior snapshot or prune.curvature for a post-hoc Laplace build");
  std::vector<double> delta;
  double temperature = 1.0;
  if (model.prior) {
    delta = expand(*model.prior, model.net);
    if (model.training == "spam" || model.training == "online") temperature = cfg.spam.temperature;
  } else {
    if (!(cfg.map.delta > 0.0)) throw ConfigError("OPD on a MAP model needs a positive train.delta");
    delta.assign(model.net.num_params(), cfg.map.delta);
  }
  auto curv = estimate_curvature(*cfg.prune.curvature, model.net, cfg.likelihood, data.train, model.seed);
  return PosteriorState(model.net, std::move(curv), std::move(delta), temperature);
}

namespace {

TrainConfig finetune_config(const ExperimentConfig& cfg, const TrainedModel& model) {
  TrainConfig t = train_config_for(cfg, "map", model.seed);
  MapMode m = cfg.map;
  if (model.prior) m.prior = model.prior;
  t.mode = m;
  t.epochs = cfg.prune.finetune_epochs;
  return t;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

PruneRecord unpruned_record(const ExperimentConfig& cfg, const Split& data, const TrainedModel& model) {
  const auto t0 = std::chrono::steady_clock::now();
  PruneRecord r;
  r.seed = model.seed;
  r.training = model.training;
  r.criterion = "none";
  r.realized_sparsity = model.net.has_mask() ? mask_sparsity(*model.net.mask()) : 0.0;
  r.eval = evaluate(model.net, cfg.likelihood, data.test);
  r.cost = cost(model.net);
  r.wall_time_s = seconds_since(t0);
  return r;
}

PruneRecord prune_cell(const ExperimentConfig& cfg, const Split& data, const TrainedModel& model,
                       const PosteriorState* ps, Criterion criterion, double sparsity) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t cell_seed = mix64(model.seed * 1000003ULL + static_cast<std::uint64_t>(criterion));
  PruneRecord r;
  if (cfg.prune.structured) {
    StructuredPipelineConfig sc;
    sc.criterion = criterion;
    sc.target = sparsity;
    sc.finetune = finetune_config(cfg, model);
    sc.score_batch = cfg.prune.score_batch;
    sc.seed = cell_seed;
    r = structured_pipeline(model.net, cfg.likelihood, data.train, data.test, ps, sc).record;
  } else {
    Network net = model.net;
    Rng rng(cell_seed);
    std::optional<Dataset> batch;
    if (criterion == Criterion::Snip || criterion == Criterion::Grasp)
      batch = scoring_batch(data.train, cfg.prune.score_batch, cell_seed);
    const auto scores = compute_scores(criterion, net, cfg.likelihood, ps, batch ? &*batch : nullptr, rng);
    const auto mask = make_mask(scores, net, MaskOptions{sparsity, cfg.prune.scope, true});
    apply_mask(net, mask);
    if (cfg.prune.finetune_epochs > 0) net = finetune(std::move(net), cfg.likelihood, data.train, finetune_config(cfg, model));
    r.criterion = to_string(criterion);
    r.sparsity = sparsity;
    r.realized_sparsity = mask_sparsity(*net.mask());
    r.eval = evaluate(net, cfg.likelihood, data.test);
    r.cost = cost(net);
  }
  r.seed = model.seed;
  r.training = model.training;
  r.wall_time_s = seconds_since(t0);
  return r;
}

PruneReport prune_model(const ExperimentConfig& cfg, const Split& data, const TrainedModel& model) {
  PruneReport report;
  std::optional<PosteriorState> ps;
  for (Criterion c : cfg.prune.criteria) {
    if (c == Criterion::Opd && !ps) ps = posterior_for(cfg, data, model);
    for (double s : cfg.prune.sparsities)
      report.append(prune_cell(cfg, data, model, ps ? &*ps : nullptr, c, s));
  }
  return report;
}

}  // namespace spam::cli
