#include <algorithm>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "experiment.hpp"
#include "spam/error.hpp"
#include "spam/io.hpp"
#include "spam/metrics.hpp"

namespace spam::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed_override;
  unsigned threads = 1;
  std::string checkpoint;
  std::string posterior;
  std::optional<double> sparsity;
  std::string criterion;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ResourceError("cannot write " + path.string());
  out << text;
}

std::string hash_text(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Hashes of the deterministic artifacts; logs and reports carry timings and
// are listed without a hash.
void write_manifest(const fs::path& dir, const std::string& verb, const ExperimentConfig& cfg,
                    const std::vector<fs::path>& hashed, const std::vector<fs::path>& plain,
                    const json& extra = json::object()) {
  json files = json::object();
  for (const auto& p : hashed) files[p.filename().string()] = file_hash(p);
  json other = json::array();
  for (const auto& p : plain) other.push_back(p.filename().string());
  json m = {{"verb", verb}, {"config_hash", hash_text(cfg.source.dump())}, {"files", files}, {"unhashed", other}};
  m.update(extra);
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

ExperimentConfig configure(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  ExperimentConfig cfg = load_config(o.config);
  if (!o.out.empty()) cfg.out = o.out;
  if (o.seed_override) cfg.seeds = {*o.seed_override};
  return cfg;
}

TrainedModel model_from_files(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  Checkpoint c = load_checkpoint(o.checkpoint);
  TrainedModel m;
  m.net = std::move(c.net);
  m.seed = c.seed;
  m.training = c.training.empty() ? "map" : c.training;
  m.prior = std::move(c.prior);
  if (!o.posterior.empty()) m.posterior = load_posterior(o.posterior);
  return m;
}

fs::path model_dir(const ExperimentConfig& cfg, const std::string& training, std::uint64_t seed) {
  return fs::path(cfg.out) / (training + "_seed" + std::to_string(seed));
}

void save_model(const ExperimentConfig& cfg, const TrainedModel& m, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<fs::path> hashed{dir / "checkpoint.spam"};
  save_checkpoint(hashed[0], Checkpoint{m.net, m.seed, m.training, m.prior});
  if (m.posterior) {
    hashed.push_back(dir / "posterior.spam");
    save_posterior(hashed.back(), *m.posterior);
  }
  if (m.mask) {
    hashed.push_back(dir / "mask.spam");
    save_mask(hashed.back(), *m.mask, MaskFileInfo{to_string(cfg.online.criterion), m.seed, 0});
  }
  write_text(dir / "log.jsonl", m.log.to_jsonl());
  write_manifest(dir, "train", cfg, hashed, {dir / "log.jsonl"}, {{"seed", m.seed}, {"training", m.training}});
}

int cmd_train(const Options& o) {
  const auto cfg = configure(o);
  const Split data = load_data(cfg.dataset);
  for (auto seed : cfg.seeds)
    for (const auto& t : cfg.trainings) {
      const auto m = train_model(cfg, data, t, seed);
      const auto dir = model_dir(cfg, t, seed);
      save_model(cfg, m, dir);
      const auto& last = m.log.epochs.empty() ? EpochRecord{} : m.log.epochs.back();
      std::cout << t << " seed " << seed << ": " << m.log.epochs.size() << " epochs, train loss " << last.train_loss
                << ", val accuracy " << (last.val_accuracy ? *last.val_accuracy : std::nan("")) << " -> "
                << dir.string() << "\n";
    }
  return kExitOk;
}

int cmd_prune(const Options& o) {
  const auto cfg = configure(o);
  const Split data = load_data(cfg.dataset);
  const auto model = model_from_files(o);
  PruneReport report = prune_model(cfg, data, model);
  fs::create_directories(cfg.out);
  const fs::path dir(cfg.out);
  report.write(dir / "report.csv", dir / "report.json");
  write_manifest(dir, "prune", cfg, {}, {dir / "report.csv", dir / "report.json"});
  std::cout << report.to_csv();
  return kExitOk;
}

int cmd_eval(const Options& o) {
  const auto cfg = configure(o);
  const Split data = load_data(cfg.dataset);
  const auto model = model_from_files(o);
  const auto rec = unpruned_record(cfg, data, model);
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  const json j = {{"accuracy", num(rec.eval.accuracy)}, {"nll", num(rec.eval.nll)}, {"ece", num(rec.eval.ece)},
                  {"brier", num(rec.eval.brier)},       {"n", rec.eval.n},          {"params_total", rec.cost.params_total},
                  {"params_nonzero", rec.cost.params_nonzero}, {"flops", rec.cost.flops}, {"bytes", rec.cost.bytes}};
  fs::create_directories(cfg.out);
  write_text(fs::path(cfg.out) / "eval.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_compact(const Options& o) {
  const auto cfg = configure(o);
  const Split data = load_data(cfg.dataset);
  const auto model = model_from_files(o);
  StructuredPipelineConfig sc;
  sc.criterion = o.criterion.empty() ? cfg.prune.criteria.front() : criterion_from_string(o.criterion);
  sc.target = o.sparsity ? *o.sparsity : cfg.prune.sparsities.front();
  if (!(sc.target >= 0.0 && sc.target < 1.0)) throw ConfigError("--sparsity must lie in [0, 1)");
  TrainConfig ft = train_config_for(cfg, "map", model.seed);
  MapMode mm = cfg.map;
  if (model.prior) mm.prior = model.prior;
  ft.mode = mm;
  ft.epochs = cfg.prune.finetune_epochs;
  sc.finetune = ft;
  sc.score_batch = cfg.prune.score_batch;
  sc.seed = model.seed;
  std::optional<PosteriorState> ps;
  if (sc.criterion == Criterion::Opd) ps = posterior_for(cfg, data, model);
  const auto before = cost(model.net);
  auto outcome = structured_pipeline(model.net, cfg.likelihood, data.train, data.test, ps ? &*ps : nullptr, sc);
  outcome.record.seed = model.seed;
  outcome.record.training = model.training;

  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  save_checkpoint(dir / "compact.spam", Checkpoint{outcome.compact_net, model.seed, model.training, std::nullopt});
  json prov = json::array();
  for (std::size_t l = 0; l < outcome.plan.kept_units.size(); ++l)
    prov.push_back({{"layer", l}, {"kept_units", outcome.plan.kept_units[l]}});
  write_text(dir / "provenance.json", json{{"removed_units", outcome.plan.removed}, {"layers", prov}}.dump(2) + "\n");
  auto cost_json = [](const CostReport& c) {
    return json{{"params_total", c.params_total}, {"params_nonzero", c.params_nonzero}, {"flops", c.flops}, {"bytes", c.bytes}};
  };
  const json summary = {{"criterion", outcome.record.criterion},
                        {"sparsity", sc.target},
                        {"accuracy", outcome.record.eval.accuracy},
                        {"nll", outcome.record.eval.nll},
                        {"before", cost_json(before)},
                        {"after", cost_json(outcome.record.cost)},
                        {"flops_reduction", static_cast<double>(before.flops) / static_cast<double>(outcome.record.cost.flops)}};
  write_text(dir / "cost.json", summary.dump(2) + "\n");
  write_manifest(dir, "compact", cfg, {dir / "compact.spam", dir / "provenance.json"}, {dir / "cost.json"});
  std::cout << summary.dump(2) << "\n";
  return kExitOk;
}

int cmd_sweep(const Options& o) {
  const auto cfg = configure(o);
  const Split data = load_data(cfg.dataset);
  std::vector<PruneReport> per_seed(cfg.seeds.size());
  std::mutex log_mutex;
  auto work = [&](std::size_t k) {
    const auto seed = cfg.seeds[k];
    for (const auto& t : cfg.trainings) {
      const auto model = train_model(cfg, data, t, seed);
      per_seed[k].append(unpruned_record(cfg, data, model));
      for (auto& r : prune_model(cfg, data, model).rows) per_seed[k].append(std::move(r));
      std::lock_guard lock(log_mutex);
      std::cerr << "sweep: " << t << " seed " << seed << " done\n";
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(o.threads, static_cast<unsigned>(cfg.seeds.size())));
  if (threads == 1) {
    for (std::size_t k = 0; k < cfg.seeds.size(); ++k) work(k);
  } else {
    std::vector<std::exception_ptr> errors(cfg.seeds.size());
    std::size_t next = 0;
    std::mutex next_mutex;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
      pool.emplace_back([&] {
        for (;;) {
          std::size_t k;
          {
            std::lock_guard lock(next_mutex);
            if (next >= cfg.seeds.size()) return;
            k = next++;
          }
          try {
            work(k);
          } catch (...) {
            errors[k] = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  PruneReport report;
  for (auto& r : per_seed)
    for (auto& row : r.rows) report.append(std::move(row));
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  report.write(dir / "report.csv", dir / "report.json");
  const auto agg = aggregate_csv(aggregate(report));
  write_text(dir / "aggregate.csv", agg);
  write_manifest(dir, "sweep", cfg, {}, {dir / "report.csv", dir / "report.json", dir / "aggregate.csv"});
  std::cout << agg;
  return kExitOk;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Sparse networks from Laplace marginal-likelihood training: train, prune, compact, sweep, eval"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON experiment config")->required();
    sub->add_option("--out", o.out, "Output directory (overrides the config)");
    sub->add_option("--seed-override", o.seed_override, "Run a single seed instead of the config's list");
    sub->add_option("--threads", o.threads, "Worker threads for independent sweep cells")->check(CLI::PositiveNumber);
  };
  auto* train = app.add_subcommand("train", "Train every configured training mode and seed");
  auto* prune = app.add_subcommand("prune", "Prune a checkpoint over the criteria x sparsity grid");
  auto* compact = app.add_subcommand("compact", "Structured prune, fine-tune and compact a checkpoint");
  auto* sweep = app.add_subcommand("sweep", "Train and prune every seed, then aggregate");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  for (auto* s : {train, prune, compact, sweep, eval}) common(s);
  for (auto* s : {prune, compact, eval}) {
    s->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
    s->add_option("--posterior", o.posterior, "Posterior snapshot for OPD");
  }
  compact->add_option("--sparsity", o.sparsity, "Unit sparsity per hidden layer");
  compact->add_option("--criterion", o.criterion, "Scoring criterion");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  try {
    if (*train) return cmd_train(o);
    if (*prune) return cmd_prune(o);
    if (*compact) return cmd_compact(o);
    if (*sweep) return cmd_sweep(o);
    if (*eval) return cmd_eval(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace spam::cli
