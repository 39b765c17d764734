#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "spam/curvature.hpp"
#include "spam/data.hpp"
#include "spam/laplace.hpp"
#include "spam/likelihood.hpp"
#include "spam/network.hpp"
#include "spam/prior.hpp"
#include "spam/pruning.hpp"

namespace spam {

struct SgdOptions {
  double momentum = 0.0;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

using OptimizerOptions = std::variant<AdamOptions, SgdOptions>;

enum class CurvatureKind { DiagGgn, DiagEf, KfacEf, KfacGgn, KfacGgnExact };

std::string to_string(CurvatureKind k);
CurvatureKind curvature_kind_from_string(const std::string& name);

// Fixed Gaussian prior. Without `prior`, every parameter gets `delta`
// (0 disables regularization).
struct MapMode {
  std::optional<PriorSpec> prior;
  double delta = 1.0;
};

struct SpamMode {
  PriorKind prior = PriorKind::ParameterWise;
  double prior_init = 1.0;
  double hyper_lr = 0.1;
  std::size_t hyper_steps = 100;
  std::size_t burnin = 0;
  std::size_t frequency = 1;
  double temperature = 1.0;
  CurvatureKind curvature = CurvatureKind::DiagGgn;
};

struct L1Mode {
  double lambda = 0.0;
};

using WeightMode = std::variant<MapMode, SpamMode, L1Mode>;

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  double min_lr = 1e-6;
  bool cosine = true;  // per-epoch cosine decay from lr to min_lr
  OptimizerOptions optimizer = AdamOptions{};
  std::uint64_t seed = 0;
  WeightMode mode = MapMode{};

  // Throws ConfigError on inconsistent settings.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;  // mean over batches of the regularized per-sample objective
  double train_accuracy = 0.0;
  std::optional<double> val_accuracy;
  std::optional<double> log_marglik;
  double delta_min = 0.0;
  double delta_median = 0.0;
  double delta_max = 0.0;
  double sparsity = 0.0;
  double elapsed_s = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;

  std::string to_jsonl() const;
  // Equal up to wall-clock timing.
  bool same_trajectory(const TrainLog& other) const;
};

struct TrainResult {
  Network net;
  TrainLog log;
};

struct SpamResult {
  Network net;
  PriorSpec prior;
  PosteriorState posterior;  // at the returned network's parameters
  TrainLog log;
};

enum class Ramp { Linear, Cubic };

struct OnlinePruneConfig {
  Criterion criterion = Criterion::Opd;
  double target = 0.0;
  Scope scope = Scope::Global;
  Ramp ramp = Ramp::Linear;
  std::size_t score_batch = 128;
};

struct OnlineResult {
  Network net;
  PruneMask mask;
  PriorSpec prior;
  TrainLog log;
};

// Sparsity reached after `epoch` under the online schedule.
double ramp_sparsity(const OnlinePruneConfig& p, std::size_t epoch, std::size_t burnin, std::size_t epochs);

// Curvature of the kind used for hyperparameter updates.
CurvatureEstimate estimate_curvature(CurvatureKind kind, const Network& net, const Likelihood& lik,
                                     const Dataset& data, std::uint64_t seed);

// `val` (optional) is evaluated after every epoch.
TrainResult train_map(Network net, const Likelihood& lik, const Dataset& data, const TrainConfig& cfg,
                      const Dataset* val = nullptr);
SpamResult train_spam(Network net, const Likelihood& lik, const Dataset& data, const TrainConfig& cfg,
                      const Dataset* val = nullptr);
OnlineResult train_online_spam(Network net, const Likelihood& lik, const Dataset& data, const TrainConfig& cfg,
                               const OnlinePruneConfig& prune, const Dataset* val = nullptr);
// Continues MAP training of a masked network; the mask is unchanged.
Network finetune(Network net, const Likelihood& lik, const Dataset& data, const TrainConfig& cfg);
TrainResult train_l1(Network net, const Likelihood& lik, const Dataset& data, const TrainConfig& cfg,
                     const Dataset* val = nullptr);

}  // namespace spam
