#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spam/compaction.hpp"
#include "spam/data.hpp"
#include "spam/laplace.hpp"
#include "spam/likelihood.hpp"
#include "spam/network.hpp"
#include "spam/prior.hpp"
#include "spam/pruning.hpp"
#include "spam/report.hpp"
#include "spam/training.hpp"

namespace spam::cli {

struct DatasetConfig {
  std::string kind = "blobs";  // mnist | cancer | csv | blobs | noise_features
  std::size_t train_limit = 10000;  // mnist; 0 = all
  std::size_t test_limit = 0;       // mnist; 0 = all
  std::string path;                 // csv (relative paths resolve against the data dir)
  std::string label_column = "malignant";
  std::size_t num_features = 30;
  double test_fraction = 0.2;  // cancer / csv / synthetic
  std::uint64_t seed = 0;      // split and synthetic generation
  std::size_t n = 1000;
  std::size_t d = 2;
  std::size_t d_noise = 0;
  std::size_t classes = 2;
  double noise = 1.0;
  double separation = 4.0;
};

struct ArchConfig {
  std::vector<std::size_t> hidden{100};
  Activation activation = Activation::ReLU;
  bool bias = true;
};

struct PruneSettings {
  std::vector<Criterion> criteria{Criterion::Opd, Criterion::Magnitude, Criterion::Random};
  std::vector<double> sparsities{0.2, 0.4, 0.6, 0.8, 0.9, 0.95, 0.99};
  Scope scope = Scope::Global;
  bool structured = false;
  std::size_t finetune_epochs = 0;
  std::size_t score_batch = 128;
  // Curvature for a post-hoc Laplace build when no posterior snapshot exists.
  std::optional<CurvatureKind> curvature = CurvatureKind::DiagGgn;
};

struct OnlineSettings {
  Criterion criterion = Criterion::Opd;
  double target = 0.9;
  Ramp ramp = Ramp::Linear;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ArchConfig arch;
  Likelihood likelihood = Likelihood::categorical();
  // Shared optimizer settings; `mode` is filled per training tag.
  TrainConfig train;
  MapMode map;
  SpamMode spam;
  L1Mode l1;
  OnlineSettings online;
  std::vector<std::string> trainings{"spam"};  // map | spam | l1 | online
  PruneSettings prune;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3};
  std::string out = "runs";
  nlohmann::json source;  // the parsed document, for hashing
};

// Unknown keys anywhere raise ConfigError.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

// SPAM_DATA_DIR, else the repository's data/ directory.
std::filesystem::path data_dir();

struct Split {
  Dataset train;
  Dataset test;
};

Split load_data(const DatasetConfig& cfg, const std::filesystem::path& dir = data_dir());

Network init_network(const ExperimentConfig& cfg, const Split& data, std::uint64_t seed);
TrainConfig train_config_for(const ExperimentConfig& cfg, const std::string& training, std::uint64_t seed);

struct TrainedModel {
  Network net;
  std::string training;
  std::uint64_t seed = 0;
  std::optional<PriorSpec> prior;
  std::optional<PosteriorState> posterior;
  std::optional<PruneMask> mask;  // online training
  TrainLog log;
};

TrainedModel train_model(const ExperimentConfig& cfg, const Split& data, const std::string& training,
                         std::uint64_t seed);

// Posterior for OPD: the stored one if current, else a fresh Laplace build
// at the model's parameters with its prior. ConfigError if neither works.
PosteriorState posterior_for(const ExperimentConfig& cfg, const Split& data, const TrainedModel& model);

// Evaluation of the trained model as it stands.
PruneRecord unpruned_record(const ExperimentConfig& cfg, const Split& data, const TrainedModel& model);

// One (criterion, sparsity) cell on a fresh copy of the model.
PruneRecord prune_cell(const ExperimentConfig& cfg, const Split& data, const TrainedModel& model,
                       const PosteriorState* ps, Criterion criterion, double sparsity);

// Every criterion x sparsity of the config.
PruneReport prune_model(const ExperimentConfig& cfg, const Split& data, const TrainedModel& model);

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitFormat = 4;

int run(int argc, char** argv);

}  // namespace spam::cli
