#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spam/metrics.hpp"

namespace spam {

struct CostReport {
  std::size_t params_total = 0;
  std::size_t params_nonzero = 0;
  std::size_t flops = 0;  // per forward pass of one input
  std::size_t bytes = 0;  // params_total 64-bit floats

  bool operator==(const CostReport&) const = default;
};

// One (seed, training, criterion, sparsity) cell.
struct PruneRecord {
  std::uint64_t seed = 0;
  std::string training;   // "map", "spam", "online", "l1"
  std::string criterion;  // "none" for the unpruned model
  double sparsity = 0.0;  // requested
  double realized_sparsity = 0.0;
  EvalResult eval;
  CostReport cost;
  double wall_time_s = 0.0;
};

// Frozen CSV column order.
const std::vector<std::string>& report_columns();

struct PruneReport {
  std::vector<PruneRecord> rows;

  void append(PruneRecord r) { rows.push_back(std::move(r)); }
  std::string to_csv() const;
  std::string to_json() const;
  void write(const std::filesystem::path& csv, const std::filesystem::path& json) const;
};

// Mean and standard error over seeds for one (training, criterion, sparsity).
struct AggregateRow {
  std::string training;
  std::string criterion;
  double sparsity = 0.0;
  std::size_t seeds = 0;
  // Per metric: mean and stderr; NaN when no seed produced the cell.
  double accuracy_mean = 0.0, accuracy_stderr = 0.0;
  double nll_mean = 0.0, nll_stderr = 0.0;
  double ece_mean = 0.0, ece_stderr = 0.0;
  double brier_mean = 0.0, brier_stderr = 0.0;
  double flops_mean = 0.0;
  double realized_sparsity_mean = 0.0;
};

// Aggregates over the full grid of trainings x criteria x sparsities seen in
// `report`; cells without rows are kept with zero seeds.
std::vector<AggregateRow> aggregate(const PruneReport& report);
// Missing values are written as "null".
std::string aggregate_csv(const std::vector<AggregateRow>& rows);

}  // namespace spam
