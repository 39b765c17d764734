#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spam/rng.hpp"
#include "spam/tensor.hpp"

namespace spam {

struct Normalization {
  enum class Kind { None, PixelScale, Standardize };
  Kind kind = Kind::None;
  double pixel_scale = 1.0;
  std::vector<double> mean;
  std::vector<double> stddev;
};

// Features are N x D. Targets are N x 1 class indices for classification
// (num_classes > 0) or N x C reals for regression (num_classes == 0).
struct Dataset {
  Matrix features;
  Matrix targets;
  std::size_t num_classes = 0;
  std::string split;
  Normalization normalization;
  // Columns known to carry no label information (synthetic data only).
  std::vector<std::size_t> noise_features;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
  bool empty() const { return size() == 0; }
  bool is_classification() const { return num_classes > 0; }
  std::size_t label(std::size_t n) const { return static_cast<std::size_t>(targets(n, 0)); }

  Dataset subset(std::span<const std::size_t> rows) const;
  // First `n` rows (all rows if n == 0 or n >= size()).
  Dataset head(std::size_t n) const;
};

// Classification dataset from features and integer labels.
Dataset make_classification(Matrix features, std::span<const std::size_t> labels, std::size_t num_classes);
Dataset make_regression(Matrix features, Matrix targets);

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);

// IDX image/label pair (gzip-compressed or raw). Pixels are scaled to [0, 1]
// and flattened. `limit` keeps the first rows (0 = all). Throws FormatError
// naming the byte offset on bad magic or truncation.
Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t limit = 0);

struct CsvSchema {
  std::size_t num_features = 0;
  std::string label_column;  // header name of the integer label column
};

// Headered CSV with `num_features` numeric feature columns plus the label
// column. Throws FormatError with the line number on arity or parse errors.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

// Per-feature zero mean / unit variance fitted on one split.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Standardizer fit(const Dataset& train);
  // Throws StructuralError if `ds` is already standardized.
  void apply(Dataset& ds) const;
};

// Seeded shuffled split; first part gets round(fraction * N) rows.
std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double fraction, Rng& rng);

// Isotropic Gaussian blobs; class means are drawn N(0, separation^2 I).
Dataset synth_blobs(Rng& rng, std::size_t n, std::size_t d, std::size_t classes, double noise, double separation = 4.0);

// Blobs on `d_signal` columns followed by `d_noise` pure N(0, 1) columns;
// `noise_features` lists the appended columns.
Dataset synth_noise_features(Rng& rng, std::size_t n, std::size_t d_signal, std::size_t d_noise, std::size_t classes,
                             double noise, double separation = 4.0);

// Deterministic mini-batch order over [0, n): a seeded permutation per call
// when shuffling, natural order otherwise. The last partial batch is kept.
class BatchIterator {
 public:
  BatchIterator(std::size_t n, std::size_t batch_size, Rng* rng, bool shuffle = true);

  bool next(std::vector<std::size_t>& indices);
  std::size_t num_batches() const;

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t pos_ = 0;
};

}  // namespace spam
