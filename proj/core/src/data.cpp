#include "spam/data.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>

#include "spam/error.hpp"

namespace spam {

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features = gather_rows(features, rows);
  out.targets = gather_rows(targets, rows);
  out.num_classes = num_classes;
  out.split = split;
  out.normalization = normalization;
  out.noise_features = noise_features;
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  if (n == 0 || n >= size()) return *this;
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return subset(rows);
}

Dataset make_classification(Matrix features, std::span<const std::size_t> labels, std::size_t num_classes) {
  if (labels.size() != features.rows()) throw StructuralError("make_classification: label count mismatch");
  Dataset ds;
  ds.targets = Matrix(labels.size(), 1);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] >= num_classes) throw StructuralError("make_classification: label out of range");
    ds.targets(n, 0) = static_cast<double>(labels[n]);
  }
  ds.features = std::move(features);
  ds.num_classes = num_classes;
  return ds;
}

Dataset make_regression(Matrix features, Matrix targets) {
  if (targets.rows() != features.rows()) throw StructuralError("make_regression: target count mismatch");
  Dataset ds;
  ds.features = std::move(features);
  ds.targets = std::move(targets);
  return ds;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= m.rows()) throw StructuralError("gather_rows: row index out of range");
    const auto src = m.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

namespace {

class GzReader {
 public:
  explicit GzReader(const std::filesystem::path& path) : path_(path.string()) {
    file_ = gzopen(path_.c_str(), "rb");
    if (file_ == nullptr) throw FormatError("cannot open " + path_);
  }
  ~GzReader() {
    if (file_ != nullptr) gzclose(file_);
  }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  void read(void* dst, std::size_t n) {
    auto* out = static_cast<unsigned char*>(dst);
    std::size_t done = 0;
    while (done < n) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n - done, 1u << 30));
      const int got = gzread(file_, out + done, chunk);
      if (got <= 0) {
        throw FormatError(path_ + ": truncated at byte offset " + std::to_string(offset_ + done) + " (wanted " +
                          std::to_string(n) + " bytes)");
      }
      done += static_cast<std::size_t>(got);
    }
    offset_ += n;
  }

  std::uint32_t read_be32() {
    unsigned char b[4];
    read(b, 4);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
  }

  std::size_t offset() const { return offset_; }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  gzFile file_ = nullptr;
  std::size_t offset_ = 0;
};

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

}  // namespace

Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t limit) {
  GzReader img(images);
  const std::uint32_t img_magic = img.read_be32();
  if (img_magic != kIdxImagesMagic) {
    throw FormatError(img.path() + ": bad IDX image magic " + std::to_string(img_magic) + " at byte offset 0");
  }
  const std::size_t count = img.read_be32();
  const std::size_t rows = img.read_be32();
  const std::size_t cols = img.read_be32();

  GzReader lab(labels);
  const std::uint32_t lab_magic = lab.read_be32();
  if (lab_magic != kIdxLabelsMagic) {
    throw FormatError(lab.path() + ": bad IDX label magic " + std::to_string(lab_magic) + " at byte offset 0");
  }
  const std::size_t label_count = lab.read_be32();
  if (label_count != count) {
    throw FormatError(lab.path() + ": label count " + std::to_string(label_count) + " != image count " +
                      std::to_string(count) + " (byte offset 4)");
  }

  const std::size_t n = limit == 0 ? count : std::min(limit, count);
  const std::size_t dim = rows * cols;
  std::vector<unsigned char> pixels(n * dim);
  img.read(pixels.data(), pixels.size());
  std::vector<unsigned char> raw_labels(n);
  lab.read(raw_labels.data(), raw_labels.size());

  Matrix x(n, dim);
  for (std::size_t k = 0; k < pixels.size(); ++k) x.data()[k] = static_cast<double>(pixels[k]) / 255.0;
  std::vector<std::size_t> y(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (raw_labels[k] > 9) {
      throw FormatError(lab.path() + ": label " + std::to_string(raw_labels[k]) + " out of range at byte offset " +
                        std::to_string(8 + k));
    }
    y[k] = raw_labels[k];
  }
  Dataset ds = make_classification(std::move(x), y, 10);
  ds.normalization.kind = Normalization::Kind::PixelScale;
  ds.normalization.pixel_scale = 1.0 / 255.0;
  return ds;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& cell, const std::string& path, std::size_t line_no) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != cell.size() || !std::isfinite(v)) {
    throw FormatError(path + ":" + std::to_string(line_no) + ": cannot parse '" + cell + "' as a finite number");
  }
  return v;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::string name = path.string();
  std::string line;
  if (!std::getline(in, line)) throw FormatError(name + ":1: missing header row");
  const auto header = split_csv_line(line);
  const std::size_t arity = schema.num_features + 1;
  if (header.size() != arity) {
    throw FormatError(name + ":1: header has " + std::to_string(header.size()) + " columns, schema expects " +
                      std::to_string(arity));
  }
  std::size_t label_col = arity;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == schema.label_column) label_col = c;
  if (label_col == arity) throw FormatError(name + ":1: label column '" + schema.label_column + "' not in header");

  std::vector<double> feats;
  std::vector<std::size_t> labels;
  std::size_t line_no = 1;
  std::size_t max_label = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != arity) {
      throw FormatError(name + ":" + std::to_string(line_no) + ": row has " + std::to_string(cells.size()) +
                        " columns, expected " + std::to_string(arity));
    }
    for (std::size_t c = 0; c < arity; ++c) {
      const double v = parse_number(cells[c], name, line_no);
      if (c == label_col) {
        if (v < 0.0 || v != std::floor(v)) {
          throw FormatError(name + ":" + std::to_string(line_no) + ": label must be a non-negative integer");
        }
        labels.push_back(static_cast<std::size_t>(v));
        max_label = std::max(max_label, labels.back());
      } else {
        feats.push_back(v);
      }
    }
  }
  Matrix x(labels.size(), schema.num_features, std::move(feats));
  return make_classification(std::move(x), labels, std::max<std::size_t>(2, max_label + 1));
}

Standardizer Standardizer::fit(const Dataset& train) {
  if (train.empty()) throw StructuralError("Standardizer::fit: empty dataset");
  const std::size_t n = train.size();
  const std::size_t d = train.dim();
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.stddev.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) s.mean[c] += train.features(r, c);
  for (auto& m : s.mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const double dv = train.features(r, c) - s.mean[c];
      s.stddev[c] += dv * dv;
    }
  for (auto& v : s.stddev) {
    v = std::sqrt(v / static_cast<double>(n));
    if (v < 1e-12) v = 1.0;  // constant column
  }
  return s;
}

void Standardizer::apply(Dataset& ds) const {
  if (ds.normalization.kind == Normalization::Kind::Standardize) {
    throw StructuralError("Standardizer::apply: dataset '" + ds.split + "' is already standardized");
  }
  if (ds.dim() != mean.size()) throw StructuralError("Standardizer::apply: feature count mismatch");
  for (std::size_t r = 0; r < ds.size(); ++r) {
    auto row = ds.features.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mean[c]) / stddev[c];
  }
  ds.normalization.kind = Normalization::Kind::Standardize;
  ds.normalization.mean = mean;
  ds.normalization.stddev = stddev;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw StructuralError("train_test_split: fraction must be in (0, 1)");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  const auto cut = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
  std::vector<std::size_t> a(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
  std::vector<std::size_t> b(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
  Dataset first = ds.subset(a);
  Dataset second = ds.subset(b);
  first.split = "train";
  second.split = "test";
  return {std::move(first), std::move(second)};
}

Dataset synth_blobs(Rng& rng, std::size_t n, std::size_t d, std::size_t classes, double noise, double separation) {
  if (n == 0 || d == 0 || classes == 0) throw StructuralError("synth_blobs: n, d and classes must be >= 1");
  Matrix means(classes, d);
  for (auto& v : means.values()) v = separation * rng.normal();
  Matrix x(n, d);
  std::vector<std::size_t> y(n);
  for (std::size_t r = 0; r < n; ++r) {
    y[r] = r % classes;
    for (std::size_t c = 0; c < d; ++c) x(r, c) = means(y[r], c) + noise * rng.normal();
  }
  Dataset ds = make_classification(std::move(x), y, std::max<std::size_t>(classes, 2));
  ds.split = "synthetic";
  return ds;
}

Dataset synth_noise_features(Rng& rng, std::size_t n, std::size_t d_signal, std::size_t d_noise, std::size_t classes,
                             double noise, double separation) {
  Dataset base = synth_blobs(rng, n, d_signal, classes, noise, separation);
  Matrix x(n, d_signal + d_noise);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d_signal; ++c) x(r, c) = base.features(r, c);
    for (std::size_t c = 0; c < d_noise; ++c) x(r, d_signal + c) = rng.normal();
  }
  base.features = std::move(x);
  for (std::size_t c = 0; c < d_noise; ++c) base.noise_features.push_back(d_signal + c);
  return base;
}

BatchIterator::BatchIterator(std::size_t n, std::size_t batch_size, Rng* rng, bool shuffle)
    : order_(n), batch_size_(batch_size) {
  if (batch_size == 0) throw StructuralError("BatchIterator: batch size must be >= 1");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (shuffle) {
    if (rng == nullptr) throw StructuralError("BatchIterator: shuffling needs an Rng");
    rng->shuffle(std::span<std::size_t>(order_));
  }
}

bool BatchIterator::next(std::vector<std::size_t>& indices) {
  if (pos_ >= order_.size()) return false;
  const std::size_t end = std::min(order_.size(), pos_ + batch_size_);
  indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(pos_), order_.begin() + static_cast<std::ptrdiff_t>(end));
  pos_ = end;
  return true;
}

std::size_t BatchIterator::num_batches() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

}  // namespace spam
