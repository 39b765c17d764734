#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "oracles.hpp"
#include "spam/data.hpp"
#include "spam/error.hpp"

using namespace spam;
namespace fs = std::filesystem;

namespace {

const fs::path kData = SPAM_DATA_DIR;

fs::path temp_file(const std::string& name, const std::string& content) {
  const fs::path p = fs::temp_directory_path() / ("spam_test_data_" + name);
  std::ofstream(p, std::ios::binary) << content;
  return p;
}

std::string be32(std::uint32_t v) {
  return {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8), static_cast<char>(v)};
}

CsvSchema cancer_schema() { return {30, "malignant"}; }

}  // namespace

TEST(Data, MnistTestSet) {
  const Dataset ds = load_mnist_idx(kData / "mnist/t10k-images-idx3-ubyte.gz", kData / "mnist/t10k-labels-idx1-ubyte.gz");
  // The bundled fixture is a 2,004-image sample of the test set.
  EXPECT_EQ(ds.size(), 2004u);
  EXPECT_EQ(ds.dim(), 784u);
  EXPECT_EQ(ds.num_classes, 10u);
  EXPECT_GE(*std::min_element(ds.features.values().begin(), ds.features.values().end()), 0.0);
  EXPECT_LE(*std::max_element(ds.features.values().begin(), ds.features.values().end()), 1.0);
  EXPECT_EQ(ds.label(0), 4u);
  EXPECT_EQ(ds.label(3), 7u);
  std::set<std::size_t> labels;
  for (std::size_t n = 0; n < ds.size(); ++n) labels.insert(ds.label(n));
  EXPECT_EQ(labels.size(), 10u);
}

TEST(Data, MnistTrainLimitAndFirstDigit) {
  const Dataset ds =
      load_mnist_idx(kData / "mnist/train-images-idx3-ubyte.gz", kData / "mnist/train-labels-idx1-ubyte.gz", 100);
  EXPECT_EQ(ds.size(), 100u);
  EXPECT_EQ(ds.label(0), 7u);
  EXPECT_EQ(ds.label(2), 9u);
  // Raw pixel sum of the first training image.
  double s = 0.0;
  for (double v : ds.features.row(0)) s += v * 255.0;
  EXPECT_NEAR(s, 18153.0, 1e-6);
}

TEST(Data, MnistTrainFixtureSize) {
  const Dataset ds = load_mnist_idx(kData / "mnist/train-images-idx3-ubyte.gz", kData / "mnist/train-labels-idx1-ubyte.gz");
  EXPECT_EQ(ds.size(), 7996u);
}

TEST(Data, IdxBadMagicReportsOffset) {
  const auto img = temp_file("img", be32(0x00000803) + be32(1) + be32(2) + be32(2) + std::string(4, '\x10'));
  const auto bad = temp_file("badlab", be32(0x00000802) + be32(1) + std::string(1, '\x01'));
  try {
    load_mnist_idx(img, bad);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos) << e.what();
  }
}

TEST(Data, IdxTruncationIsFormatError) {
  const auto img = temp_file("trunc", be32(0x00000803) + be32(2) + be32(2) + be32(2) + std::string(5, '\x10'));
  const auto lab = temp_file("lab2", be32(0x00000801) + be32(2) + std::string(2, '\x01'));
  EXPECT_THROW(load_mnist_idx(img, lab), FormatError);
  const auto img1 = temp_file("img1", be32(0x00000803) + be32(1) + be32(1) + be32(1) + std::string(1, '\xff'));
  const auto lab1 = temp_file("lab1", be32(0x00000801) + be32(1) + std::string(1, '\x03'));
  const Dataset ok = load_mnist_idx(img1, lab1);
  EXPECT_EQ(ok.features(0, 0), 1.0);
  EXPECT_EQ(ok.label(0), 3u);
}

TEST(Data, CancerCsv) {
  const Dataset ds = load_csv(kData / "breast_cancer.csv", cancer_schema());
  EXPECT_EQ(ds.size(), 569u);
  EXPECT_EQ(ds.dim(), 30u);
  EXPECT_EQ(ds.num_classes, 2u);
  EXPECT_NEAR(ds.features(0, 0), 17.99, 1e-12);
}

TEST(Data, CsvArityErrorNamesLine) {
  const auto p = temp_file("bad.csv", "a,b,y\n1,2,0\n3,1\n");
  try {
    load_csv(p, {2, "y"});
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_csv(temp_file("nolabel.csv", "a,b,z\n1,2,0\n"), {2, "y"}), FormatError);
}

TEST(Data, StandardizeUsesTrainStatistics) {
  Rng rng(1);
  const Dataset ds = load_csv(kData / "breast_cancer.csv", cancer_schema());
  auto [train, test] = train_test_split(ds, 0.8, rng);
  EXPECT_EQ(train.size(), 455u);
  EXPECT_EQ(train.size() + test.size(), 569u);
  const Standardizer st = Standardizer::fit(train);
  const Dataset raw_test = test;
  st.apply(train);
  st.apply(test);
  for (std::size_t d = 0; d < 30; ++d) {
    double m = 0.0, v = 0.0;
    for (std::size_t n = 0; n < train.size(); ++n) m += train.features(n, d);
    m /= train.size();
    for (std::size_t n = 0; n < train.size(); ++n) v += (train.features(n, d) - m) * (train.features(n, d) - m);
    EXPECT_LE(std::abs(m), 1e-10);
    EXPECT_NEAR(v / train.size(), 1.0, 1e-2);
    EXPECT_NEAR(test.features(0, d), (raw_test.features(0, d) - st.mean[d]) / st.stddev[d], 1e-12);
  }
  EXPECT_THROW(st.apply(train), StructuralError);
}

TEST(Data, SplitIsDisjointAndSeeded) {
  Rng rng(2);
  Matrix x(50, 1);
  std::vector<std::size_t> y(50);
  for (std::size_t n = 0; n < 50; ++n) {
    x(n, 0) = static_cast<double>(n);
    y[n] = n % 2;
  }
  const Dataset ds = make_classification(x, y, 2);
  Rng r1(9), r2(9);
  auto [a, b] = train_test_split(ds, 0.7, r1);
  auto [c, d] = train_test_split(ds, 0.7, r2);
  EXPECT_EQ(a.features, c.features);
  std::set<double> seen;
  for (std::size_t n = 0; n < a.size(); ++n) seen.insert(a.features(n, 0));
  for (std::size_t n = 0; n < b.size(); ++n) EXPECT_TRUE(seen.insert(b.features(n, 0)).second);
  EXPECT_EQ(seen.size(), 50u);
}

TEST(Data, BatchIteratorCoversEveryIndexOnce) {
  for (bool shuffle : {true, false}) {
    Rng rng(3);
    BatchIterator it(103, 10, &rng, shuffle);
    EXPECT_EQ(it.num_batches(), 11u);
    std::vector<std::size_t> batch, all;
    std::size_t count = 0;
    while (it.next(batch)) {
      all.insert(all.end(), batch.begin(), batch.end());
      ++count;
    }
    EXPECT_EQ(count, 11u);
    EXPECT_EQ(batch.size(), 3u);
    if (!shuffle) EXPECT_TRUE(std::is_sorted(all.begin(), all.end()));
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> want(103);
    std::iota(want.begin(), want.end(), 0);
    EXPECT_EQ(all, want);
  }
}

TEST(Data, BatchIteratorSeeded) {
  Rng r1(4), r2(4);
  BatchIterator a(40, 7, &r1), b(40, 7, &r2);
  std::vector<std::size_t> x, y;
  while (a.next(x)) {
    ASSERT_TRUE(b.next(y));
    EXPECT_EQ(x, y);
  }
}

TEST(Data, DistantBlobsAreSeparable) {
  Rng rng(5);
  const Dataset ds = synth_blobs(rng, 400, 2, 2, 0.3, 20.0);
  // Margin along the line joining the class means.
  std::vector<double> mu[2] = {{0, 0}, {0, 0}};
  std::size_t cnt[2] = {0, 0};
  for (std::size_t n = 0; n < ds.size(); ++n) {
    for (std::size_t d = 0; d < 2; ++d) mu[ds.label(n)][d] += ds.features(n, d);
    ++cnt[ds.label(n)];
  }
  ASSERT_GT(cnt[0], 0u);
  ASSERT_GT(cnt[1], 0u);
  for (int c = 0; c < 2; ++c)
    for (auto& v : mu[c]) v /= cnt[c];
  const double w0 = mu[1][0] - mu[0][0], w1 = mu[1][1] - mu[0][1];
  const double mid = 0.5 * (w0 * (mu[0][0] + mu[1][0]) + w1 * (mu[0][1] + mu[1][1]));
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const double s = w0 * ds.features(n, 0) + w1 * ds.features(n, 1) - mid;
    EXPECT_EQ(s > 0, ds.label(n) == 1u);
  }
}

TEST(Data, BlobsAreSeeded) {
  Rng a(6), b(6);
  EXPECT_EQ(synth_blobs(a, 30, 3, 3, 1.0).features, synth_blobs(b, 30, 3, 3, 1.0).features);
}

TEST(Data, NoiseColumnsUncorrelatedWithLabels) {
  Rng rng(7);
  const std::size_t n = 2000;
  const Dataset ds = synth_noise_features(rng, n, 3, 5, 2, 1.0);
  ASSERT_EQ(ds.noise_features.size(), 5u);
  EXPECT_EQ(ds.noise_features.front(), 3u);
  for (std::size_t c : ds.noise_features) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += ds.features(i, c);
      my += ds.label(i);
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = ds.features(i, c) - mx, dy = ds.label(i) - my;
      sxy += dx * dy;
      sxx += dx * dx;
      syy += dy * dy;
    }
    EXPECT_LE(std::abs(sxy / std::sqrt(sxx * syy)), 3.0 / std::sqrt(static_cast<double>(n)));
  }
}
