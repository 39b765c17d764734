#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spam/rng.hpp"

using namespace spam;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
  }
}

TEST(Rng, KnownFirstValue) {
  // SplitMix64 reference: first output for seed 0 is mix64(golden gamma).
  Rng r(0);
  EXPECT_EQ(r.next_u64(), 0xe220a8397b1dcdafULL);
}

TEST(Rng, UniformMomentsAndRange) {
  Rng r(7);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
    s2 += u * u;
  }
  EXPECT_NEAR(s / n, 0.5, 0.005);
  EXPECT_NEAR(s2 / n - 0.25, 1.0 / 12.0, 0.003);
}

TEST(Rng, NormalMoments) {
  Rng r(8);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, IndexCoversRangeEvenly) {
  Rng r(9);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[r.index(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng r(10);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  r.shuffle(std::span<int>(v));
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_FALSE(std::is_sorted(v.begin(), v.end()));
}

TEST(Rng, ForkIsIndependentAndDoesNotAdvance) {
  Rng r(11);
  const auto before = r.counter();
  Rng f1 = r.fork(1), f2 = r.fork(2), f1b = r.fork(1);
  EXPECT_EQ(r.counter(), before);
  EXPECT_EQ(f1.next_u64(), f1b.next_u64());
  EXPECT_NE(Rng(11).fork(1).next_u64(), f2.next_u64());
}
