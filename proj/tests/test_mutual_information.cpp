#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "fishloc/mutual_information.hpp"

using namespace fishloc;

namespace {

std::vector<IntensitySample> pairs(const std::vector<int>& x, const std::vector<int>& y) {
  std::vector<IntensitySample> out;
  for (std::size_t i = 0; i < x.size(); ++i) out.push_back({std::uint8_t(x[i]), std::uint8_t(y[i])});
  return out;
}

// Plug-in entropies from std::map counts, in long double.
Entropies oracle(const std::vector<IntensitySample>& s) {
  std::map<int, long> cx, cy, cxy;
  for (const auto& p : s) {
    ++cx[p.x];
    ++cy[p.y];
    ++cxy[p.x * 256 + p.y];
  }
  const long double n = s.size();
  const auto h = [&](const std::map<int, long>& c) {
    long double acc = 0.0L;
    for (const auto& [_, k] : c) acc -= (k / n) * std::log(k / n);
    return static_cast<double>(acc);
  };
  Entropies e;
  e.h_x = h(cx);
  e.h_y = h(cy);
  e.h_xy = h(cxy);
  e.mi = e.h_x + e.h_y - e.h_xy;
  return e;
}

}  // namespace

TEST(Histogram, Probabilities) {
  const auto h = build_histogram(pairs({5, 5, 7, 9}, {0, 0, 0, 0}));
  EXPECT_EQ(h.p_x(5), 0.5);
  EXPECT_EQ(h.p_x(7), 0.25);
  EXPECT_EQ(h.p_x(9), 0.25);
  EXPECT_EQ(h.p_x(6), 0.0);
}

TEST(Histogram, Empty) {
  const auto h = build_histogram({});
  EXPECT_EQ(h.n, 0u);
  EXPECT_EQ(h.p_x(0), 0.0);
  EXPECT_THROW(mutual_information(h), DomainError);
}

TEST(Histogram, JointMarginalsAreExact) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> u(0, 255);
  std::vector<IntensitySample> s;
  for (int i = 0; i < 10000; ++i) s.push_back({std::uint8_t(u(rng)), std::uint8_t(u(rng) / 3)});
  const auto h = build_histogram(s);
  double total = 0.0;
  for (int a = 0; a < 256; ++a) {
    std::uint64_t row = 0, col = 0;
    for (int b = 0; b < 256; ++b) {
      row += h.joint_count(a, b);
      col += h.joint_count(b, a);
      total += h.p_xy(a, b);
    }
    EXPECT_EQ(row, h.x[a]);
    EXPECT_EQ(col, h.y[a]);
  }
  EXPECT_NEAR(total, 1.0, 1e-15 * 10000);
}

TEST(MutualInformation, IdenticalBinary) {
  const auto e = mutual_information(pairs({0, 0, 1, 1}, {0, 0, 1, 1}));
  EXPECT_NEAR(e.h_x, std::log(2.0), 1e-15);
  EXPECT_NEAR(e.h_y, std::log(2.0), 1e-15);
  EXPECT_NEAR(e.h_xy, std::log(2.0), 1e-15);
  EXPECT_NEAR(e.mi, std::log(2.0), 1e-15);
}

TEST(MutualInformation, IndependentBinary) {
  const auto e = mutual_information(pairs({0, 0, 1, 1}, {0, 1, 0, 1}));
  EXPECT_NEAR(e.h_xy, std::log(4.0), 1e-15);
  EXPECT_NEAR(e.mi, 0.0, 1e-15);
}

TEST(MutualInformation, ConstantXHasZeroMI) {
  const auto e = mutual_information(pairs({3, 3, 3, 3, 3}, {1, 2, 3, 4, 5}));
  EXPECT_EQ(e.h_x, 0.0);
  EXPECT_NEAR(e.mi, 0.0, 1e-15);
}

TEST(MutualInformation, MatchesOracleAndBounds) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = std::uniform_int_distribution<int>(10, 20000)(rng);
    const double q = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    std::vector<IntensitySample> s;
    for (int i = 0; i < n; ++i) {
      const auto x = std::uint8_t(rng() % 256);
      const auto y = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < q ? x : std::uint8_t(rng() % 256);
      s.push_back({x, y});
    }
    const auto e = mutual_information(s);
    const auto o = oracle(s);
    EXPECT_NEAR(e.h_x, o.h_x, 1e-12);
    EXPECT_NEAR(e.h_y, o.h_y, 1e-12);
    EXPECT_NEAR(e.h_xy, o.h_xy, 1e-12);
    EXPECT_NEAR(e.mi, o.mi, 1e-12);
    EXPECT_GE(e.mi, -1e-12);
    EXPECT_LE(e.mi, std::min(e.h_x, e.h_y) + 1e-12);
    std::vector<IntensitySample> swapped;
    for (const auto& p : s) swapped.push_back({p.y, p.x});
    EXPECT_EQ(mutual_information(swapped).mi, e.mi);
  }
}

TEST(MutualInformation, OrderIndependent) {
  std::mt19937_64 rng(4);
  std::vector<IntensitySample> s;
  for (int i = 0; i < 5000; ++i) s.push_back({std::uint8_t(rng() % 40), std::uint8_t(rng() % 90)});
  const auto a = mutual_information(s);
  std::shuffle(s.begin(), s.end(), rng);
  const auto b = mutual_information(s);
  EXPECT_EQ(a.h_x, b.h_x);
  EXPECT_EQ(a.h_xy, b.h_xy);
  EXPECT_EQ(a.mi, b.mi);
}
