#include "calib/error.hpp"
#include "calib/metrics.hpp"

#include "oracles.hpp"
#include "pav_oracle.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

using namespace calib;
using namespace calib::metrics;

using namespace oracle;

TEST(Pav, SmallExamples) {
  std::vector<ScoredTrial> t{{0.0, 0}, {1.0, 1}, {2.0, 1}};
  auto p = pav_posteriors(t);
  EXPECT_EQ(p, (std::vector<double>{0.0, 1.0, 1.0}));
  t = {{0.0, 1}, {1.0, 0}, {2.0, 1}};
  p = pav_posteriors(t);
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
  EXPECT_DOUBLE_EQ(p[2], 1.0);
  const PavMap map = pav_calibrate(t);
  EXPECT_DOUBLE_EQ(map(-10.0), 0.5);
  EXPECT_DOUBLE_EQ(map(1.5), 0.5);
  EXPECT_DOUBLE_EQ(map(7.0), 1.0);
  EXPECT_THROW(pav_calibrate(std::vector<ScoredTrial>{{0.0, 1}, {1.0, 1}}), Error);
}

TEST(Pav, TiesArePooledFirst) {
  const std::vector<ScoredTrial> t{{1.0, 1}, {1.0, 0}, {1.0, 0}, {2.0, 1}};
  const auto p = pav_posteriors(t);
  EXPECT_NEAR(p[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[3], 1.0, 1e-15);
}

TEST(Pav, ExhaustiveSmallInstances) {
  const auto grid = fraction_grid(8);
  int checked = 0;
  for (int n = 2; n <= 8; ++n)
    for (unsigned labels = 0; labels < (1u << n); ++labels) {
      const int ones = __builtin_popcount(labels);
      if (ones == 0 || ones == n) continue;
      // Bit k of `ties` set: trial k+1 shares the score of trial k.
      for (unsigned ties = 0; ties < (1u << (n - 1)); ++ties) {
        std::vector<ScoredTrial> t(n);
        double s = 0.0;
        for (int k = 0; k < n; ++k) {
          if (k > 0 && !((ties >> (k - 1)) & 1u)) s += 1.0;
          t[k] = {s, int((labels >> k) & 1u)};
        }
        const auto p = pav_posteriors(t);
        const auto b = blocks_of(t);
        const auto expect = isotonic_maxmin(b);
        double pav_loss = 0.0;
        for (std::size_t i = 0, k = 0; i < b.size(); ++i) {
          for (int r = 0; r < b[i].n; ++r, ++k) ASSERT_NEAR(p[k], expect[i], 1e-12);
          pav_loss += block_loss(b[i], expect[i]);
        }
        ASSERT_NEAR(pav_loss, grid_min_loss(b, grid), 1e-10);
        for (std::size_t k = 1; k < p.size(); ++k) ASSERT_LE(p[k - 1], p[k] + 1e-15);
        const auto rep = cllr_decompose(t);
        ASSERT_NEAR(rep.cllr_min, balanced_bits(t, p), 1e-10);
        ASSERT_GE(rep.cllr_cal, -1e-12);
        ++checked;
      }
    }
  EXPECT_GT(checked, 40000);
}

TEST(Cllr, Limits) {
  std::vector<ScoredTrial> zero;
  for (int k = 0; k < 10; ++k) zero.push_back({0.0, k % 2});
  EXPECT_EQ(cllr(zero), 1.0);
  std::vector<ScoredTrial> zero_unbalanced;
  for (int k = 0; k < 1000; ++k) zero_unbalanced.push_back({0.0, k % 3 == 0});
  EXPECT_EQ(cllr(zero_unbalanced), 1.0);
  std::vector<ScoredTrial> sep{{50.0, 1}, {60.0, 1}, {-50.0, 0}, {-70.0, 0}};
  EXPECT_LT(cllr(sep), 1e-20);
  EXPECT_EQ(cllr_decompose(sep).cllr_min, 0.0);
  std::vector<ScoredTrial> wrong{{-50.0, 1}, {50.0, 0}};
  EXPECT_NEAR(cllr(wrong), 50.0 / std::log(2.0), 1e-9);
}

TEST(Cllr, QuadratureOracle) {
  const double mu = 3.28;
  const double sd = std::sqrt(2.0 * mu);
  auto integrand = [&](double l) {
    return std::exp(-0.5 * (l - mu) * (l - mu) / (2.0 * mu)) / (sd * std::sqrt(2.0 * M_PI)) *
           std::log2(1.0 + std::exp(-l));
  };
  const double expected = oracle::simpson(integrand, mu - 12 * sd, mu + 12 * sd);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> nd;
  std::vector<ScoredTrial> t;
  for (int k = 0; k < 100000; ++k) t.push_back({mu + sd * nd(rng), 1});
  for (int k = 0; k < 100000; ++k) t.push_back({-mu + sd * nd(rng), 0});
  EXPECT_NEAR(cllr(t), expected, 0.02);
  const auto rep = cllr_decompose(t);
  EXPECT_GE(rep.cllr_cal, -1e-12);
  EXPECT_LT(rep.cllr_cal, 0.01);
}

TEST(Eer, Cases) {
  std::vector<ScoredTrial> sep{{1.0, 1}, {2.0, 1}, {-1.0, 0}, {-2.0, 0}};
  EXPECT_NEAR(eer(sep), 0.0, 1e-15);
  std::mt19937_64 rng(22);
  std::normal_distribution<double> nd;
  std::vector<ScoredTrial> noise;
  for (int k = 0; k < 20000; ++k) noise.push_back({nd(rng), k % 2});
  EXPECT_NEAR(eer(noise), 0.5, 0.02);
  const double mu = 10.8238, sd = std::sqrt(2.0 * mu);
  std::vector<ScoredTrial> cal;
  for (int k = 0; k < 50000; ++k) cal.push_back({mu + sd * nd(rng), 1});
  for (int k = 0; k < 50000; ++k) cal.push_back({-mu + sd * nd(rng), 0});
  EXPECT_NEAR(eer(cal), 0.01, 0.003);
}

TEST(Cmc, UniformAndOneHot) {
  const std::vector<int> labels{0, 1, 2, 1, 0, 2};
  EXPECT_NEAR(c_mc(Matrix::Zero(6, 3), labels).cmc, std::log(3.0), 1e-15);
  Matrix hot = Matrix::Constant(6, 3, -800.0);
  for (int n = 0; n < 6; ++n) hot(n, labels[n]) = 0.0;
  const auto r = c_mc(hot, labels);
  EXPECT_NEAR(r.cmc, 0.0, 1e-300);
  EXPECT_EQ(r.accuracy, 1.0);
}

TEST(Cmc, MatchesDirectFormula) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> nd(0.0, 3.0);
  const int n = 300, d = 4;
  Matrix ll(n, d);
  std::vector<int> labels(n);
  for (int r = 0; r < n; ++r) {
    labels[r] = r % 7 == 0 ? 3 : r % d;
    for (int c = 0; c < d; ++c) ll(r, c) = nd(rng);
  }
  std::vector<double> sum(d, 0.0);
  std::vector<int> count(d, 0);
  double total = 0.0;
  for (int r = 0; r < n; ++r) {
    double z = 0.0;
    for (int c = 0; c < d; ++c) z += std::exp(ll(r, c));
    const double nl = -(ll(r, labels[r]) - std::log(z));
    sum[labels[r]] += nl;
    count[labels[r]] += 1;
    total += nl;
  }
  double bal = 0.0;
  for (int k = 0; k < d; ++k) bal += sum[k] / count[k];
  EXPECT_NEAR(c_mc(ll, labels).cmc, bal / d, 1e-12);
  EXPECT_NEAR(c_mc_trial_weighted(ll, labels), total / n, 1e-12);
  Matrix shifted = ll;
  for (int r = 0; r < n; ++r) shifted.row(r).array() += double(r) * 10.0;
  EXPECT_NEAR(c_mc(shifted, labels).cmc, c_mc(ll, labels).cmc, 1e-10);
}

TEST(Pairwise, TrialsAndArgmax) {
  Matrix ll(4, 3);
  ll << 1, 0, 0, 0, 2, 0, 0, 0, 3, 5, 5, 0;
  const std::vector<int> labels{0, 1, 2, 1};
  const auto t = pairwise_trials(ll, labels, 0, 1);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t[0].score, 1.0);
  EXPECT_EQ(t[0].label, 1);
  EXPECT_EQ(t[1].score, -2.0);
  EXPECT_EQ(t[1].label, 0);
  EXPECT_EQ(argmax_rows(ll), (std::vector<int>{0, 1, 2, 0}));
  EXPECT_DOUBLE_EQ(accuracy(ll, labels), 0.75);
}
