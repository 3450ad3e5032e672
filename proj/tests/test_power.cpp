#include <gtest/gtest.h>

#include "rankprop/power.hpp"

namespace rankprop {
namespace {

TEST(NormalQuantile, StandardValues) {
  EXPECT_NEAR(normal_quantile(0.975), 1.959963985, 1e-8);
  EXPECT_NEAR(normal_quantile(0.8), 0.841621234, 1e-8);
  EXPECT_NEAR(normal_cdf(1.959963985), 0.975, 1e-9);
}

TEST(HypothesizedEffect, HalfTheObservedGap) {
  auto [a, b] = hypothesized_effect(0.10, 0.06);
  EXPECT_NEAR(a, 0.09, 1e-15);
  EXPECT_NEAR(b, 0.07, 1e-15);
  std::tie(a, b) = hypothesized_effect(0.08, 0.04);
  EXPECT_NEAR(a, 0.07, 1e-15);
  EXPECT_NEAR(b, 0.05, 1e-15);
  std::tie(a, b) = hypothesized_effect(0.20, 0.12);
  EXPECT_NEAR(a, 0.18, 1e-15);
  EXPECT_NEAR(b, 0.14, 1e-15);
  EXPECT_THROW(hypothesized_effect(0.10, 0.10), PreconditionError);
  EXPECT_THROW(hypothesized_effect(0.05, 0.10), PreconditionError);
}

TEST(RequiredSample, ClosedForm) {
  // (1.95996 + 0.84162)^2 * (0.09 + 0.0475) / 0.05^2 = 431.69
  EXPECT_EQ(required_sample({0.10, 0.05, 0.05, 0.80}), 432u);
  EXPECT_EQ(required_sample({0.05, 0.10, 0.05, 0.80}), 432u);
  EXPECT_THROW(required_sample({0.10, 0.10, 0.05, 0.80}), PreconditionError);
  EXPECT_THROW(required_sample({0.10, 0.05, 1.5, 0.80}), PreconditionError);
  EXPECT_THROW(required_sample({0.0, 0.05, 0.05, 0.80}), PreconditionError);
}

TEST(RequiredSample, HalvingTheGapQuadruplesN) {
  const double wide = static_cast<double>(required_sample({0.52, 0.48}));
  const double narrow = static_cast<double>(required_sample({0.51, 0.49}));
  EXPECT_NEAR(narrow / wide, 4.0, 0.05);
}

TEST(RequiredSample, DivergesAsGapVanishes) {
  std::uint64_t prev = 0;
  for (double eps : {0.1, 0.03, 0.01, 0.003, 0.001, 0.0003}) {
    const auto n = required_sample({0.5 + eps, 0.5});
    EXPECT_GT(n, prev);
    prev = n;
  }
  EXPECT_GT(prev, 10'000'000u);
}

TEST(MonteCarloPower, MatchesClosedFormAt432) {
  const double p = monte_carlo_power(2.0, 0.05, 432, 0.05, 20000, 1);
  EXPECT_GE(p, 0.77);
  EXPECT_LE(p, 0.83);
}

TEST(MonteCarloPower, TypeOneCalibration) {
  for (double base : {0.05, 0.10}) {
    EXPECT_NEAR(monte_carlo_power(1.0, base, 5000, 0.05, 20000, 9), 0.05, 0.01) << base;
  }
}

TEST(MonteCarloPower, TenfoldSampleIsNearCertain) {
  EXPECT_GT(monte_carlo_power(2.0, 0.05, 4320, 0.05, 2000, 2), 0.99);
}

TEST(MonteCarloPower, AgreesAcrossGrid) {
  for (double base : {0.02, 0.05, 0.10}) {
    for (double ratio : {1.1, 1.25, 1.5}) {
      const auto n = required_sample({base * ratio, base});
      const double p = monte_carlo_power(ratio, base, n, 0.05, 4000, 17);
      EXPECT_NEAR(p, 0.80, 0.03) << "base " << base << " ratio " << ratio << " n " << n;
    }
  }
}

TEST(MonteCarloPower, Preconditions) {
  EXPECT_THROW(monte_carlo_power(2.0, 0.05, 432, 0.05, 500, 1), PreconditionError);
  EXPECT_THROW(monte_carlo_power(2.0, 0.6, 432, 0.05, 1000, 1), PreconditionError);
}

TEST(DaysToSignificance, SplitsTraffic) {
  EXPECT_DOUBLE_EQ(days_to_significance(432, 1000.0, 0.5 / 11.0), 432.0 / (1000.0 * 0.5 / 11.0));
  EXPECT_TRUE(std::isinf(days_to_significance(432, 0.0, 0.1)));
}

}  // namespace
}  // namespace rankprop
