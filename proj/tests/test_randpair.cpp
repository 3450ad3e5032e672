#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "rankprop/randpair.hpp"

namespace rankprop {
namespace {

std::vector<std::string> names(std::initializer_list<const char*> xs) { return {xs.begin(), xs.end()}; }

TEST(ParsePairs, ReadsList) {
  const auto p = parse_pairs("1-2,11-19");
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[1], (SwapPair{11, 19}));
  EXPECT_THROW(parse_pairs("1:2"), ConfigError);
  EXPECT_THROW(parse_pairs("a-b"), ConfigError);
}

TEST(AllocationPlan, DefaultShape) {
  AllocationPlan plan;
  EXPECT_NO_THROW(plan.validate());
  ASSERT_EQ(plan.swap_pairs.size(), 11u);
  EXPECT_EQ(plan.swap_pairs.front(), (SwapPair{1, 2}));
  EXPECT_EQ(plan.swap_pairs.back(), (SwapPair{11, 19}));
  EXPECT_NEAR(plan.arm_fraction(), 0.5 / 11.0, 1e-15);
}

TEST(AllocationPlan, RejectsBadPlans) {
  AllocationPlan plan;
  plan.swap_pairs = {{2, 1}};
  EXPECT_THROW(plan.validate(), ConfigError);
  plan.swap_pairs = {{1, 2}, {1, 2}};
  EXPECT_THROW(plan.validate(), ConfigError);
  plan.swap_pairs = {{1, 2}};
  plan.holdout_fraction = 1.5;
  EXPECT_THROW(plan.validate(), ConfigError);
}

TEST(AllocationPlan, JsonRoundTrip) {
  AllocationPlan plan;
  plan.holdout_fraction = 0.25;
  plan.swap_pairs = {{1, 3}, {3, 4}};
  plan.salt = "s";
  const auto back = plan_from_json(to_json(plan));
  EXPECT_EQ(back.holdout_fraction, 0.25);
  EXPECT_EQ(back.swap_pairs, plan.swap_pairs);
  EXPECT_EQ(back.salt, "s");
}

TEST(Fnv1a64, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(AssignArm, DeterministicPerVisitorAndSalt) {
  AllocationPlan plan;
  for (int i = 0; i < 1000; ++i) {
    const VisitorId v("visitor-" + std::to_string(i));
    const auto a = assign_arm(v, plan);
    EXPECT_EQ(a, assign_arm(v, plan));
    EXPECT_FALSE(a.applied);
  }
}

TEST(AssignArm, SaltChangesBuckets) {
  AllocationPlan a, b;
  b.salt = "other";
  int differ = 0;
  for (int i = 0; i < 1000; ++i) {
    const VisitorId v("v" + std::to_string(i));
    if (assign_arm(v, a) != assign_arm(v, b)) ++differ;
  }
  EXPECT_GT(differ, 400);
}

TEST(AssignArm, FullHoldout) {
  AllocationPlan plan;
  plan.holdout_fraction = 1.0;
  for (int i = 0; i < 10000; ++i) {
    EXPECT_EQ(assign_arm(VisitorId("v" + std::to_string(i)), plan).kind, ArmKind::holdout);
  }
}

TEST(AssignArm, EmptyPairListIsHoldout) {
  AllocationPlan plan;
  plan.holdout_fraction = 0.0;
  plan.swap_pairs.clear();
  EXPECT_EQ(assign_arm(VisitorId("x"), plan).kind, ArmKind::holdout);
}

TEST(ApplySwap, Examples) {
  const auto r = apply_swap(names({"a", "b", "c"}), ArmAssignment::swap(1, 2));
  EXPECT_EQ(r.displayed, names({"b", "a", "c"}));
  EXPECT_TRUE(r.arm.applied);

  const auto short_list = apply_swap(names({"a", "b"}), ArmAssignment::swap(2, 3));
  EXPECT_EQ(short_list.displayed, names({"a", "b"}));
  EXPECT_FALSE(short_list.arm.applied);

  std::vector<int> nineteen(19);
  std::iota(nineteen.begin(), nineteen.end(), 1);
  const auto deep = apply_swap(nineteen, ArmAssignment::swap(11, 19));
  EXPECT_EQ(deep.displayed[10], 19);
  EXPECT_EQ(deep.displayed[18], 11);
  for (int k = 12; k <= 18; ++k) EXPECT_EQ(deep.displayed[static_cast<std::size_t>(k - 1)], k);

  const auto hold = apply_swap(names({"a", "b"}), ArmAssignment::holdout());
  EXPECT_FALSE(hold.arm.applied);
  EXPECT_EQ(hold.displayed, names({"a", "b"}));

  EXPECT_THROW(apply_swap(std::vector<int>{}, ArmAssignment::swap(1, 2)), PreconditionError);
}

TEST(ApplySwap, InvolutionAndExactlyTwoDifferences) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 25);
    std::vector<int> list(static_cast<std::size_t>(n));
    std::iota(list.begin(), list.end(), 1);
    const int hi = 1 + static_cast<int>(rng() % 20);
    const int lo = hi + 1 + static_cast<int>(rng() % 10);
    const auto once = apply_swap(list, ArmAssignment::swap(hi, lo));
    const auto twice = apply_swap(once.displayed, ArmAssignment::swap(hi, lo));
    EXPECT_EQ(twice.displayed, list);
    int diffs = 0;
    for (std::size_t i = 0; i < list.size(); ++i) diffs += once.displayed[i] != list[i];
    EXPECT_EQ(diffs, once.arm.applied ? 2 : 0);
    EXPECT_EQ(once.arm.applied, lo <= n);
  }
}

}  // namespace
}  // namespace rankprop
