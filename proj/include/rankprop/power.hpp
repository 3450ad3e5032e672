#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <utility>

#include <boost/math/distributions/normal.hpp>

#include "rankprop/errors.hpp"

namespace rankprop {

struct PowerSpec {
  double p_hi = 0.0;
  double p_lo = 0.0;
  double alpha = 0.05;
  double power = 0.80;

  void validate() const {
    if (!(p_hi > 0.0 && p_hi < 1.0 && p_lo > 0.0 && p_lo < 1.0)) {
      throw PreconditionError("contact probabilities must lie in (0, 1)");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) throw PreconditionError("alpha must lie in (0, 1)");
    if (!(power > 0.0 && power < 1.0)) throw PreconditionError("power must lie in (0, 1)");
  }
};

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Effect to plan for when half of an observed rate gap is attributed to
/// position: same midpoint, half the spread.
inline std::pair<double, double> hypothesized_effect(double observed_rate_hi, double observed_rate_lo) {
  if (!(observed_rate_lo > 0.0)) throw PreconditionError("observed rates must be positive");
  if (!(observed_rate_hi > observed_rate_lo)) {
    throw PreconditionError("observed_rate_hi must exceed observed_rate_lo");
  }
  const double mid = (observed_rate_hi + observed_rate_lo) / 2.0;
  const double quarter_gap = (observed_rate_hi - observed_rate_lo) / 4.0;
  return {mid + quarter_gap, mid - quarter_gap};
}

/// Per-cell n for a two-sided unpooled two-proportion z-test.
inline std::uint64_t required_sample(const PowerSpec& spec) {
  spec.validate();
  if (spec.p_hi == spec.p_lo) throw PreconditionError("sample size is unbounded when p_hi == p_lo");
  const double z = normal_quantile(1.0 - spec.alpha / 2.0) + normal_quantile(spec.power);
  const double variance = spec.p_hi * (1.0 - spec.p_hi) + spec.p_lo * (1.0 - spec.p_lo);
  const double gap = spec.p_hi - spec.p_lo;
  return static_cast<std::uint64_t>(std::ceil(z * z * variance / (gap * gap)));
}

/// Rejection rate of the unpooled z-test on simulated cell counts with
/// p_lo = base_rate and p_hi = base_rate * theta_ratio.
inline double monte_carlo_power(double theta_ratio, double base_rate, std::uint64_t n, double alpha, int sims,
                                std::uint64_t seed) {
  if (sims < 1000) throw PreconditionError("monte_carlo_power needs at least 1000 simulations");
  if (n == 0) throw PreconditionError("n must be positive");
  const double p_lo = base_rate;
  const double p_hi = base_rate * theta_ratio;
  if (!(p_lo > 0.0 && p_hi < 1.0)) throw PreconditionError("simulated rates must lie in (0, 1)");

  std::mt19937_64 rng(seed);
  std::binomial_distribution<std::int64_t> draw_hi(static_cast<std::int64_t>(n), p_hi);
  std::binomial_distribution<std::int64_t> draw_lo(static_cast<std::int64_t>(n), p_lo);
  const double crit = normal_quantile(1.0 - alpha / 2.0);
  const double dn = static_cast<double>(n);
  int rejections = 0;
  for (int i = 0; i < sims; ++i) {
    const double a = static_cast<double>(draw_hi(rng)) / dn;
    const double b = static_cast<double>(draw_lo(rng)) / dn;
    const double se = std::sqrt((a * (1.0 - a) + b * (1.0 - b)) / dn);
    if (se > 0.0 && std::abs(a - b) / se > crit) ++rejections;
  }
  return static_cast<double>(rejections) / static_cast<double>(sims);
}

/// Days of traffic until each cell of a pair holds `n_per_cell` sessions, when
/// `daily_sessions` are split holdout/arms by `arm_fraction`.
inline double days_to_significance(std::uint64_t n_per_cell, double daily_sessions, double arm_fraction) {
  if (!(daily_sessions > 0.0 && arm_fraction > 0.0)) return std::numeric_limits<double>::infinity();
  return static_cast<double>(n_per_cell) / (daily_sessions * arm_fraction);
}

}  // namespace rankprop
