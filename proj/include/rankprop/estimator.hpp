#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rankprop/core.hpp"
#include "rankprop/randpair.hpp"

namespace rankprop {

/// Contact/impression counts for one swapped pair. Cell names read
/// <original position><displayed position>: c_lh counts contacts on the
/// naturally-lower document after it was swapped up to `hi`.
struct PairCounts {
  Position hi = 0;
  Position lo = 0;
  std::uint64_t c_hh = 0, n_hh = 0;
  std::uint64_t c_lh = 0, n_lh = 0;
  std::uint64_t c_ll = 0, n_ll = 0;
  std::uint64_t c_hl = 0, n_hl = 0;

  bool operator==(const PairCounts&) const = default;
};

struct RatioEstimate {
  Position hi = 0;
  Position lo = 0;
  double ratio = 0.0;  // theta_hi / theta_lo
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::uint64_t n_effective = 0;  // treated (applied swap) sessions
};

/// Per-session tallies for one pair, kept as joint 2x2 tables so the
/// session-level bootstrap can resample without revisiting the log. Each
/// contributing session lands in exactly one category
/// 2 * contacted_at_hi + contacted_at_lo of its population.
struct PairTally {
  Position hi = 0;
  Position lo = 0;
  std::array<std::uint64_t, 4> holdout{};  // natural == displayed, length >= lo
  std::array<std::uint64_t, 4> swapped{};  // arm swap(hi, lo), applied

  PairTally() = default;
  PairTally(Position h, Position l) : hi(h), lo(l) {}

  void add(const SearchSession& s) {
    if (static_cast<Position>(s.length()) < lo) return;
    if (s.arm.kind == ArmKind::holdout) {
      ++holdout[category(s)];
    } else if (s.arm.applied && s.arm.is_swap(hi, lo)) {
      ++swapped[category(s)];
    }
  }

  void merge(const PairTally& other) {
    for (int i = 0; i < 4; ++i) {
      holdout[i] += other.holdout[i];
      swapped[i] += other.swapped[i];
    }
  }

  std::uint64_t holdout_sessions() const { return holdout[0] + holdout[1] + holdout[2] + holdout[3]; }
  std::uint64_t treated_sessions() const { return swapped[0] + swapped[1] + swapped[2] + swapped[3]; }

  PairCounts counts() const { return counts_from(holdout, swapped); }

  PairCounts counts_from(const std::array<std::uint64_t, 4>& h, const std::array<std::uint64_t, 4>& s) const {
    PairCounts c;
    c.hi = hi;
    c.lo = lo;
    c.n_hh = c.n_ll = h[0] + h[1] + h[2] + h[3];
    c.c_hh = h[2] + h[3];
    c.c_ll = h[1] + h[3];
    c.n_lh = c.n_hl = s[0] + s[1] + s[2] + s[3];
    c.c_lh = s[2] + s[3];  // natural-lo document, now displayed at hi
    c.c_hl = s[1] + s[3];  // natural-hi document, now displayed at lo
    return c;
  }

 private:
  std::size_t category(const SearchSession& s) const {
    const bool at_hi = s.at_displayed(hi).contacted;
    const bool at_lo = s.at_displayed(lo).contacted;
    return (at_hi ? 2u : 0u) + (at_lo ? 1u : 0u);
  }
};

inline void require_cells(const PairCounts& c) {
  const std::string pair = "(" + std::to_string(c.hi) + "," + std::to_string(c.lo) + ")";
  if (c.n_hh == 0) throw InsufficientDataError("pair " + pair + ": cell n_hh (natural hi shown at hi) is empty");
  if (c.n_lh == 0) throw InsufficientDataError("pair " + pair + ": cell n_lh (lo swapped up to hi) is empty");
  if (c.n_ll == 0) throw InsufficientDataError("pair " + pair + ": cell n_ll (natural lo shown at lo) is empty");
  if (c.n_hl == 0) throw InsufficientDataError("pair " + pair + ": cell n_hl (hi swapped down to lo) is empty");
}

/// Counts for swap(hi, lo): swapped cells from applied swap(hi, lo)
/// sessions, unswapped cells from holdout sessions with at least `lo` slots.
template <typename SessionRange>
PairCounts aggregate_pair_counts(const SessionRange& log, Position hi, Position lo) {
  PairTally tally(hi, lo);
  for (const SearchSession& s : log) tally.add(s);
  PairCounts c = tally.counts();
  require_cells(c);
  return c;
}

/// Quality-neutral rate ratio. The factor 0.5 in both averaged rates cancels.
inline RatioEstimate estimate_pair_ratio(const PairCounts& c) {
  require_cells(c);
  const auto rate = [](std::uint64_t num, std::uint64_t den) {
    return static_cast<double>(num) / static_cast<double>(den);
  };
  const double r_hi = rate(c.c_hh, c.n_hh) + rate(c.c_lh, c.n_lh);
  const double r_lo = rate(c.c_ll, c.n_ll) + rate(c.c_hl, c.n_hl);
  if (r_lo == 0.0) {
    throw UndefinedRatioError("pair (" + std::to_string(c.hi) + "," + std::to_string(c.lo) +
                              "): no contacts observed at the lower slot");
  }
  if (r_hi == 0.0) {
    throw UndefinedRatioError("pair (" + std::to_string(c.hi) + "," + std::to_string(c.lo) +
                              "): no contacts observed at the higher slot");
  }
  const double ratio = r_hi / r_lo;
  return {c.hi, c.lo, ratio, ratio, ratio, c.n_lh};
}

namespace detail {

inline std::array<std::uint64_t, 4> multinomial(const std::array<std::uint64_t, 4>& cells, std::mt19937_64& rng) {
  std::array<std::uint64_t, 4> out{};
  std::uint64_t remaining = cells[0] + cells[1] + cells[2] + cells[3];
  std::uint64_t mass = remaining;
  for (std::size_t i = 0; i + 1 < cells.size() && remaining > 0; ++i) {
    if (cells[i] == 0) continue;
    const double p = std::min(1.0, static_cast<double>(cells[i]) / static_cast<double>(mass));
    std::binomial_distribution<std::int64_t> draw(static_cast<std::int64_t>(remaining), p);
    const auto k = static_cast<std::uint64_t>(draw(rng));
    out[i] = k;
    remaining -= k;
    mass -= cells[i];
  }
  out[3] += remaining;
  return out;
}

/// Type-7 sample quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64_finalize(seed ^ splitmix64_finalize(a * 0x9e3779b97f4a7c15ULL + b));
}

}  // namespace detail

inline constexpr int kDefaultBootstrapReps = 1000;

/// Percentile 95% interval from a stratified session bootstrap: holdout and
/// treated sessions are resampled separately, each with its own size.
inline RatioEstimate bootstrap_ci(const PairTally& tally, int replications, std::uint64_t seed,
                                  double confidence = 0.95) {
  if (replications < 100) throw PreconditionError("bootstrap needs at least 100 replications");
  RatioEstimate point = estimate_pair_ratio(tally.counts());

  std::mt19937_64 rng(detail::derive_seed(seed, static_cast<std::uint64_t>(tally.hi),
                                          static_cast<std::uint64_t>(tally.lo)));
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(replications));
  const int max_failures = 10 * replications;
  int failures = 0;
  while (static_cast<int>(samples.size()) < replications) {
    const auto h = detail::multinomial(tally.holdout, rng);
    const auto s = detail::multinomial(tally.swapped, rng);
    try {
      samples.push_back(estimate_pair_ratio(tally.counts_from(h, s)).ratio);
    } catch (const UndefinedRatioError&) {
      if (++failures > max_failures) {
        throw UndefinedRatioError("bootstrap for pair (" + std::to_string(tally.hi) + "," +
                                  std::to_string(tally.lo) + ") kept drawing undefined ratios");
      }
    }
  }
  std::sort(samples.begin(), samples.end());
  const double tail = (1.0 - confidence) / 2.0;
  point.ci_low = std::min(point.ratio, detail::quantile_sorted(samples, tail));
  point.ci_high = std::max(point.ratio, detail::quantile_sorted(samples, 1.0 - tail));
  return point;
}

template <typename SessionRange>
RatioEstimate bootstrap_ci(const SessionRange& log, Position hi, Position lo, int replications,
                           std::uint64_t seed) {
  if (replications < 100) throw PreconditionError("bootstrap needs at least 100 replications");
  PairTally tally(hi, lo);
  for (const SearchSession& s : log) tally.add(s);
  return bootstrap_ci(tally, replications, seed);
}

/// Places pair ratios on one scale by transitivity from position 1. With
/// interpolate_gap, positions strictly between a non-adjacent pair's ends
/// are filled log-linearly. Interval endpoints are chained the same way,
/// pairing the widest combination.
inline PropensityTable chain_theta(std::vector<RatioEstimate> estimates, bool interpolate_gap,
                                   InterfaceId interface = InterfaceId("search")) {
  if (estimates.empty()) throw BrokenChainError("no pair estimates to chain");
  std::sort(estimates.begin(), estimates.end(),
            [](const RatioEstimate& a, const RatioEstimate& b) { return a.hi < b.hi; });
  for (std::size_t i = 0; i + 1 < estimates.size(); ++i) {
    if (estimates[i].hi == estimates[i + 1].hi) {
      throw BrokenChainError("two pairs start at position " + std::to_string(estimates[i].hi) +
                             "; a chain needs exactly one");
    }
  }

  PropensityTable t;
  t.interface = std::move(interface);
  t.source = TableSource::randomized_estimate;
  t.theta[1] = 1.0;
  t.ci_low[1] = 1.0;
  t.ci_high[1] = 1.0;
  json n_per_pair = json::object();
  json interpolated = json::array();

  Position current = 1;
  for (const auto& e : estimates) {
    if (e.hi != current) {
      throw BrokenChainError("chain gap: no pair links position " + std::to_string(current) + " to position " +
                             std::to_string(e.hi));
    }
    if (!(e.ratio > 0.0)) throw InvariantError("pair ratios must be positive");
    const double th = t.theta.at(e.hi);
    const double lo_ci = t.ci_low.at(e.hi);
    const double hi_ci = t.ci_high.at(e.hi);
    t.theta[e.lo] = th / e.ratio;
    t.ci_low[e.lo] = lo_ci / e.ci_high;
    t.ci_high[e.lo] = hi_ci / e.ci_low;
    n_per_pair[to_string(SwapPair{e.hi, e.lo})] = e.n_effective;

    if (interpolate_gap && e.lo - e.hi > 1) {
      const double span = e.lo - e.hi;
      auto loglin = [&](double a, double b, Position k) {
        const double w = (k - e.hi) / span;
        return std::exp((1.0 - w) * std::log(a) + w * std::log(b));
      };
      for (Position k = e.hi + 1; k < e.lo; ++k) {
        t.theta[k] = loglin(th, t.theta[e.lo], k);
        t.ci_low[k] = loglin(lo_ci, t.ci_low[e.lo], k);
        t.ci_high[k] = loglin(hi_ci, t.ci_high[e.lo], k);
        interpolated.push_back(k);
      }
    }
    current = e.lo;
  }
  t.metadata["n_per_pair"] = n_per_pair;
  t.metadata["interpolated_positions"] = interpolated;
  t.metadata["interpolation"] = interpolate_gap ? "log-linear" : "none";
  return t;
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

struct ReversalStats {
  std::uint64_t two_contact_sessions = 0;
  std::uint64_t lower_first = 0;

  /// Share of two-contact sessions whose lower-ranked contact came first; 0
  /// when there are none (a log without such sessions shows no reversals).
  double rate() const {
    if (two_contact_sessions == 0) return 0.0;
    return static_cast<double>(lower_first) / static_cast<double>(two_contact_sessions);
  }
};

/// Session-shape counters used to contrast behavior models: cascade logs
/// never show more than one contact, position-based logs do.
struct BehaviorDiagnostics {
  std::uint64_t sessions = 0;
  std::uint64_t multi_contact_sessions = 0;
  // No contact, yet the visitor did not view the whole list. A literal
  // cascade visitor without a contact always reaches the end.
  std::uint64_t partial_view_no_contact_sessions = 0;
  ReversalStats reversal;

  void add(const SearchSession& s) {
    ++sessions;
    const SlotRecord* first = nullptr;
    const SlotRecord* second = nullptr;
    int contacts = 0;
    bool all_viewed = true;
    for (const auto& slot : s.slots) {
      all_viewed = all_viewed && slot.viewed;
      if (!slot.contacted) continue;
      ++contacts;
      if (first == nullptr) first = &slot;
      else second = &slot;
    }
    if (contacts >= 2) ++multi_contact_sessions;
    if (contacts == 0 && !all_viewed) ++partial_view_no_contact_sessions;
    if (contacts == 2) {
      ++reversal.two_contact_sessions;
      // Slots are in displayed order, so `second` is the lower-ranked one.
      if (second->contact_order == 1) ++reversal.lower_first;
    }
  }
};

template <typename SessionRange>
ReversalStats reversal_rate(const SessionRange& log) {
  BehaviorDiagnostics d;
  for (const SearchSession& s : log) d.add(s);
  return d.reversal;
}

/// Contacts per displayed position (an observed-rate curve, confounded with
/// ranking quality).
struct PositionRateCurve {
  std::map<Position, std::pair<std::uint64_t, std::uint64_t>> by_position;  // impressions, contacts

  void add(const SearchSession& s) {
    for (const auto& slot : s.slots) {
      auto& cell = by_position[slot.displayed_position];
      ++cell.first;
      if (slot.contacted) ++cell.second;
    }
  }
};

struct ProgramCost {
  std::string metric = "rate_of_visitors_with_ge1_contact";
  std::uint64_t treated_visitors = 0;
  std::uint64_t treated_with_contact = 0;
  std::uint64_t holdout_visitors = 0;
  std::uint64_t holdout_with_contact = 0;
  double treated_rate = 0.0;
  double holdout_rate = 0.0;
  double relative_delta = 0.0;
  double p_value = 1.0;
};

/// Two-sided pooled two-proportion z-test.
inline double two_proportion_p_value(std::uint64_t x1, std::uint64_t n1, std::uint64_t x2, std::uint64_t n2) {
  const double p1 = static_cast<double>(x1) / static_cast<double>(n1);
  const double p2 = static_cast<double>(x2) / static_cast<double>(n2);
  const double pooled = static_cast<double>(x1 + x2) / static_cast<double>(n1 + n2);
  const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
  if (se == 0.0) return 1.0;
  const double z = (p1 - p2) / se;
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

/// Visitor-level contact rate of the randomized population (any swap arm,
/// whether or not the list was long enough) against the holdout.
class ProgramCostAccumulator {
 public:
  void add(const SearchSession& s) {
    auto& v = visitors_[s.visitor.str()];
    v.treated = v.treated || s.arm.kind == ArmKind::swap;
    v.contacted = v.contacted || s.contact_count() > 0;
  }

  ProgramCost result() const {
    ProgramCost pc;
    for (const auto& [_, v] : visitors_) {
      if (v.treated) {
        ++pc.treated_visitors;
        if (v.contacted) ++pc.treated_with_contact;
      } else {
        ++pc.holdout_visitors;
        if (v.contacted) ++pc.holdout_with_contact;
      }
    }
    if (pc.treated_visitors == 0) throw InsufficientDataError("program cost: no treated visitors");
    if (pc.holdout_visitors == 0) throw InsufficientDataError("program cost: no holdout visitors");
    pc.treated_rate = static_cast<double>(pc.treated_with_contact) / static_cast<double>(pc.treated_visitors);
    pc.holdout_rate = static_cast<double>(pc.holdout_with_contact) / static_cast<double>(pc.holdout_visitors);
    pc.relative_delta = pc.holdout_rate > 0.0 ? (pc.treated_rate - pc.holdout_rate) / pc.holdout_rate : 0.0;
    pc.p_value = two_proportion_p_value(pc.treated_with_contact, pc.treated_visitors, pc.holdout_with_contact,
                                        pc.holdout_visitors);
    return pc;
  }

 private:
  struct VisitorState {
    bool treated = false;
    bool contacted = false;
  };
  std::unordered_map<std::string, VisitorState> visitors_;
};

template <typename SessionRange>
ProgramCost program_cost(const SessionRange& log) {
  ProgramCostAccumulator acc;
  for (const SearchSession& s : log) acc.add(s);
  return acc.result();
}

// ---------------------------------------------------------------------------
// One-pass estimation over a log stream
// ---------------------------------------------------------------------------

struct EstimateOptions {
  std::vector<SwapPair> pairs = default_swap_pairs();
  int bootstrap_reps = kDefaultBootstrapReps;
  std::uint64_t seed = 0;
  bool interpolate_gap = true;
  std::optional<InterfaceId> interface;
};

/// Folds sessions into per-pair tallies; finish() bootstraps each pair and
/// chains them into a table.
class PropensityEstimator {
 public:
  explicit PropensityEstimator(EstimateOptions opts) : opts_(std::move(opts)) {
    for (const auto& p : opts_.pairs) tallies_.emplace_back(p.hi, p.lo);
  }

  void add(const SearchSession& s) {
    if (opts_.interface && s.interface != *opts_.interface) {
      ++skipped_other_interface_;
      return;
    }
    if (!interface_) interface_ = s.interface;
    else if (*interface_ != s.interface) mixed_interfaces_ = true;
    if (sessions_ == 0 || s.ts_ms < min_ts_) min_ts_ = s.ts_ms;
    if (sessions_ == 0 || s.ts_ms > max_ts_) max_ts_ = s.ts_ms;
    ++sessions_;
    for (auto& t : tallies_) t.add(s);
  }

  const std::vector<PairTally>& tallies() const noexcept { return tallies_; }

  std::vector<RatioEstimate> pair_estimates() const {
    std::vector<RatioEstimate> out;
    for (const auto& t : tallies_) out.push_back(bootstrap_ci(t, opts_.bootstrap_reps, opts_.seed));
    return out;
  }

  PropensityTable finish() const {
    if (sessions_ == 0) throw InsufficientDataError("no sessions for the requested interface");
    if (mixed_interfaces_) {
      throw PreconditionError("log mixes interfaces; propensities are per interface, pass --interface");
    }
    PropensityTable t = chain_theta(pair_estimates(), opts_.interpolate_gap, *interface_);
    t.created_at = max_ts_;
    t.metadata["date_range_ms"] = json::array({min_ts_, max_ts_});
    t.metadata["sessions"] = sessions_;
    t.metadata["bootstrap_reps"] = opts_.bootstrap_reps;
    t.metadata["ci_method"] = "percentile bootstrap over sessions, stratified by holdout/treated";
    t.metadata["unswapped_cells"] = "holdout sessions with length >= lo";
    std::string pairs;
    for (const auto& p : opts_.pairs) pairs += (pairs.empty() ? "" : ",") + to_string(p);
    t.metadata["pairs"] = pairs;
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(pairs)));
    t.metadata["plan_hash"] = hex;
    return t;
  }

  std::uint64_t sessions() const noexcept { return sessions_; }
  std::uint64_t skipped_other_interface() const noexcept { return skipped_other_interface_; }

 private:
  EstimateOptions opts_;
  std::vector<PairTally> tallies_;
  std::optional<InterfaceId> interface_;
  bool mixed_interfaces_ = false;
  std::uint64_t sessions_ = 0;
  std::uint64_t skipped_other_interface_ = 0;
  std::int64_t min_ts_ = 0;
  std::int64_t max_ts_ = 0;
};

}  // namespace rankprop
