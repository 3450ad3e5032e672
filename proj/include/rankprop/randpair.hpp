#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rankprop/core.hpp"

namespace rankprop {

struct SwapPair {
  Position hi = 0;
  Position lo = 0;

  auto operator<=>(const SwapPair&) const = default;
};

inline std::string to_string(const SwapPair& p) {
  return std::to_string(p.hi) + "-" + std::to_string(p.lo);
}

/// Parses "1-2,2-3,11-19".
inline std::vector<SwapPair> parse_pairs(std::string_view text) {
  std::vector<SwapPair> out;
  std::stringstream ss{std::string(text)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto dash = item.find('-');
    if (dash == std::string::npos) throw ConfigError("pair '" + item + "' must look like HI-LO");
    try {
      out.push_back({std::stoi(item.substr(0, dash)), std::stoi(item.substr(dash + 1))});
    } catch (const std::exception&) {
      throw ConfigError("pair '" + item + "' must look like HI-LO");
    }
  }
  return out;
}

/// Adjacent swaps (1,2)..(10,11) plus the deep-page (11,19) comparison.
inline std::vector<SwapPair> default_swap_pairs() {
  std::vector<SwapPair> pairs;
  for (Position k = 1; k <= 10; ++k) pairs.push_back({k, k + 1});
  pairs.push_back({11, 19});
  return pairs;
}

struct AllocationPlan {
  double holdout_fraction = 0.5;
  std::vector<SwapPair> swap_pairs = default_swap_pairs();
  std::string salt = "randpair";

  void validate() const {
    if (!(holdout_fraction >= 0.0 && holdout_fraction <= 1.0)) {
      throw ConfigError("holdout_fraction must lie in [0, 1]");
    }
    std::set<SwapPair> seen;
    for (const auto& p : swap_pairs) {
      if (p.hi < 1 || p.hi >= p.lo) {
        throw ConfigError("swap pair " + to_string(p) + " must satisfy 1 <= hi < lo");
      }
      if (!seen.insert(p).second) throw ConfigError("duplicate swap pair " + to_string(p));
    }
    if (swap_pairs.empty() && holdout_fraction < 1.0) {
      throw ConfigError("a plan without swap pairs must have holdout_fraction = 1");
    }
  }

  /// Share of all traffic intending to swap one particular pair.
  double arm_fraction() const {
    return swap_pairs.empty() ? 0.0 : (1.0 - holdout_fraction) / static_cast<double>(swap_pairs.size());
  }
};

inline json to_json(const AllocationPlan& plan) {
  json pairs = json::array();
  for (const auto& p : plan.swap_pairs) pairs.push_back(json::array({p.hi, p.lo}));
  return json{{"holdout_fraction", plan.holdout_fraction}, {"swap_pairs", pairs}, {"salt", plan.salt}};
}

inline AllocationPlan plan_from_json(const json& j) {
  AllocationPlan plan;
  if (!j.is_object()) throw ConfigError("plan must be an object");
  plan.holdout_fraction = j.value("holdout_fraction", plan.holdout_fraction);
  plan.salt = j.value("salt", plan.salt);
  if (j.contains("swap_pairs")) {
    plan.swap_pairs.clear();
    for (const auto& p : j.at("swap_pairs")) {
      if (!p.is_array() || p.size() != 2) throw ConfigError("swap_pairs entries must be [hi, lo]");
      plan.swap_pairs.push_back({p[0].get<int>(), p[1].get<int>()});
    }
  }
  plan.validate();
  return plan;
}

// ---------------------------------------------------------------------------
// Stable bucketing hash
//
// bucket(visitor) = splitmix64_finalize(fnv1a64(salt || 0x1F || visitor_id))
// mapped to [0, 1) by taking the top 53 bits. Both halves are fixed public
// algorithms, so assignments reproduce across platforms and releases.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64_finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double bucket_unit(const VisitorId& visitor, std::string_view salt) {
  std::uint64_t h = fnv1a64(salt);
  h = fnv1a64(std::string_view("\x1f", 1), h);
  h = fnv1a64(visitor.str(), h);
  return static_cast<double>(splitmix64_finalize(h) >> 11) * 0x1.0p-53;
}

/// Deterministic arm for a visitor. `applied` is left false; apply_swap
/// decides it once the list length is known.
inline ArmAssignment assign_arm(const VisitorId& visitor, const AllocationPlan& plan) {
  const double u = bucket_unit(visitor, plan.salt);
  if (u < plan.holdout_fraction || plan.swap_pairs.empty()) return ArmAssignment::holdout();
  const double rest = (u - plan.holdout_fraction) / (1.0 - plan.holdout_fraction);
  auto idx = static_cast<std::size_t>(rest * static_cast<double>(plan.swap_pairs.size()));
  idx = std::min(idx, plan.swap_pairs.size() - 1);
  const auto& p = plan.swap_pairs[idx];
  return ArmAssignment::swap(p.hi, p.lo);
}

template <typename T>
struct SwapResult {
  std::vector<T> displayed;
  ArmAssignment arm;
};

/// Exchanges the items at arm.hi and arm.lo when the list is long enough.
template <typename T>
SwapResult<T> apply_swap(std::vector<T> natural, ArmAssignment arm) {
  if (natural.empty()) throw PreconditionError("apply_swap needs a non-empty ranking");
  arm.applied = false;
  if (arm.kind == ArmKind::swap && arm.hi >= 1 && arm.hi < arm.lo &&
      static_cast<std::size_t>(arm.lo) <= natural.size()) {
    std::swap(natural[static_cast<std::size_t>(arm.hi - 1)], natural[static_cast<std::size_t>(arm.lo - 1)]);
    arm.applied = true;
  }
  return {std::move(natural), arm};
}

}  // namespace rankprop
