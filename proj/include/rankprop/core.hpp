#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rankprop/errors.hpp"

namespace rankprop {

using json = nlohmann::json;

/// Opaque string identifier, tagged so that a document id cannot be passed
/// where a visitor id is expected.
template <typename Tag>
class StrongId {
 public:
  StrongId() = default;
  explicit StrongId(std::string value) : value_(std::move(value)) {}

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  auto operator<=>(const StrongId&) const = default;

 private:
  std::string value_;
};

using DocumentId = StrongId<struct DocumentTag>;
using VisitorId = StrongId<struct VisitorTag>;
using QueryId = StrongId<struct QueryTag>;
using InterfaceId = StrongId<struct InterfaceTag>;

/// 1-based rank in a displayed list. Position 1 is the top of the page.
using Position = int;

enum class ArmKind { holdout, swap };

inline std::string_view to_string(ArmKind kind) {
  return kind == ArmKind::holdout ? "holdout" : "swap";
}

struct ArmAssignment {
  ArmKind kind = ArmKind::holdout;
  Position hi = 0;
  Position lo = 0;
  bool applied = false;

  static ArmAssignment holdout() { return {}; }
  static ArmAssignment swap(Position hi, Position lo) {
    return {ArmKind::swap, hi, lo, false};
  }

  bool is_swap(Position h, Position l) const {
    return kind == ArmKind::swap && hi == h && lo == l;
  }

  bool operator==(const ArmAssignment&) const = default;
};

struct SlotRecord {
  DocumentId doc;
  Position natural_position = 0;
  Position displayed_position = 0;
  bool viewed = false;
  bool contacted = false;
  std::optional<int> contact_order;

  bool operator==(const SlotRecord&) const = default;
};

/// One query's displayed list. After validation the slots are sorted by
/// displayed position, so slots[k - 1] is the slot shown at position k.
struct SearchSession {
  QueryId query;
  VisitorId visitor;
  InterfaceId interface;
  std::int64_t ts_ms = 0;
  ArmAssignment arm;
  std::vector<SlotRecord> slots;

  std::size_t length() const noexcept { return slots.size(); }

  const SlotRecord& at_displayed(Position k) const { return slots.at(static_cast<std::size_t>(k - 1)); }

  int contact_count() const {
    return static_cast<int>(std::count_if(slots.begin(), slots.end(),
                                          [](const SlotRecord& s) { return s.contacted; }));
  }

  bool operator==(const SearchSession&) const = default;
};

enum class TableSource { randomized_estimate, assumed, simulated_truth };

inline std::string_view to_string(TableSource s) {
  switch (s) {
    case TableSource::randomized_estimate: return "randomized_estimate";
    case TableSource::assumed: return "assumed";
    case TableSource::simulated_truth: return "simulated_truth";
  }
  return "assumed";
}

inline TableSource table_source_from_string(std::string_view s) {
  if (s == "randomized_estimate") return TableSource::randomized_estimate;
  if (s == "assumed") return TableSource::assumed;
  if (s == "simulated_truth") return TableSource::simulated_truth;
  throw SchemaError("unknown propensity table source '" + std::string(s) + "'");
}

/// Relative examination propensity per position, normalized so that
/// theta(1) == 1. Positions may be sparse (e.g. 12..18 absent when the
/// deep-page gap is not interpolated).
struct PropensityTable {
  InterfaceId interface;
  std::map<Position, double> theta;
  std::map<Position, double> ci_low;
  std::map<Position, double> ci_high;
  TableSource source = TableSource::assumed;
  std::int64_t created_at = 0;
  json metadata = json::object();

  bool covers(Position k) const { return theta.contains(k); }

  double at(Position k) const {
    auto it = theta.find(k);
    if (it == theta.end()) {
      throw CoverageError("propensity table for '" + interface.str() +
                          "' has no entry for position " + std::to_string(k));
    }
    return it->second;
  }

  double low(Position k) const { return ci_low.contains(k) ? ci_low.at(k) : at(k); }
  double high(Position k) const { return ci_high.contains(k) ? ci_high.at(k) : at(k); }

  Position max_position() const { return theta.empty() ? 0 : theta.rbegin()->first; }

  /// Throws InvariantError unless theta(1) == 1 and every entry is positive.
  void validate() const {
    auto first = theta.find(1);
    if (first == theta.end() || first->second != 1.0) {
      throw InvariantError("propensity table must have theta[1] == 1.0 exactly");
    }
    for (const auto& [k, v] : theta) {
      if (k < 1) throw InvariantError("propensity positions must be >= 1");
      if (!(v > 0.0)) {
        throw InvariantError("theta[" + std::to_string(k) + "] must be positive");
      }
    }
  }

  /// Convenience for tests and the assumed-curve case: positions 1..n.
  static PropensityTable from_values(InterfaceId iface, const std::vector<double>& values,
                                     TableSource source = TableSource::assumed) {
    PropensityTable t;
    t.interface = std::move(iface);
    t.source = source;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto k = static_cast<Position>(i + 1);
      t.theta[k] = values[i];
      t.ci_low[k] = values[i];
      t.ci_high[k] = values[i];
    }
    return t;
  }
};

struct ImpressionEvent {
  Position position = 0;
  bool contacted = false;
};

struct ProfessionalHistory {
  DocumentId doc;
  std::vector<ImpressionEvent> events;
};

// ---------------------------------------------------------------------------
// Session validation and the line-delimited JSON schema
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
T require_field(const json& obj, const char* name, const char* where) {
  auto it = obj.find(name);
  if (it == obj.end() || it->is_null()) {
    throw SchemaError(std::string("missing field '") + name + "' in " + where);
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw SchemaError(std::string("field '") + name + "' in " + where + " has the wrong type");
  }
}

inline void check_permutation(const std::vector<int>& values, const char* what) {
  std::vector<int> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != static_cast<int>(i + 1)) {
      throw InvariantError(std::string(what) + " must be a permutation of 1.." +
                           std::to_string(sorted.size()));
    }
  }
}

}  // namespace detail

/// Checks every session invariant and canonicalizes slot order. Throws
/// InvariantError on the first violation.
inline SearchSession validate_session(SearchSession s) {
  if (s.query.empty()) throw InvariantError("query_id must be non-empty");
  if (s.visitor.empty()) throw InvariantError("visitor_id must be non-empty");
  if (s.interface.empty()) throw InvariantError("interface_id must be non-empty");
  if (s.slots.empty()) throw InvariantError("session has zero slots");

  std::vector<int> displayed;
  std::vector<int> natural;
  std::vector<int> orders;
  displayed.reserve(s.slots.size());
  natural.reserve(s.slots.size());
  for (const auto& slot : s.slots) {
    if (slot.doc.empty()) throw InvariantError("doc_id must be non-empty");
    displayed.push_back(slot.displayed_position);
    natural.push_back(slot.natural_position);
    if (slot.contacted != slot.contact_order.has_value()) {
      throw InvariantError("contact_order must be present iff contacted (doc '" +
                           slot.doc.str() + "')");
    }
    if (slot.contact_order) orders.push_back(*slot.contact_order);
  }
  detail::check_permutation(displayed, "displayed positions");
  detail::check_permutation(natural, "natural positions");
  detail::check_permutation(orders, "contact_order values");

  std::sort(s.slots.begin(), s.slots.end(), [](const SlotRecord& a, const SlotRecord& b) {
    return a.displayed_position < b.displayed_position;
  });

  const auto len = static_cast<Position>(s.slots.size());
  std::vector<Position> moved;
  for (const auto& slot : s.slots) {
    if (slot.natural_position != slot.displayed_position) moved.push_back(slot.displayed_position);
  }

  const ArmAssignment& arm = s.arm;
  if (arm.kind == ArmKind::holdout) {
    if (arm.applied) throw InvariantError("holdout arm cannot have applied=true");
    if (!moved.empty()) throw InvariantError("holdout session has natural != displayed order");
    return s;
  }

  if (arm.hi < 1 || arm.lo <= arm.hi) {
    throw InvariantError("swap arm requires 1 <= hi < lo");
  }
  if (!arm.applied) {
    if (!moved.empty()) {
      throw InvariantError("swap arm with applied=false has natural != displayed order");
    }
    return s;
  }
  if (arm.lo > len) {
    throw InvariantError("swap arm applied=true but list has only " + std::to_string(len) +
                         " slots (needs " + std::to_string(arm.lo) + ")");
  }
  if (moved.empty()) throw InvariantError("swap not applied despite applied=true flag");
  const auto& at_hi = s.slots[static_cast<std::size_t>(arm.hi - 1)];
  const auto& at_lo = s.slots[static_cast<std::size_t>(arm.lo - 1)];
  if (moved.size() != 2 || at_hi.natural_position != arm.lo || at_lo.natural_position != arm.hi) {
    throw InvariantError("natural/displayed delta does not match swap(" + std::to_string(arm.hi) +
                         "," + std::to_string(arm.lo) + ")");
  }
  return s;
}

inline json to_json(const ArmAssignment& arm) {
  return json{{"kind", to_string(arm.kind)}, {"hi", arm.hi}, {"lo", arm.lo}, {"applied", arm.applied}};
}

inline ArmAssignment arm_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("arm must be an object");
  const auto kind = detail::require_field<std::string>(j, "kind", "arm");
  ArmAssignment arm;
  if (kind == "holdout") {
    arm.kind = ArmKind::holdout;
    arm.hi = j.value("hi", 0);
    arm.lo = j.value("lo", 0);
    arm.applied = j.value("applied", false);
  } else if (kind == "swap") {
    arm.kind = ArmKind::swap;
    arm.hi = detail::require_field<int>(j, "hi", "arm");
    arm.lo = detail::require_field<int>(j, "lo", "arm");
    arm.applied = detail::require_field<bool>(j, "applied", "arm");
  } else {
    throw SchemaError("arm.kind must be 'holdout' or 'swap', got '" + kind + "'");
  }
  return arm;
}

inline json to_json(const SearchSession& s) {
  json slots = json::array();
  for (const auto& slot : s.slots) {
    slots.push_back(json{{"doc_id", slot.doc.str()},
                         {"nat_pos", slot.natural_position},
                         {"disp_pos", slot.displayed_position},
                         {"viewed", slot.viewed},
                         {"contacted", slot.contacted},
                         {"contact_order", slot.contact_order ? json(*slot.contact_order) : json(nullptr)}});
  }
  return json{{"query_id", s.query.str()},   {"visitor_id", s.visitor.str()},
              {"interface_id", s.interface.str()}, {"ts_ms", s.ts_ms},
              {"arm", to_json(s.arm)},        {"slots", std::move(slots)}};
}

inline std::string serialize_session(const SearchSession& s) { return to_json(s).dump(); }

inline SearchSession session_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("session record must be a JSON object");
  SearchSession s;
  s.query = QueryId(detail::require_field<std::string>(j, "query_id", "session"));
  s.visitor = VisitorId(detail::require_field<std::string>(j, "visitor_id", "session"));
  s.interface = InterfaceId(detail::require_field<std::string>(j, "interface_id", "session"));
  s.ts_ms = detail::require_field<std::int64_t>(j, "ts_ms", "session");
  auto arm = j.find("arm");
  if (arm == j.end()) throw SchemaError("missing field 'arm' in session");
  s.arm = arm_from_json(*arm);
  auto slots = j.find("slots");
  if (slots == j.end() || !slots->is_array()) throw SchemaError("missing field 'slots' in session");
  s.slots.reserve(slots->size());
  for (const auto& js : *slots) {
    if (!js.is_object()) throw SchemaError("slot must be an object");
    SlotRecord slot;
    slot.doc = DocumentId(detail::require_field<std::string>(js, "doc_id", "slot"));
    slot.natural_position = detail::require_field<int>(js, "nat_pos", "slot");
    slot.displayed_position = detail::require_field<int>(js, "disp_pos", "slot");
    slot.viewed = detail::require_field<bool>(js, "viewed", "slot");
    slot.contacted = detail::require_field<bool>(js, "contacted", "slot");
    auto order = js.find("contact_order");
    if (order != js.end() && !order->is_null()) {
      if (!order->is_number_integer()) throw SchemaError("contact_order must be an integer or null");
      slot.contact_order = order->get<int>();
    }
    s.slots.push_back(std::move(slot));
  }
  return validate_session(std::move(s));
}

/// Parses and validates one log line.
inline SearchSession validate_session(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("malformed JSON: ") + e.what());
  }
  return session_from_json(j);
}

}  // namespace rankprop

template <typename Tag>
struct std::hash<rankprop::StrongId<Tag>> {
  std::size_t operator()(const rankprop::StrongId<Tag>& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
