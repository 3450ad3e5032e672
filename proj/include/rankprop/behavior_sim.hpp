#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rankprop/core.hpp"
#include "rankprop/randpair.hpp"

namespace rankprop {

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits. Spelled out instead of
/// using std::uniform_real_distribution so simulated logs are identical
/// across standard library implementations.
inline double unit_uniform(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(n)));
}

struct CatalogEntry {
  DocumentId doc;
  double relevance = 0.0;
};

class Catalog {
 public:
  Catalog() = default;
  explicit Catalog(std::vector<CatalogEntry> docs) : docs_(std::move(docs)) {
    for (std::size_t i = 0; i < docs_.size(); ++i) {
      const auto& d = docs_[i];
      if (d.doc.empty()) throw ConfigError("catalog doc_id must be non-empty");
      if (!(d.relevance >= 0.0 && d.relevance <= 1.0)) {
        throw ConfigError("relevance of '" + d.doc.str() + "' must lie in [0, 1]");
      }
      if (!index_.emplace(d.doc, i).second) throw ConfigError("duplicate catalog doc '" + d.doc.str() + "'");
    }
  }

  std::size_t size() const noexcept { return docs_.size(); }
  const CatalogEntry& operator[](std::size_t i) const { return docs_[i]; }
  const std::vector<CatalogEntry>& docs() const noexcept { return docs_; }

  std::size_t index_of(const DocumentId& d) const {
    auto it = index_.find(d);
    if (it == index_.end()) throw ConfigError("document '" + d.str() + "' is not in the catalog");
    return it->second;
  }

 private:
  std::vector<CatalogEntry> docs_;
  std::unordered_map<DocumentId, std::size_t> index_;
};

enum class BehaviorKind { pbm, cascade, dbn, ubm, trust_pbm };

inline BehaviorKind behavior_kind_from_string(std::string_view s) {
  if (s == "pbm") return BehaviorKind::pbm;
  if (s == "cascade") return BehaviorKind::cascade;
  if (s == "dbn") return BehaviorKind::dbn;
  if (s == "ubm") return BehaviorKind::ubm;
  if (s == "trust_pbm") return BehaviorKind::trust_pbm;
  throw ConfigError("unknown behavior kind '" + std::string(s) + "'");
}

/// Behavior model parameters. Position-indexed vectors hold the value for
/// position k at index k - 1. Simulator theta is an absolute examination
/// probability, so theta[0] need not be 1.
struct BehaviorConfig {
  BehaviorKind kind = BehaviorKind::pbm;
  std::vector<double> theta;
  std::map<DocumentId, double> satisfaction;
  std::optional<double> default_satisfaction;
  double ubm_delta = 0.9;
  std::map<std::pair<Position, int>, double> gamma;
  std::vector<double> eps_plus;
  std::vector<double> eps_minus;

  static BehaviorConfig pbm(std::vector<double> theta) {
    BehaviorConfig c;
    c.kind = BehaviorKind::pbm;
    c.theta = std::move(theta);
    return c;
  }

  static BehaviorConfig cascade() {
    BehaviorConfig c;
    c.kind = BehaviorKind::cascade;
    return c;
  }

  void validate() const {
    auto check = [](double p, const char* what) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " values must lie in [0, 1]");
    };
    for (double v : theta) check(v, "theta");
    for (const auto& [_, v] : satisfaction) check(v, "satisfaction");
    if (default_satisfaction) check(*default_satisfaction, "satisfaction");
    for (const auto& [_, v] : gamma) check(v, "gamma");
    for (double v : eps_plus) check(v, "eps_plus");
    for (double v : eps_minus) check(v, "eps_minus");
    check(ubm_delta, "ubm_delta");
  }

  double theta_at(Position k) const { return positional(theta, k, "theta"); }
  double eps_plus_at(Position k) const { return positional(eps_plus, k, "eps_plus"); }
  double eps_minus_at(Position k) const { return positional(eps_minus, k, "eps_minus"); }

  double gamma_at(Position k, int distance) const {
    if (auto it = gamma.find({k, distance}); it != gamma.end()) return it->second;
    return theta_at(k) * std::pow(ubm_delta, distance);
  }

  double satisfaction_of(const DocumentId& d) const {
    if (auto it = satisfaction.find(d); it != satisfaction.end()) return it->second;
    if (default_satisfaction) return *default_satisfaction;
    throw ConfigError("no satisfaction probability for document '" + d.str() + "'");
  }

  /// Throws ConfigError if a list of `length` slots would read past a
  /// position-indexed parameter.
  void check_covers(std::size_t length) const {
    auto need = [&](const std::vector<double>& v, const char* what) {
      if (v.size() < length) {
        throw ConfigError(std::string(what) + " has no value for position " + std::to_string(v.size() + 1));
      }
    };
    switch (kind) {
      case BehaviorKind::pbm: need(theta, "theta"); break;
      case BehaviorKind::ubm:
        if (gamma.empty()) need(theta, "theta");
        break;
      case BehaviorKind::trust_pbm:
        need(theta, "theta");
        need(eps_plus, "eps_plus");
        need(eps_minus, "eps_minus");
        break;
      case BehaviorKind::cascade:
      case BehaviorKind::dbn: break;
    }
  }

 private:
  static double positional(const std::vector<double>& v, Position k, const char* what) {
    if (k < 1 || static_cast<std::size_t>(k) > v.size()) {
      throw ConfigError(std::string(what) + " has no value for position " + std::to_string(k));
    }
    return v[static_cast<std::size_t>(k - 1)];
  }
};

struct SlotOutcome {
  bool viewed = false;
  bool contacted = false;
  std::optional<int> contact_order;
};

namespace detail {

inline void assign_in_scan_order(std::vector<SlotOutcome>& out) {
  int order = 0;
  for (auto& o : out) {
    if (o.contacted) o.contact_order = ++order;
  }
}

inline void assign_random_order(std::vector<SlotOutcome>& out, Rng& rng) {
  std::vector<std::size_t> contacted;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].contacted) contacted.push_back(i);
  }
  // Fisher-Yates with the portable index draw.
  for (std::size_t i = contacted.size(); i > 1; --i) {
    std::swap(contacted[i - 1], contacted[uniform_index(rng, i)]);
  }
  for (std::size_t r = 0; r < contacted.size(); ++r) out[contacted[r]].contact_order = static_cast<int>(r + 1);
}

}  // namespace detail

/// Simulates one visitor over a displayed list given by catalog indices.
/// Position k of the list is displayed_idx[k - 1].
inline std::vector<SlotOutcome> simulate_outcomes(std::span<const std::size_t> displayed_idx,
                                                  const Catalog& catalog, const BehaviorConfig& cfg,
                                                  Rng& rng) {
  std::vector<SlotOutcome> out(displayed_idx.size());
  const auto rel = [&](std::size_t i) { return catalog[displayed_idx[i]].relevance; };

  switch (cfg.kind) {
    case BehaviorKind::pbm:
      for (std::size_t i = 0; i < out.size(); ++i) {
        const bool examined = unit_uniform(rng) < cfg.theta_at(static_cast<Position>(i + 1));
        const bool relevant = unit_uniform(rng) < rel(i);
        out[i].viewed = examined;
        out[i].contacted = examined && relevant;
      }
      detail::assign_random_order(out, rng);
      break;

    case BehaviorKind::trust_pbm:
      for (std::size_t i = 0; i < out.size(); ++i) {
        const auto k = static_cast<Position>(i + 1);
        const bool examined = unit_uniform(rng) < cfg.theta_at(k);
        const bool relevant = unit_uniform(rng) < rel(i);
        const double p = relevant ? cfg.eps_plus_at(k) : cfg.eps_minus_at(k);
        const bool perceived = unit_uniform(rng) < p;
        out[i].viewed = examined;
        out[i].contacted = examined && perceived;
      }
      detail::assign_random_order(out, rng);
      break;

    case BehaviorKind::cascade:
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].viewed = true;
        if (unit_uniform(rng) < rel(i)) {
          out[i].contacted = true;
          break;
        }
      }
      detail::assign_in_scan_order(out);
      break;

    case BehaviorKind::dbn:
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].viewed = true;
        if (unit_uniform(rng) < rel(i)) {
          out[i].contacted = true;
          if (unit_uniform(rng) < cfg.satisfaction_of(catalog[displayed_idx[i]].doc)) break;
        }
      }
      detail::assign_in_scan_order(out);
      break;

    case BehaviorKind::ubm: {
      Position last_contact = 0;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const auto k = static_cast<Position>(i + 1);
        const bool examined = unit_uniform(rng) < cfg.gamma_at(k, k - last_contact);
        out[i].viewed = examined;
        if (examined && unit_uniform(rng) < rel(i)) {
          out[i].contacted = true;
          last_contact = k;
        }
      }
      detail::assign_in_scan_order(out);
      break;
    }
  }
  return out;
}

/// Simulates one visitor over an ordered list of documents. Natural
/// positions in the returned slots equal displayed positions; callers that
/// swapped the list overwrite them.
inline std::vector<SlotRecord> simulate_session(const std::vector<DocumentId>& ranking, const Catalog& catalog,
                                                const BehaviorConfig& cfg, Rng& rng) {
  cfg.check_covers(ranking.size());
  std::vector<std::size_t> idx;
  idx.reserve(ranking.size());
  for (const auto& d : ranking) idx.push_back(catalog.index_of(d));
  const auto outcomes = simulate_outcomes(idx, catalog, cfg, rng);
  std::vector<SlotRecord> slots(ranking.size());
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    slots[i].doc = ranking[i];
    slots[i].natural_position = slots[i].displayed_position = static_cast<Position>(i + 1);
    slots[i].viewed = outcomes[i].viewed;
    slots[i].contacted = outcomes[i].contacted;
    slots[i].contact_order = outcomes[i].contact_order;
  }
  return slots;
}

// ---------------------------------------------------------------------------
// Rankers that produce the natural (pre-randomization) order
// ---------------------------------------------------------------------------

enum class RankerKind { by_relevance, by_noisy_relevance, fixed_permutation, by_score_table };

struct RankerStub {
  RankerKind kind = RankerKind::by_relevance;
  double noise_sd = 0.0;
  std::vector<DocumentId> order;            // fixed_permutation
  std::map<DocumentId, double> scores;      // by_score_table

  /// Catalog indices, best first. Ties are broken by document id.
  std::vector<std::size_t> rank(const Catalog& catalog, Rng& rng) const {
    std::vector<std::size_t> idx(catalog.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (kind == RankerKind::fixed_permutation) {
      idx.clear();
      for (const auto& d : order) idx.push_back(catalog.index_of(d));
      return idx;
    }
    std::vector<double> score(catalog.size());
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      switch (kind) {
        case RankerKind::by_relevance: score[i] = catalog[i].relevance; break;
        case RankerKind::by_noisy_relevance: {
          std::normal_distribution<double> noise(0.0, noise_sd);
          score[i] = catalog[i].relevance + noise(rng);
          break;
        }
        case RankerKind::by_score_table: {
          auto it = scores.find(catalog[i].doc);
          if (it == scores.end()) throw ConfigError("score table has no entry for '" + catalog[i].doc.str() + "'");
          score[i] = it->second;
          break;
        }
        case RankerKind::fixed_permutation: break;
      }
    }
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (score[a] != score[b]) return score[a] > score[b];
      return catalog[a].doc < catalog[b].doc;
    });
    return idx;
  }
};

// ---------------------------------------------------------------------------
// Corpus generation
// ---------------------------------------------------------------------------

struct SimulationConfig {
  Catalog catalog;
  RankerStub ranker;
  BehaviorConfig behavior;
  AllocationPlan plan;
  std::int64_t n_sessions = 0;
  std::uint64_t seed = 0;
  InterfaceId interface{"search"};
  QueryId query{"q1"};
  // Displayed list length; 0 means the whole catalog. When list_length_min
  // is set, each session draws its length uniformly from
  // [list_length_min, list_length].
  std::size_t list_length = 0;
  std::size_t list_length_min = 0;
  std::int64_t start_ts_ms = 1'600'000'000'000;
  std::int64_t interval_ms = 1000;

  std::size_t max_length() const { return list_length == 0 ? catalog.size() : list_length; }

  void validate() const {
    if (n_sessions <= 0) throw PreconditionError("n_sessions must be positive");
    if (catalog.size() == 0) throw ConfigError("catalog is empty");
    if (max_length() > catalog.size()) throw ConfigError("list_length exceeds catalog size");
    if (list_length_min > max_length()) throw ConfigError("list_length_min exceeds list_length");
    if (ranker.kind == RankerKind::fixed_permutation && ranker.order.size() < max_length()) {
      throw ConfigError("fixed_permutation order is shorter than the list length");
    }
    behavior.validate();
    behavior.check_covers(max_length());
    plan.validate();
  }
};

/// Generates n_sessions sessions and hands each to `sink` in order. Output is
/// a pure function of the config (including its seed).
template <typename Sink>
void simulate_corpus(const SimulationConfig& cfg, Sink&& sink) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t max_len = cfg.max_length();
  const std::string visitor_prefix = "v" + std::to_string(cfg.seed) + "-";
  SearchSession s;
  s.query = cfg.query;
  s.interface = cfg.interface;
  for (std::int64_t i = 0; i < cfg.n_sessions; ++i) {
    auto natural = cfg.ranker.rank(cfg.catalog, rng);
    std::size_t len = max_len;
    if (cfg.list_length_min > 0 && cfg.list_length_min < max_len) {
      len = cfg.list_length_min + uniform_index(rng, max_len - cfg.list_length_min + 1);
    }
    natural.resize(len);

    s.visitor = VisitorId(visitor_prefix + std::to_string(i));
    s.ts_ms = cfg.start_ts_ms + i * cfg.interval_ms;
    auto swapped = apply_swap(natural, assign_arm(s.visitor, cfg.plan));
    s.arm = swapped.arm;
    const auto outcomes = simulate_outcomes(swapped.displayed, cfg.catalog, cfg.behavior, rng);

    s.slots.resize(len);
    for (std::size_t k = 0; k < len; ++k) {
      auto& slot = s.slots[k];
      slot.doc = cfg.catalog[swapped.displayed[k]].doc;
      slot.displayed_position = static_cast<Position>(k + 1);
      slot.natural_position = static_cast<Position>(k + 1);
      slot.viewed = outcomes[k].viewed;
      slot.contacted = outcomes[k].contacted;
      slot.contact_order = outcomes[k].contact_order;
    }
    if (s.arm.applied) {
      s.slots[static_cast<std::size_t>(s.arm.hi - 1)].natural_position = s.arm.lo;
      s.slots[static_cast<std::size_t>(s.arm.lo - 1)].natural_position = s.arm.hi;
    }
    sink(static_cast<const SearchSession&>(s));
  }
}

inline void simulate_corpus_to_stream(const SimulationConfig& cfg, std::ostream& os) {
  simulate_corpus(cfg, [&](const SearchSession& s) { os << serialize_session(s) << '\n'; });
}

// ---------------------------------------------------------------------------
// Declarative config (same JSON dialect as the logs)
// ---------------------------------------------------------------------------

inline BehaviorConfig behavior_from_json(const json& j) {
  BehaviorConfig c;
  c.kind = behavior_kind_from_string(j.value("kind", std::string("pbm")));
  c.theta = j.value("theta", std::vector<double>{});
  c.eps_plus = j.value("eps_plus", std::vector<double>{});
  c.eps_minus = j.value("eps_minus", std::vector<double>{});
  c.ubm_delta = j.value("ubm_delta", c.ubm_delta);
  if (j.contains("satisfaction")) {
    for (const auto& [doc, p] : j.at("satisfaction").items()) c.satisfaction[DocumentId(doc)] = p.get<double>();
  }
  if (j.contains("default_satisfaction")) c.default_satisfaction = j.at("default_satisfaction").get<double>();
  if (j.contains("gamma")) {
    for (const auto& g : j.at("gamma")) {
      if (!g.is_array() || g.size() != 3) throw ConfigError("gamma entries must be [position, distance, value]");
      c.gamma[{g[0].get<int>(), g[1].get<int>()}] = g[2].get<double>();
    }
  }
  c.validate();
  return c;
}

inline RankerStub ranker_from_json(const json& j) {
  RankerStub r;
  const auto kind = j.value("kind", std::string("by_relevance"));
  if (kind == "by_relevance") {
    r.kind = RankerKind::by_relevance;
  } else if (kind == "by_noisy_relevance") {
    r.kind = RankerKind::by_noisy_relevance;
    r.noise_sd = j.value("noise_sd", 0.1);
  } else if (kind == "fixed_permutation") {
    r.kind = RankerKind::fixed_permutation;
    for (const auto& d : j.at("order")) r.order.emplace_back(d.get<std::string>());
  } else if (kind == "by_score_table") {
    r.kind = RankerKind::by_score_table;
    for (const auto& [doc, s] : j.at("scores").items()) r.scores[DocumentId(doc)] = s.get<double>();
  } else {
    throw ConfigError("unknown ranker kind '" + kind + "'");
  }
  return r;
}

inline SimulationConfig simulation_config_from_json(const json& j) {
  try {
    SimulationConfig cfg;
    std::vector<CatalogEntry> docs;
    for (const auto& d : j.at("catalog")) {
      docs.push_back({DocumentId(d.at("doc_id").get<std::string>()), d.at("relevance").get<double>()});
    }
    cfg.catalog = Catalog(std::move(docs));
    cfg.ranker = ranker_from_json(j.value("ranker", json::object()));
    cfg.behavior = behavior_from_json(j.at("behavior"));
    if (j.contains("plan")) cfg.plan = plan_from_json(j.at("plan"));
    cfg.n_sessions = j.at("n_sessions").get<std::int64_t>();
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.interface = InterfaceId(j.value("interface_id", std::string("search")));
    cfg.query = QueryId(j.value("query_id", std::string("q1")));
    cfg.list_length = j.value("list_length", std::size_t{0});
    cfg.list_length_min = j.value("list_length_min", std::size_t{0});
    cfg.start_ts_ms = j.value("start_ts_ms", cfg.start_ts_ms);
    cfg.interval_ms = j.value("interval_ms", cfg.interval_ms);
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad simulation config: ") + e.what());
  }
}

}  // namespace rankprop
