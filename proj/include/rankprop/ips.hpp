#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rankprop/core.hpp"

namespace rankprop {

enum class LambdaKind { arp, dcg };

inline LambdaKind lambda_from_string(std::string_view s) {
  if (s == "arp") return LambdaKind::arp;
  if (s == "dcg") return LambdaKind::dcg;
  throw ConfigError("lambda must be 'arp' or 'dcg', got '" + std::string(s) + "'");
}

inline std::string_view to_string(LambdaKind k) { return k == LambdaKind::arp ? "arp" : "dcg"; }

/// ARP is a rank (lower is better); DCG is a gain (higher is better).
inline std::string_view direction(LambdaKind k) {
  return k == LambdaKind::arp ? "lower_is_better" : "higher_is_better";
}

inline double lambda_weight(LambdaKind kind, Position rank) {
  if (kind == LambdaKind::arp) return static_cast<double>(rank);
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

/// Ranker output: a score per (query, document).
class RankerScores {
 public:
  void set(const QueryId& q, const DocumentId& d, double score) { scores_[q.str()][d.str()] = score; }

  double at(const QueryId& q, const DocumentId& d) const {
    auto qi = scores_.find(q.str());
    if (qi != scores_.end()) {
      auto di = qi->second.find(d.str());
      if (di != qi->second.end()) return di->second;
    }
    throw CoverageError("no ranker score for query '" + q.str() + "', doc '" + d.str() + "'");
  }

  /// 1-based rank of each slot's document under these scores, in slot order.
  /// Ties go to the lexicographically smaller document id.
  std::vector<Position> ranks(const SearchSession& s) const {
    const std::size_t n = s.slots.size();
    std::vector<double> score(n);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
      score[i] = at(s.query, s.slots[i].doc);
      order[i] = i;
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (score[a] != score[b]) return score[a] > score[b];
      return s.slots[a].doc < s.slots[b].doc;
    });
    std::vector<Position> rank(n);
    for (std::size_t r = 0; r < n; ++r) rank[order[r]] = static_cast<Position>(r + 1);
    return rank;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [_, m] : scores_) n += m.size();
    return n;
  }

 private:
  std::unordered_map<std::string, std::unordered_map<std::string, double>> scores_;
};

/// Reads `query_id,doc_id,score` with a header row.
inline RankerScores read_scores_csv(std::istream& in) {
  RankerScores scores;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("query_id", 0) == 0) continue;
    std::stringstream ss(line);
    std::string q, d, v;
    if (!std::getline(ss, q, ',') || !std::getline(ss, d, ',') || !std::getline(ss, v)) {
      throw SchemaError("scores line " + std::to_string(line_no) + " must be query_id,doc_id,score");
    }
    try {
      scores.set(QueryId(q), DocumentId(d), std::stod(v));
    } catch (const std::invalid_argument&) {
      throw SchemaError("scores line " + std::to_string(line_no) + " has a non-numeric score");
    }
  }
  return scores;
}

inline RankerScores load_scores_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read scores file '" + path + "'");
  return read_scores_csv(in);
}

struct IpsOptions {
  LambdaKind lambda = LambdaKind::dcg;
  // Propensities below the floor are raised to it. Unset keeps the plain
  // inverse-propensity weights.
  std::optional<double> clip_floor;
};

struct IpsResult {
  double value = 0.0;
  LambdaKind lambda = LambdaKind::dcg;
  std::uint64_t n_queries = 0;
  std::uint64_t n_contacts = 0;
  std::vector<std::string> warnings;
};

/// Inverse-propensity-weighted contribution of one logged session to the
/// metric of the ranker given by `scores`.
inline double ips_term(const SearchSession& s, const RankerScores& scores, const PropensityTable& theta,
                       const IpsOptions& opts, std::uint64_t* contacts = nullptr) {
  bool any = false;
  for (const auto& slot : s.slots) any = any || slot.contacted;
  if (!any) return 0.0;
  const auto rank = scores.ranks(s);
  double term = 0.0;
  for (std::size_t i = 0; i < s.slots.size(); ++i) {
    if (!s.slots[i].contacted) continue;
    double p = theta.at(s.slots[i].displayed_position);
    if (opts.clip_floor) p = std::max(p, *opts.clip_floor);
    term += lambda_weight(opts.lambda, rank[i]) / p;
    if (contacts) ++*contacts;
  }
  return term;
}

template <typename SessionRange>
IpsResult ips_loss(const SessionRange& log, const RankerScores& scores, const PropensityTable& theta,
                   const IpsOptions& opts = {}) {
  IpsResult r;
  r.lambda = opts.lambda;
  double sum = 0.0;
  for (const SearchSession& s : log) {
    sum += ips_term(s, scores, theta, opts, &r.n_contacts);
    ++r.n_queries;
  }
  if (r.n_queries == 0) throw InsufficientDataError("ips_loss needs at least one query");
  if (r.n_contacts == 0) r.warnings.emplace_back("log contains no contacts; metric is 0");
  r.value = sum / static_cast<double>(r.n_queries);
  return r;
}

/// Unweighted metric over contacts at their displayed positions. Only
/// meaningful on a log where the measured ranker was actually deployed.
template <typename SessionRange>
IpsResult on_policy_metric(const SessionRange& log, LambdaKind lambda) {
  IpsResult r;
  r.lambda = lambda;
  double sum = 0.0;
  for (const SearchSession& s : log) {
    ++r.n_queries;
    for (const auto& slot : s.slots) {
      if (!slot.contacted) continue;
      sum += lambda_weight(lambda, slot.displayed_position);
      ++r.n_contacts;
    }
  }
  if (r.n_queries == 0) throw InsufficientDataError("on_policy_metric needs at least one query");
  r.value = sum / static_cast<double>(r.n_queries);
  return r;
}

struct RankerComparison {
  double estimate_a = 0.0;
  double estimate_b = 0.0;
  double delta = 0.0;  // a - b
  double p_value = 1.0;
  LambdaKind lambda = LambdaKind::dcg;
  std::uint64_t n_queries = 0;
};

/// Paired bootstrap over queries. The p-value is two-sided: twice the
/// smaller tail mass of the resampled deltas on either side of zero.
template <typename SessionRange>
RankerComparison compare_rankers(const SessionRange& log, const RankerScores& a, const RankerScores& b,
                                 const PropensityTable& theta, const IpsOptions& opts = {}, int replications = 1000,
                                 std::uint64_t seed = 0) {
  if (replications < 100) throw PreconditionError("compare_rankers needs at least 100 replications");
  std::vector<double> ta;
  std::vector<double> tb;
  for (const SearchSession& s : log) {
    ta.push_back(ips_term(s, a, theta, opts));
    tb.push_back(ips_term(s, b, theta, opts));
  }
  const std::size_t n = ta.size();
  if (n == 0) throw InsufficientDataError("compare_rankers needs at least one query");

  RankerComparison out;
  out.lambda = opts.lambda;
  out.n_queries = n;
  std::vector<double> diff(n);
  double sa = 0.0;
  double sb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sa += ta[i];
    sb += tb[i];
    diff[i] = ta[i] - tb[i];
  }
  out.estimate_a = sa / static_cast<double>(n);
  out.estimate_b = sb / static_cast<double>(n);
  out.delta = out.estimate_a - out.estimate_b;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  int at_or_below = 0;
  int at_or_above = 0;
  for (int r = 0; r < replications; ++r) {
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) d += diff[pick(rng)];
    if (d <= 0.0) ++at_or_below;
    if (d >= 0.0) ++at_or_above;
  }
  const double tail = static_cast<double>(std::min(at_or_below, at_or_above)) / replications;
  out.p_value = std::min(1.0, 2.0 * tail);
  return out;
}

}  // namespace rankprop
