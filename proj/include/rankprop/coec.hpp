#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "rankprop/core.hpp"
#include "rankprop/propensity_io.hpp"

namespace rankprop {

struct FeatureRow {
  DocumentId doc;
  double raw_rate = 0.0;
  double coec = 0.0;
  std::uint64_t n_impressions = 0;
  std::uint64_t contacts = 0;
  double sum_theta = 0.0;
};

inline double raw_rate(const ProfessionalHistory& h) {
  if (h.events.empty()) throw PreconditionError("raw_rate of '" + h.doc.str() + "' needs at least one impression");
  std::uint64_t contacts = 0;
  for (const auto& e : h.events) contacts += e.contacted ? 1 : 0;
  return static_cast<double>(contacts) / static_cast<double>(h.events.size());
}

/// Contacts over expected contacts: each impression contributes the
/// propensity of the position it was shown at.
inline double coec(const ProfessionalHistory& h, const PropensityTable& theta) {
  std::uint64_t contacts = 0;
  double mass = 0.0;
  for (const auto& e : h.events) {
    if (e.position < 1) throw InvariantError("impression positions must be >= 1");
    mass += theta.at(e.position);
    contacts += e.contacted ? 1 : 0;
  }
  if (!(mass > 0.0)) throw PreconditionError("coec of '" + h.doc.str() + "' has zero propensity mass");
  return static_cast<double>(contacts) / mass;
}

/// Per-document fold over sessions. Impressions are counted at the
/// displayed position.
class FeatureBuilder {
 public:
  explicit FeatureBuilder(const PropensityTable& theta) : theta_(theta) {}

  void add(const SearchSession& s) {
    for (const auto& slot : s.slots) {
      auto& acc = rows_[slot.doc];
      ++acc.n;
      acc.mass += theta_.at(slot.displayed_position);
      if (slot.contacted) ++acc.contacts;
    }
  }

  /// Rows sorted by document id.
  std::vector<FeatureRow> rows() const {
    std::vector<FeatureRow> out;
    out.reserve(rows_.size());
    for (const auto& [doc, acc] : rows_) {
      FeatureRow r;
      r.doc = doc;
      r.n_impressions = acc.n;
      r.contacts = acc.contacts;
      r.sum_theta = acc.mass;
      r.raw_rate = static_cast<double>(acc.contacts) / static_cast<double>(acc.n);
      r.coec = static_cast<double>(acc.contacts) / acc.mass;
      out.push_back(std::move(r));
    }
    return out;
  }

 private:
  struct Acc {
    std::uint64_t n = 0;
    std::uint64_t contacts = 0;
    double mass = 0.0;
  };
  const PropensityTable& theta_;
  std::map<DocumentId, Acc> rows_;
};

template <typename SessionRange>
std::vector<FeatureRow> build_features(const SessionRange& log, const PropensityTable& theta) {
  FeatureBuilder b(theta);
  for (const SearchSession& s : log) b.add(s);
  return b.rows();
}

inline void write_features_csv(const std::vector<FeatureRow>& rows, std::ostream& os) {
  os << "doc_id,n,raw_rate,coec,sum_theta\n";
  for (const auto& r : rows) {
    os << r.doc.str() << ',' << r.n_impressions << ',' << format_double(r.raw_rate) << ',' << format_double(r.coec)
       << ',' << format_double(r.sum_theta) << '\n';
  }
}

}  // namespace rankprop
