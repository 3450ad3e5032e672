#include <gtest/gtest.h>

#include <sstream>

#include "rankprop/coec.hpp"
#include "sim_fixtures.hpp"
#include "test_helpers.hpp"

namespace rankprop {
namespace {

using testing::make_session;

ProfessionalHistory history(std::vector<std::pair<Position, bool>> events) {
  ProfessionalHistory h{DocumentId("pro"), {}};
  for (auto [k, c] : events) h.events.push_back({k, c});
  return h;
}

PropensityTable linear_table(int n, double last) {
  std::vector<double> theta;
  for (int k = 1; k <= n; ++k) theta.push_back(1.0 + (last - 1.0) * (k - 1) / (n - 1));
  return PropensityTable::from_values(InterfaceId("search"), theta);
}

TEST(RawRate, Examples) {
  EXPECT_DOUBLE_EQ(raw_rate(history({{1, true}, {2, false}, {3, false}})), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(raw_rate(history(std::vector<std::pair<Position, bool>>(10, {4, false}))), 0.0);
  EXPECT_DOUBLE_EQ(raw_rate(history(std::vector<std::pair<Position, bool>>(100, {4, true}))), 1.0);
  EXPECT_THROW(raw_rate(history({})), PreconditionError);
}

TEST(Coec, DeepContactEarnsMoreCredit) {
  const auto theta = linear_table(15, 0.1);
  EXPECT_NEAR(theta.at(15), 0.1, 1e-15);
  const double deep = coec(history({{15, true}}), theta);
  const double top = coec(history({{1, true}}), theta);
  EXPECT_NEAR(deep, 10.0, 1e-12);
  EXPECT_NEAR(deep / top, 10.0, 1e-12);
}

TEST(Coec, ReducesToRawRate) {
  const auto theta = linear_table(15, 0.1);
  const auto top_only = history({{1, true}, {1, false}, {1, false}});
  EXPECT_DOUBLE_EQ(coec(top_only, theta), raw_rate(top_only));

  const auto flat = PropensityTable::from_values(InterfaceId("search"), std::vector<double>(15, 1.0));
  const auto mixed = history({{3, true}, {9, false}, {15, true}, {2, false}});
  EXPECT_DOUBLE_EQ(coec(mixed, flat), raw_rate(mixed));
}

TEST(Coec, UncoveredPosition) {
  EXPECT_THROW(coec(history({{16, true}}), linear_table(15, 0.1)), CoverageError);
}

TEST(BuildFeatures, SingleSessionAndCsv) {
  const auto theta = PropensityTable::from_values(InterfaceId("search"), {1.0, 0.5, 0.25});
  std::vector<SearchSession> log{make_session(ArmAssignment::holdout(), {1, 2}, {0, 1})};
  const auto rows = build_features(log, theta);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].doc.str(), "d1");
  EXPECT_EQ(rows[1].doc.str(), "d2");
  EXPECT_DOUBLE_EQ(rows[1].coec, 2.0);
  EXPECT_DOUBLE_EQ(rows[1].raw_rate, 1.0);

  std::ostringstream csv;
  write_features_csv(rows, csv);
  EXPECT_EQ(csv.str(), "doc_id,n,raw_rate,coec,sum_theta\nd1,1,0,0,1\nd2,1,1,2,0.5\n");
}

// Equal relevance, one doc pinned to position 1 and the other to 15: raw
// rates differ by the propensity ratio, coec does not.
TEST(BuildFeatures, PinnedDocsEqualRelevance) {
  std::vector<double> rel(15, 0.2);
  std::vector<double> theta;
  for (int k = 1; k <= 15; ++k) theta.push_back(1.0 - 0.9 * (k - 1) / 14.0);
  auto cfg = testing::basic_config(rel, BehaviorConfig::pbm(theta), 200000, 6);
  cfg.catalog = Catalog([&] {
    std::vector<CatalogEntry> docs;
    for (int i = 1; i <= 15; ++i) docs.push_back({DocumentId("d" + std::to_string(i)), i == 1 || i == 15 ? 0.5 : 0.2});
    return docs;
  }());
  cfg.ranker.kind = RankerKind::fixed_permutation;
  for (int i = 1; i <= 15; ++i) cfg.ranker.order.emplace_back("d" + std::to_string(i));

  const auto table = PropensityTable::from_values(InterfaceId("search"), theta);
  FeatureBuilder builder(table);
  simulate_corpus(cfg, [&](const SearchSession& s) { builder.add(s); });
  const auto rows = builder.rows();
  const auto find = [&](const std::string& id) {
    return *std::find_if(rows.begin(), rows.end(), [&](const FeatureRow& r) { return r.doc.str() == id; });
  };
  const auto top = find("d1");
  const auto deep = find("d15");
  EXPECT_EQ(top.n_impressions, 200000u);
  EXPECT_NEAR(top.raw_rate / deep.raw_rate, 10.0, 0.5);
  EXPECT_NEAR(top.coec / deep.coec, 1.0, 0.05);
}

TEST(BuildFeatures, NoImpressionNoRow) {
  const auto theta = PropensityTable::from_values(InterfaceId("search"), {1.0, 0.5, 0.25});
  std::vector<SearchSession> log{make_session(ArmAssignment::holdout(), {1, 2}, {})};
  for (const auto& r : build_features(log, theta)) EXPECT_NE(r.doc.str(), "d3");
}

// A smaller version of the ranking-quality check: fixed legacy order,
// position-confounded exposure.
TEST(BuildFeatures, CoecRanksBetterThanRawRate) {
  const int n_docs = 30;
  std::vector<double> rel;
  for (int i = 0; i < n_docs; ++i) rel.push_back(0.05 + 0.9 * i / (n_docs - 1));
  std::vector<double> theta;
  for (int k = 1; k <= n_docs; ++k) theta.push_back(1.0 / (1.0 + 0.2 * (k - 1)));
  auto cfg = testing::basic_config(rel, BehaviorConfig::pbm(theta), 5000, 12);
  cfg.ranker.kind = RankerKind::by_score_table;
  Rng noise_rng(99);
  std::normal_distribution<double> noise(0.0, 0.3);
  for (const auto& d : cfg.catalog.docs()) cfg.ranker.scores[d.doc] = d.relevance + noise(noise_rng);

  const auto table = PropensityTable::from_values(InterfaceId("search"), theta);
  FeatureBuilder builder(table);
  simulate_corpus(cfg, [&](const SearchSession& s) { builder.add(s); });
  std::vector<double> truth, raw, debiased;
  for (const auto& r : builder.rows()) {
    truth.push_back(cfg.catalog[cfg.catalog.index_of(r.doc)].relevance);
    raw.push_back(r.raw_rate);
    debiased.push_back(r.coec);
  }
  const double tau_coec = testing::kendall_tau(debiased, truth);
  const double tau_raw = testing::kendall_tau(raw, truth);
  EXPECT_GT(tau_coec, 0.9);
  EXPECT_LT(tau_raw, tau_coec);
}

}  // namespace
}  // namespace rankprop
