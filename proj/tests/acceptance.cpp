// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// fails. Everything runs against simulator ground truth.

#include <boost/math/distributions/chi_squared.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "rankprop/coec.hpp"
#include "rankprop/estimator.hpp"
#include "rankprop/ips.hpp"
#include "rankprop/power.hpp"
#include "sim_fixtures.hpp"
#include "test_helpers.hpp"

namespace rankprop {
namespace {

using testing::make_catalog;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Ground truth shared by the propensity criteria. Positions 12..18 follow
// the same log-linear bridge the estimator uses.
std::vector<double> truth_theta() {
  std::vector<double> t{1.00, 0.60, 0.45, 0.38, 0.33, 0.30, 0.28, 0.27, 0.26, 0.28, 0.25};
  for (int k = 12; k <= 18; ++k) {
    const double w = (k - 11) / 8.0;
    t.push_back(std::exp((1.0 - w) * std::log(0.25) + w * std::log(0.22)));
  }
  t.push_back(0.22);
  t.push_back(0.21);
  return t;
}

SimulationConfig propensity_corpus(std::vector<double> relevance, std::int64_t n, std::uint64_t seed) {
  auto cfg = testing::basic_config(relevance, BehaviorConfig::pbm(truth_theta()), n, seed, AllocationPlan{});
  cfg.list_length = 20;
  return cfg;
}

// ---------------------------------------------------------------------------

Outcome theta_recovery() {
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> rel;
  for (int i = 0; i < 20; ++i) rel.push_back(0.9 - 0.3 * i / 19.0);
  auto cfg = propensity_corpus(rel, 2'000'000, 101);
  cfg.ranker.kind = RankerKind::by_noisy_relevance;
  cfg.ranker.noise_sd = 0.05;

  EstimateOptions opts;
  opts.seed = 1;
  PropensityEstimator estimator(opts);
  simulate_corpus(cfg, [&](const SearchSession& s) { estimator.add(s); });
  const auto table = estimator.finish();
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const auto truth = truth_theta();
  double worst = 0.0;
  Position worst_at = 1;
  for (Position k = 1; k <= 11; ++k) {
    const double err = std::abs(table.at(k) / truth[static_cast<std::size_t>(k - 1)] - 1.0);
    if (err > worst) {
      worst = err;
      worst_at = k;
    }
  }
  const bool pass = worst <= 0.05 && seconds < 120.0;
  return {pass, "2e6 sessions, max relative error " + fmt("%.2f%%", 100 * worst) + " at position " +
                    std::to_string(worst_at) + " (limit 5%), runtime " + fmt("%.1f s", seconds) + " (limit 120 s)"};
}

Outcome ratio_unbiasedness() {
  const auto truth = truth_theta();
  std::vector<double> uniform(20, 0.3);
  std::vector<double> graded;
  for (int i = 0; i < 20; ++i) graded.push_back(0.9 - 0.85 * i / 19.0);

  std::string detail;
  bool pass = true;
  int corpus_seed = 202;
  for (const auto& [name, rel] : {std::pair{"uniform", uniform}, std::pair{"graded", graded}}) {
    EstimateOptions opts;
    opts.seed = 2;
    PropensityEstimator estimator(opts);
    simulate_corpus(propensity_corpus(rel, 2'000'000, static_cast<std::uint64_t>(corpus_seed++)),
                    [&](const SearchSession& s) { estimator.add(s); });
    int covered = 0;
    for (const auto& e : estimator.pair_estimates()) {
      const double r = truth[static_cast<std::size_t>(e.hi - 1)] / truth[static_cast<std::size_t>(e.lo - 1)];
      if (e.ci_low <= r && r <= e.ci_high) ++covered;
    }
    pass = pass && covered >= 10;
    detail += std::string(detail.empty() ? "" : ", ") + name + " relevance " + std::to_string(covered) + "/11";
  }
  return {pass, detail + " pair CIs cover the true ratio (need >= 10/11 each)"};
}

Outcome bootstrap_coverage() {
  const double truth = 0.5 / 0.4;
  int covered = 0;
  std::uint64_t treated = 0;
  for (int trial = 0; trial < 100; ++trial) {
    PairTally tally(1, 2);
    simulate_corpus(testing::basic_config({0.6, 0.5, 0.4}, BehaviorConfig::pbm({0.5, 0.4, 0.3}), 400'000,
                                          1000 + static_cast<std::uint64_t>(trial), testing::single_pair_plan(1, 2)),
                    [&](const SearchSession& s) { tally.add(s); });
    const auto e = bootstrap_ci(tally, kDefaultBootstrapReps, static_cast<std::uint64_t>(trial));
    if (e.ci_low <= truth && truth <= e.ci_high) ++covered;
    treated += e.n_effective;
  }
  return {covered >= 93, std::to_string(covered) + "/100 intervals cover 1.25 (need >= 93), mean treated sessions " +
                             fmt("%.0f", static_cast<double>(treated) / 100.0)};
}

Outcome coec_debiasing() {
  const int n_docs = 100;
  std::vector<double> rel;
  for (int i = 0; i < n_docs; ++i) rel.push_back(0.05 + 0.9 * i / (n_docs - 1));
  std::vector<double> theta;
  for (int k = 1; k <= n_docs; ++k) theta.push_back(1.0 / (1.0 + 0.05 * (k - 1)));

  auto cfg = testing::basic_config(rel, BehaviorConfig::pbm(theta), 10'000, 404);
  cfg.ranker.kind = RankerKind::by_score_table;
  Rng noise_rng(4040);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (const auto& d : cfg.catalog.docs()) cfg.ranker.scores[d.doc] = d.relevance + noise(noise_rng);

  const auto table = PropensityTable::from_values(InterfaceId("search"), theta);
  std::vector<double> squared;
  for (double t : theta) squared.push_back(t * t);
  const auto overstated = PropensityTable::from_values(InterfaceId("search"), squared);

  FeatureBuilder builder(table);
  FeatureBuilder over_builder(overstated);
  std::map<DocumentId, Position> shown_at;
  simulate_corpus(cfg, [&](const SearchSession& s) {
    builder.add(s);
    over_builder.add(s);
    for (const auto& slot : s.slots) shown_at[slot.doc] = slot.displayed_position;
  });

  std::vector<double> truth, raw, debiased;
  for (const auto& r : builder.rows()) {
    truth.push_back(cfg.catalog[cfg.catalog.index_of(r.doc)].relevance);
    raw.push_back(r.raw_rate);
    debiased.push_back(r.coec);
  }
  const double tau_coec = testing::kendall_tau(debiased, truth);
  const double tau_raw = testing::kendall_tau(raw, truth);

  // Overstating the position effect must inflate every doc below position 1,
  // and inflate the bottom half more than the top half.
  const auto rows = builder.rows();
  const auto over_rows = over_builder.rows();
  bool inflated = true;
  double top_lift = 0.0, bottom_lift = 0.0;
  int top_n = 0, bottom_n = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Position k = shown_at.at(rows[i].doc);
    const double lift = over_rows[i].coec / rows[i].coec;
    if (k > 1 && rows[i].contacts > 0 && !(lift > 1.0)) inflated = false;
    if (k <= n_docs / 2) {
      top_lift += lift;
      ++top_n;
    } else {
      bottom_lift += lift;
      ++bottom_n;
    }
  }
  top_lift /= top_n;
  bottom_lift /= bottom_n;
  const bool pass = tau_coec >= 0.95 && tau_raw < tau_coec && inflated && bottom_lift > top_lift;
  return {pass, "tau(coec) " + fmt("%.4f", tau_coec) + " (need >= 0.95), tau(raw) " + fmt("%.4f", tau_raw) +
                    " (must be lower), overstated theta lifts coec x" + fmt("%.2f", top_lift) + " top half, x" +
                    fmt("%.2f", bottom_lift) + " bottom half"};
}

struct IpsSetup {
  std::vector<double> rel{0.85, 0.75, 0.68, 0.6, 0.5, 0.42, 0.35, 0.25, 0.18, 0.1};
  std::vector<double> theta{1.0, 0.7, 0.55, 0.45, 0.38, 0.33, 0.3, 0.27, 0.25, 0.23};
  std::map<DocumentId, double> challenger;

  IpsSetup() {
    Rng rng(5050);
    std::normal_distribution<double> noise(0.0, 0.15);
    for (std::size_t i = 0; i < rel.size(); ++i) challenger[DocumentId("d" + std::to_string(i + 1))] = rel[i] + noise(rng);
  }

  RankerScores scores() const {
    RankerScores s;
    for (const auto& [d, v] : challenger) s.set(QueryId("q1"), d, v);
    return s;
  }

  SimulationConfig logging(BehaviorConfig behavior, std::uint64_t seed) const {
    auto cfg = testing::basic_config(rel, std::move(behavior), 1'000'000, seed);
    cfg.ranker.kind = RankerKind::by_noisy_relevance;
    cfg.ranker.noise_sd = 0.3;
    return cfg;
  }

  // On-policy truth: the challenger deployed to visitors who examine every
  // slot, so each contact reflects relevance alone.
  double on_policy_dcg() const {
    auto cfg = testing::basic_config(rel, BehaviorConfig::pbm(std::vector<double>(rel.size(), 1.0)), 1'000'000, 6060);
    cfg.ranker.kind = RankerKind::by_score_table;
    cfg.ranker.scores = challenger;
    std::vector<SearchSession> log;
    log.reserve(1'000'000);
    simulate_corpus(cfg, [&](const SearchSession& s) { log.push_back(s); });
    return on_policy_metric(log, LambdaKind::dcg).value;
  }

  double ips_dcg(const SimulationConfig& cfg) const {
    const auto table = PropensityTable::from_values(InterfaceId("search"), theta);
    const auto sc = scores();
    const IpsOptions opts{LambdaKind::dcg, {}};
    double sum = 0.0;
    std::uint64_t n = 0;
    simulate_corpus(cfg, [&](const SearchSession& s) {
      sum += ips_term(s, sc, table, opts);
      ++n;
    });
    return sum / static_cast<double>(n);
  }
};

Outcome ips_consistency() {
  IpsSetup w;
  const double truth = w.on_policy_dcg();
  const double pbm = w.ips_dcg(w.logging(BehaviorConfig::pbm(w.theta), 7070));

  BehaviorConfig trust;
  trust.kind = BehaviorKind::trust_pbm;
  trust.theta = w.theta;
  // Common trust-bias setting: relevant items always perceived, false
  // positives decay as 0.65 / k.
  for (int k = 1; k <= 10; ++k) {
    trust.eps_plus.push_back(1.0);
    trust.eps_minus.push_back(0.65 / k);
  }
  const double biased = w.ips_dcg(w.logging(trust, 8080));
  const double err_pbm = std::abs(pbm / truth - 1.0);
  const double err_trust = std::abs(biased / truth - 1.0);
  return {err_pbm <= 0.03 && err_trust > 0.03,
          "on-policy DCG " + fmt("%.4f", truth) + ", IPS from pbm logs " + fmt("%.4f", pbm) + " (" +
              fmt("%.2f%%", 100 * err_pbm) + ", need <= 3%), IPS from trust_pbm logs " + fmt("%.4f", biased) + " (" +
              fmt("%.2f%%", 100 * err_trust) + ", need > 3%)"};
}

Outcome power() {
  const auto n = required_sample({0.10, 0.05, 0.05, 0.80});
  const double mc = monte_carlo_power(2.0, 0.05, n, 0.05, 20000, 909);
  bool hand = true;
  const std::vector<std::array<double, 4>> cases{
      {0.10, 0.06, 0.09, 0.07}, {0.08, 0.04, 0.07, 0.05}, {0.20, 0.12, 0.18, 0.14}};
  for (const auto& c : cases) {
    const auto [a, b] = hypothesized_effect(c[0], c[1]);
    hand = hand && std::abs(a - c[2]) < 1e-12 && std::abs(b - c[3]) < 1e-12;
  }
  return {n == 432 && mc >= 0.77 && mc <= 0.83 && hand,
          "n = " + std::to_string(n) + " (need 432), Monte-Carlo power " + fmt("%.4f", mc) +
              " (need [0.77, 0.83]), half-gap rule on 3 hand cases " + (hand ? "exact" : "WRONG")};
}

std::string sim_config(const std::string& behavior) {
  return R"({
    "catalog": [
      {"doc_id": "a", "relevance": 0.8}, {"doc_id": "b", "relevance": 0.65},
      {"doc_id": "c", "relevance": 0.5}, {"doc_id": "d", "relevance": 0.4},
      {"doc_id": "e", "relevance": 0.3}, {"doc_id": "f", "relevance": 0.2}],
    "ranker": {"kind": "by_noisy_relevance", "noise_sd": 0.1},
    "behavior": )" + behavior + R"(,
    "plan": {"holdout_fraction": 0.5, "swap_pairs": [[1, 2], [2, 3], [3, 4], [4, 5], [5, 6]]},
    "n_sessions": 50000,
    "seed": 11
  })";
}

int cli_run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

Outcome diagnostics() {
  testing::TempDir dir("acceptance_report");
  testing::write_file(dir / "cascade.json", sim_config(R"({"kind": "cascade"})"));
  testing::write_file(dir / "pbm.json", sim_config(R"({"kind": "pbm", "theta": [0.95, 0.7, 0.5, 0.4, 0.33, 0.3]})"));
  json reports;
  for (const std::string name : {"cascade", "pbm"}) {
    if (cli_run({"simulate", "--config", (dir / (name + ".json")).string(), "--out", (dir / name).string()}) != 0 ||
        cli_run({"report", "--input", (dir / name / "sessions.jsonl").string(), "--out",
                 (dir / (name + "_report")).string()}) != 0) {
      return {false, "CLI failed for " + name};
    }
    reports[name] = json::parse(testing::slurp(dir / (name + "_report") / "diagnostics.json"));
  }
  const auto& c = reports["cascade"];
  const auto& p = reports["pbm"];
  const double c_rate = c["reversal"]["rate"].get<double>();
  const double p_rate = p["reversal"]["rate"].get<double>();
  const auto c_multi = c["multi_contact_sessions"].get<std::uint64_t>();
  const auto p_multi = p["multi_contact_sessions"].get<std::uint64_t>();
  return {c_rate == 0.0 && c_multi == 0 && p_rate > 0.0 && p_multi > 0,
          "cascade: reversal " + fmt("%.4f", c_rate) + ", multi-contact " + std::to_string(c_multi) +
              "; pbm: reversal " + fmt("%.4f", p_rate) + ", multi-contact " + std::to_string(p_multi)};
}

Outcome allocation() {
  const AllocationPlan plan;
  const int n = 1'100'000;
  std::uint64_t holdout = 0;
  std::vector<std::uint64_t> arms(plan.swap_pairs.size(), 0);
  for (int i = 0; i < n; ++i) {
    const auto a = assign_arm(VisitorId("visitor-" + std::to_string(i)), plan);
    if (a.kind == ArmKind::holdout) {
      ++holdout;
      continue;
    }
    for (std::size_t j = 0; j < plan.swap_pairs.size(); ++j) {
      if (a.is_swap(plan.swap_pairs[j].hi, plan.swap_pairs[j].lo)) ++arms[j];
    }
  }
  const double h = static_cast<double>(holdout) / n;
  double worst_arm = 0.0;
  std::uint64_t swapped = 0;
  for (auto c : arms) {
    worst_arm = std::max(worst_arm, std::abs(static_cast<double>(c) / n - plan.arm_fraction()));
    swapped += c;
  }
  // Uniformity of the swap arms among treated visitors.
  const double expected = static_cast<double>(swapped) / static_cast<double>(arms.size());
  double chi2 = 0.0;
  for (auto c : arms) chi2 += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  const double critical =
      boost::math::quantile(boost::math::chi_squared_distribution<double>(static_cast<double>(arms.size() - 1)), 0.999);
  const bool pass = std::abs(h - 0.5) <= 0.001 && worst_arm <= 0.001 && chi2 < critical;
  return {pass, "holdout " + fmt("%.4f%%", 100 * h) + ", worst arm deviation " + fmt("%.4f", 100 * worst_arm) +
                    " pp from 4.5455%, chi-square " + fmt("%.2f", chi2) + " < " + fmt("%.3f", critical) +
                    " (df 10, alpha 0.001)"};
}

Outcome determinism() {
  testing::TempDir dir("acceptance_replay");
  testing::write_file(dir / "pbm.json", sim_config(R"({"kind": "pbm", "theta": [0.95, 0.7, 0.5, 0.4, 0.33, 0.3]})"));
  const auto p = [&](const std::string& s) { return (dir / s).string(); };
  if (cli_run({"simulate", "--config", p("pbm.json"), "--out", p("sim")}) != 0 ||
      cli_run({"estimate", "--input", p("sim/sessions.jsonl"), "--pairs", "1-2,2-3,3-4,4-5,5-6", "--seed", "3",
               "--out", p("est")}) != 0 ||
      cli_run({"replay", "--manifest", p("sim/manifest.json"), "--out", p("sim_again")}) != 0 ||
      cli_run({"replay", "--manifest", p("est/manifest.json"), "--out", p("est_again")}) != 0) {
    return {false, "CLI run failed"};
  }
  int identical = 0;
  for (const auto& [a, b] : std::vector<std::pair<std::string, std::string>>{
           {"sim/sessions.jsonl", "sim_again/sessions.jsonl"},
           {"est/propensity.json", "est_again/propensity.json"},
           {"est/propensity.csv", "est_again/propensity.csv"}}) {
    if (testing::slurp(dir / a) == testing::slurp(dir / b)) ++identical;
  }
  return {identical == 3, std::to_string(identical) + "/3 outputs byte-identical after manifest replay"};
}

}  // namespace
}  // namespace rankprop

int main() {
  using rankprop::Outcome;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"theta_recovery", rankprop::theta_recovery},
      {"ratio_unbiasedness", rankprop::ratio_unbiasedness},
      {"bootstrap_coverage", rankprop::bootstrap_coverage},
      {"coec_debiasing", rankprop::coec_debiasing},
      {"ips_consistency", rankprop::ips_consistency},
      {"power", rankprop::power},
      {"behavior_diagnostics", rankprop::diagnostics},
      {"allocation", rankprop::allocation},
      {"determinism", rankprop::determinism},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size()
            << " acceptance criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
