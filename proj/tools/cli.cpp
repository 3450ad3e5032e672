#include "cli.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "rankprop/behavior_sim.hpp"
#include "rankprop/coec.hpp"
#include "rankprop/estimator.hpp"
#include "rankprop/ips.hpp"
#include "rankprop/power.hpp"
#include "rankprop/propensity_io.hpp"
#include "rankprop/scenario_service.hpp"
#include "rankprop/session_io.hpp"

namespace rankprop::cli {
namespace {

namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";

struct Options {
  std::optional<std::uint64_t> seed;
  std::vector<std::string> inputs;
  std::string out = ".";
  std::string interface;
  std::string pairs;
  int bootstrap_reps = kDefaultBootstrapReps;
  std::string lambda = "dcg";
  int port = 8080;
  std::string config;
  std::string propensity;
  std::string scores;
  std::string scores_b;
  std::string manifest;
  std::string cors_origin = "*";
  std::optional<std::int64_t> n_sessions;
  std::optional<double> clip_floor;
  double max_reject = 0.01;
  double alpha = 0.05;
  double power = 0.80;
  double traffic = 0.0;
  double holdout = 0.5;
  bool no_interpolate = false;
};

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> log = [] {
    auto l = spdlog::get("rankprop");
    if (!l) l = spdlog::stderr_color_mt("rankprop");
    const char* level = std::getenv("RANKPROP_LOG_LEVEL");
    l->set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
    return l;
  }();
  return log;
}

std::string file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read '" + p.string() + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

std::vector<fs::path> as_paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot write '" + p.string() + "'");
  return os;
}

void write_json(const fs::path& p, const json& j) { open_out(p) << j.dump(2) << '\n'; }

/// Records how outputs were produced so `replay` can regenerate them.
void write_manifest(const fs::path& out_dir, const std::string& subcommand, const std::vector<std::string>& args,
                    const std::vector<fs::path>& inputs, const std::vector<std::string>& outputs) {
  json in = json::array();
  for (const auto& p : inputs) {
    if (fs::is_regular_file(p)) in.push_back({{"path", p.string()}, {"fnv1a64", file_hash(p)}});
  }
  json outs = json::array();
  for (const auto& name : outputs) outs.push_back({{"path", name}, {"fnv1a64", file_hash(out_dir / name)}});
  write_json(out_dir / "manifest.json", json{{"tool", "rankprop"},
                                             {"version", kVersion},
                                             {"subcommand", subcommand},
                                             {"argv", args},
                                             {"inputs", in},
                                             {"outputs", outs}});
}

void log_rejects(const MergeStats& stats) {
  if (stats.rejected > 0) logger()->warn("{} log lines rejected", stats.rejected);
  for (const auto& r : stats.rejects) {
    logger()->info("rejected {}:{} [{}] {}", r.path, r.line_number, r.error_class, r.message);
  }
  if (stats.out_of_order > 0) logger()->warn("{} sessions out of timestamp order", stats.out_of_order);
}

void require_inputs(const Options& o, const char* what) {
  if (o.inputs.empty()) throw ConfigError(std::string("--input is required: ") + what);
}

std::vector<SwapPair> pairs_or_default(const Options& o) {
  return o.pairs.empty() ? default_swap_pairs() : parse_pairs(o.pairs);
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  if (o.config.empty()) throw ConfigError("--config is required for simulate");
  std::ifstream in(o.config);
  if (!in) throw IoError("cannot read config '" + o.config + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  SimulationConfig cfg = simulation_config_from_json(j);
  if (o.seed) cfg.seed = *o.seed;
  if (o.n_sessions) cfg.n_sessions = *o.n_sessions;

  fs::create_directories(o.out);
  {
    auto os = open_out(fs::path(o.out) / "sessions.jsonl");
    simulate_corpus_to_stream(cfg, os);
  }
  write_manifest(o.out, "simulate", args, {o.config}, {"sessions.jsonl"});
  out << "wrote " << cfg.n_sessions << " sessions to " << (fs::path(o.out) / "sessions.jsonl").string() << '\n';
  return 0;
}

int cmd_estimate(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  require_inputs(o, "session logs");
  EstimateOptions eo;
  eo.pairs = pairs_or_default(o);
  eo.bootstrap_reps = o.bootstrap_reps;
  eo.seed = o.seed.value_or(0);
  eo.interpolate_gap = !o.no_interpolate;
  if (!o.interface.empty()) eo.interface = InterfaceId(o.interface);

  PropensityEstimator est(eo);
  auto reader = merge_logs(as_paths(o.inputs), o.max_reject);
  reader.for_each([&](const SearchSession& s) { est.add(s); });
  log_rejects(reader.stats());
  PropensityTable table = est.finish();
  table.metadata["rejected_lines"] = reader.stats().rejected;

  fs::create_directories(o.out);
  save_propensity_table(table, fs::path(o.out) / "propensity.json");
  {
    auto os = open_out(fs::path(o.out) / "propensity.csv");
    write_propensity_csv(table, os);
  }
  write_manifest(o.out, "estimate", args, as_paths(o.inputs), {"propensity.json", "propensity.csv"});
  out << "estimated " << table.theta.size() << " positions for interface '" << table.interface.str() << "' from "
      << est.sessions() << " sessions\n";
  return 0;
}

int cmd_features(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  require_inputs(o, "session logs");
  if (o.propensity.empty()) throw ConfigError("--propensity is required for features");
  const auto table = load_propensity_table(o.propensity);
  FeatureBuilder builder(table);
  auto reader = merge_logs(as_paths(o.inputs), o.max_reject);
  reader.for_each([&](const SearchSession& s) {
    if (o.interface.empty() || s.interface.str() == o.interface) builder.add(s);
  });
  log_rejects(reader.stats());
  const auto rows = builder.rows();

  fs::create_directories(o.out);
  {
    auto os = open_out(fs::path(o.out) / "features.csv");
    write_features_csv(rows, os);
  }
  auto inputs = as_paths(o.inputs);
  inputs.emplace_back(o.propensity);
  write_manifest(o.out, "features", args, inputs, {"features.csv"});
  out << "wrote features for " << rows.size() << " documents\n";
  return 0;
}

int cmd_evaluate(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  require_inputs(o, "session logs");
  if (o.propensity.empty() || o.scores.empty()) throw ConfigError("--propensity and --scores are required");
  const auto table = load_propensity_table(o.propensity);
  const auto scores = load_scores_csv(o.scores);
  std::vector<SearchSession> log;
  auto reader = merge_logs(as_paths(o.inputs), o.max_reject);
  reader.for_each([&](const SearchSession& s) {
    if (o.interface.empty() || s.interface.str() == o.interface) log.push_back(s);
  });
  log_rejects(reader.stats());

  IpsOptions io;
  io.lambda = lambda_from_string(o.lambda);
  io.clip_floor = o.clip_floor;
  const auto r = ips_loss(log, scores, table, io);
  for (const auto& w : r.warnings) logger()->warn("{}", w);

  json result{{"lambda", to_string(r.lambda)},
              {"direction", direction(r.lambda)},
              {"ips_value", r.value},
              {"n_queries", r.n_queries},
              {"n_contacts", r.n_contacts},
              {"warnings", r.warnings}};
  auto inputs = as_paths(o.inputs);
  inputs.emplace_back(o.propensity);
  inputs.emplace_back(o.scores);
  if (!o.scores_b.empty()) {
    const auto scores_b = load_scores_csv(o.scores_b);
    const auto cmp = compare_rankers(log, scores, scores_b, table, io, o.bootstrap_reps, o.seed.value_or(0));
    result["comparison"] = {{"estimate_a", cmp.estimate_a},
                            {"estimate_b", cmp.estimate_b},
                            {"delta", cmp.delta},
                            {"p_value", cmp.p_value}};
    inputs.emplace_back(o.scores_b);
  }
  fs::create_directories(o.out);
  write_json(fs::path(o.out) / "evaluation.json", result);
  write_manifest(o.out, "evaluate", args, inputs, {"evaluation.json"});
  out << result.dump(2) << '\n';
  return 0;
}

std::map<Position, double> read_rates_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read rates file '" + path + "'");
  std::map<Position, double> rates;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_no == 1 && line.rfind("position", 0) == 0)) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw SchemaError("rates line " + std::to_string(line_no) + " must be position,rate");
    try {
      rates[std::stoi(line.substr(0, comma))] = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw SchemaError("rates line " + std::to_string(line_no) + " must be position,rate");
    }
  }
  return rates;
}

int cmd_power(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  require_inputs(o, "observed per-position rates CSV");
  const auto rates = read_rates_csv(o.inputs.front());
  AllocationPlan plan;
  plan.holdout_fraction = o.holdout;
  plan.swap_pairs = pairs_or_default(o);
  plan.validate();

  fs::create_directories(o.out);
  {
    auto os = open_out(fs::path(o.out) / "power_plan.csv");
    os << "hi,lo,observed_hi,observed_lo,p_hi,p_lo,n_per_cell,days_to_significance,status\n";
    for (const auto& p : plan.swap_pairs) {
      os << p.hi << ',' << p.lo << ',';
      if (!rates.contains(p.hi) || !rates.contains(p.lo)) {
        os << ",,,,,,missing_rate\n";
        continue;
      }
      const double rh = rates.at(p.hi);
      const double rl = rates.at(p.lo);
      os << format_double(rh) << ',' << format_double(rl) << ',';
      if (!(rh > rl && rl > 0.0)) {
        os << ",,,,not_decreasing\n";
        continue;
      }
      const auto [ph, pl] = hypothesized_effect(rh, rl);
      const auto n = required_sample({ph, pl, o.alpha, o.power});
      const double days = days_to_significance(n, o.traffic, plan.arm_fraction());
      os << format_double(ph) << ',' << format_double(pl) << ',' << n << ','
         << (std::isfinite(days) ? format_double(days) : std::string("inf")) << ",ok\n";
    }
  }
  write_manifest(o.out, "power", args, as_paths(o.inputs), {"power_plan.csv"});
  out << "wrote " << (fs::path(o.out) / "power_plan.csv").string() << '\n';
  return 0;
}

int cmd_report(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  require_inputs(o, "session logs");
  BehaviorDiagnostics diag;
  PositionRateCurve curve;
  ProgramCostAccumulator cost;
  auto reader = merge_logs(as_paths(o.inputs), o.max_reject);
  reader.for_each([&](const SearchSession& s) {
    if (!o.interface.empty() && s.interface.str() != o.interface) return;
    diag.add(s);
    curve.add(s);
    cost.add(s);
  });
  log_rejects(reader.stats());

  json program_cost = nullptr;
  try {
    const auto pc = cost.result();
    program_cost = {{"metric", pc.metric},
                    {"treated_visitors", pc.treated_visitors},
                    {"holdout_visitors", pc.holdout_visitors},
                    {"treated_rate", pc.treated_rate},
                    {"holdout_rate", pc.holdout_rate},
                    {"relative_delta", pc.relative_delta},
                    {"p_value", pc.p_value}};
  } catch (const InsufficientDataError& e) {
    logger()->warn("program cost unavailable: {}", e.what());
  }
  json result{{"sessions", diag.sessions},
              {"multi_contact_sessions", diag.multi_contact_sessions},
              {"partial_view_no_contact_sessions", diag.partial_view_no_contact_sessions},
              {"reversal",
               {{"rate", diag.reversal.rate()},
                {"two_contact_sessions", diag.reversal.two_contact_sessions},
                {"lower_first", diag.reversal.lower_first}}},
              {"program_cost", program_cost}};

  fs::create_directories(o.out);
  write_json(fs::path(o.out) / "diagnostics.json", result);
  {
    auto os = open_out(fs::path(o.out) / "contact_rate_by_position.csv");
    os << "position,impressions,contacts,rate\n";
    for (const auto& [k, cell] : curve.by_position) {
      os << k << ',' << cell.first << ',' << cell.second << ','
         << format_double(static_cast<double>(cell.second) / static_cast<double>(cell.first)) << '\n';
    }
  }
  write_manifest(o.out, "report", args, as_paths(o.inputs), {"diagnostics.json", "contact_rate_by_position.csv"});
  out << result.dump(2) << '\n';
  return 0;
}

int cmd_serve(const Options& o, std::ostream& out) {
  require_inputs(o, "directory of propensity artifacts");
  ScenarioService service(load_propensity_dir(o.inputs.front()), o.cors_origin);
  out << "serving on port " << o.port << std::endl;
  if (!service.listen("0.0.0.0", o.port)) throw IoError("cannot listen on port " + std::to_string(o.port));
  return 0;
}

int cmd_replay(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.manifest.empty()) throw ConfigError("--manifest is required for replay");
  std::ifstream in(o.manifest);
  if (!in) throw IoError("cannot read manifest '" + o.manifest + "'");
  const json m = json::parse(in);
  auto argv = m.at("argv").get<std::vector<std::string>>();
  if (o.out != ".") {
    bool replaced = false;
    for (std::size_t i = 0; i + 1 < argv.size(); ++i) {
      if (argv[i] == "--out") {
        argv[i + 1] = o.out;
        replaced = true;
      }
    }
    if (!replaced) {
      argv.push_back("--out");
      argv.push_back(o.out);
    }
  }
  return run(argv, out, err);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Position-bias estimation from swap-randomized search logs"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  std::uint64_t seed = 0;
  std::int64_t n_sessions = 0;
  double clip = 0.0;
  auto* seed_opt = app.add_option("--seed", seed, "RNG seed");
  app.add_option("--input", o.inputs, "Input path(s)");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--interface", o.interface, "Interface id filter");
  app.add_option("--pairs", o.pairs, "Swap pairs, e.g. 1-2,2-3,11-19");
  app.add_option("--bootstrap-reps", o.bootstrap_reps, "Bootstrap replications");
  app.add_option("--lambda", o.lambda, "Rank weight: arp or dcg")->check(CLI::IsMember({"arp", "dcg"}));
  app.add_option("--port", o.port, "HTTP port for serve");
  app.add_option("--config", o.config, "Simulation config (JSON)");
  app.add_option("--propensity", o.propensity, "Propensity artifact (JSON)");
  app.add_option("--scores", o.scores, "Ranker scores CSV (query_id,doc_id,score)");
  app.add_option("--scores-b", o.scores_b, "Second ranker's scores CSV, for comparison");
  app.add_option("--manifest", o.manifest, "Manifest to replay");
  app.add_option("--cors-origin", o.cors_origin, "Allowed CORS origin for serve");
  auto* n_opt = app.add_option("--n-sessions", n_sessions, "Override the config's session count");
  auto* clip_opt = app.add_option("--clip-floor", clip, "Propensity clipping floor for IPS");
  app.add_option("--max-reject", o.max_reject, "Maximum rejected-line fraction");
  app.add_option("--alpha", o.alpha, "Significance level for power");
  app.add_option("--power", o.power, "Target power");
  app.add_option("--traffic", o.traffic, "Daily sessions, for days-to-significance");
  app.add_option("--holdout", o.holdout, "Holdout fraction, for power planning");
  app.add_flag("--no-interpolate", o.no_interpolate, "Leave deep-page gap positions empty");

  const std::vector<std::string> names{"simulate", "estimate", "features", "evaluate",
                                       "power",    "report",   "serve",    "replay"};
  for (const auto& name : names) app.add_subcommand(name);

  std::vector<const char*> argv{"rankprop"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage_error: " << e.what() << '\n';
    return 2;
  }
  if (*seed_opt) o.seed = seed;
  if (*n_opt) o.n_sessions = n_sessions;
  if (*clip_opt) o.clip_floor = clip;

  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    logger()->debug("running {}", sub);
    if (sub == "simulate") return cmd_simulate(o, args, out);
    if (sub == "estimate") return cmd_estimate(o, args, out);
    if (sub == "features") return cmd_features(o, args, out);
    if (sub == "evaluate") return cmd_evaluate(o, args, out);
    if (sub == "power") return cmd_power(o, args, out);
    if (sub == "report") return cmd_report(o, args, out);
    if (sub == "serve") return cmd_serve(o, out);
    if (sub == "replay") return cmd_replay(o, out, err);
  } catch (const Error& e) {
    err << "error: " << e.error_class() << ": " << e.what() << '\n';
    return 1;
  } catch (const json::exception& e) {
    err << "error: schema_error: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: io_error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace rankprop::cli
