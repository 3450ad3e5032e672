#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

#include "rankprop/core.hpp"

namespace rankprop {

namespace detail {

inline json position_map_to_json(const std::map<Position, double>& m) {
  json out = json::object();
  for (const auto& [k, v] : m) out[std::to_string(k)] = v;
  return out;
}

inline std::map<Position, double> position_map_from_json(const json& j, const char* what) {
  if (!j.is_object()) throw SchemaError(std::string(what) + " must be an object of position -> value");
  std::map<Position, double> out;
  for (const auto& [key, value] : j.items()) {
    std::size_t used = 0;
    int k = 0;
    try {
      k = std::stoi(key, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != key.size()) throw SchemaError(std::string(what) + " key '" + key + "' is not a position");
    if (!value.is_number()) throw SchemaError(std::string(what) + " values must be numbers");
    out[k] = value.get<double>();
  }
  return out;
}

}  // namespace detail

inline json to_json(const PropensityTable& t) {
  return json{{"interface_id", t.interface.str()},
              {"source", to_string(t.source)},
              {"created_at", t.created_at},
              {"theta", detail::position_map_to_json(t.theta)},
              {"ci_low", detail::position_map_to_json(t.ci_low)},
              {"ci_high", detail::position_map_to_json(t.ci_high)},
              {"metadata", t.metadata}};
}

inline PropensityTable propensity_table_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("propensity artifact must be a JSON object");
  PropensityTable t;
  t.interface = InterfaceId(detail::require_field<std::string>(j, "interface_id", "propensity artifact"));
  t.source = table_source_from_string(j.value("source", std::string("assumed")));
  t.created_at = j.value("created_at", std::int64_t{0});
  if (!j.contains("theta")) throw SchemaError("missing field 'theta' in propensity artifact");
  t.theta = detail::position_map_from_json(j.at("theta"), "theta");
  t.ci_low = j.contains("ci_low") ? detail::position_map_from_json(j.at("ci_low"), "ci_low") : t.theta;
  t.ci_high = j.contains("ci_high") ? detail::position_map_from_json(j.at("ci_high"), "ci_high") : t.theta;
  t.metadata = j.value("metadata", json::object());
  t.validate();
  return t;
}

inline PropensityTable load_propensity_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read propensity artifact '" + path.string() + "'");
  try {
    return propensity_table_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw SchemaError("propensity artifact '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline void save_propensity_table(const PropensityTable& t, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << to_json(t).dump(2) << '\n';
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// position,theta,ci_low,ci_high,n with one row per position, for plotting.
inline void write_propensity_csv(const PropensityTable& t, std::ostream& os) {
  std::map<Position, std::uint64_t> n_at;
  if (t.metadata.contains("n_per_pair")) {
    for (const auto& [pair, n] : t.metadata.at("n_per_pair").items()) {
      const auto dash = pair.find('-');
      const Position hi = std::stoi(pair.substr(0, dash));
      const Position lo = std::stoi(pair.substr(dash + 1));
      n_at[lo] = n.get<std::uint64_t>();
      if (hi == 1) n_at[1] = n.get<std::uint64_t>();
    }
  }
  os << "position,theta,ci_low,ci_high,n\n";
  for (const auto& [k, v] : t.theta) {
    os << k << ',' << format_double(v) << ',' << format_double(t.low(k)) << ',' << format_double(t.high(k)) << ','
       << (n_at.contains(k) ? n_at.at(k) : 0) << '\n';
  }
}

}  // namespace rankprop
