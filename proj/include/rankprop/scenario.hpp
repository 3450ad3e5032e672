#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "rankprop/core.hpp"

namespace rankprop {

struct ScenarioRequest {
  InterfaceId interface;
  Position current_position = 0;
  Position candidate_position = 0;
  double observed_contacts = 0.0;
};

struct ScenarioResponse {
  double forecast_contacts = 0.0;
  double multiplier = 1.0;
  std::pair<double, double> ci;             // on forecast_contacts
  std::pair<double, double> multiplier_ci;
  std::string model = "pbm-separable";
};

/// Contacts after a rank change, assuming relevance does not depend on
/// position: volume scales by theta(candidate) / theta(current). The
/// interval pairs opposite table endpoints, so it is conservative.
inline ScenarioResponse forecast(const ScenarioRequest& req, const PropensityTable& table) {
  if (!(req.observed_contacts >= 0.0) || !std::isfinite(req.observed_contacts)) {
    throw PreconditionError("observed_contacts must be a non-negative number");
  }
  const double th_cur = table.at(req.current_position);
  const double th_cand = table.at(req.candidate_position);
  ScenarioResponse r;
  if (req.current_position == req.candidate_position) {
    r.multiplier = 1.0;
    r.multiplier_ci = {1.0, 1.0};
  } else {
    r.multiplier = th_cand / th_cur;
    r.multiplier_ci = {table.low(req.candidate_position) / table.high(req.current_position),
                       table.high(req.candidate_position) / table.low(req.current_position)};
  }
  r.forecast_contacts = req.observed_contacts * r.multiplier;
  r.ci = {req.observed_contacts * r.multiplier_ci.first, req.observed_contacts * r.multiplier_ci.second};
  return r;
}

inline json to_json(const ScenarioResponse& r) {
  return json{{"forecast_contacts", r.forecast_contacts},
              {"multiplier", r.multiplier},
              {"ci", json::array({r.ci.first, r.ci.second})},
              {"multiplier_ci", json::array({r.multiplier_ci.first, r.multiplier_ci.second})},
              {"model", r.model}};
}

inline ScenarioRequest scenario_request_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("scenario request must be a JSON object");
  ScenarioRequest req;
  req.interface = InterfaceId(detail::require_field<std::string>(j, "interface", "scenario request"));
  req.current_position = detail::require_field<int>(j, "current_position", "scenario request");
  req.candidate_position = detail::require_field<int>(j, "candidate_position", "scenario request");
  req.observed_contacts = detail::require_field<double>(j, "observed_contacts", "scenario request");
  return req;
}

}  // namespace rankprop
