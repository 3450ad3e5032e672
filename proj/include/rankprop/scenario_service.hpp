#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "httplib.h"
#include "rankprop/propensity_io.hpp"
#include "rankprop/scenario.hpp"

namespace rankprop {

inline int http_status_for(const Error& e) {
  const auto& c = e.error_class();
  if (c == "not_found" || c == "uncovered_position") return 404;
  if (c == "schema_error" || c == "precondition_error") return 400;
  return 500;
}

inline std::map<InterfaceId, PropensityTable> load_propensity_dir(const std::filesystem::path& dir) {
  std::map<InterfaceId, PropensityTable> tables;
  if (!std::filesystem::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json" &&
        entry.path().filename() != "manifest.json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto t = load_propensity_table(f);
    auto iface = t.interface;
    if (!tables.emplace(iface, std::move(t)).second) {
      throw ConfigError("two artifacts in '" + dir.string() + "' describe interface '" + iface.str() + "'");
    }
  }
  if (tables.empty()) throw ConfigError("no propensity artifacts found in '" + dir.string() + "'");
  return tables;
}

/// HTTP front end over immutable propensity tables.
///
///   GET  /v1/health
///   GET  /v1/propensities?interface=<id>
///   POST /v1/scenario/forecast   body: {interface, current_position,
///                                       candidate_position, observed_contacts}
class ScenarioService {
 public:
  explicit ScenarioService(std::map<InterfaceId, PropensityTable> tables, std::string cors_origin = "*")
      : tables_(std::move(tables)), cors_origin_(std::move(cors_origin)) {
    if (tables_.empty()) throw ConfigError("scenario service needs at least one propensity table");
    routes();
  }

  ScenarioService(const ScenarioService&) = delete;
  ScenarioService& operator=(const ScenarioService&) = delete;

  bool listen(const std::string& host, int port) { return server_.listen(host, port); }

  /// Binds an ephemeral port; call listen_after_bind() on a worker thread.
  int bind_any(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

  const PropensityTable& table(const InterfaceId& iface) const {
    auto it = tables_.find(iface);
    if (it == tables_.end()) throw NotFoundError("no propensity table for interface '" + iface.str() + "'");
    return it->second;
  }

 private:
  static void send_error(httplib::Response& res, int status, const std::string& cls, const std::string& msg) {
    res.status = status;
    res.set_content(json{{"error_class", cls}, {"message", msg}}.dump(), "application/json");
  }

  template <typename Fn>
  static void guarded(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      send_error(res, http_status_for(e), e.error_class(), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "schema_error", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal_error", e.what());
    }
  }

  void routes() {
    server_.set_default_headers({{"Access-Control-Allow-Origin", cors_origin_},
                                 {"Access-Control-Allow-Headers", "Content-Type"},
                                 {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server_.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      json ifaces = json::array();
      for (const auto& [id, _] : tables_) ifaces.push_back(id.str());
      res.set_content(json{{"status", "ok"}, {"interfaces", ifaces}}.dump(), "application/json");
    });

    server_.Get("/v1/propensities", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        InterfaceId iface;
        if (req.has_param("interface")) {
          iface = InterfaceId(req.get_param_value("interface"));
        } else if (tables_.size() == 1) {
          iface = tables_.begin()->first;
        } else {
          throw SchemaError("query parameter 'interface' is required when several tables are served");
        }
        res.set_content(to_json(table(iface)).dump(), "application/json");
      });
    });

    server_.Post("/v1/scenario/forecast", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        json body;
        try {
          body = json::parse(req.body);
        } catch (const json::parse_error& e) {
          throw SchemaError(std::string("request body is not JSON: ") + e.what());
        }
        const auto sr = scenario_request_from_json(body);
        res.set_content(to_json(forecast(sr, table(sr.interface))).dump(), "application/json");
      });
    });
  }

  std::map<InterfaceId, PropensityTable> tables_;
  std::string cors_origin_;
  httplib::Server server_;
};

}  // namespace rankprop
