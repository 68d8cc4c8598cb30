#pragma once

#include <functional>
#include <optional>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "eusml/error.hpp"
#include "eusml/labeling/store.hpp"

namespace eusml::labeling {

inline int http_status(ErrorKind k) {
  switch (k) {
    case ErrorKind::validation:
    case ErrorKind::parameter:
    case ErrorKind::input: return 400;
    case ErrorKind::not_found: return 404;
    case ErrorKind::state:
    case ErrorKind::immutable: return 409;
    default: return 500;
  }
}

inline nlohmann::json error_body(ErrorKind k, const std::string& message) {
  return {{"code", to_string(k)}, {"message", message}};
}

/// Parses a POST /events body {kind, station?, t?}.
inline EventRequest parse_event_request(const std::string& body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  require(!j.is_discarded() && j.is_object(), ErrorKind::validation, "body must be a JSON object");
  require(j.contains("kind") && j["kind"].is_string(), ErrorKind::validation,
          "'kind' is required and must be a string");
  EventRequest req;
  req.kind = parse_event_kind(j["kind"].get<std::string>());
  if (j.contains("station") && !j["station"].is_null()) {
    require(j["station"].is_string(), ErrorKind::validation, "'station' must be a string");
    const auto name = j["station"].get<std::string>();
    const auto st = try_parse_station(name);
    require(st.has_value(), ErrorKind::validation,
            "unknown station '" + name + "' (expected Station1, Station2 or Station3)");
    req.station = *st;
  }
  if (j.contains("t") && !j["t"].is_null()) {
    require(j["t"].is_number(), ErrorKind::validation, "'t' must be a number of seconds");
    req.t = j["t"].get<double>();
  }
  return req;
}

/// Wires the labeling API onto `server`. When `token` is non-empty every
/// request must carry it in the X-EUSML-Token header.
inline void register_routes(httplib::Server& server, LabelStore& store, std::string token = {}) {
  using httplib::Request;
  using httplib::Response;

  auto send_json = [](Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };

  auto guarded = [send_json](std::function<void(const Request&, Response&)> fn) {
    return [fn, send_json](const Request& req, Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_json(res, http_status(e.kind()), error_body(e.kind(), e.what()));
      } catch (const std::exception& e) {
        send_json(res, 500, error_body(ErrorKind::io, e.what()));
      }
    };
  };

  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type, X-EUSML-Token"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});

  server.set_pre_routing_handler([token, send_json](const Request& req, Response& res) {
    if (token.empty() || req.method == "OPTIONS") return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value("X-EUSML-Token") == token)
      return httplib::Server::HandlerResponse::Unhandled;
    send_json(res, 401, nlohmann::json{{"code", "unauthorized"}, {"message", "missing or wrong token"}});
    return httplib::Server::HandlerResponse::Handled;
  });

  server.Options(R"(/.*)", [](const Request&, Response& res) { res.status = 204; });

  server.Post("/procedures", guarded([&store, send_json](const Request& req, Response& res) {
    const auto j = nlohmann::json::parse(req.body, nullptr, false);
    require(!j.is_discarded() && j.is_object(), ErrorKind::validation, "body must be a JSON object");
    require(j.contains("patient_ref") && j["patient_ref"].is_string(), ErrorKind::validation,
            "'patient_ref' is required and must be a string");
    const std::string id = store.create(j["patient_ref"].get<std::string>());
    send_json(res, 201, {{"id", id}});
  }));

  server.Get("/procedures", guarded([&store, send_json](const Request& req, Response& res) {
    std::optional<SessionState> filter;
    if (req.has_param("state")) filter = parse_session_state(req.get_param_value("state"));
    nlohmann::json out = nlohmann::json::array();
    for (const auto& s : store.list(filter)) out.push_back(summary_to_json(s));
    send_json(res, 200, out);
  }));

  server.Post(R"(/procedures/([^/]+)/events)",
              guarded([&store, send_json](const Request& req, Response& res) {
                const std::string id = req.matches[1];
                const LabelEvent e = store.record_event(id, parse_event_request(req.body));
                nlohmann::json body = {{"t_assigned", to_seconds(e.t)}, {"kind", to_string(e.kind)}};
                if (e.station) body["station"] = to_string(*e.station);
                send_json(res, 201, body);
              }));

  server.Post(R"(/procedures/([^/]+)/finalize)",
              guarded([&store, send_json](const Request& req, Response& res) {
                const std::string id = req.matches[1];
                const ProcedureRecord rec = store.finalize(id);
                send_json(res, 200, LabelStore::record_to_json(rec, SessionState::finalized));
              }));

  server.Get(R"(/procedures/([^/]+)/export)",
             guarded([&store, send_json](const Request& req, Response& res) {
               const std::string id = req.matches[1];
               const std::string format =
                   req.has_param("format") ? req.get_param_value("format") : "csv";
               if (format == "csv") {
                 res.status = 200;
                 res.set_content(store.export_csv(id), "text/csv");
               } else if (format == "json") {
                 send_json(res, 200, store.export_json(id));
               } else {
                 fail(ErrorKind::validation, "format must be csv or json");
               }
             }));

  server.Get(R"(/procedures/([^/]+))", guarded([&store, send_json](const Request& req, Response& res) {
    const std::string id = req.matches[1];
    const SessionView v = store.view(id);
    nlohmann::json body = LabelStore::record_to_json(v.record, v.state);
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : v.events) {
      nlohmann::json ej = {{"kind", to_string(e.kind)}, {"t", to_seconds(e.t)}};
      if (e.station) ej["station"] = to_string(*e.station);
      events.push_back(ej);
    }
    body["events"] = events;
    send_json(res, 200, body);
  }));
}

}  // namespace eusml::labeling
