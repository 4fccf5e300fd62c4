#pragma once

#include <filesystem>
#include <sstream>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "adjudication.hpp"

namespace crowdlabel {

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;               // 0 picks a free port
  std::filesystem::path ui_dir;  // built UI bundle; empty serves a placeholder page
};

namespace server_detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

inline void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

// Maps service exceptions onto HTTP statuses.
template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const ConflictError& e) {
    send_error(res, 409, e.what());
  } catch (const NotFoundError& e) {
    send_error(res, 404, e.what());
  } catch (const UnknownExpertError& e) {
    send_error(res, 403, e.what());
  } catch (const InputError& e) {
    send_error(res, 400, e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, std::string("bad request body: ") + e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

inline constexpr const char* kPlaceholderPage =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>adjudication</title></head>"
    "<body><h1>Adjudication service</h1><p>No UI bundle configured. The JSON API is under "
    "<code>/api/</code>.</p></body></html>";

}  // namespace server_detail

/// Registers the adjudication API (and the static UI mount) on `svr`.
inline void install_routes(httplib::Server& svr, AdjudicationService& service, const ServeOptions& opts = {}) {
  using namespace server_detail;

  svr.Get("/api/queue/next", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      if (!req.has_param("expert")) throw InputError("missing 'expert' query parameter");
      auto item = service.next_item(req.get_param_value("expert"));
      if (!item) return send_json(res, 200, {{"done", true}});
      send_json(res, 200, queue_item_json(*item, service.options().show_crowd));
    });
  });

  svr.Post(R"(/api/items/([^/]+)/labels)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = nlohmann::json::parse(req.body);
      if (!body.is_object() || !body.contains("expert") || !body.contains("label")) {
        throw InputError("body must be {\"expert\": str, \"label\": \"A|B|C|D\"}");
      }
      const auto label = parse_label(body.at("label").get<std::string>());
      auto outcome = service.submit_label(body.at("expert").get<std::string>(), req.matches[1].str(), label);
      send_json(res, 200, to_json(outcome));
    });
  });

  svr.Get("/api/stats", [&service](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, to_json(service.stats())); });
  });

  svr.Get("/api/export", [&service](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      std::ostringstream csv;
      const auto gold = service.gold_labels();
      write_gold_csv(csv, gold);
      res.status = 200;
      res.set_content(csv.str(), "text/csv; charset=utf-8");
    });
  });

  bool mounted = false;
  if (!opts.ui_dir.empty()) {
    if (!std::filesystem::is_directory(opts.ui_dir)) throw InputError("UI directory not found: " + opts.ui_dir.string());
    mounted = svr.set_mount_point("/", opts.ui_dir.string());
  }
  if (!mounted) {
    svr.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(server_detail::kPlaceholderPage, "text/html; charset=utf-8");
    });
  }
}

/// Binds `svr`; returns the bound port. Throws InputError when the port is taken.
inline int bind_server(httplib::Server& svr, const ServeOptions& opts) {
  if (opts.port == 0) {
    const int port = svr.bind_to_any_port(opts.host);
    if (port < 0) throw InputError("cannot bind " + opts.host);
    return port;
  }
  if (!svr.bind_to_port(opts.host, opts.port)) {
    throw InputError("cannot bind " + opts.host + ":" + std::to_string(opts.port) + " (port in use?)");
  }
  return opts.port;
}

}  // namespace crowdlabel
