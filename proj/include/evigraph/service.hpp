#pragma once

#include <atomic>
#include <charconv>
#include <memory>
#include <optional>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "evigraph/analytics.hpp"
#include "evigraph/case_store.hpp"
#include "evigraph/error.hpp"

namespace evigraph {

struct ServiceConfig {
  std::string host{"127.0.0.1"};
  int port = 8080;  // 0 picks a free port
  std::string data_dir{"cases"};
  std::string static_dir;  // workbench assets, mounted at /ui when set
};

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownCase:
    case ErrorCode::UnknownNode:
    case ErrorCode::UnknownEdge: return 404;
    case ErrorCode::VersionConflict:
    case ErrorCode::IllegalTransition:
    case ErrorCode::DuplicateEdge: return 409;
    case ErrorCode::StorageError: return 500;
    default: return 400;
  }
}

inline nlohmann::json error_body(const Error& e) {
  nlohmann::json j = {{"error", std::string(to_string(e.code()))}, {"message", e.detail()}};
  if (e.line() > 0) j["line"] = e.line();
  return j;
}

/// Parses the optimistic-concurrency precondition: an `If-Match` header
/// carrying the graph version (quotes allowed), or `expected_version` in the
/// JSON body.
inline std::optional<std::uint64_t> expected_version(const httplib::Request& req,
                                                     const nlohmann::json& body = nullptr) {
  if (req.has_header("If-Match")) {
    std::string v = req.get_header_value("If-Match");
    v.erase(std::remove(v.begin(), v.end(), '"'), v.end());
    v = std::string(trim(v));
    if (v.empty() || !all_digits(v) || v.size() > 19)
      throw Error(ErrorCode::BadValue, "If-Match must carry a graph version number");
    return std::stoull(v);
  }
  if (body.is_object() && body.contains("expected_version")) {
    if (!body["expected_version"].is_number_unsigned())
      throw Error(ErrorCode::BadValue, "expected_version must be a non-negative integer");
    return body["expected_version"].get<std::uint64_t>();
  }
  return std::nullopt;
}

/// Resource-oriented HTTP front end over a CaseStore. Every mutation answers
/// with the new graph version.
class Service {
 public:
  explicit Service(ServiceConfig config)
      : config_(std::move(config)), store_(std::make_shared<CaseStore>(config_.data_dir)) {
    routes();
  }

  CaseStore& store() { return *store_; }
  httplib::Server& server() { return server_; }

  /// Binds without blocking; returns the bound port.
  int bind() {
    if (config_.port == 0) port_ = server_.bind_to_any_port(config_.host);
    else port_ = server_.bind_to_port(config_.host, config_.port) ? config_.port : -1;
    if (port_ < 0)
      throw Error(ErrorCode::StorageError, "cannot bind " + config_.host + ":" + std::to_string(config_.port));
    return port_;
  }

  /// Serves until stop(); in-flight handlers finish before this returns.
  void listen() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  int port() const { return port_; }

 private:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  static void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
    res.status = status;
    res.set_content(dump_json(j, 2) + "\n", "application/json");
  }

  static nlohmann::json body_json(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    auto j = nlohmann::json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::BadValue, "request body must be a JSON object");
    return j;
  }

  static Handler guarded(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const Error& e) {
        send_json(res, error_body(e), http_status(e.code()));
      } catch (const nlohmann::json::exception& e) {
        send_json(res, {{"error", "BadValue"}, {"message", e.what()}}, 400);
      } catch (const std::exception& e) {
        send_json(res, {{"error", "Internal"}, {"message", e.what()}}, 500);
      }
    };
  }

  std::shared_ptr<Case> case_of(const httplib::Request& req) { return store_->open(req.matches[1]); }

  static std::string param(const httplib::Request& req, const std::string& name) {
    if (!req.has_param(name)) throw Error(ErrorCode::BadValue, "missing query parameter '" + name + "'");
    return req.get_param_value(name);
  }

  static std::uint64_t count_param(const httplib::Request& req, const std::string& name) {
    const auto v = req.get_param_value(name);
    std::uint64_t out = 0;
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || end != v.data() + v.size())
      throw Error(ErrorCode::BadValue, "query parameter '" + name + "' must be a non-negative integer");
    return out;
  }

  /// Epoch seconds or a timestamp in the default pattern.
  static std::int64_t time_param(const httplib::Request& req, const std::string& name) {
    const auto v = std::string(trim(req.get_param_value(name)));
    std::int64_t out = 0;
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (!v.empty() && ec == std::errc() && end == v.data() + v.size()) return out;
    try {
      return normalize_timestamp(v);
    } catch (const Error& e) {
      throw Error(ErrorCode::BadWindow, "query parameter '" + name + "': " + e.detail());
    }
  }

  void routes() {
    server_.Get("/cases", guarded([this](const auto&, auto& res) {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& id : store_->list()) out.push_back(id);
      send_json(res, {{"cases", out}});
    }));

    server_.Post("/cases", guarded([this](const auto& req, auto& res) {
      const auto body = body_json(req);
      std::optional<nlohmann::json> rules;
      if (body.contains("rules")) rules = body["rules"];
      std::optional<nlohmann::json> classification;
      if (body.contains("classification")) classification = body["classification"];
      const auto m = store_->create_case(body.value("title", ""), body.value("case_id", ""), rules, classification);
      send_json(res, m.to_json(), 201);
    }));

    server_.Get(R"(/cases/([^/]+))", guarded([this](const auto& req, auto& res) {
      send_json(res, case_of(req)->manifest().to_json());
    }));

    server_.Post(R"(/cases/([^/]+)/sources)", guarded([this](const auto& req, auto& res) {
      const auto body = body_json(req);
      auto c = case_of(req);
      IngestRequest in;
      in.content = body.at("content").template get<std::string>();
      in.source_kind = parse_source_kind(body.at("kind").template get<std::string>());
      if (body.contains("entity_kind"))
        in.entity_kind = parse_entity_kind(body["entity_kind"].template get<std::string>());
      in.display_name = body.value("display_name", "");
      in.original_uri = body.value("original_uri", "");
      in.options.utc_offset_seconds = body.value("utc_offset_seconds", std::int64_t{0});
      if (body.contains("mapping")) in.mapping = MappingConfig::from_json(body["mapping"]);
      send_json(res, to_json(c->ingest(in, expected_version(req, body))), 201);
    }));

    server_.Post(R"(/cases/([^/]+)/harmonise)", guarded([this](const auto& req, auto& res) {
      auto c = case_of(req);
      const auto report = c->harmonise(expected_version(req, body_json(req)));
      nlohmann::json edges = nlohmann::json::array();
      for (const auto& e : report.proposed) edges.push_back(to_json(e));
      send_json(res, {{"proposed", edges}, {"per_rule", report.per_rule}, {"version", c->version()}});
    }));

    server_.Post(R"(/cases/([^/]+)/enrichments)", guarded([this](const auto& req, auto& res) {
      const auto body = body_json(req);
      auto c = case_of(req);
      const auto edges = c->enrich(EnrichmentRecord::from_json(body), expected_version(req, body));
      nlohmann::json out = nlohmann::json::array();
      for (const auto& e : edges) out.push_back(to_json(e));
      send_json(res, {{"proposed", out}, {"version", c->version()}});
    }));

    server_.Get(R"(/cases/([^/]+)/graph)", guarded([this](const auto& req, auto& res) {
      send_json(res, export_document(*case_of(req)->snapshot()));
    }));

    server_.Post(R"(/cases/([^/]+)/edges)", guarded([this](const auto& req, auto& res) {
      const auto body = body_json(req);
      RefinementAction a;
      a.verb = ActionVerb::add_manual_edge;
      a.target = body.at("a").template get<std::string>();
      a.other = body.at("b").template get<std::string>();
      a.text = body.value("note", "");
      a.actor = body.value("actor", "investigator");
      mutate(req, res, a, body, 201);
    }));

    server_.Post(R"(/cases/([^/]+)/edges/([^:/]+):(confirm|reject))", guarded([this](const auto& req, auto& res) {
      const auto body = body_json(req);
      RefinementAction a;
      a.verb = req.matches[3] == "confirm" ? ActionVerb::confirm_edge : ActionVerb::reject_edge;
      a.target = req.matches[2];
      a.actor = body.value("actor", "investigator");
      mutate(req, res, a, body);
    }));

    server_.Post(R"(/cases/([^/]+)/nodes/([^:/]+):(exclude|include|annotate))",
                 guarded([this](const auto& req, auto& res) {
                   const auto body = body_json(req);
                   RefinementAction a;
                   const std::string verb = req.matches[3];
                   a.verb = verb == "exclude"   ? ActionVerb::exclude_node
                            : verb == "include" ? ActionVerb::include_node
                                                : ActionVerb::annotate;
                   a.target = req.matches[2];
                   a.text = body.value("text", "");
                   a.actor = body.value("actor", "investigator");
                   mutate(req, res, a, body);
                 }));

    server_.Get(R"(/cases/([^/]+)/timeline)", guarded([this](const auto& req, auto& res) {
      auto c = case_of(req);
      std::optional<TimeWindow> window;
      if (req.has_param("from") || req.has_param("to")) {
        window = TimeWindow{};
        if (req.has_param("from")) window->lo = time_param(req, "from");
        if (req.has_param("to")) window->hi = time_param(req, "to");
      }
      const auto events = build_timeline(*c->snapshot(), c->classification(), window);
      if (req.has_param("format") && req.get_param_value("format") == "csv") {
        res.set_content(timeline_csv(events), "text/csv");
        return;
      }
      nlohmann::json out = nlohmann::json::array();
      for (const auto& e : events) out.push_back(to_json(e));
      send_json(res, {{"events", out}, {"version", c->snapshot()->version()}});
    }));

    server_.Get(R"(/cases/([^/]+)/links)", guarded([this](const auto& req, auto& res) {
      auto c = case_of(req);
      LinkOptions opts;
      if (req.has_param("max_hops")) opts.max_hops = count_param(req, "max_hops");
      if (req.has_param("max_paths")) opts.max_paths = count_param(req, "max_paths");
      opts.include_proposed = req.has_param("include_proposed") && req.get_param_value("include_proposed") == "true";
      nlohmann::json out = nlohmann::json::array();
      for (const auto& p : find_links(*c->snapshot(), param(req, "from"), param(req, "to"), opts))
        out.push_back(to_json(p));
      send_json(res, {{"paths", out}});
    }));

    server_.Get(R"(/cases/([^/]+)/query)", guarded([this](const auto& req, auto& res) {
      auto c = case_of(req);
      nlohmann::json out = nlohmann::json::array();
      for (const auto& h : query(*c->snapshot(), Probe::parse(param(req, "kind"), param(req, "value"))))
        out.push_back(to_json(h));
      send_json(res, {{"hits", out}});
    }));

    server_.Get(R"(/cases/([^/]+)/correlation)", guarded([this](const auto& req, auto& res) {
      auto snap = case_of(req)->snapshot();
      send_json(res, to_json(*snap, correlate_sources(*snap)));
    }));

    server_.Get(R"(/cases/([^/]+)/validation)", guarded([this](const auto& req, auto& res) {
      auto c = case_of(req);
      nlohmann::json out = nlohmann::json::array();
      for (const auto& f : validate_graph(*c->snapshot(), c->rules())) out.push_back(to_json(f));
      send_json(res, {{"findings", out}});
    }));

    if (!config_.static_dir.empty()) server_.set_mount_point("/ui", config_.static_dir);
  }

  void mutate(const httplib::Request& req, httplib::Response& res, const RefinementAction& a,
              const nlohmann::json& body, int status = 200) {
    auto c = case_of(req);
    const auto version = c->act(a, expected_version(req, body));
    nlohmann::json out = {{"version", version}};
    if (a.verb == ActionVerb::add_manual_edge || a.verb == ActionVerb::confirm_edge ||
        a.verb == ActionVerb::reject_edge) {
      const auto snap = c->snapshot();
      const auto id = a.verb == ActionVerb::add_manual_edge ? make_edge_id(a.target, a.other, std::nullopt) : a.target;
      if (const auto* e = snap->find_edge(id)) out["edge"] = to_json(*e);
    }
    send_json(res, out, status);
  }

  ServiceConfig config_;
  std::shared_ptr<CaseStore> store_;
  httplib::Server server_;
  int port_ = -1;
};

}  // namespace evigraph
