#pragma once

// JSON HTTP API over the pipeline and the review sessions.
//
//   POST /api/sessions                                   {topic_id} | {query[, topic_id]} [, method, kappa]
//   GET  /api/sessions/{id}
//   POST /api/sessions/{id}/fragments/{fid}/decision     {heading, action: accept|reject|reset}
//   GET  /api/sessions/{id}/query
//   POST /api/sessions/{id}/retrieve                     409 with counts when the topic has no qrels
//   GET  /api/sessions/{id}/export
//   POST /api/sessions/import                            exported session JSON
//   GET  /api/suggest?fragment=...&method=...[&kappa=...]
//
// Every response body carries "schema_version".

#include <map>
#include <optional>
#include <string>
#include <utility>

#include "httplib.h"
#include "json.hpp"

#include "meshsuggest/common.hpp"
#include "meshsuggest/pipeline.hpp"
#include "meshsuggest/session.hpp"

namespace meshsuggest {

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

struct ServiceConfig {
  Method default_method = Method::kFusion;
  std::optional<int> kappa;
  std::optional<Date> date_max;
};

class Api {
 public:
  Api(const Resources& r, std::vector<Topic> topics, ServiceConfig cfg) : r_(r), cfg_(std::move(cfg)) {
    for (auto& t : topics) topics_.emplace(t.topic_id, std::move(t.query));
  }

  ApiResponse create_session(const nlohmann::json& req) {
    return guard([&] {
      if (!req.is_object()) throw SessionError("request body must be a JSON object");
      std::string topic_id = req.value("topic_id", "");
      std::string query = req.value("query", "");
      if (query.empty()) {
        if (topic_id.empty()) throw SessionError("either topic_id or query is required");
        const auto it = topics_.find(topic_id);
        if (it == topics_.end()) throw NotFound("unknown topic " + topic_id);
        query = it->second;
      } else if (topic_id.empty()) {
        topic_id = "adhoc";
      }
      const Method method = req.contains("method") ? method_from_name(req.at("method").get<std::string>())
                                                   : cfg_.default_method;
      std::optional<int> kappa = cfg_.kappa;
      if (req.contains("kappa") && !req.at("kappa").is_null()) kappa = req.at("kappa").get<int>();
      if (kappa) RefinementConfig{*kappa}.check();
      auto session = meshsuggest::create_session(topic_id, query, r_, method, kappa);
      const auto id = store_.add(std::move(session));
      return ApiResponse{201, store_.with(id, [](ReviewSession& s) { return session_to_json(s); })};
    });
  }

  ApiResponse get_session(const std::string& id) {
    return guard([&] { return ApiResponse{200, store_.with(id, [](ReviewSession& s) { return session_to_json(s); })}; });
  }

  ApiResponse decide(const std::string& id, const std::string& fid, const nlohmann::json& req) {
    return guard([&] {
      if (!req.is_object() || !req.contains("heading") || !req.contains("action"))
        throw SessionError("body must contain heading and action");
      const auto action = decision_from_name(req.at("action").get<std::string>());
      const auto heading = req.at("heading").get<std::string>();
      return ApiResponse{200, store_.with(id, [&](ReviewSession& s) {
                           s.decide(fid, heading, action);
                           return session_to_json(s);
                         })};
    });
  }

  ApiResponse query(const std::string& id) {
    return guard([&] {
      return ApiResponse{200, store_.with(id, [](ReviewSession& s) {
                           return nlohmann::json{{"schema_version", kSchemaVersion},
                                                 {"session_id", s.session_id},
                                                 {"query", serialize_query(s.current_query())}};
                         })};
    });
  }

  ApiResponse retrieve(const std::string& id) {
    return guard([&] {
      return store_.with(id, [&](ReviewSession& s) {
        bool has_metrics = false;
        auto body = session_retrieval(s, r_, cfg_.date_max, &has_metrics);
        s.last_retrieval = body;
        if (!has_metrics) {
          body["error"] = "no relevance judgments for topic " + s.topic_id;
          return ApiResponse{409, body};
        }
        return ApiResponse{200, body};
      });
    });
  }

  ApiResponse export_session(const std::string& id) { return get_session(id); }

  ApiResponse import_session(const nlohmann::json& req) {
    return guard([&] {
      auto s = session_from_json(req);
      const auto id = store_.add(std::move(s));
      return ApiResponse{201, store_.with(id, [](ReviewSession& x) { return session_to_json(x); })};
    });
  }

  ApiResponse suggest(const std::string& fragment_text, const std::string& method_name_text,
                      const std::string& kappa_text) {
    return guard([&] {
      if (trim_view(fragment_text).empty()) throw SessionError("fragment parameter is required");
      const Method method = method_name_text.empty() ? cfg_.default_method : method_from_name(method_name_text);
      std::optional<int> kappa = cfg_.kappa;
      if (!kappa_text.empty()) {
        try {
          kappa = std::stoi(kappa_text);
        } catch (const std::exception&) {
          throw SessionError("kappa must be an integer");
        }
      }
      if (kappa) RefinementConfig{*kappa}.check();
      Fragment f = make_fragment("adhoc", 1, normalize(parse_query(fragment_text)));
      if (!f.pass_through) f = stripped_fragment(f);
      const auto ranked = Suggester(r_).ranked(f, method);
      std::size_t cutoff = ranked.size();
      if (kappa && !ranked.empty()) cutoff = refine_cutoff(ranked, {*kappa}).size();
      nlohmann::json cands = nlohmann::json::array();
      for (const auto& c : ranked) cands.push_back(candidate_to_json(c));
      return ApiResponse{200, {{"schema_version", kSchemaVersion},
                               {"method", method_name(method)},
                               {"fragment", serialize_query(f.node)},
                               {"candidates", cands},
                               {"cutoff", cutoff}}};
    });
  }

  SessionStore& sessions() { return store_; }

 private:
  template <typename Fn>
  ApiResponse guard(Fn&& fn) {
    try {
      return fn();
    } catch (const ParseError& e) {
      return error(400, e.what(), {{"position", e.position()}, {"snippet", e.snippet()}});
    } catch (const NotFound& e) {
      return error(404, e.what());
    } catch (const UnknownFragmentId& e) {
      return error(404, e.what());
    } catch (const EmptyFragment& e) {
      return error(422, e.what());
    } catch (const ClientUnavailable& e) {
      return error(503, e.what());
    } catch (const SessionError& e) {
      return error(400, e.what());
    } catch (const ConfigError& e) {
      return error(400, e.what());
    } catch (const nlohmann::json::exception& e) {
      return error(400, e.what());
    } catch (const Error& e) {
      return error(500, e.what());
    }
  }

  static ApiResponse error(int status, const std::string& message, nlohmann::json extra = nlohmann::json::object()) {
    extra["schema_version"] = kSchemaVersion;
    extra["error"] = message;
    return {status, std::move(extra)};
  }

  const Resources& r_;
  ServiceConfig cfg_;
  std::map<std::string, std::string> topics_;
  SessionStore store_;
};

namespace detail {

inline void reply(httplib::Response& res, const ApiResponse& a) {
  res.status = a.status;
  res.set_content(a.body.dump(), "application/json");
}

inline nlohmann::json body_json(const httplib::Request& req) {
  if (trim_view(req.body).empty()) return nlohmann::json::object();
  return nlohmann::json::parse(req.body, nullptr, false);
}

}  // namespace detail

/// Registers the API routes on an httplib server.
inline void mount_api(httplib::Server& server, Api& api) {
  using httplib::Request;
  using httplib::Response;
  const auto bad_json = [](Response& res) {
    detail::reply(res, {400, {{"schema_version", kSchemaVersion}, {"error", "request body is not valid JSON"}}});
  };
  server.Post("/api/sessions", [&api, bad_json](const Request& req, Response& res) {
    const auto body = detail::body_json(req);
    if (body.is_discarded()) return bad_json(res);
    detail::reply(res, api.create_session(body));
  });
  server.Post("/api/sessions/import", [&api, bad_json](const Request& req, Response& res) {
    const auto body = detail::body_json(req);
    if (body.is_discarded()) return bad_json(res);
    detail::reply(res, api.import_session(body));
  });
  server.Get(R"(/api/sessions/([^/]+))", [&api](const Request& req, Response& res) {
    detail::reply(res, api.get_session(req.matches[1]));
  });
  server.Get(R"(/api/sessions/([^/]+)/export)", [&api](const Request& req, Response& res) {
    detail::reply(res, api.export_session(req.matches[1]));
  });
  server.Get(R"(/api/sessions/([^/]+)/query)", [&api](const Request& req, Response& res) {
    detail::reply(res, api.query(req.matches[1]));
  });
  server.Post(R"(/api/sessions/([^/]+)/retrieve)", [&api](const Request& req, Response& res) {
    detail::reply(res, api.retrieve(req.matches[1]));
  });
  server.Post(R"(/api/sessions/([^/]+)/fragments/([^/]+)/decision)",
              [&api, bad_json](const Request& req, Response& res) {
                const auto body = detail::body_json(req);
                if (body.is_discarded()) return bad_json(res);
                detail::reply(res, api.decide(req.matches[1], req.matches[2], body));
              });
  server.Get("/api/suggest", [&api](const Request& req, Response& res) {
    detail::reply(res, api.suggest(req.get_param_value("fragment"), req.get_param_value("method"),
                                   req.get_param_value("kappa")));
  });
  server.set_error_handler([](const Request&, Response& res) {
    if (!res.body.empty()) return;
    res.set_content(nlohmann::json{{"schema_version", kSchemaVersion}, {"error", httplib::status_message(res.status)}}
                        .dump(),
                    "application/json");
  });
}

}  // namespace meshsuggest
