// Eigen must come first: httplib pulls in <resolv.h>, whose _res macro breaks Eigen's headers.
#include "bsbt/errors.hpp"
#include "bsbt/service.hpp"

#include <httplib.h>

namespace bsbt {

using nlohmann::json;

namespace {

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  res.status = status;
  res.set_content(json{{"code", code}, {"message", message}}.dump(), "application/json");
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  try {
    json body = json::parse(req.body);
    if (!body.is_object()) throw ServiceError(400, "bad_request", "request body must be a JSON object");
    return body;
  } catch (const json::exception& e) {
    throw ServiceError(400, "bad_json", std::string("malformed JSON: ") + e.what());
  }
}

json area_json(const Area& a) {
  json out{{"area_id", a.id}, {"name", a.name}};
  if (!a.image_url.empty()) out["image_url"] = a.image_url;
  return out;
}

json profile_json(const JudgeProfile& p, std::size_t remaining) {
  return json{{"judge_id", p.judge_id},
              {"covariates", p.covariates},
              {"familiarity", p.familiarity},
              {"remaining_pairs", remaining}};
}

// Wraps a handler so ServiceError and validation failures become JSON errors.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ServiceError& e) {
      send_error(res, e.status(), e.code(), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const ValidationError& e) {
      send_error(res, 400, "validation_error", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal_error", e.what());
    }
  };
}

}  // namespace

void install_routes(httplib::Server& server, SessionState& session, json geojson) {
  server.Post("/judges", guarded([&session](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    if (!body.contains("judge_id") || !body.at("judge_id").is_string())
      throw ServiceError(400, "bad_request", "judge_id is required");
    if (!body.contains("familiarity") || !body.at("familiarity").is_array())
      throw ServiceError(400, "bad_request", "familiarity must be an array of area ids");
    std::map<std::string, std::string> covariates;
    if (body.contains("covariates")) covariates = body.at("covariates").get<std::map<std::string, std::string>>();
    const auto familiarity = body.at("familiarity").get<std::vector<std::string>>();
    const auto profile = session.register_judge(body.at("judge_id").get<std::string>(), covariates, familiarity);
    send_json(res, 201, profile_json(profile, session.remaining_pairs(profile.judge_id)));
  }));

  server.Get(R"(/judges/([^/]+)/next-pair)", guarded([&session](const httplib::Request& req, httplib::Response& res) {
    const std::string judge_id = req.matches[1];
    const PairOffer offer = session.next_pair(judge_id);
    if (offer.done) {
      send_json(res, 200, json{{"done", true}});
      return;
    }
    const auto& net = session.network();
    send_json(res, 200,
              json{{"done", false},
                   {"pair_id", offer.pair_id},
                   {"left", area_json(net.area(net.require_index(offer.left)))},
                   {"right", area_json(net.area(net.require_index(offer.right)))}});
  }));

  server.Post(R"(/judges/([^/]+)/judgements)", guarded([&session](const httplib::Request& req, httplib::Response& res) {
    const std::string judge_id = req.matches[1];
    const json body = parse_body(req);
    if (!body.contains("pair_id") || !body.at("pair_id").is_string())
      throw ServiceError(400, "bad_request", "pair_id is required");
    if (!body.contains("outcome") || !body.at("outcome").is_string())
      throw ServiceError(400, "bad_request", "outcome is required");
    const auto record = session.submit_judgement(judge_id, body.at("pair_id").get<std::string>(),
                                                 parse_judgement(body.at("outcome").get<std::string>()));
    send_json(res, 200,
              json{{"accepted", true},
                   {"record",
                    {{"judge_id", record.judge_id},
                     {"area_i", record.area_i},
                     {"area_j", record.area_j},
                     {"outcome", to_string(record.outcome)},
                     {"timestamp", record.timestamp}}},
                   {"remaining_pairs", session.remaining_pairs(judge_id)}});
  }));

  server.Get("/export/comparisons.csv", guarded([&session](const httplib::Request&, httplib::Response& res) {
    res.status = 200;
    res.set_content(session.export_log(), "text/csv");
  }));

  server.Get("/areas", guarded([&session, geojson](const httplib::Request&, httplib::Response& res) {
    json areas = json::array();
    for (const auto& a : session.network().areas()) {
      json item = area_json(a);
      if (a.x) item["x"] = *a.x;
      if (a.y) item["y"] = *a.y;
      areas.push_back(std::move(item));
    }
    json body{{"areas", areas}};
    if (!geojson.is_null()) body["geojson"] = geojson;
    send_json(res, 200, body);
  }));

  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) send_error(res, res.status, res.status == 404 ? "not_found" : "http_error", "request failed");
  });
}

}  // namespace bsbt
