#include "urbangen/service.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "httplib.h"
#include "json.hpp"
#include "urbangen/artifactio.hpp"
#include "urbangen/errors.hpp"
#include "urbangen/geojson.hpp"
#include "urbangen/rng.hpp"

namespace urbangen::service {

using geojson::Json;

namespace {

Response json_response(int status, const Json& body) { return {status, body.dump(), "application/json", {}}; }

Response error(int status, const std::string& code, const std::string& detail) {
  return json_response(status, Json{{"error", code}, {"detail", detail}});
}

Response not_found(const std::string& what) { return error(404, "not_found", what); }

// Empty bodies count as {}.
std::optional<Json> parse_body(const std::string& body) {
  if (body.find_first_not_of(" \t\r\n") == std::string::npos) return Json::object();
  try {
    Json j = Json::parse(body);
    if (!j.is_object()) return std::nullopt;
    return j;
  } catch (const Json::exception&) {
    return std::nullopt;
  }
}

Json summary(const BlockState& b, const ingest::LandUseTable& table) {
  return Json{{"id", b.id},
              {"land_use", b.land_use},
              {"land_use_name", table.name(b.land_use)},
              {"stale", b.stale},
              {"generated", b.layout.has_value()},
              {"buildings", b.layout ? b.layout->buildings.size() : 0},
              {"generation", b.generation}};
}

std::string etag_of(const std::string& body) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "\"%016llx\"", static_cast<unsigned long long>(hash_string(body)));
  return buf;
}

}  // namespace

BlockState* DistrictSession::find(const std::string& block_id) {
  auto it = std::lower_bound(blocks.begin(), blocks.end(), block_id,
                             [](const BlockState& b, const std::string& id) { return b.id < id; });
  return it != blocks.end() && it->id == block_id ? &*it : nullptr;
}

std::uint64_t generation_seed(std::uint64_t base_seed, std::uint64_t generation) {
  return hash_combine(base_seed, generation);
}

DistrictService::DistrictService(std::shared_ptr<const ModelSnapshot> model, std::uint64_t default_seed,
                                 ingest::LandUseTable table)
    : model_(std::move(model)), default_seed_(default_seed), table_(std::move(table)) {}

void DistrictService::set_model(std::shared_ptr<const ModelSnapshot> model) {
  std::unique_lock lock(mutex_);
  model_ = std::move(model);
}

std::shared_ptr<const ModelSnapshot> DistrictService::model() const {
  std::shared_lock lock(mutex_);
  return model_;
}

std::shared_ptr<DistrictSession> DistrictService::session(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

Response DistrictService::create_district(const std::string& body) {
  Json doc;
  try {
    doc = Json::parse(body);
  } catch (const Json::exception& e) {
    return error(400, "invalid_json", e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features") ||
      !doc["features"].is_array()) {
    return error(400, "invalid_body", "expected a GeoJSON FeatureCollection");
  }
  const Json& features = doc["features"];
  if (features.empty()) return error(400, "invalid_body", "no features");
  auto s = std::make_shared<DistrictSession>();
  s->base_seed = default_seed_;
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned()) return error(400, "invalid_body", "seed must be a non-negative integer");
    s->base_seed = doc["seed"].get<std::uint64_t>();
  }
  std::set<std::string> ids;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const std::string where = "feature " + std::to_string(i) + ": ";
    const Json& f = features[i];
    if (!f.is_object() || !f.contains("properties") || !f["properties"].is_object()) {
      return error(400, "invalid_feature", where + "missing properties");
    }
    const Json& props = f["properties"];
    std::string id;
    if (props.contains("id") && props["id"].is_string()) {
      id = props["id"].get<std::string>();
    } else if (props.contains("id") && props["id"].is_number_integer()) {
      id = std::to_string(props["id"].get<long long>());
    }
    if (id.empty()) return error(400, "invalid_feature", where + "missing id");
    if (!ids.insert(id).second) return error(400, "invalid_feature", where + "duplicate id " + id);
    if (!props.contains("land_use")) return error(400, "invalid_feature", where + "missing land_use");
    const auto cls = table_.lookup(props["land_use"]);
    if (!cls) return error(400, "invalid_feature", where + "unknown land_use " + props["land_use"].dump());
    std::vector<geometry::Polygon> parts;
    try {
      parts = geojson::parse_polygons(f.value("geometry", Json()));
    } catch (const InvalidGeometry& e) {
      return error(400, "invalid_geometry", where + e.what());
    }
    auto largest = std::max_element(parts.begin(), parts.end(), [](const auto& a, const auto& b) {
      return geometry::polygon_area(a) < geometry::polygon_area(b);
    });
    s->blocks.push_back({id, *largest, *cls, true, 0, std::nullopt});
  }
  std::sort(s->blocks.begin(), s->blocks.end(), [](const BlockState& a, const BlockState& b) { return a.id < b.id; });

  Json blocks = Json::array();
  for (const auto& b : s->blocks) blocks.push_back(summary(b, table_));
  {
    std::unique_lock lock(mutex_);
    s->id = "d" + std::to_string(next_id_++);
    sessions_[s->id] = s;
  }
  Response r = json_response(201, Json{{"id", s->id}, {"seed", s->base_seed}, {"blocks", std::move(blocks)}});
  r.headers["Location"] = "/districts/" + s->id;
  return r;
}

Response DistrictService::list_blocks(const std::string& district) const {
  auto s = session(district);
  if (!s) return not_found("district " + district);
  std::shared_lock lock(s->mutex);
  Json blocks = Json::array();
  for (const auto& b : s->blocks) blocks.push_back(summary(b, table_));
  return json_response(200, Json{{"id", s->id}, {"blocks", std::move(blocks)}});
}

Response DistrictService::patch_landuse(const std::string& district, const std::string& block_id,
                                        const std::string& body) {
  auto s = session(district);
  if (!s) return not_found("district " + district);
  const auto j = parse_body(body);
  if (!j) return error(400, "invalid_json", "body must be a JSON object");
  if (!j->contains("land_use")) return error(400, "invalid_body", "missing land_use");
  const auto cls = table_.lookup((*j)["land_use"]);
  std::unique_lock lock(s->mutex);
  BlockState* b = s->find(block_id);
  if (b == nullptr) return not_found("block " + block_id);
  if (!cls) {
    return error(422, "invalid_land_use",
                 "land_use must be a class name or an index in [0, " + std::to_string(table_.classes) + ")");
  }
  b->land_use = *cls;
  b->stale = true;
  return json_response(200, summary(*b, table_));
}

Response DistrictService::generate(const std::string& district, const std::string& body) {
  auto s = session(district);
  if (!s) return not_found("district " + district);
  const auto snapshot = model();
  if (!snapshot || !snapshot->cvae || !snapshot->autoencoder) return error(409, "no_model", "no model is loaded");
  const auto j = parse_body(body);
  if (!j) return error(400, "invalid_json", "body must be a JSON object");
  std::optional<std::uint64_t> seed;
  if (j->contains("seed")) {
    if (!(*j)["seed"].is_number_unsigned()) return error(400, "invalid_body", "seed must be a non-negative integer");
    seed = (*j)["seed"].get<std::uint64_t>();
  }
  std::optional<std::vector<std::string>> requested;
  if (j->contains("block_ids")) {
    const Json& ids = (*j)["block_ids"];
    if (!ids.is_array()) return error(400, "invalid_body", "block_ids must be an array");
    requested.emplace();
    for (const Json& id : ids) {
      if (id.is_string()) {
        requested->push_back(id.get<std::string>());
      } else if (id.is_number_integer()) {
        requested->push_back(std::to_string(id.get<long long>()));
      } else {
        return error(400, "invalid_body", "block ids must be strings");
      }
    }
  }

  std::unique_lock lock(s->mutex);
  std::vector<BlockState*> targets;
  if (requested) {
    std::set<std::string> unique(requested->begin(), requested->end());
    for (const auto& id : unique) {
      BlockState* b = s->find(id);
      if (b == nullptr) return not_found("block " + id);
      targets.push_back(b);
    }
  } else {
    for (auto& b : s->blocks) {
      if (b.stale) targets.push_back(&b);
    }
  }
  // Sample everything before committing so a failure leaves no partial
  // update.
  std::vector<blockgraph::GeneratedLayout> fresh;
  for (BlockState* b : targets) {
    const std::uint64_t block_seed = seed ? generation_seed(*seed, 0) : generation_seed(s->base_seed, b->generation);
    try {
      fresh.push_back(model::sample_layout(b->boundary, b->land_use, *snapshot->cvae, *snapshot->autoencoder,
                                           block_seed, b->id, snapshot->graph, snapshot->num_classes));
    } catch (const Error& e) {
      return error(422, "generation_failed", "block " + b->id + ": " + e.what());
    }
  }
  Json generated = Json::array();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    BlockState* b = targets[i];
    b->layout = std::move(fresh[i]);
    b->stale = false;
    if (!seed) ++b->generation;
    generated.push_back(summary(*b, table_));
  }
  return json_response(200, Json{{"id", s->id}, {"generated", std::move(generated)}});
}

Response DistrictService::get_layout(const std::string& district, const std::string& if_none_match) const {
  auto s = session(district);
  if (!s) return not_found("district " + district);
  std::string text;
  {
    std::shared_lock lock(s->mutex);
    std::vector<blockgraph::GeneratedLayout> layouts;
    for (const auto& b : s->blocks) {
      if (b.layout) layouts.push_back(*b.layout);
    }
    text = artifactio::geojson_text(layouts);
  }
  const std::string etag = etag_of(text);
  if (!if_none_match.empty() && if_none_match == etag) {
    Response r{304, "", "application/geo+json", {}};
    r.headers["ETag"] = etag;
    return r;
  }
  Response r{200, std::move(text), "application/geo+json", {}};
  r.headers["ETag"] = etag;
  return r;
}

void mount(httplib::Server& server, DistrictService& service) {
  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    for (const auto& [k, v] : r.headers) res.set_header(k, v);
    if (!r.body.empty()) res.set_content(r.body, r.content_type);
  };
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Methods", "GET, POST, PATCH, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type, If-None-Match"},
                              {"Access-Control-Expose-Headers", "ETag, Location"}});
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.Post("/districts", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.create_district(req.body));
  });
  server.Get(R"(/districts/([^/]+)/blocks)", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.list_blocks(req.matches[1]));
  });
  server.Patch(R"(/districts/([^/]+)/blocks/([^/]+))",
               [&service, send](const httplib::Request& req, httplib::Response& res) {
                 send(res, service.patch_landuse(req.matches[1], req.matches[2], req.body));
               });
  server.Post(R"(/districts/([^/]+)/generate)", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.generate(req.matches[1], req.body));
  });
  server.Get(R"(/districts/([^/]+)/layout)", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.get_layout(req.matches[1], req.get_header_value("If-None-Match")));
  });
  server.set_error_handler([send](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 404) send(res, not_found("no route for " + req.method + " " + req.path));
  });
  server.set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "unknown error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    send(res, error(500, "internal", what));
  });
}

}  // namespace urbangen::service
