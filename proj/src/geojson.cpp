#include "urbangen/geojson.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "urbangen/errors.hpp"

namespace urbangen::geojson {

using geometry::Polygon;
using geometry::Ring;

namespace {

Ring parse_ring(const Json& coords) {
  if (!coords.is_array()) throw InvalidGeometry("ring is not an array");
  Ring ring;
  for (const Json& pt : coords) {
    if (!pt.is_array() || pt.size() < 2 || !pt[0].is_number() || !pt[1].is_number()) {
      throw InvalidGeometry("malformed coordinate");
    }
    const double x = pt[0].get<double>(), y = pt[1].get<double>();
    if (!std::isfinite(x) || !std::isfinite(y)) throw InvalidGeometry("non-finite coordinate");
    ring.push_back({x, y});
  }
  return ring;
}

Polygon parse_polygon(const Json& rings) {
  if (!rings.is_array() || rings.empty()) throw InvalidGeometry("polygon without rings");
  std::vector<Ring> holes;
  for (std::size_t i = 1; i < rings.size(); ++i) holes.push_back(parse_ring(rings[i]));
  return Polygon(parse_ring(rings[0]), std::move(holes));
}

Json ring_json(const Ring& ring, double quantum) {
  Json out = Json::array();
  for (const auto& p : ring) out.push_back({quantize(p.x, quantum), quantize(p.y, quantum)});
  out.push_back(out.front());
  return out;
}

}  // namespace

double quantize(double v, double quantum) {
  if (quantum <= 0.0) return v;
  const double r = std::round(v / quantum) * quantum;
  return r == 0.0 ? 0.0 : r;
}

std::vector<Polygon> parse_polygons(const Json& geometry) {
  if (!geometry.is_object() || !geometry.contains("type") || !geometry.contains("coordinates")) {
    throw InvalidGeometry("missing geometry");
  }
  const std::string type = geometry["type"].is_string() ? geometry["type"].get<std::string>() : "";
  const Json& coords = geometry["coordinates"];
  if (type == "Polygon") return {parse_polygon(coords)};
  if (type == "MultiPolygon") {
    if (!coords.is_array() || coords.empty()) throw InvalidGeometry("empty multipolygon");
    std::vector<Polygon> parts;
    for (const Json& c : coords) parts.push_back(parse_polygon(c));
    return parts;
  }
  throw InvalidGeometry("unsupported geometry type '" + type + "'");
}

Json polygon_geometry(const Polygon& p, double quantum) {
  Json rings = Json::array();
  rings.push_back(ring_json(p.outer(), quantum));
  for (const Ring& h : p.holes()) rings.push_back(ring_json(h, quantum));
  return Json{{"type", "Polygon"}, {"coordinates", std::move(rings)}};
}

Json read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const Json::exception& e) {
    throw IoError("cannot parse " + path + ": " + e.what());
  }
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace urbangen::geojson
