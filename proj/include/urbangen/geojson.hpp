#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "urbangen/geometry.hpp"

// GeoJSON geometry conversion shared by ingestion and export.
namespace urbangen::geojson {

using Json = nlohmann::json;

// Polygon parts of a Polygon or MultiPolygon geometry object. Throws
// InvalidGeometry on malformed or invalid rings and unsupported types.
std::vector<geometry::Polygon> parse_polygons(const Json& geometry);

// Polygon geometry object with closed rings; coordinates rounded to
// multiples of `quantum` when it is positive.
Json polygon_geometry(const geometry::Polygon& p, double quantum = 0.0);

// Rounds to a multiple of quantum, mapping -0 to 0.
double quantize(double v, double quantum);

// Reads and parses a JSON file. Throws IoError.
Json read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

}  // namespace urbangen::geojson
