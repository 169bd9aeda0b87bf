#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "urbangen/blockgraph.hpp"
#include "urbangen/condition.hpp"
#include "urbangen/geojson.hpp"
#include "urbangen/ingest.hpp"
#include "urbangen/model.hpp"

namespace urbangen::artifactio {

using geojson::Json;

inline constexpr double kCoordinateQuantum = 1e-9;

// Layouts with their optional block outlines, keyed by block id.
struct LayoutDocument {
  std::vector<blockgraph::GeneratedLayout> layouts;
  std::map<std::string, geometry::Polygon> blocks;
};

// FeatureCollection with one feature per building (properties block_id,
// height, index, land_use, shape), layouts in block-id order. Blocks listed
// in `blocks` also get a feature with kind "block" ahead of their buildings.
// Coordinates are rounded to kCoordinateQuantum.
Json export_geojson(const std::vector<blockgraph::GeneratedLayout>& layouts,
                    const std::map<std::string, geometry::Polygon>& blocks = {});
// Compact canonical text of export_geojson.
std::string geojson_text(const std::vector<blockgraph::GeneratedLayout>& layouts,
                         const std::map<std::string, geometry::Polygon>& blocks = {});

// Reads export_geojson output. Throws IoError on structural problems and
// InvalidGeometry for bad footprints.
LayoutDocument parse_layouts(const Json& doc);
LayoutDocument load_layouts(const std::string& path);

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;  // 0-based, outward facing
};

// Prism from z = 0 to z = height over the footprint: bottom ring vertices
// then top ring vertices.
Mesh extrude(const geometry::Polygon& footprint, double height);

// Wavefront OBJ, one object `bldg_<blockid>_<k>` per building.
std::string export_obj(const std::vector<blockgraph::GeneratedLayout>& layouts);

// Record corpus as GeoJSON-flavoured JSON: blocks with nested buildings.
Json records_json(const std::vector<ingest::BlockRecord>& records);
std::vector<ingest::BlockRecord> parse_records(const Json& doc);
void save_records(const std::string& path, const std::vector<ingest::BlockRecord>& records);
std::vector<ingest::BlockRecord> load_records(const std::string& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Everything needed to rebuild a trained generator.
struct Checkpoint {
  model::ModelConfig model_config;
  model::TrainConfig train_config;
  int num_classes = condition::kDefaultLandUseClasses;
  std::unique_ptr<model::CVAE> cvae;
  std::unique_ptr<condition::BlockAutoencoder> autoencoder;
};

// Layout: 8-byte magic, u32 version, u64 header size, JSON header (configs,
// class count, tensor names and shapes), then each tensor as row-major
// little-endian f64.
void save_checkpoint(const std::string& path, const model::CVAE& cvae, const condition::BlockAutoencoder& ae,
                     const model::TrainConfig& tc, int num_classes);

// Throws IoError when the file cannot be opened and CorruptCheckpoint on a
// bad magic, version, header, tensor shape or truncation. With `expected`,
// the stored model configuration must equal it.
Checkpoint load_checkpoint(const std::string& path, const model::ModelConfig* expected = nullptr);

Json model_config_json(const model::ModelConfig& c);
model::ModelConfig model_config_from_json(const Json& j);
Json train_config_json(const model::TrainConfig& c);
model::TrainConfig train_config_from_json(const Json& j);

}  // namespace urbangen::artifactio
