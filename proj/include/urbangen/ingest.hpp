#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "urbangen/blockgraph.hpp"
#include "urbangen/geojson.hpp"
#include "urbangen/geometry.hpp"

namespace urbangen::ingest {

struct RawBuilding {
  geometry::Polygon footprint;
  double height = 0.0;  // meters; NaN while awaiting imputation
  std::string source_id;
};

struct BlockRecord {
  std::string id;
  geometry::Polygon boundary;
  int land_use = 0;
  std::vector<RawBuilding> buildings;
};

struct BlockFeature {
  std::string id;
  geometry::Polygon boundary;
  std::optional<int> land_use;  // from a land_use property, if present
};

struct LandUseFeature {
  geometry::Polygon polygon;
  int land_use = 0;
};

// Skipped features by reason, in file order.
struct LoadReport {
  std::size_t features = 0;
  std::size_t loaded = 0;
  std::vector<std::string> skipped;
  std::vector<std::string> warnings;
};

template <typename T>
struct Loaded {
  std::vector<T> items;
  LoadReport report;
};

// Lower-case class names to indices.
struct LandUseTable {
  std::map<std::string, int> names{
      {"residential", 0}, {"commercial", 1}, {"industrial", 2}, {"public", 3}, {"recreation", 4}};
  int classes = 5;

  // Accepts a name or an index (number or numeric string). Empty when
  // unknown or out of range.
  std::optional<int> lookup(const geojson::Json& value) const;
  std::string name(int index) const;
};

struct LoadOptions {
  LandUseTable table;
  // Keep buildings without a height (NaN) so assemble can fill the per-class
  // median; otherwise they are skipped.
  bool impute_missing_height = false;
};

// All loaders throw IoError for unreadable files and EmptyDataset when no
// feature survives.
Loaded<BlockFeature> load_blocks(const std::string& path, const LoadOptions& opt = {});
Loaded<RawBuilding> load_buildings(const std::string& path, const LoadOptions& opt = {});
Loaded<LandUseFeature> load_landuse(const std::string& path, const LoadOptions& opt = {});

Loaded<BlockFeature> parse_blocks(const geojson::Json& doc, const LoadOptions& opt = {});
Loaded<RawBuilding> parse_buildings(const geojson::Json& doc, const LoadOptions& opt = {});
Loaded<LandUseFeature> parse_landuse(const geojson::Json& doc, const LoadOptions& opt = {});

struct JoinResult {
  std::vector<int> block_of;  // per building, -1 when dropped
  std::size_t dropped = 0;
};

// Each building goes to the first block containing its centroid.
JoinResult spatial_join(const std::vector<geometry::Polygon>& blocks, const std::vector<RawBuilding>& buildings);

struct LandUseAssignment {
  std::vector<int> classes;
  std::size_t defaulted = 0;  // blocks without any overlap, set to class 0
};

// Class with the largest overlap area, ties to the lower index.
LandUseAssignment assign_landuse(const std::vector<geometry::Polygon>& blocks,
                                 const std::vector<LandUseFeature>& landuse, int num_classes);

struct AssembleReport {
  std::size_t dropped_buildings = 0;
  std::size_t defaulted_landuse = 0;
  std::size_t imputed_heights = 0;
};

// Joins buildings to blocks and sets land use (a block's own property wins
// over the land-use layer). Records are sorted by block id.
std::vector<BlockRecord> assemble(const std::vector<BlockFeature>& blocks, std::vector<RawBuilding> buildings,
                                  const std::vector<LandUseFeature>& landuse, int num_classes,
                                  AssembleReport* report = nullptr);

struct DatasetItem {
  blockgraph::LayoutGraph graph;
  geometry::Polygon block;
  int land_use = 0;
};

struct Exclusion {
  std::string block_id;
  std::string reason;
};

struct Dataset {
  std::vector<DatasetItem> items;
  std::vector<Exclusion> excluded;
};

// Throws EmptyDataset when nothing survives the filters.
Dataset build_dataset(const std::vector<BlockRecord>& records, const blockgraph::GraphConfig& cfg = {});

// Line-oriented `block_id<TAB>reason`.
std::string exclusion_log(const std::vector<Exclusion>& excluded);

struct SynthProfile {
  std::array<int, 2> rows{2, 4};  // inclusive range
  std::array<int, 2> cols{2, 5};
  double height_mean = 20.0;      // meters
  double height_std = 5.0;
  double fill = 0.35;             // building area over block area
  // Relative frequency of each shape class; all rectangles by default.
  std::array<double, 8> shape_weights{1, 0, 0, 0, 0, 0, 0, 0};
};

// Profiles for the default five land-use classes.
std::vector<SynthProfile> default_profiles();

// Rectangular blocks laid out on a district lattice, land use cycling over
// the profiles, each holding a jittered grid of buildings.
std::vector<BlockRecord> synth_corpus(std::uint64_t seed, int n_blocks, const std::vector<SynthProfile>& profiles);

struct CountSummary {
  std::size_t blocks = 0;
  std::size_t max = 0;
  std::size_t min = 0;
  double avg = 0.0;
  double std = 0.0;  // population
};

struct DatasetStats {
  CountSummary buildings_per_block;
  std::vector<std::size_t> blocks_per_class;

  geojson::Json to_json(const LandUseTable& table = {}) const;
};

// Throws EmptyDataset.
DatasetStats dataset_stats(const std::vector<BlockRecord>& records, int num_classes);

}  // namespace urbangen::ingest
