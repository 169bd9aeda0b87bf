#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "urbangen/blockgraph.hpp"
#include "urbangen/condition.hpp"
#include "urbangen/ingest.hpp"
#include "urbangen/model.hpp"

namespace httplib {
class Server;
}

namespace urbangen::service {

// Immutable trained generator shared by all sessions.
struct ModelSnapshot {
  std::shared_ptr<const model::CVAE> cvae;
  std::shared_ptr<const condition::BlockAutoencoder> autoencoder;
  int num_classes = condition::kDefaultLandUseClasses;
  blockgraph::GraphConfig graph;
};

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
  std::map<std::string, std::string> headers;
};

struct BlockState {
  std::string id;
  geometry::Polygon boundary;
  int land_use = 0;
  bool stale = true;            // no layout yet, or land use edited since
  std::uint64_t generation = 0;  // regenerations so far
  std::optional<blockgraph::GeneratedLayout> layout;
};

struct DistrictSession {
  std::string id;
  std::uint64_t base_seed = 0;
  std::vector<BlockState> blocks;  // sorted by id
  mutable std::shared_mutex mutex;

  BlockState* find(const std::string& block_id);
};

// Seed handed to sample_layout for a block's next default regeneration;
// sample_layout mixes in the block id.
std::uint64_t generation_seed(std::uint64_t base_seed, std::uint64_t generation);

// Request handlers of the what-if editing API. Bodies are JSON; every error
// is {"error", "detail"}.
class DistrictService {
 public:
  explicit DistrictService(std::shared_ptr<const ModelSnapshot> model = nullptr, std::uint64_t default_seed = 0,
                           ingest::LandUseTable table = {});

  void set_model(std::shared_ptr<const ModelSnapshot> model);

  // POST /districts with a blocks FeatureCollection (properties id,
  // land_use); an optional top-level "seed" sets the district base seed.
  Response create_district(const std::string& body);
  Response list_blocks(const std::string& district) const;
  Response patch_landuse(const std::string& district, const std::string& block_id, const std::string& body);
  // Body {"block_ids": [...], "seed": n}, both optional. Without ids the
  // stale blocks are regenerated. An explicit seed replaces the per-block
  // generation counter, so repeating it reproduces the same layouts.
  Response generate(const std::string& district, const std::string& body);
  // Current layouts as GeoJSON with an ETag; 304 when `if_none_match`
  // matches.
  Response get_layout(const std::string& district, const std::string& if_none_match = {}) const;

 private:
  std::shared_ptr<DistrictSession> session(const std::string& id) const;
  std::shared_ptr<const ModelSnapshot> model() const;

  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<DistrictSession>> sessions_;
  std::shared_ptr<const ModelSnapshot> model_;
  std::uint64_t default_seed_;
  ingest::LandUseTable table_;
  std::uint64_t next_id_ = 1;
};

// Registers the routes and CORS handling on `server`.
void mount(httplib::Server& server, DistrictService& service);

}  // namespace urbangen::service
