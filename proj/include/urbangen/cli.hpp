#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "urbangen/condition.hpp"
#include "urbangen/geojson.hpp"
#include "urbangen/ingest.hpp"
#include "urbangen/model.hpp"

namespace urbangen::cli {

using geojson::Json;

// Effective settings: defaults, then the config file, then flags.
struct Config {
  ingest::LandUseTable table;  // class names and U
  model::ModelConfig model;
  model::TrainConfig train;
  condition::AutoencoderConfig autoencoder;
  std::uint64_t seed = 1;

  int num_classes() const { return table.classes; }
  Json to_json() const;
};

// Missing keys keep their defaults. Throws InvalidParams on bad values.
Config config_from_json(const Json& j);
// Reads the file at `path`; IoError when unreadable.
Config load_config(const std::string& path);

// Environment variable naming a config file when --config is absent.
inline constexpr const char* kConfigEnv = "URBANGEN_CONFIG";

// "synth<N>" makes a synthetic corpus from the config seed; anything else is
// a record file.
std::vector<ingest::BlockRecord> load_corpus(const std::string& spec, const Config& cfg);

std::vector<condition::BlockRaster> block_rasters(const ingest::Dataset& ds, int num_classes);
std::vector<model::Sample> make_samples(const ingest::Dataset& ds, const condition::BlockAutoencoder& ae,
                                        int num_classes);

struct TrainedGenerator {
  std::unique_ptr<model::CVAE> cvae;
  std::unique_ptr<condition::BlockAutoencoder> autoencoder;
  condition::AutoencoderTrainResult ae_result;
  model::TrainResult cvae_result;
  std::size_t samples = 0;
  std::vector<ingest::Exclusion> excluded;
};

using ProgressFn = std::function<void(const std::string& stage, int epoch, double loss)>;

// Block autoencoder stage, then the CVAE stage on its frozen embeddings.
TrainedGenerator train_generator(const std::vector<ingest::BlockRecord>& records, const Config& cfg,
                                 const ProgressFn& progress = nullptr);

// Column-aligned text table.
std::string format_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows);

// Command-line entry: 0 success, 1 runtime error, 2 usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace urbangen::cli
