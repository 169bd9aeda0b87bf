#pragma once

#include <cstdint>
#include <vector>

#include "urbangen/geometry.hpp"
#include "urbangen/nn.hpp"

namespace urbangen::condition {

inline constexpr int kRasterSize = 64;
inline constexpr int kChannels = 4;
inline constexpr int kEmbedDim = 128;
inline constexpr int kDefaultLandUseClasses = 5;

// Channel-major 4 x 64 x 64 grid; row 0 is the top (+y) of the canonical
// frame.
struct BlockRaster {
  std::vector<double> data = std::vector<double>(kChannels * kRasterSize * kRasterSize, 0.0);

  double at(int c, int i, int j) const { return data[static_cast<std::size_t>((c * kRasterSize + i) * kRasterSize + j)]; }
  double& at(int c, int i, int j) { return data[static_cast<std::size_t>((c * kRasterSize + i) * kRasterSize + j)]; }
  double mask_fraction() const;
};

// Normalized block scale and aspect: l = clamp(log10(W)/3, 0, 1), p = H/W.
struct BlockScalars {
  double l_hat = 0.0;
  double p_hat = 1.0;
};
BlockScalars block_scalars(const geometry::Polygon& block);

// Throws InvalidGeometry, or InvalidParams when u is outside [0, U).
BlockRaster rasterize_block(const geometry::Polygon& block, double l_hat, double p_hat, int u,
                            int num_classes = kDefaultLandUseClasses);

struct AutoencoderConfig {
  int epochs = 100;
  double learning_rate = 1e-3;
  int batch_size = 16;
  std::uint64_t seed = 1;
  int eval_every = 10;
};

// Strided convolutional autoencoder with a 128-d linear bottleneck.
class BlockAutoencoder {
 public:
  explicit BlockAutoencoder(std::uint64_t seed = 1);

  nn::ParamSet& params() noexcept { return params_; }
  const nn::ParamSet& params() const noexcept { return params_; }

  nn::Vector encode(const BlockRaster& r) const;
  BlockRaster reconstruct(const BlockRaster& r) const;
  double reconstruction_mse(const BlockRaster& r) const;
  // Adds the gradient of this raster's MSE to the parameter gradients and
  // returns the MSE.
  double accumulate_gradient(const BlockRaster& r);

 private:
  struct Trace;
  double forward(const BlockRaster& r, Trace* trace, BlockRaster* out) const;

  nn::ParamSet params_;
};

struct AutoencoderTrainResult {
  // Training-set MSE before training and after every eval_every epochs.
  std::vector<double> mse_curve;
  std::vector<double> epoch_loss;
};

// Throws EmptyDataset.
AutoencoderTrainResult train_block_autoencoder(BlockAutoencoder& ae, const std::vector<BlockRaster>& rasters,
                                               const AutoencoderConfig& cfg);

struct ConditionVector {
  nn::Vector embed;
  nn::Vector landuse;
  double l_hat = 0.0;
  double p_hat = 1.0;

  int dim() const { return static_cast<int>(embed.size() + landuse.size() + 2); }
  nn::Vector concat() const;
};

ConditionVector encode_condition(const geometry::Polygon& block, double l_hat, double p_hat, int u,
                                 const BlockAutoencoder& ae, int num_classes = kDefaultLandUseClasses);
// Scalars taken from the block's own frame.
ConditionVector encode_condition(const geometry::Polygon& block, int u, const BlockAutoencoder& ae,
                                 int num_classes = kDefaultLandUseClasses);

}  // namespace urbangen::condition
