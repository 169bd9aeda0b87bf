#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "urbangen/blockgraph.hpp"
#include "urbangen/condition.hpp"
#include "urbangen/nn.hpp"

namespace urbangen::model {

using nn::Matrix;
using nn::Vector;

inline constexpr int kNodeFeatures = 15;  // e, x, y, l, w, h, one-hot shape (8), a

struct ModelConfig {
  blockgraph::GridDims dims;
  int hidden = 128;
  int latent = 128;
  int heads = 4;
  int layers = 3;
  int cond_dim = condition::kEmbedDim + condition::kDefaultLandUseClasses + 2;
  int height_bins = 40;
  int edge_bins = 32;
  double slope = 0.2;  // LeakyReLU in attention scores

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  int epochs = 250;
  double lambda_exist = 1.0;
  double lambda_pos = 1.0;
  double lambda_size = 1.0;
  double lambda_height = 4.0;
  double lambda_shape = 1.0;
  double lambda_iou = 1.0;
  double lambda_edge = 1.0;
  double beta_kl = 0.5;
  double learning_rate = 1e-3;
  int batch_size = 16;
  std::uint64_t seed = 1;
};

// Attention neighbourhood of every node, self first with weight 1.
struct Neighborhoods {
  std::vector<std::vector<int>> nodes;
  std::vector<std::vector<double>> weights;
};

// Encoder side: edges between occupied slots with their weights.
Neighborhoods encoder_neighborhoods(const blockgraph::LayoutGraph& g);
// Decoder side: every grid edge with weight 1.
Neighborhoods decoder_neighborhoods(blockgraph::GridDims dims);
Neighborhoods make_neighborhoods(int n, const std::vector<blockgraph::GridEdge>& edges,
                                 const std::vector<bool>& active, bool unit_weights);

// One attention layer: W is d_in x (heads * d_head); a_src and a_dst are
// heads x d_head, the two halves of the attention vector.
struct GatWeights {
  const Matrix& w;
  const Matrix& a_src;
  const Matrix& a_dst;
  int heads;
  double slope;
};

struct GatCache {
  Matrix input;
  Matrix projected;  // H W
  Matrix pre;        // aggregated, before ELU
  // Per node, laid out [head][neighbour].
  std::vector<std::vector<double>> raw;
  std::vector<std::vector<double>> alpha;
};

Matrix gat_forward(const Matrix& h, const Neighborhoods& nb, const GatWeights& p, GatCache* cache = nullptr);
// Accumulates parameter gradients and returns the input gradient.
Matrix gat_backward(const Matrix& d_out, const Neighborhoods& nb, const GatWeights& p, const GatCache& cache,
                    Matrix& d_w, Matrix& d_a_src, Matrix& d_a_dst);

Vector reparameterize(const Vector& mu, const Vector& logvar, const Vector& eps);

struct Encoded {
  Vector mu;
  Vector logvar;
};

// Raw decoder outputs. Slot columns: existence logit, position (2, logits of
// a sigmoid), size (2), height bins, shape classes, fit IoU (1).
struct Decoded {
  Matrix slots;
  Matrix edge_logits;  // one row per grid edge

  int pos_col() const { return 1; }
  int size_col() const { return 3; }
  int height_col() const { return 5; }
  int shape_col(int height_bins) const { return 5 + height_bins; }
  int iou_col(int height_bins) const { return 5 + height_bins + 8; }
};

struct LossBreakdown {
  double total = 0.0;
  double exist = 0.0;
  double pos = 0.0;
  double size = 0.0;
  double height = 0.0;
  double shape = 0.0;
  double iou = 0.0;
  double edge = 0.0;
  double kl = 0.0;
  int occupied = 0;
  int occupied_edges = 0;

  LossBreakdown& operator+=(const LossBreakdown& o);
};

struct Sample {
  blockgraph::LayoutGraph graph;
  Vector y;
};

// Node feature rows (N x 15) of a layout graph.
Matrix node_features(const blockgraph::LayoutGraph& g);
double kl_divergence(const Vector& mu, const Vector& logvar);
int height_bin(double h, int bins);
int edge_bin(double w, int bins);

class CVAE {
 public:
  CVAE(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  nn::ParamSet& params() noexcept { return params_; }
  const nn::ParamSet& params() const noexcept { return params_; }
  int slot_outputs() const { return 5 + cfg_.height_bins + 8 + 1; }

  Encoded encode(const blockgraph::LayoutGraph& g, const Vector& y) const;
  Decoded decode(const Vector& z, const Vector& y) const;

  // Loss terms of the decoded predictions against a target graph.
  LossBreakdown elbo_loss(const Decoded& pred, const blockgraph::LayoutGraph& target, const Vector& mu,
                          const Vector& logvar, const TrainConfig& tc) const;
  // Full pass with fixed noise: returns the loss and, if requested, adds its
  // gradient to params().grad.
  LossBreakdown forward_backward(const Sample& s, const Vector& eps, const TrainConfig& tc, bool backward);

  // Thresholded node fields from decoder outputs.
  std::vector<blockgraph::BuildingNode> predicted_nodes(const Decoded& d) const;
  std::vector<double> predicted_edge_weights(const Decoded& d) const;

 private:
  struct EncoderTrace;
  struct DecoderTrace;
  Encoded encode_impl(const blockgraph::LayoutGraph& g, const Vector& y, EncoderTrace* t) const;
  Decoded decode_impl(const Vector& z, const Vector& y, DecoderTrace* t) const;
  GatWeights gat(int first) const;

  ModelConfig cfg_;
  nn::ParamSet params_;
  std::vector<int> enc_gat_;  // index of each encoder layer's w; a_src, a_dst follow
  std::vector<int> dec_gat_;
  int enc_node_w_, enc_cond_w_, enc_b_, enc_pos_;
  int mu_w_, mu_b_, lv_w_, lv_b_;
  int dec_pos_, dec_z_w_, dec_y_w_, dec_b_;
  int out_w_, out_b_, edge_src_, edge_dst_, edge_b_;
  Neighborhoods dec_nb_;
  std::vector<blockgraph::GridEdge> edges_;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean total loss per sample
  LossBreakdown last_epoch;        // summed terms of the final epoch
};

using EpochCallback = std::function<void(int epoch, double loss)>;

// Throws EmptyDataset.
TrainResult train(CVAE& model, const std::vector<Sample>& data, const TrainConfig& tc,
                  const EpochCallback& on_epoch = nullptr);

// Standard-normal draws for a given key (used for training noise and
// generation).
Vector normal_vector(int dim, std::uint64_t key);
std::uint64_t block_key(std::uint64_t seed, const std::string& block_id);

// Reconstruction through the posterior mean.
std::vector<blockgraph::BuildingNode> reconstruct(const CVAE& model, const Sample& s);

blockgraph::GeneratedLayout sample_layout(const geometry::Polygon& block, int land_use, const CVAE& model,
                                          const condition::BlockAutoencoder& ae, std::uint64_t seed,
                                          const std::string& block_id, const blockgraph::GraphConfig& gcfg = {},
                                          int num_classes = condition::kDefaultLandUseClasses);

struct GradientCheck {
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
};

// Central differences (step h) over every parameter scalar. The relative
// error uses max(|analytic| + |numeric|, floor) as denominator.
GradientCheck gradient_check(CVAE& model, const Sample& s, const Vector& eps, const TrainConfig& tc,
                             double h = 1e-5, double floor = 1e-4);

}  // namespace urbangen::model
