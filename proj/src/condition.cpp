#include "urbangen/condition.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "urbangen/errors.hpp"

namespace urbangen::condition {

using geometry::Polygon;
using geometry::Vec2;
using nn::Matrix;

double BlockRaster::mask_fraction() const {
  double s = 0.0;
  for (int k = 0; k < kRasterSize * kRasterSize; ++k) s += data[static_cast<std::size_t>(k)];
  return s / (kRasterSize * kRasterSize);
}

BlockScalars block_scalars(const Polygon& block) {
  const geometry::CanonicalFrame f = geometry::canonical_frame(block);
  return {std::clamp(std::log10(f.width) / 3.0, 0.0, 1.0), f.height / f.width};
}

BlockRaster rasterize_block(const Polygon& block, double l_hat, double p_hat, int u, int num_classes) {
  if (u < 0 || u >= num_classes) {
    throw InvalidParams("land use " + std::to_string(u) + " outside [0," + std::to_string(num_classes) + ")");
  }
  const geometry::CanonicalFrame f = geometry::canonical_frame(block);
  const Polygon canon = geometry::transform(block, [&f](Vec2 v) { return geometry::to_canonical(v, f); });
  const double uval = num_classes > 1 ? static_cast<double>(u) / (num_classes - 1) : 0.0;
  const std::array<double, kChannels> values{1.0, std::clamp(l_hat, 0.0, 1.0), std::clamp(p_hat, 0.0, 1.0), uval};

  BlockRaster r;
  const double px = 2.0 / kRasterSize;
  for (int i = 0; i < kRasterSize; ++i) {
    const double y = 1.0 - (i + 0.5) * px;
    for (int j = 0; j < kRasterSize; ++j) {
      const double x = -1.0 + (j + 0.5) * px;
      if (!geometry::contains(canon, {x, y})) continue;
      for (int c = 0; c < kChannels; ++c) r.at(c, i, j) = values[static_cast<std::size_t>(c)];
    }
  }
  return r;
}

namespace {

constexpr int kK = 4;
constexpr int kStride = 2;
constexpr int kPad = 1;
constexpr double kSlope = 0.2;
constexpr std::array<int, 5> kEncChannels{4, 8, 16, 32, 32};
constexpr std::array<int, 5> kEncSizes{64, 32, 16, 8, 4};
constexpr std::array<int, 5> kDecChannels{32, 32, 16, 8, 4};
constexpr std::array<int, 5> kDecSizes{4, 8, 16, 32, 64};
constexpr int kFlat = 32 * 4 * 4;

// Patch matrix of a k4 s2 p1 convolution over a C x H x W input; the output
// grid is (H/2) x (W/2).
void im2col(const double* x, int C, int H, int W, Matrix& cols) {
  const int Ho = H / kStride, Wo = W / kStride;
  cols.setZero(C * kK * kK, Ho * Wo);
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < kK; ++ki) {
      for (int kj = 0; kj < kK; ++kj) {
        double* row = cols.row((c * kK + ki) * kK + kj).data();
        for (int oi = 0; oi < Ho; ++oi) {
          const int ii = oi * kStride - kPad + ki;
          if (ii < 0 || ii >= H) continue;
          const double* xrow = x + (c * H + ii) * W;
          for (int oj = 0; oj < Wo; ++oj) {
            const int jj = oj * kStride - kPad + kj;
            if (jj >= 0 && jj < W) row[oi * Wo + oj] = xrow[jj];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters patch columns back onto a zeroed C x H x W grid.
void col2im(const Matrix& cols, int C, int H, int W, double* x) {
  const int Ho = H / kStride, Wo = W / kStride;
  std::fill(x, x + C * H * W, 0.0);
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < kK; ++ki) {
      for (int kj = 0; kj < kK; ++kj) {
        const double* row = cols.row((c * kK + ki) * kK + kj).data();
        for (int oi = 0; oi < Ho; ++oi) {
          const int ii = oi * kStride - kPad + ki;
          if (ii < 0 || ii >= H) continue;
          double* xrow = x + (c * H + ii) * W;
          for (int oj = 0; oj < Wo; ++oj) {
            const int jj = oj * kStride - kPad + kj;
            if (jj >= 0 && jj < W) xrow[jj] += row[oi * Wo + oj];
          }
        }
      }
    }
  }
}

Matrix leaky(const Matrix& z) {
  return z.unaryExpr([](double v) { return nn::leaky_relu(v, kSlope); });
}

Matrix leaky_backward(const Matrix& z, const Matrix& g) {
  return g.cwiseProduct(z.unaryExpr([](double v) { return nn::leaky_relu_grad(v, kSlope); }));
}

enum Slot { kEncW = 0, kEncB = 4, kEncFcW = 8, kEncFcB, kDecFcW, kDecFcB, kDecW, kDecB = kDecW + 4 };

}  // namespace

struct BlockAutoencoder::Trace {
  std::array<Matrix, 4> enc_cols;  // patches of each encoder input
  std::array<Matrix, 4> enc_pre;   // Cout x HoWo
  Matrix flat;                     // 1 x 512
  Matrix embed;                    // 1 x 128
  Matrix dec_fc_pre;               // 1 x 512
  std::array<Matrix, 4> dec_in;    // Cin x HiWi
  std::array<Matrix, 4> dec_pre;   // Cout x HoWo
  Matrix output;                   // 4 x 4096
};

BlockAutoencoder::BlockAutoencoder(std::uint64_t seed) {
  for (int l = 0; l < 4; ++l) {
    const int cin = kEncChannels[static_cast<std::size_t>(l)], cout = kEncChannels[static_cast<std::size_t>(l) + 1];
    params_.add("enc" + std::to_string(l) + ".w", cout, cin * kK * kK);
  }
  for (int l = 0; l < 4; ++l) params_.add("enc" + std::to_string(l) + ".b", kEncChannels[static_cast<std::size_t>(l) + 1], 1);
  params_.add("enc_fc.w", kFlat, kEmbedDim);
  params_.add("enc_fc.b", 1, kEmbedDim);
  params_.add("dec_fc.w", kEmbedDim, kFlat);
  params_.add("dec_fc.b", 1, kFlat);
  for (int l = 0; l < 4; ++l) {
    const int cin = kDecChannels[static_cast<std::size_t>(l)], cout = kDecChannels[static_cast<std::size_t>(l) + 1];
    params_.add("dec" + std::to_string(l) + ".w", cin, cout * kK * kK);
  }
  for (int l = 0; l < 4; ++l) params_.add("dec" + std::to_string(l) + ".b", kDecChannels[static_cast<std::size_t>(l) + 1], 1);

  for (int l = 0; l < 4; ++l) {
    const int cin = kEncChannels[static_cast<std::size_t>(l)], cout = kEncChannels[static_cast<std::size_t>(l) + 1];
    nn::glorot_init(params_.value(kEncW + l), cin * kK * kK, cout * kK * kK, hash_combine(seed, 100 + l));
    const int din = kDecChannels[static_cast<std::size_t>(l)], dout = kDecChannels[static_cast<std::size_t>(l) + 1];
    nn::glorot_init(params_.value(kDecW + l), din * kK * kK, dout * kK * kK, hash_combine(seed, 200 + l));
  }
  nn::glorot_init(params_.value(kEncFcW), kFlat, kEmbedDim, hash_combine(seed, 300));
  nn::glorot_init(params_.value(kDecFcW), kEmbedDim, kFlat, hash_combine(seed, 301));
}

double BlockAutoencoder::forward(const BlockRaster& r, Trace* trace, BlockRaster* out) const {
  Trace local;
  Trace& t = trace != nullptr ? *trace : local;

  Matrix a = Eigen::Map<const Matrix>(r.data.data(), kChannels, kRasterSize * kRasterSize);
  for (int l = 0; l < 4; ++l) {
    const int cin = kEncChannels[static_cast<std::size_t>(l)];
    const int size = kEncSizes[static_cast<std::size_t>(l)];
    im2col(a.data(), cin, size, size, t.enc_cols[static_cast<std::size_t>(l)]);
    Matrix z = params_.value(kEncW + l) * t.enc_cols[static_cast<std::size_t>(l)];
    z.colwise() += params_.value(kEncB + l).col(0);
    a = leaky(z);
    t.enc_pre[static_cast<std::size_t>(l)] = std::move(z);
  }
  t.flat = Eigen::Map<const Matrix>(a.data(), 1, kFlat);
  t.embed = t.flat * params_.value(kEncFcW) + params_.value(kEncFcB);
  t.dec_fc_pre = t.embed * params_.value(kDecFcW) + params_.value(kDecFcB);
  Matrix d = Eigen::Map<const Matrix>(leaky(t.dec_fc_pre).data(), 32, 16);

  for (int l = 0; l < 4; ++l) {
    const int cout = kDecChannels[static_cast<std::size_t>(l) + 1];
    const int size = kDecSizes[static_cast<std::size_t>(l) + 1];
    const Matrix cols = params_.value(kDecW + l).transpose() * d;
    Matrix z(cout, size * size);
    col2im(cols, cout, size, size, z.data());
    z.colwise() += params_.value(kDecB + l).col(0);
    t.dec_in[static_cast<std::size_t>(l)] = std::move(d);
    d = l < 3 ? leaky(z) : Matrix(z.unaryExpr([](double v) { return nn::sigmoid(v); }));
    t.dec_pre[static_cast<std::size_t>(l)] = std::move(z);
  }
  t.output = std::move(d);

  if (out != nullptr) std::copy(t.output.data(), t.output.data() + t.output.size(), out->data.begin());
  const Eigen::Map<const Matrix> target(r.data.data(), kChannels, kRasterSize * kRasterSize);
  return (t.output - target).squaredNorm() / static_cast<double>(t.output.size());
}

nn::Vector BlockAutoencoder::encode(const BlockRaster& r) const {
  Trace t;
  forward(r, &t, nullptr);
  return t.embed.row(0).transpose();
}

BlockRaster BlockAutoencoder::reconstruct(const BlockRaster& r) const {
  BlockRaster out;
  forward(r, nullptr, &out);
  return out;
}

double BlockAutoencoder::reconstruction_mse(const BlockRaster& r) const { return forward(r, nullptr, nullptr); }

double BlockAutoencoder::accumulate_gradient(const BlockRaster& r) {
  Trace t;
  const double loss = forward(r, &t, nullptr);
  const Eigen::Map<const Matrix> target(r.data.data(), kChannels, kRasterSize * kRasterSize);
  const double n = static_cast<double>(t.output.size());

  // d loss / d pre-sigmoid
  Matrix g = (2.0 / n) * (t.output - target).cwiseProduct(t.output.unaryExpr([](double y) { return y * (1.0 - y); }));
  for (int l = 3; l >= 0; --l) {
    if (l < 3) g = leaky_backward(t.dec_pre[static_cast<std::size_t>(l)], g);
    const int cout = kDecChannels[static_cast<std::size_t>(l) + 1];
    const int size = kDecSizes[static_cast<std::size_t>(l) + 1];
    params_.grad(kDecB + l).col(0) += g.rowwise().sum();
    Matrix dcols;
    im2col(g.data(), cout, size, size, dcols);
    const Matrix& x = t.dec_in[static_cast<std::size_t>(l)];
    params_.grad(kDecW + l) += x * dcols.transpose();
    g = params_.value(kDecW + l) * dcols;
  }
  // g is 32 x 16, the gradient wrt the activated decoder FC output.
  Matrix gfc = Eigen::Map<const Matrix>(g.data(), 1, kFlat);
  gfc = leaky_backward(t.dec_fc_pre, gfc);
  params_.grad(kDecFcW) += t.embed.transpose() * gfc;
  params_.grad(kDecFcB) += gfc;
  const Matrix gembed = gfc * params_.value(kDecFcW).transpose();
  params_.grad(kEncFcW) += t.flat.transpose() * gembed;
  params_.grad(kEncFcB) += gembed;
  Matrix ga = gembed * params_.value(kEncFcW).transpose();
  g = Eigen::Map<const Matrix>(ga.data(), 32, 16);

  for (int l = 3; l >= 0; --l) {
    g = leaky_backward(t.enc_pre[static_cast<std::size_t>(l)], g);
    params_.grad(kEncB + l).col(0) += g.rowwise().sum();
    params_.grad(kEncW + l) += g * t.enc_cols[static_cast<std::size_t>(l)].transpose();
    if (l == 0) break;
    const Matrix dcols = params_.value(kEncW + l).transpose() * g;
    const int cin = kEncChannels[static_cast<std::size_t>(l)];
    const int size = kEncSizes[static_cast<std::size_t>(l)];
    Matrix dx(cin, size * size);
    col2im(dcols, cin, size, size, dx.data());
    g = std::move(dx);
  }
  return loss;
}

AutoencoderTrainResult train_block_autoencoder(BlockAutoencoder& ae, const std::vector<BlockRaster>& rasters,
                                               const AutoencoderConfig& cfg) {
  if (rasters.empty()) throw EmptyDataset("no rasters to train the block autoencoder on");
  AutoencoderTrainResult res;
  auto dataset_mse = [&] {
    double s = 0.0;
    for (const BlockRaster& r : rasters) s += ae.reconstruction_mse(r);
    return s / static_cast<double>(rasters.size());
  };
  res.mse_curve.push_back(dataset_mse());

  nn::Adam adam(cfg.learning_rate);
  std::vector<std::size_t> order(rasters.size());
  const std::size_t batch = static_cast<std::size_t>(std::max(1, cfg.batch_size));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    CounterRng rng(hash_combine(cfg.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.next_u64() % i]);

    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      ae.params().zero_grad();
      for (std::size_t k = start; k < end; ++k) total += ae.accumulate_gradient(rasters[order[k]]);
      ae.params().scale_grad(1.0 / static_cast<double>(end - start));
      adam.step(ae.params());
    }
    res.epoch_loss.push_back(total / static_cast<double>(order.size()));
    if ((epoch + 1) % std::max(1, cfg.eval_every) == 0 || epoch + 1 == cfg.epochs) res.mse_curve.push_back(dataset_mse());
  }
  return res;
}

nn::Vector ConditionVector::concat() const {
  nn::Vector v(dim());
  v << embed, landuse, l_hat, p_hat;
  return v;
}

ConditionVector encode_condition(const Polygon& block, double l_hat, double p_hat, int u, const BlockAutoencoder& ae,
                                 int num_classes) {
  ConditionVector y;
  y.embed = ae.encode(rasterize_block(block, l_hat, p_hat, u, num_classes));
  y.landuse = nn::Vector::Zero(num_classes);
  y.landuse(u) = 1.0;
  y.l_hat = l_hat;
  y.p_hat = p_hat;
  return y;
}

ConditionVector encode_condition(const Polygon& block, int u, const BlockAutoencoder& ae, int num_classes) {
  const BlockScalars s = block_scalars(block);
  return encode_condition(block, s.l_hat, s.p_hat, u, ae, num_classes);
}

}  // namespace urbangen::condition
