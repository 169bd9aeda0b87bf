#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <random>

#include "test_support.hpp"
#include "urbangen/condition.hpp"
#include "urbangen/errors.hpp"

using namespace urbangen;
using namespace urbangen::geometry;
using namespace urbangen::condition;

namespace {

std::vector<BlockRaster> random_rasters(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<BlockRaster> out;
  for (int i = 0; i < n; ++i) {
    const Polygon block(urbangen::testing::random_star_ring(rng, 5 + i % 7, {0, 0}, 30.0, 80.0));
    out.push_back(rasterize_block(block, u01(rng), u01(rng), i % 5));
  }
  return out;
}

}  // namespace

TEST_CASE("rasterize_block: rectangle fills the grid") {
  const Polygon block = urbangen::testing::rect_polygon({40, -10}, 120.0, 45.0, 0.6);
  const BlockRaster r = rasterize_block(block, 0.7, 0.375, 2);
  CHECK(std::abs(r.mask_fraction() - 1.0) <= 2.0 / 64);
}

TEST_CASE("rasterize_block: mask fraction matches the area ratio") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Polygon block(urbangen::testing::random_star_ring(rng, 6 + trial % 9, {5, 5}, 20.0, 60.0));
    const CanonicalFrame f = canonical_frame(block);
    const BlockRaster r = rasterize_block(block, 0.5, 0.5, 1);
    CHECK(std::abs(r.mask_fraction() - polygon_area(block) / (f.width * f.height)) <= 0.02);
  }
}

TEST_CASE("rasterize_block: channel contract") {
  const Polygon block(urbangen::testing::random_star_ring(*std::make_unique<std::mt19937_64>(2), 9, {0, 0}, 20, 50));
  const BlockRaster r0 = rasterize_block(block, 0.6, 0.4, 0);
  const BlockRaster r4 = rasterize_block(block, 0.6, 0.4, 4);
  for (int i = 0; i < kRasterSize; ++i) {
    for (int j = 0; j < kRasterSize; ++j) {
      const double m = r0.at(0, i, j);
      CHECK((m == 0.0 || m == 1.0));
      CHECK(r0.at(3, i, j) == 0.0);
      CHECK(r4.at(3, i, j) == m);
      CHECK(r0.at(1, i, j) == 0.6 * m);
      CHECK(r0.at(2, i, j) == 0.4 * m);
    }
  }
  CHECK_THROWS_AS(rasterize_block(block, 0.5, 0.5, 5), InvalidParams);
  CHECK_THROWS_AS(rasterize_block(block, 0.5, 0.5, -1), InvalidParams);
}

TEST_CASE("autoencoder: analytic gradient matches finite differences") {
  BlockAutoencoder ae(3);
  const BlockRaster r = random_rasters(1, 8)[0];
  // Zero biases put padded regions exactly on the LeakyReLU kink, where the
  // central difference is not a derivative.
  std::mt19937_64 brng(17);
  std::uniform_real_distribution<double> bias(-0.1, 0.1);
  for (int t = 0; t < ae.params().size(); ++t) {
    if (ae.params().name(t).ends_with(".b")) {
      for (Eigen::Index i = 0; i < ae.params().value(t).size(); ++i) ae.params().value(t).data()[i] = bias(brng);
    }
  }
  ae.params().zero_grad();
  ae.accumulate_gradient(r);
  // LeakyReLU is not differentiable at 0, so a probe whose step crosses a
  // kink disagrees; require nearly all probes to agree instead of all. The
  // denominator floor sits above the central-difference roundoff (~1e-12
  // absolute for a loss of order 0.1 and h = 1e-5).
  std::mt19937_64 rng(1);
  std::vector<double> errors;
  for (int t = 0; t < ae.params().size(); ++t) {
    nn::Matrix& v = ae.params().value(t);
    std::uniform_int_distribution<Eigen::Index> pick(0, v.size() - 1);
    for (int k = 0; k < 8; ++k) {
      const Eigen::Index idx = pick(rng);
      const double orig = v.data()[idx];
      const double h = 1e-5;
      v.data()[idx] = orig + h;
      const double up = ae.reconstruction_mse(r);
      v.data()[idx] = orig - h;
      const double down = ae.reconstruction_mse(r);
      v.data()[idx] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = ae.params().grad(t).data()[idx];
      errors.push_back(std::abs(numeric - analytic) / std::max(1e-7, std::abs(numeric) + std::abs(analytic)));
    }
  }
  std::sort(errors.begin(), errors.end());
  CHECK(errors[errors.size() / 2] < 1e-6);
  const auto good = std::count_if(errors.begin(), errors.end(), [](double e) { return e < 1e-4; });
  CHECK(static_cast<double>(good) >= 0.95 * static_cast<double>(errors.size()));
}

TEST_CASE("autoencoder: training reduces reconstruction error") {
  const auto rasters = random_rasters(50, 21);
  BlockAutoencoder ae(5);
  AutoencoderConfig cfg;
  cfg.epochs = 100;
  const auto res = train_block_autoencoder(ae, rasters, cfg);
  REQUIRE(res.mse_curve.size() == 11);
  CHECK(res.mse_curve.back() < 0.5 * res.mse_curve.front());
  for (std::size_t k = 1; k < res.mse_curve.size(); ++k) CHECK(res.mse_curve[k] <= res.mse_curve[k - 1] + 1e-6);
  CHECK(ae.encode(rasters[0]).size() == kEmbedDim);
}

TEST_CASE("autoencoder: memorizes a single raster") {
  const std::vector<BlockRaster> rasters(32, random_rasters(1, 4)[0]);
  BlockAutoencoder ae(9);
  AutoencoderConfig cfg;
  cfg.epochs = 200;
  const auto res = train_block_autoencoder(ae, rasters, cfg);
  CHECK(res.mse_curve.back() < 1e-3);
}

TEST_CASE("autoencoder: deterministic given the seed") {
  const auto rasters = random_rasters(20, 2);
  AutoencoderConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 44;
  BlockAutoencoder a(44), b(44);
  train_block_autoencoder(a, rasters, cfg);
  train_block_autoencoder(b, rasters, cfg);
  for (int t = 0; t < a.params().size(); ++t) CHECK(a.params().value(t) == b.params().value(t));
  CHECK_THROWS_AS(train_block_autoencoder(a, {}, cfg), EmptyDataset);
}

TEST_CASE("encode_condition") {
  BlockAutoencoder ae(1);
  const Polygon block = urbangen::testing::rect_polygon({0, 0}, 100.0, 60.0, 0.2);
  const ConditionVector a = encode_condition(block, 1, ae);
  const ConditionVector b = encode_condition(block, 1, ae);
  const ConditionVector c = encode_condition(block, 3, ae);
  CHECK(a.dim() == 135);
  CHECK(a.concat() == b.concat());
  CHECK(a.landuse.sum() == 1.0);
  CHECK(a.landuse(1) == 1.0);
  CHECK(c.landuse(3) == 1.0);
  CHECK(a.landuse != c.landuse);
  CHECK(a.l_hat == doctest::Approx(std::log10(100.0) / 3));
  CHECK(a.p_hat == doctest::Approx(0.6));
}
