#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "test_support.hpp"
#include "urbangen/errors.hpp"
#include "urbangen/model.hpp"

using namespace urbangen;
using namespace urbangen::model;
using urbangen::blockgraph::BuildingInput;
using urbangen::blockgraph::GraphConfig;
using urbangen::blockgraph::GridDims;
using urbangen::blockgraph::LayoutGraph;
using namespace urbangen::testing;

namespace {

Vector random_vector(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

}  // namespace

TEST_CASE("gat_forward matches a per-head reference") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 5 + trial;
    const int heads = 1 + trial % 4;
    const int dh = 3;
    const RandomGraph g = random_graph(rng, n, 0.3);
    const Matrix h = random_matrix(n, 7, rng);
    const Matrix w = random_matrix(7, heads * dh, rng, 0.5);
    const Matrix as = random_matrix(heads, dh, rng), ad = random_matrix(heads, dh, rng);
    const Neighborhoods nb = make_neighborhoods(n, g.edges, std::vector<bool>(static_cast<std::size_t>(n), true), false);
    const Matrix got = gat_forward(h, nb, GatWeights{w, as, ad, heads, 0.2});
    const Matrix want = naive_gat(h, n, g.list, w, as, ad, heads, 0.2);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("gat_forward: attention coefficients and special neighbourhoods") {
  std::mt19937_64 rng(4);
  const int n = 6;
  const RandomGraph g = random_graph(rng, n, 0.5);
  const Matrix h = random_matrix(n, 4, rng);
  const Matrix w = random_matrix(4, 8, rng), as = random_matrix(2, 4, rng), ad = random_matrix(2, 4, rng);

  const Neighborhoods nb = make_neighborhoods(n, g.edges, std::vector<bool>(n, true), false);
  GatCache cache;
  gat_forward(h, nb, GatWeights{w, as, ad, 2, 0.2}, &cache);
  for (int i = 0; i < n; ++i) {
    const std::size_t deg = nb.nodes[static_cast<std::size_t>(i)].size();
    for (int k = 0; k < 2; ++k) {
      double s = 0.0;
      for (std::size_t q = 0; q < deg; ++q) s += cache.alpha[static_cast<std::size_t>(i)][k * deg + q];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  // Zero attention vectors flatten every score, so attention averages the
  // neighbourhood.
  const Matrix hp = h * w;
  const Matrix zero_a = Matrix::Zero(2, 4);
  const Neighborhoods nu = make_neighborhoods(n, g.edges, std::vector<bool>(n, true), true);
  const Matrix mean_out = gat_forward(h, nu, GatWeights{w, zero_a, zero_a, 2, 0.2});
  for (int i = 0; i < n; ++i) {
    Eigen::RowVectorXd avg = Eigen::RowVectorXd::Zero(8);
    for (int j : nu.nodes[static_cast<std::size_t>(i)]) avg += hp.row(j);
    avg /= static_cast<double>(nu.nodes[static_cast<std::size_t>(i)].size());
    for (int c = 0; c < 8; ++c) CHECK(mean_out(i, c) == doctest::Approx(nn::elu(avg(c))).epsilon(1e-12));
  }
  // Inactive endpoints drop their edges.
  std::vector<bool> active(n, true);
  active[0] = false;
  const Neighborhoods na = make_neighborhoods(n, g.edges, active, false);
  CHECK(na.nodes[0] == std::vector<int>{0});
  for (int i = 1; i < n; ++i) {
    for (int j : na.nodes[static_cast<std::size_t>(i)]) CHECK(j != 0);
  }
}

TEST_CASE("gat_backward matches finite differences") {
  std::mt19937_64 rng(5);
  const int n = 7;
  const RandomGraph g = random_graph(rng, n, 0.4);
  const Neighborhoods nb = make_neighborhoods(n, g.edges, std::vector<bool>(n, true), false);
  Matrix h = random_matrix(n, 5, rng);
  Matrix w = random_matrix(5, 6, rng, 0.5), as = random_matrix(2, 3, rng), ad = random_matrix(2, 3, rng);
  const Matrix r = random_matrix(n, 6, rng);
  auto objective = [&] { return gat_forward(h, nb, GatWeights{w, as, ad, 2, 0.2}).cwiseProduct(r).sum(); };
  GatCache cache;
  gat_forward(h, nb, GatWeights{w, as, ad, 2, 0.2}, &cache);
  Matrix dw = Matrix::Zero(5, 6), das = Matrix::Zero(2, 3), dad = Matrix::Zero(2, 3);
  const Matrix dh = gat_backward(r, nb, GatWeights{w, as, ad, 2, 0.2}, cache, dw, das, dad);
  double worst = 0.0;
  auto probe = [&](Matrix& m, const Matrix& analytic) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double orig = m.data()[i];
      m.data()[i] = orig + 1e-6;
      const double up = objective();
      m.data()[i] = orig - 1e-6;
      const double down = objective();
      m.data()[i] = orig;
      const double num = (up - down) / 2e-6;
      worst = std::max(worst, std::abs(num - analytic.data()[i]) / std::max(1e-6, std::abs(num) + std::abs(analytic.data()[i])));
    }
  };
  probe(h, dh);
  probe(w, dw);
  probe(as, das);
  probe(ad, dad);
  CHECK(worst < 1e-5);
}

TEST_CASE("KL divergence closed forms") {
  CHECK(kl_divergence(Vector::Zero(128), Vector::Zero(128)) == 0.0);
  CHECK(kl_divergence(Vector::Ones(128), Vector::Zero(128)) == doctest::Approx(64.0));
  Vector lv(1);
  lv << std::log(4.0);
  CHECK(kl_divergence(Vector::Zero(1), lv) == doctest::Approx(0.5 * (4.0 - 1.0 - std::log(4.0))));
}

TEST_CASE("bins") {
  CHECK(height_bin(0.0, 40) == 0);
  CHECK(height_bin(0.999, 40) == 39);
  CHECK(height_bin(1.0, 40) == 39);
  CHECK(height_bin(0.3, 40) == 12);
  CHECK(edge_bin(0.5, 32) == 16);
  CHECK(edge_bin(-0.1, 32) == 0);
}

TEST_CASE("elbo_loss with zeroed output layers") {
  CVAE m(ModelConfig{}, 7);
  for (const char* name : {"dec.out.w", "dec.out.b", "dec.edge.src", "dec.edge.dst", "dec.edge.b"}) {
    m.params().value(m.params().find(name)).setZero();
  }
  TrainConfig tc;
  // Graph on the default 10 x 12 grid.
  const auto block = rect_polygon({0, 0}, 100.0, 60.0, 0.0);
  std::vector<BuildingInput> b;
  for (int k = 0; k < 4; ++k) b.push_back({rect_polygon({-30.0 + 20.0 * k, 0.0}, 10, 10, 0.0), 30.0 + 10 * k});
  const LayoutGraph g = blockgraph::build_layout_graph(block, b);
  const Vector y = Vector::Zero(m.config().cond_dim);
  const Decoded d = m.decode(Vector::Zero(128), y);
  Vector mu = Vector::Ones(128);
  const LossBreakdown lb = m.elbo_loss(d, g, mu, Vector::Zero(128), tc);
  CHECK(lb.occupied == 4);
  CHECK(lb.occupied_edges == 3);
  CHECK(lb.height == doctest::Approx(4 * std::log(40.0)));
  CHECK(lb.shape == doctest::Approx(4 * std::log(8.0)));
  CHECK(lb.edge == doctest::Approx(3 * std::log(32.0)));
  CHECK(lb.exist == doctest::Approx(120 * std::log(2.0)));
  CHECK(lb.kl == doctest::Approx(64.0));
  double pos = 0.0, size = 0.0, iou = 0.0;
  for (const auto& v : g.nodes) {
    if (v.e < 0.5) continue;
    pos += (0.5 - v.x) * (0.5 - v.x) + (0.5 - v.y) * (0.5 - v.y);
    size += (0.5 - v.l) * (0.5 - v.l) + (0.5 - v.w) * (0.5 - v.w);
    iou += (0.5 - v.a) * (0.5 - v.a);
  }
  CHECK(lb.pos == doctest::Approx(pos));
  CHECK(lb.size == doctest::Approx(size));
  CHECK(lb.iou == doctest::Approx(iou));
  CHECK(lb.total == doctest::Approx(lb.exist + lb.pos + lb.size + 4 * lb.height + lb.shape + lb.iou + lb.edge + 0.5 * lb.kl));
  CHECK(lb.total >= 0.0);
}

TEST_CASE("full model gradient matches finite differences") {
  const ModelConfig cfg = tiny_model_config();
  TrainConfig tc;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CAPTURE(seed);
    CVAE m(cfg, seed);
    std::mt19937_64 rng(seed);
    const Sample s{tiny_graph(static_cast<int>(2 + seed % 5), seed), random_vector(cfg.cond_dim, rng)};
    const GradientCheck gc = gradient_check(m, s, random_vector(cfg.latent, rng), tc);
    CHECK(gc.checked == m.params().scalar_count());
    CHECK(gc.max_relative_error < 1e-4);
  }
}

TEST_CASE("gradient of an empty layout") {
  const ModelConfig cfg = tiny_model_config();
  CVAE m(cfg, 11);
  std::mt19937_64 rng(11);
  const Sample s{tiny_graph(0, 11), random_vector(cfg.cond_dim, rng)};
  CHECK(s.graph.occupied() == 0);
  const GradientCheck gc = gradient_check(m, s, random_vector(cfg.latent, rng), TrainConfig{});
  CHECK(gc.max_relative_error < 1e-4);
  // Encoder attention never reaches the loss here.
  for (int t = 0; t < m.params().size(); ++t) {
    if (m.params().name(t).starts_with("enc.gat")) CHECK(m.params().grad(t).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("training fits a handful of layouts") {
  const ModelConfig cfg = tiny_model_config();
  CVAE m(cfg, 2);
  std::mt19937_64 rng(2);
  std::vector<Sample> data;
  for (int k = 0; k < 4; ++k) data.push_back({tiny_graph(k + 2, 40 + k), random_vector(cfg.cond_dim, rng)});
  TrainConfig tc;
  tc.epochs = 400;
  tc.batch_size = 4;
  tc.learning_rate = 1e-2;
  int calls = 0;
  const TrainResult r = train(m, data, tc, [&](int, double) { ++calls; });
  CHECK(calls == 400);
  CHECK(r.epoch_loss.back() < 0.3 * r.epoch_loss.front());
  for (const Sample& s : data) {
    const auto nodes = reconstruct(m, s);
    for (std::size_t i = 0; i < nodes.size(); ++i) CHECK(nodes[i].e == s.graph.nodes[i].e);
  }
  CHECK_THROWS_AS(train(m, {}, tc), EmptyDataset);
}

TEST_CASE("training is deterministic") {
  const ModelConfig cfg = tiny_model_config();
  std::mt19937_64 rng(9);
  std::vector<Sample> data;
  for (int k = 0; k < 5; ++k) data.push_back({tiny_graph(k + 1, k), random_vector(cfg.cond_dim, rng)});
  TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 2;
  CVAE a(cfg, 3), b(cfg, 3);
  const auto ra = train(a, data, tc);
  const auto rb = train(b, data, tc);
  CHECK(ra.epoch_loss == rb.epoch_loss);
  for (int t = 0; t < a.params().size(); ++t) CHECK(a.params().value(t) == b.params().value(t));
}

TEST_CASE("sample_layout is keyed by seed and block id") {
  const condition::BlockAutoencoder ae(1);
  CVAE m(ModelConfig{}, 5);
  const auto block = rect_polygon({100, 50}, 120.0, 70.0, 0.4);
  const auto a = sample_layout(block, 2, m, ae, 7, "b1");
  const auto b = sample_layout(block, 2, m, ae, 7, "b1");
  REQUIRE(a.buildings.size() == b.buildings.size());
  for (std::size_t i = 0; i < a.buildings.size(); ++i) {
    CHECK(a.buildings[i].height == b.buildings[i].height);
    CHECK(a.buildings[i].footprint.outer() == b.buildings[i].footprint.outer());
  }
  CHECK(a.block_id == "b1");
  CHECK(a.land_use == 2);
  CHECK(block_key(7, "b1") != block_key(7, "b2"));
  CHECK(block_key(7, "b1") != block_key(8, "b1"));
  CHECK(normal_vector(128, block_key(7, "b1")) != normal_vector(128, block_key(7, "b2")));
  CHECK_THROWS_AS(sample_layout(block, 2, m, ae, 7, "b1", {}, 3), InvalidParams);
}

TEST_CASE("dimension errors") {
  CVAE m(tiny_model_config(), 1);
  const LayoutGraph g = tiny_graph(2, 1);
  CHECK_THROWS_AS(m.encode(g, Vector::Zero(3)), InvalidParams);
  CHECK_THROWS_AS(m.decode(Vector::Zero(3), Vector::Zero(m.config().cond_dim)), InvalidParams);
  CVAE big(ModelConfig{}, 1);
  CHECK_THROWS_AS(big.encode(g, Vector::Zero(big.config().cond_dim)), InvalidParams);
  ModelConfig bad;
  bad.heads = 3;
  CHECK_THROWS_AS(CVAE(bad, 1), InvalidParams);
}
