#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numbers>
#include <random>

#include "test_support.hpp"
#include "urbangen/blockgraph.hpp"
#include "urbangen/errors.hpp"

using namespace urbangen;
using namespace urbangen::geometry;
using namespace urbangen::blockgraph;
using urbangen::testing::rect_polygon;

namespace {

// Block of W x H meters centered at `center`, long axis along `angle`.
struct TestBlock {
  Polygon polygon;
  Vec2 center;
  double angle, W, H;

  // World point from block-local node coordinates in [0,1]^2.
  Vec2 at(double nx, double ny) const {
    return center + rotate({(nx - 0.5) * W, (ny - 0.5) * H}, angle);
  }
  Polygon rect(double nx, double ny, double lw, double lh) const {
    return rect_polygon(at(nx, ny), lw, lh, angle);
  }
};

TestBlock make_block(Vec2 center, double angle, double W, double H) {
  return {rect_polygon(center, W, H, angle), center, angle, W, H};
}

struct GeneratedGrid {
  TestBlock block;
  std::vector<BuildingInput> buildings;
  std::vector<std::pair<int, int>> truth;
};

// Perturbed grid with known row/column ids; rows listed top to bottom.
GeneratedGrid perturbed_grid(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nr(1, 6), nc(1, 8);
  std::uniform_real_distribution<double> ang(0.05, 1.5), jitter(-0.15, 0.15), size(0.45, 0.7);
  std::uniform_real_distribution<double> wdist(80.0, 240.0), aspect(0.4, 0.95);
  const int rows = nr(rng), cols = nc(rng);
  const double W = wdist(rng);
  GeneratedGrid g{make_block({1000.0, -500.0}, ang(rng), W, W * aspect(rng)), {}, {}};
  const double pitch_x = 1.0 / cols, pitch_y = 1.0 / rows;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double sx = size(rng) * pitch_x, sy = size(rng) * pitch_y;
      const double nx = (c + 0.5) * pitch_x + jitter(rng) * (pitch_x - sx);
      const double ny = 1.0 - (r + 0.5) * pitch_y + jitter(rng) * (pitch_y - sy);
      g.buildings.push_back({g.block.rect(nx, ny, sx * g.block.W, sy * g.block.H), 10.0 + r});
      g.truth.push_back({r, c});
    }
  }
  return g;
}

}  // namespace

TEST_CASE("grid_edges: count and order") {
  const auto edges = grid_edges(GridDims{});
  CHECK(edges.size() == 218);
  CHECK(edges.front().kind == EdgeKind::kColGap);
  CHECK(edges.back().kind == EdgeKind::kRowGap);
  for (const GridEdge& e : edges) {
    const int dr = e.to / 12 - e.from / 12, dc = e.to % 12 - e.from % 12;
    CHECK(((dr == 0 && dc == 1) || (dr == 1 && dc == 0)));
  }
}

TEST_CASE("assign_grid: constructed cases") {
  const TestBlock b = make_block({0, 0}, 0.0, 100.0, 50.0);
  const CanonicalFrame f = canonical_frame(b.polygon);

  SUBCASE("single building") {
    const auto a = assign_grid({{b.rect(0.3, 0.6, 10, 10), 5}}, f);
    CHECK(a.slots[0] == std::pair{0, 0});
  }
  SUBCASE("2 x 3 grid") {
    std::vector<BuildingInput> in;
    std::vector<std::pair<int, int>> want;
    // Shuffled input order.
    for (int k : {4, 0, 5, 2, 1, 3}) {
      const int r = k / 3, c = k % 3;
      in.push_back({b.rect(0.2 + 0.3 * c, r == 0 ? 0.7 : 0.3, 8, 8), 5});
      want.push_back({r, c});
    }
    const auto a = assign_grid(in, f);
    CHECK(a.rows == 2);
    for (std::size_t i = 0; i < in.size(); ++i) CHECK(a.slots[i] == want[i]);
  }
}

TEST_CASE("assign_grid: perturbed grids match generator ids") {
  std::mt19937_64 rng(77);
  int agree = 0, total = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const GeneratedGrid g = perturbed_grid(rng);
    const auto a = assign_grid(g.buildings, canonical_frame(g.block.polygon));
    for (std::size_t i = 0; i < g.truth.size(); ++i) {
      agree += a.slots[i] == g.truth[i] ? 1 : 0;
      ++total;
    }
  }
  CHECK(static_cast<double>(agree) / total >= 0.99);
}

TEST_CASE("assign_grid: too dense") {
  const TestBlock b = make_block({0, 0}, 0.0, 400.0, 200.0);
  const CanonicalFrame f = canonical_frame(b.polygon);
  std::vector<BuildingInput> one_row;
  for (int c = 0; c < 13; ++c) one_row.push_back({b.rect((c + 0.5) / 13.0, 0.5, 5, 5), 5});
  CHECK_THROWS_AS(assign_grid(one_row, f), BlockTooDense);
  std::vector<BuildingInput> one_col;
  for (int r = 0; r < 11; ++r) one_col.push_back({b.rect(0.5, (r + 0.5) / 11.0, 5, 5), 5});
  CHECK_THROWS_AS(assign_grid(one_col, f), BlockTooDense);
}

TEST_CASE("edge weights") {
  SUBCASE("single row has no row-gap weight") {
    const TestBlock b = make_block({0, 0}, 0.4, 80.0, 40.0);
    const LayoutGraph g = build_layout_graph(b.polygon, {{b.rect(0.25, 0.5, 10, 10), 9}, {b.rect(0.75, 0.5, 10, 10), 9}});
    int col_edges = 0;
    for (const GridEdge& e : g.edges) {
      if (e.kind == EdgeKind::kRowGap) CHECK(e.weight == 0.0);
      if (e.kind == EdgeKind::kColGap && e.weight > 0) {
        ++col_edges;
        CHECK(e.weight == doctest::Approx(0.5));
      }
    }
    CHECK(col_edges == 1);
  }
  SUBCASE("two rows 10 m apart in a 40 m short extent") {
    const TestBlock b = make_block({5, 5}, 0.2, 80.0, 40.0);
    const std::vector<BuildingInput> in{{b.rect(0.5, 0.5 + 5.0 / 40.0, 6, 4), 9}, {b.rect(0.5, 0.5 - 5.0 / 40.0, 6, 4), 9}};
    const LayoutGraph g = build_layout_graph(b.polygon, in);
    const GridEdge& e = g.edges[110];  // (0,0)-(1,0)
    CHECK(e.kind == EdgeKind::kRowGap);
    CHECK(e.weight == doctest::Approx(0.25).epsilon(1e-9));

    GraphConfig literal;
    literal.literal_edge_axes = true;
    CHECK(build_layout_graph(b.polygon, in, literal).edges[110].weight == doctest::Approx(10.0 / 80.0).epsilon(1e-9));
  }
  SUBCASE("uniform 3 x 3 grid") {
    const TestBlock b = make_block({0, 0}, 0.0, 90.0, 60.0);
    std::vector<BuildingInput> in;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) in.push_back({b.rect((c + 0.5) / 3, (r + 0.5) / 3, 12, 8), 20});
    }
    const LayoutGraph g = build_layout_graph(b.polygon, in);
    double row_w = -1, col_w = -1;
    for (const GridEdge& e : g.edges) {
      if (e.weight == 0.0) continue;
      double& ref = e.kind == EdgeKind::kRowGap ? row_w : col_w;
      if (ref < 0) ref = e.weight;
      CHECK(e.weight == doctest::Approx(ref).epsilon(1e-9));
    }
    CHECK(row_w == doctest::Approx(1.0 / 3));
    CHECK(col_w == doctest::Approx(1.0 / 3));
  }
}

TEST_CASE("build_layout_graph: constructed node") {
  const TestBlock b = make_block({50, 50}, 0.0, 40.0, 40.0);
  const LayoutGraph g = build_layout_graph(b.polygon, {{b.rect(0.5, 0.5, 20, 20), 100.0}});
  const BuildingNode& n = g.nodes[0];
  CHECK(n.e == 1.0);
  CHECK(n.x == doctest::Approx(0.5));
  CHECK(n.y == doctest::Approx(0.5));
  CHECK(n.l == doctest::Approx(0.5));
  CHECK(n.w == doctest::Approx(0.5));
  CHECK(n.h == doctest::Approx(0.5));
  CHECK(n.s == shapelib::ShapeClass::kRect);
  CHECK(n.a >= 0.99);
  CHECK(g.occupied() == 1);
}

TEST_CASE("build_layout_graph: empty block and errors") {
  const TestBlock b = make_block({0, 0}, 0.3, 50.0, 30.0);
  const LayoutGraph g = build_layout_graph(b.polygon, {});
  CHECK(g.occupied() == 0);
  for (const BuildingNode& n : g.nodes) CHECK(n.e == 0.0);
  for (const GridEdge& e : g.edges) CHECK(e.weight == 0.0);
  CHECK(degraph(g, b.polygon).empty());
  CHECK_THROWS_AS(build_layout_graph(b.polygon, {{b.rect(0.5, 0.5, 5, 5), 0.0}}), NonPositiveHeight);
}

TEST_CASE("build_layout_graph: left packing and rigid-motion invariance") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    GeneratedGrid gg = perturbed_grid(rng);
    const LayoutGraph g = build_layout_graph(gg.block.polygon, gg.buildings);
    CHECK(g.occupied() == static_cast<int>(gg.buildings.size()));
    for (int r = 0; r < 10; ++r) {
      for (int c = 1; c < 12; ++c) {
        if (g.nodes[static_cast<std::size_t>(r * 12 + c)].e > 0) CHECK(g.nodes[static_cast<std::size_t>(r * 12 + c - 1)].e > 0);
      }
    }
    // Rotation small enough to keep the long-axis angle inside [0, pi).
    const double dtheta = 0.05;
    const Vec2 shift{-321.0, 77.0};
    auto move = [&](const Polygon& p) { return transform(p, [&](Vec2 v) { return rotate(v, dtheta) + shift; }); };
    std::vector<BuildingInput> moved;
    for (const auto& bi : gg.buildings) moved.push_back({move(bi.footprint), bi.height});
    const LayoutGraph h = build_layout_graph(move(gg.block.polygon), moved);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      CHECK(h.nodes[i].e == g.nodes[i].e);
      CHECK(h.nodes[i].x == doctest::Approx(g.nodes[i].x).epsilon(1e-9));
      CHECK(h.nodes[i].y == doctest::Approx(g.nodes[i].y).epsilon(1e-9));
      CHECK(h.nodes[i].l == doctest::Approx(g.nodes[i].l).epsilon(1e-9));
      CHECK(h.nodes[i].w == doctest::Approx(g.nodes[i].w).epsilon(1e-9));
      CHECK(h.nodes[i].s == g.nodes[i].s);
    }
    for (std::size_t k = 0; k < g.edges.size(); ++k) CHECK(h.edges[k].weight == doctest::Approx(g.edges[k].weight).epsilon(1e-9));
  }
}

TEST_CASE("degraph: round trip recovers rectangles") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    const GeneratedGrid gg = perturbed_grid(rng);
    const LayoutGraph g = build_layout_graph(gg.block.polygon, gg.buildings);
    const auto out = degraph(g, gg.block.polygon);
    REQUIRE(out.size() == gg.buildings.size());
    // Output order is slot order; map back through the assignment.
    const auto asg = assign_grid(gg.buildings, g.frame);
    for (std::size_t i = 0; i < gg.buildings.size(); ++i) {
      const int slot = asg.slots[i].first * 12 + asg.slots[i].second;
      std::size_t k = 0;
      for (int s = 0; s < slot; ++s) k += g.nodes[static_cast<std::size_t>(s)].e > 0 ? 1 : 0;
      const Bounds want = canonical_box(gg.buildings[i].footprint, g.frame);
      const Bounds got = canonical_box(out[k].footprint, g.frame);
      CHECK(std::abs((want.lo.x + want.hi.x) - (got.lo.x + got.hi.x)) / 2 < 1e-6);
      CHECK(std::abs((want.lo.y + want.hi.y) - (got.lo.y + got.hi.y)) / 2 < 1e-6);
      CHECK(polygon_iou(out[k].footprint, gg.buildings[i].footprint) >= 0.95);
      CHECK(out[k].height == doctest::Approx(gg.buildings[i].height));
    }
  }
}

TEST_CASE("degraph: L-shaped buildings keep their outline") {
  const TestBlock b = make_block({0, 0}, 0.7, 120.0, 60.0);
  const Polygon l_unit = shapelib::posed_template(shapelib::ShapeClass::kL, {{0.4, 0.6}}, 3);
  const Polygon fp = transform(l_unit, [&](Vec2 v) { return b.at(0.3 + 0.25 * v.x, 0.2 + 0.5 * v.y); });
  const LayoutGraph g = build_layout_graph(b.polygon, {{fp, 30.0}});
  CHECK(g.nodes[0].s == shapelib::ShapeClass::kL);
  const auto out = degraph(g, b.polygon);
  REQUIRE(out.size() == 1);
  CHECK(polygon_iou(out[0].footprint, fp) >= 0.99);
}

TEST_CASE("degraph: clipping keeps buildings inside the block") {
  const TestBlock b = make_block({10, 20}, 0.3, 100.0, 50.0);
  const CanonicalFrame f = canonical_frame(b.polygon);
  std::vector<BuildingNode> nodes(120);
  nodes[0] = {1.0, 0.95, 0.5, 0.2, 0.3, 0.1, shapelib::ShapeClass::kRect, 1.0};  // straddles the right edge
  nodes[1] = {1.0, 0.2, 0.98, 0.1, 0.2, 0.1, shapelib::ShapeClass::kU, 1.0};
  nodes[2] = {1.0, 1.0, 1.0, 0.001, 0.001, 0.1, shapelib::ShapeClass::kRect, 1.0};  // vanishes
  const auto out = degraph(nodes, nullptr, f, b.polygon);
  REQUIRE(out.size() == 2);
  for (const auto& gb : out) {
    CHECK(std::abs(intersection_area(gb.footprint, b.polygon) - polygon_area(gb.footprint)) <=
          1e-9 * polygon_area(gb.footprint));
    CHECK(gb.height == doctest::Approx(20.0));
  }
}
