#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance suite.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "test_support.hpp"
#include "urbangen/blockgraph.hpp"
#include "urbangen/geometry.hpp"
#include "urbangen/model.hpp"
#include "urbangen/shapelib.hpp"

namespace urbangen::testing {

using model::Matrix;
using shapelib::ShapeParams;

inline Matrix random_matrix(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

// Per-head attention written out with separate matrices and explicit
// neighbour sums over an edge list.
inline Matrix naive_gat(const Matrix& h, int n, const std::vector<std::tuple<int, int, double>>& edges, const Matrix& w,
                 const Matrix& a_src, const Matrix& a_dst, int heads, double slope) {
  const int dh = static_cast<int>(w.cols()) / heads;
  Matrix out(n, w.cols());
  for (int k = 0; k < heads; ++k) {
    const Matrix wk = w.block(0, k * dh, w.rows(), dh);
    const Matrix hp = h * wk;
    for (int i = 0; i < n; ++i) {
      std::vector<std::pair<int, double>> nbr{{i, 1.0}};
      for (const auto& [a, b, wt] : edges) {
        if (a == i) nbr.emplace_back(b, wt);
        if (b == i) nbr.emplace_back(a, wt);
      }
      std::vector<double> score;
      for (const auto& [j, wt] : nbr) {
        const double raw = a_src.row(k).dot(hp.row(i)) + a_dst.row(k).dot(hp.row(j));
        score.push_back(wt * (raw > 0 ? raw : slope * raw));
      }
      double denom = 0.0;
      for (double s : score) denom += std::exp(s);
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(dh);
      for (std::size_t q = 0; q < nbr.size(); ++q) acc += std::exp(score[q]) / denom * hp.row(nbr[q].first);
      for (int d = 0; d < dh; ++d) out(i, k * dh + d) = acc(d) > 0 ? acc(d) : std::expm1(acc(d));
    }
  }
  return out;
}

struct RandomGraph {
  int n;
  std::vector<blockgraph::GridEdge> edges;
  std::vector<std::tuple<int, int, double>> list;
};

inline RandomGraph random_graph(std::mt19937_64& rng, int n, double density) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  RandomGraph g{n, {}, {}};
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (u01(rng) < density) {
        const double w = u01(rng);
        g.edges.push_back({i, j, blockgraph::EdgeKind::kColGap, w});
        g.list.emplace_back(i, j, w);
      }
    }
  }
  return g;
}

// Transportation problem between masses 1/n and 1/m solved as integer
// min-cost flow (supply m per x, demand n per y) with Bellman-Ford
// successive shortest paths.
inline double transport_oracle(const std::vector<double>& xs, const std::vector<double>& ys) {
  const int n = static_cast<int>(xs.size()), m = static_cast<int>(ys.size());
  const int src = n + m, snk = n + m + 1, nv = n + m + 2;
  struct Arc {
    int to, rev;
    long cap;
    double cost;
  };
  std::vector<std::vector<Arc>> g(static_cast<std::size_t>(nv));
  auto add = [&](int a, int b, long cap, double cost) {
    g[a].push_back({b, static_cast<int>(g[b].size()), cap, cost});
    g[b].push_back({a, static_cast<int>(g[a].size()) - 1, 0, -cost});
  };
  for (int i = 0; i < n; ++i) add(src, i, m, 0.0);
  for (int j = 0; j < m; ++j) add(n + j, snk, n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) add(i, n + j, n * m, std::abs(xs[i] - ys[j]));
  }
  long flow = 0;
  double cost = 0.0;
  while (flow < static_cast<long>(n) * m) {
    std::vector<double> dist(nv, 1e300);
    std::vector<int> pv(nv, -1), pe(nv, -1);
    dist[src] = 0.0;
    for (int it = 0; it < nv; ++it) {
      bool changed = false;
      for (int a = 0; a < nv; ++a) {
        if (dist[a] >= 1e300) continue;
        for (std::size_t e = 0; e < g[a].size(); ++e) {
          const Arc& arc = g[a][e];
          if (arc.cap > 0 && dist[a] + arc.cost < dist[arc.to] - 1e-12) {
            dist[arc.to] = dist[a] + arc.cost;
            pv[arc.to] = a;
            pe[arc.to] = static_cast<int>(e);
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    long push = static_cast<long>(n) * m - flow;
    for (int v = snk; v != src; v = pv[v]) push = std::min(push, g[pv[v]][pe[v]].cap);
    for (int v = snk; v != src; v = pv[v]) {
      Arc& arc = g[pv[v]][pe[v]];
      arc.cap -= push;
      g[v][arc.rev].cap += push;
      cost += static_cast<double>(push) * arc.cost;
    }
    flow += push;
  }
  return cost / static_cast<double>(n * m);
}

struct ObjObject {
  std::string name;
  std::vector<std::array<double, 3>> v;
  std::vector<std::array<int, 3>> f;  // 0-based within the object
};

// Minimal OBJ reader for the subset the exporter writes.
inline std::vector<ObjObject> parse_obj(const std::string& text) {
  std::vector<ObjObject> objects;
  std::vector<std::array<double, 3>> all;
  std::size_t base = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "o") {
      base = all.size();
      objects.push_back({});
      ls >> objects.back().name;
    } else if (tag == "v") {
      std::array<double, 3> p{};
      ls >> p[0] >> p[1] >> p[2];
      all.push_back(p);
      objects.back().v.push_back(p);
    } else if (tag == "f") {
      std::array<long, 3> idx{};
      ls >> idx[0] >> idx[1] >> idx[2];
      objects.back().f.push_back({static_cast<int>(idx[0] - 1 - static_cast<long>(base)),
                                  static_cast<int>(idx[1] - 1 - static_cast<long>(base)),
                                  static_cast<int>(idx[2] - 1 - static_cast<long>(base))});
    }
  }
  return objects;
}

// Every directed edge appears once and its reverse once: closed and
// consistently wound.
inline bool watertight(const ObjObject& o) {
  std::map<std::pair<int, int>, int> directed;
  for (const auto& t : o.f) {
    for (int k = 0; k < 3; ++k) ++directed[{t[k], t[(k + 1) % 3]}];
  }
  for (const auto& [e, count] : directed) {
    if (count != 1) return false;
    auto rev = directed.find({e.second, e.first});
    if (rev == directed.end() || rev->second != 1) return false;
  }
  return true;
}

// Divergence theorem: sum of signed tetrahedra against the origin, taken
// relative to the first vertex to limit cancellation.
inline double signed_volume(const ObjObject& o) {
  const auto& c = o.v[0];
  double vol = 0.0;
  for (const auto& t : o.f) {
    std::array<std::array<double, 3>, 3> p{};
    for (int k = 0; k < 3; ++k) {
      for (int d = 0; d < 3; ++d) p[k][d] = o.v[static_cast<std::size_t>(t[k])][d] - c[d];
    }
    vol += p[0][0] * (p[1][1] * p[2][2] - p[1][2] * p[2][1]) - p[0][1] * (p[1][0] * p[2][2] - p[1][2] * p[2][0]) +
           p[0][2] * (p[1][0] * p[2][1] - p[1][1] * p[2][0]);
  }
  return vol / 6.0;
}

inline double shoelace(const Ring& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const Vec2 a = r[i], b = r[(i + 1) % r.size()];
    s += a.x * b.y - b.x * a.y;
  }
  return s / 2.0;
}

inline double footprint_area(const Polygon& p) {
  double a = shoelace(p.outer());
  for (const auto& h : p.holes()) a += shoelace(h);
  return a;
}

inline Polygon embed(const Polygon& unit, double sx, double sy, double angle, Vec2 shift) {
  return geometry::transform(unit, [&](Vec2 v) { return geometry::rotate({v.x * sx, v.y * sy}, angle) + shift; });
}

inline ShapeParams random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.02, 0.98);
  ShapeParams p;
  p.values = {u(rng), u(rng)};
  return p;
}

// Tiny model for gradient checks: 2 x 3 slots, hidden 8, latent 4, one head.
inline model::ModelConfig tiny_model_config() {
  model::ModelConfig c;
  c.dims = blockgraph::GridDims{2, 3};
  c.hidden = 8;
  c.latent = 4;
  c.heads = 1;
  c.layers = 3;
  c.height_bins = 6;
  c.edge_bins = 5;
  return c;
}

// A 2 x 3 layout from a 60 x 40 m block with `count` buildings.
inline blockgraph::LayoutGraph tiny_graph(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-1.5, 1.5);
  std::uniform_real_distribution<double> height(5.0, 150.0);
  const auto block = rect_polygon({10, 20}, 60.0, 40.0, 0.3);
  std::vector<blockgraph::BuildingInput> b;
  for (int k = 0; k < count; ++k) {
    const int r = k / 3, c = k % 3;
    const geometry::Vec2 local{-20.0 + 20.0 * c + jitter(rng), 10.0 - 20.0 * r + jitter(rng)};
    b.push_back({rect_polygon(geometry::Vec2{10, 20} + geometry::rotate(local, 0.3), 10.0 + jitter(rng),
                              8.0 + jitter(rng), 0.3),
                 height(rng)});
  }
  blockgraph::GraphConfig gc;
  gc.dims = blockgraph::GridDims{2, 3};
  return blockgraph::build_layout_graph(block, b, gc, "tiny");
}

}  // namespace urbangen::testing
