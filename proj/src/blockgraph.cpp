#include "urbangen/blockgraph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "urbangen/errors.hpp"
#include "urbangen/log.hpp"

namespace urbangen::blockgraph {

using geometry::Bounds;
using geometry::CanonicalFrame;
using geometry::Polygon;
using geometry::Vec2;

int LayoutGraph::occupied() const {
  return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const BuildingNode& n) { return n.e >= 0.5; }));
}

std::vector<GridEdge> grid_edges(GridDims dims) {
  std::vector<GridEdge> edges;
  edges.reserve(static_cast<std::size_t>(dims.rows * (dims.cols - 1) + (dims.rows - 1) * dims.cols));
  for (int r = 0; r < dims.rows; ++r) {
    for (int c = 0; c + 1 < dims.cols; ++c) edges.push_back({dims.slot(r, c), dims.slot(r, c + 1), EdgeKind::kColGap, 0.0});
  }
  for (int r = 0; r + 1 < dims.rows; ++r) {
    for (int c = 0; c < dims.cols; ++c) edges.push_back({dims.slot(r, c), dims.slot(r + 1, c), EdgeKind::kRowGap, 0.0});
  }
  return edges;
}

Bounds canonical_box(const Polygon& footprint, const CanonicalFrame& frame) {
  std::vector<Vec2> pts;
  pts.reserve(footprint.outer().size());
  for (const Vec2& v : footprint.outer()) pts.push_back(geometry::to_canonical(v, frame));
  return geometry::bounds(pts);
}

SlotAssignment assign_grid(const std::vector<BuildingInput>& buildings, const CanonicalFrame& frame,
                           const GraphConfig& cfg) {
  const GridDims dims = cfg.dims;
  const std::size_t n = buildings.size();
  SlotAssignment out;
  out.slots.assign(n, {0, 0});
  if (n == 0) return out;
  if (static_cast<int>(n) > dims.slots()) {
    throw BlockTooDense(std::to_string(n) + " buildings exceed " + std::to_string(dims.slots()) + " slots");
  }

  std::vector<Vec2> centers(n);
  std::vector<double> heights(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Bounds b = canonical_box(buildings[i].footprint, frame);
    centers[i] = {(b.lo.x + b.hi.x) / 2, (b.lo.y + b.hi.y) / 2};
    heights[i] = b.hi.y - b.lo.y;
  }
  std::nth_element(heights.begin(), heights.begin() + static_cast<std::ptrdiff_t>(n / 2), heights.end());
  double median = heights[n / 2];
  if (n % 2 == 0) {
    median = (median + *std::max_element(heights.begin(), heights.begin() + static_cast<std::ptrdiff_t>(n / 2))) / 2;
  }
  const double tau = std::max(cfg.row_tau_min, median);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return centers[a].y > centers[b].y; });

  std::vector<std::vector<std::size_t>> rows{{order[0]}};
  for (std::size_t k = 1; k < n; ++k) {
    if (centers[order[k - 1]].y - centers[order[k]].y > tau) rows.emplace_back();
    rows.back().push_back(order[k]);
  }
  if (static_cast<int>(rows.size()) > dims.rows) {
    throw BlockTooDense(std::to_string(rows.size()) + " rows exceed " + std::to_string(dims.rows));
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto& row = rows[r];
    if (static_cast<int>(row.size()) > dims.cols) {
      throw BlockTooDense("row " + std::to_string(r) + " holds " + std::to_string(row.size()) + " buildings, more than " +
                          std::to_string(dims.cols));
    }
    std::stable_sort(row.begin(), row.end(), [&](std::size_t a, std::size_t b) { return centers[a].x < centers[b].x; });
    for (std::size_t c = 0; c < row.size(); ++c) out.slots[row[c]] = {static_cast<int>(r), static_cast<int>(c)};
  }
  out.rows = static_cast<int>(rows.size());
  return out;
}

void compute_edge_weights(LayoutGraph& g, const GraphConfig& cfg) {
  const GridDims dims = g.dims;
  // Mean y per row over occupied slots.
  std::vector<double> row_mean(static_cast<std::size_t>(dims.rows), 0.0);
  std::vector<int> row_count(static_cast<std::size_t>(dims.rows), 0);
  for (int r = 0; r < dims.rows; ++r) {
    for (int c = 0; c < dims.cols; ++c) {
      const BuildingNode& nd = g.nodes[static_cast<std::size_t>(dims.slot(r, c))];
      if (nd.e < 0.5) continue;
      row_mean[static_cast<std::size_t>(r)] += nd.y;
      ++row_count[static_cast<std::size_t>(r)];
    }
    if (row_count[static_cast<std::size_t>(r)] > 0) row_mean[static_cast<std::size_t>(r)] /= row_count[static_cast<std::size_t>(r)];
  }
  // Node coordinates are already divided by the extent along their own axis;
  // the literal variant swaps the divisor.
  const double aspect = g.frame.height / g.frame.width;
  for (GridEdge& e : g.edges) {
    const BuildingNode& a = g.nodes[static_cast<std::size_t>(e.from)];
    const BuildingNode& b = g.nodes[static_cast<std::size_t>(e.to)];
    if (a.e < 0.5 || b.e < 0.5) {
      e.weight = 0.0;
      continue;
    }
    double w = 0.0;
    if (e.kind == EdgeKind::kColGap) {
      w = std::abs(b.x - a.x);
      if (cfg.literal_edge_axes) w /= aspect;
    } else {
      const int ra = e.from / dims.cols;
      const int rb = e.to / dims.cols;
      w = std::abs(row_mean[static_cast<std::size_t>(ra)] - row_mean[static_cast<std::size_t>(rb)]);
      if (cfg.literal_edge_axes) w *= aspect;
    }
    e.weight = std::clamp(w, 0.0, 1.0);
  }
}

LayoutGraph build_layout_graph(const Polygon& block, const std::vector<BuildingInput>& buildings,
                               const GraphConfig& cfg, std::string block_id) {
  if (block.empty()) throw InvalidGeometry("empty block polygon");
  for (std::size_t i = 0; i < buildings.size(); ++i) {
    if (!(buildings[i].height > 0.0)) {
      throw NonPositiveHeight("building " + std::to_string(i) + " has height " + std::to_string(buildings[i].height));
    }
  }
  LayoutGraph g;
  g.dims = cfg.dims;
  g.frame = geometry::canonical_frame(block);
  g.block_id = std::move(block_id);
  g.nodes.assign(static_cast<std::size_t>(g.dims.slots()), BuildingNode{});
  g.aux.assign(static_cast<std::size_t>(g.dims.slots()), NodeAux{});
  g.edges = grid_edges(g.dims);

  const SlotAssignment asg = assign_grid(buildings, g.frame, cfg);
  for (std::size_t i = 0; i < buildings.size(); ++i) {
    const Polygon& fp = buildings[i].footprint;
    const Bounds b = canonical_box(fp, g.frame);
    const auto [r, c] = asg.slots[i];
    const auto slot = static_cast<std::size_t>(g.dims.slot(r, c));

    BuildingNode& nd = g.nodes[slot];
    nd.e = 1.0;
    nd.x = std::clamp((b.lo.x + b.hi.x) / 4 + 0.5, 0.0, 1.0);
    nd.y = std::clamp((b.lo.y + b.hi.y) / 4 + 0.5, 0.0, 1.0);
    nd.l = std::clamp((b.hi.x - b.lo.x) / 2, 0.0, 1.0);
    nd.w = std::clamp((b.hi.y - b.lo.y) / 2, 0.0, 1.0);
    nd.h = std::clamp(buildings[i].height / cfg.height_cap, 0.0, 1.0);
    const shapelib::FitResult fit = shapelib::fit_shape(fp);
    nd.s = fit.shape;
    nd.a = fit.iou;

    // Template detail in the block-aligned box, which is what decoding uses.
    geometry::RotatedRect box;
    box.center = geometry::from_canonical({(b.lo.x + b.hi.x) / 2, (b.lo.y + b.hi.y) / 2}, g.frame);
    box.angle = g.frame.rotation;
    box.extent_long = (b.hi.x - b.lo.x) * g.frame.width / 2;
    box.extent_short = (b.hi.y - b.lo.y) * g.frame.height / 2;
    const shapelib::FitResult aligned = shapelib::fit_class_in_rect(fp, box, fit.shape);
    g.aux[slot] = NodeAux{aligned.params, aligned.pose};
  }
  compute_edge_weights(g, cfg);
  return g;
}

namespace {

const Polygon* largest(const std::vector<Polygon>& parts) {
  const Polygon* best = nullptr;
  double best_area = -1.0;
  for (const Polygon& p : parts) {
    const double a = geometry::polygon_area(p);
    if (a > best_area) {
      best_area = a;
      best = &p;
    }
  }
  return best;
}

}  // namespace

std::vector<GeneratedBuilding> degraph(const std::vector<BuildingNode>& nodes, const std::vector<NodeAux>* aux,
                                       const CanonicalFrame& frame, const Polygon& block, const GraphConfig& cfg) {
  std::vector<GeneratedBuilding> out;
  std::vector<Polygon> region;
  bool region_ready = false;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const BuildingNode& nd = nodes[i];
    if (nd.e < 0.5) continue;
    if (!region_ready) {
      region = cfg.inset > 0.0 ? geometry::inset(block, cfg.inset) : std::vector<Polygon>{block};
      region_ready = true;
    }
    const double height = nd.h * cfg.height_cap;
    if (!(height > 0.0)) {
      log_info("slot " + std::to_string(i) + " dropped: zero height");
      continue;
    }
    const NodeAux detail = aux != nullptr ? (*aux)[i] : NodeAux{};
    const double l = std::clamp(nd.l, 1e-4, 1.0);
    const double w = std::clamp(nd.w, 1e-4, 1.0);
    const double cx = 2.0 * nd.x - 1.0;
    const double cy = 2.0 * nd.y - 1.0;
    const Polygon unit = shapelib::posed_template(nd.s, detail.params, detail.pose);
    const Polygon world = geometry::transform(unit, [&](Vec2 v) {
      return geometry::from_canonical({cx + (2.0 * v.x - 1.0) * l, cy + (2.0 * v.y - 1.0) * w}, frame);
    });

    std::vector<Polygon> pieces;
    for (const Polygon& r : region) {
      for (Polygon& p : geometry::clip(world, r)) pieces.push_back(std::move(p));
    }
    const Polygon* keep = largest(pieces);
    if (keep == nullptr || geometry::polygon_area(*keep) < cfg.min_area) {
      log_info("slot " + std::to_string(i) + " dropped: clipped area below minimum");
      continue;
    }
    out.push_back({*keep, height, nd.s});
  }
  return out;
}

std::vector<GeneratedBuilding> degraph(const LayoutGraph& g, const Polygon& block, const GraphConfig& cfg) {
  return degraph(g.nodes, &g.aux, g.frame, block, cfg);
}

}  // namespace urbangen::blockgraph
