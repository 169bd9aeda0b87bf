#pragma once

#include <string>
#include <utility>
#include <vector>

#include "urbangen/geometry.hpp"
#include "urbangen/shapelib.hpp"

namespace urbangen::blockgraph {

struct GridDims {
  int rows = 10;
  int cols = 12;

  int slots() const { return rows * cols; }
  int slot(int r, int c) const { return r * cols + c; }
  friend bool operator==(const GridDims&, const GridDims&) = default;
};

struct GraphConfig {
  GridDims dims;
  double height_cap = 200.0;  // meters
  double inset = 0.5;         // meters, clipping margin inside the block
  double min_area = 4.0;      // square meters, smaller clipped pieces are dropped
  double row_tau_min = 0.05;  // canonical units
  // Normalize row gaps by W and column gaps by H, as the formula is written,
  // instead of by the extent along the measured axis.
  bool literal_edge_axes = false;
};

// One slot. x, y are the building's box center in the block frame mapped to
// [0,1]; l, w its extents along the block's long and short axis divided by
// W and H. Empty slots hold zeros and RECT.
struct BuildingNode {
  double e = 0.0;
  double x = 0.0;
  double y = 0.0;
  double l = 0.0;
  double w = 0.0;
  double h = 0.0;
  shapelib::ShapeClass s = shapelib::ShapeClass::kRect;
  double a = 0.0;
};

// Template detail that is not a model feature but lets decoding reproduce
// the fitted outline.
struct NodeAux {
  shapelib::ShapeParams params;
  int pose = 0;
};

enum class EdgeKind { kRowGap, kColGap };

struct GridEdge {
  int from = 0;
  int to = 0;
  EdgeKind kind = EdgeKind::kColGap;
  double weight = 0.0;
};

struct BuildingInput {
  geometry::Polygon footprint;
  double height = 0.0;
};

struct LayoutGraph {
  GridDims dims;
  std::vector<BuildingNode> nodes;
  std::vector<NodeAux> aux;
  std::vector<GridEdge> edges;
  geometry::CanonicalFrame frame;
  std::string block_id;

  int occupied() const;
};

// All 4-neighbour slot pairs with zero weight: column gaps row by row, then
// row gaps.
std::vector<GridEdge> grid_edges(GridDims dims);

// Row and column of every building, in input order.
struct SlotAssignment {
  std::vector<std::pair<int, int>> slots;
  int rows = 0;
};

// Box of a footprint in canonical block coordinates.
geometry::Bounds canonical_box(const geometry::Polygon& footprint, const geometry::CanonicalFrame& frame);

// Clusters box centers into rows (top to bottom, new row when the sorted
// y gap exceeds tau) and orders each row by x. Throws BlockTooDense.
SlotAssignment assign_grid(const std::vector<BuildingInput>& buildings, const geometry::CanonicalFrame& frame,
                           const GraphConfig& cfg = {});

// Fills the weights of edges whose endpoints are both occupied; others are 0.
void compute_edge_weights(LayoutGraph& g, const GraphConfig& cfg = {});

// Throws BlockTooDense, NonPositiveHeight, InvalidGeometry.
LayoutGraph build_layout_graph(const geometry::Polygon& block, const std::vector<BuildingInput>& buildings,
                               const GraphConfig& cfg = {}, std::string block_id = {});

struct GeneratedBuilding {
  geometry::Polygon footprint;
  double height = 0.0;
  shapelib::ShapeClass shape = shapelib::ShapeClass::kRect;
};

struct GeneratedLayout {
  std::string block_id;
  int land_use = 0;
  std::vector<GeneratedBuilding> buildings;
};

// Rebuilds world footprints from node fields. `aux` may be null (default
// template parameters); otherwise it is indexed like `nodes`. Outlines are
// clipped to the block inset; pieces under min_area are dropped.
std::vector<GeneratedBuilding> degraph(const std::vector<BuildingNode>& nodes, const std::vector<NodeAux>* aux,
                                       const geometry::CanonicalFrame& frame, const geometry::Polygon& block,
                                       const GraphConfig& cfg = {});
std::vector<GeneratedBuilding> degraph(const LayoutGraph& g, const geometry::Polygon& block,
                                       const GraphConfig& cfg = {});

}  // namespace urbangen::blockgraph
