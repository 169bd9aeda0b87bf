#pragma once

#include <string>
#include <vector>

#include "urbangen/blockgraph.hpp"
#include "urbangen/geometry.hpp"

namespace urbangen::metrics {

struct LayoutSample {
  geometry::Polygon block;
  std::vector<blockgraph::BuildingInput> buildings;
};

LayoutSample to_sample(const geometry::Polygon& block, const blockgraph::GeneratedLayout& layout);

struct MetricsReport {
  double l_sim = 0.0;
  double opr = 0.0;
  double obr = 0.0;
  double wd_bbx = 0.0;
  double wd_count = 0.0;
  std::size_t blocks = 0;
  std::size_t gen_buildings = 0;
  std::size_t ref_buildings = 0;

  std::string to_json() const;
};

// Sum of pairwise intersection areas over the sum of building areas, capped
// at 1 (three or more buildings stacked on one spot can exceed it).
double overlap_ratio(const LayoutSample& s);

// Fraction of buildings with more than eps of their own area outside the
// block.
double out_of_block_ratio(const LayoutSample& s, double eps = 0.01);

// 1-Wasserstein distance between two empirical distributions.
// Throws EmptyDistribution.
double wd_1d(std::vector<double> xs, std::vector<double> ys);

// Per-building box descriptors in the block's canonical frame, in the same
// units as the graph node fields: center x, center y, extent l, extent w.
struct BoxDescriptor {
  double x = 0.0;
  double y = 0.0;
  double l = 0.0;
  double w = 0.0;
};
std::vector<BoxDescriptor> box_descriptors(const LayoutSample& s);

double wd_count(const std::vector<LayoutSample>& gen, const std::vector<LayoutSample>& ref);
double wd_bbx(const std::vector<LayoutSample>& gen, const std::vector<LayoutSample>& ref);

// Minimum-cost assignment of rows to columns for a rectangular cost matrix
// (row-major, rows x cols). Returns the column of each row, or -1 when the
// row is left unmatched (rows > cols).
std::vector<int> min_cost_assignment(const std::vector<double>& cost, int rows, int cols);

// Buildings matched on box-center distance; sum of matched box IoU over the
// larger building count. Both empty gives 1.
double layout_similarity(const LayoutSample& a, const LayoutSample& b);

// Throws AlignmentError on mismatched lengths.
MetricsReport evaluate(const std::vector<LayoutSample>& gen, const std::vector<LayoutSample>& ref);

}  // namespace urbangen::metrics
