#include "urbangen/shapelib.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "urbangen/errors.hpp"

namespace urbangen::shapelib {

using geometry::Polygon;
using geometry::PreparedPolygon;
using geometry::Ring;
using geometry::Vec2;

namespace {

struct Range {
  double lo, hi;
};

// Geometric ranges per class and parameter. They are chosen so that no
// template in range beats RECT on a disk-like footprint and every template
// stays clearly apart from RECT.
Range param_range(ShapeClass c, int i) {
  switch (c) {
    case ShapeClass::kU:
      return i == 0 ? Range{0.15, 0.35} : Range{0.3, 0.7};
    case ShapeClass::kH:
      return i == 0 ? Range{0.15, 0.35} : Range{0.2, 0.6};
    case ShapeClass::kT:
      return Range{0.25, 0.55};
    case ShapeClass::kTriangle:
      return Range{0.0, 1.0};
    default:
      return Range{0.3, 0.7};
  }
}

Ring box_ring(double x0, double y0, double x1, double y1) { return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}; }

// A template as the unit box minus disjoint convex notches, plus the explicit
// outline for constructing the polygon.
struct TemplateGeom {
  Ring outer;
  std::vector<Ring> holes;
  std::vector<Ring> notches;
  double notch_area = 0.0;
};

TemplateGeom build_geom(ShapeClass c, double p0, double p1) {
  TemplateGeom g;
  switch (c) {
    case ShapeClass::kRect:
      g.outer = box_ring(0, 0, 1, 1);
      break;
    case ShapeClass::kU: {
      const double a = p0, b = p1;
      g.outer = {{0, 0}, {1, 0}, {1, 1}, {1 - a, 1}, {1 - a, b}, {a, b}, {a, 1}, {0, 1}};
      g.notches = {box_ring(a, b, 1 - a, 1)};
      break;
    }
    case ShapeClass::kL: {
      const double a = p0, b = p1;
      g.outer = {{0, 0}, {1, 0}, {1, b}, {a, b}, {a, 1}, {0, 1}};
      g.notches = {box_ring(a, b, 1, 1)};
      break;
    }
    case ShapeClass::kH: {
      const double a = p0;
      const double y0 = (1 - p1) / 2, y1 = (1 + p1) / 2;
      g.outer = {{0, 0},      {a, 0},  {a, y0}, {1 - a, y0}, {1 - a, 0}, {1, 0},
                 {1, 1},      {1 - a, 1}, {1 - a, y1}, {a, y1}, {a, 1}, {0, 1}};
      g.notches = {box_ring(a, 0, 1 - a, y0), box_ring(a, y1, 1 - a, 1)};
      break;
    }
    case ShapeClass::kT: {
      const double x0 = (1 - p0) / 2, x1 = (1 + p0) / 2, y0 = 1 - p1;
      g.outer = {{x0, 0}, {x1, 0}, {x1, y0}, {1, y0}, {1, 1}, {0, 1}, {0, y0}, {x0, y0}};
      g.notches = {box_ring(0, 0, x0, y0), box_ring(x1, 0, 1, y0)};
      break;
    }
    case ShapeClass::kX: {
      // Two diagonal bands of widths p0 (main) and p1 (anti) measured along
      // the box sides; four triangular notches remain, one per side.
      const double d1 = p0 / 2, d2 = p1 / 2, bb = 1 - d1 - d2;
      const Vec2 ab{(1 + d1 - d2) / 2, bb / 2};
      const Vec2 ar{1 - bb / 2, (1 + d2 - d1) / 2};
      const Vec2 at{(1 - d1 + d2) / 2, 1 - bb / 2};
      const Vec2 al{bb / 2, (1 - d2 + d1) / 2};
      g.outer = {{0, 0}, {d1, 0}, ab, {1 - d2, 0}, {1, 0}, {1, d2}, ar, {1, 1 - d1},
                 {1, 1}, {1 - d1, 1}, at, {d2, 1}, {0, 1}, {0, 1 - d2}, al, {0, d1}};
      g.notches = {{{d1, 0}, {1 - d2, 0}, ab},
                   {{1, d2}, {1, 1 - d1}, ar},
                   {{1 - d1, 1}, {d2, 1}, at},
                   {{0, 1 - d2}, {0, d1}, al}};
      break;
    }
    case ShapeClass::kCourtyard: {
      const Ring hole = box_ring((1 - p0) / 2, (1 - p1) / 2, (1 + p0) / 2, (1 + p1) / 2);
      g.outer = box_ring(0, 0, 1, 1);
      g.holes = {Ring(hole.rbegin(), hole.rend())};
      g.notches = {hole};
      break;
    }
    case ShapeClass::kTriangle: {
      const double p = p0;
      g.outer = {{0, 0}, {1, 0}, {p, 1}};
      g.notches = {{{0, 0}, {p, 1}, {0, 1}}, {{1, 0}, {1, 1}, {p, 1}}};
      break;
    }
  }
  for (const Ring& n : g.notches) g.notch_area += geometry::ring_signed_area(n);
  return g;
}

constexpr std::array<int, 1> kPosesOne{0};
constexpr std::array<int, 2> kPosesTwo{0, 4};
constexpr std::array<int, 4> kPosesCorner{0, 1, 2, 3};
constexpr std::array<int, 4> kPosesSide{0, 2, 4, 5};

double clamp_param(double p) { return std::clamp(p, 1e-4, 1.0 - 1e-4); }

// IoU of a unit-box template against a prepared footprint lying in the box.
double template_iou(const PreparedPolygon& fp, ShapeClass c, const ShapeParams& np) {
  const int k = param_count(c);
  const double p0 = k > 0 ? geometric_param(c, 0, np.values[0]) : 0.0;
  const double p1 = k > 1 ? geometric_param(c, 1, np.values[1]) : 0.0;
  const TemplateGeom g = build_geom(c, p0, p1);
  double inter = fp.area();
  for (const Ring& n : g.notches) inter -= fp.intersection_area_convex(n);
  inter = std::max(0.0, inter);
  const double uni = fp.area() + (1.0 - g.notch_area) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

struct Candidate {
  ShapeClass shape;
  int pose;
  ShapeParams params;
  double iou;
};

// Compass search on the normalized parameters, halving the step on failure.
void refine(const PreparedPolygon& fp, Candidate& cand) {
  const int k = param_count(cand.shape);
  if (k == 0) return;
  double step = 0.05;
  int evaluations = 0;
  while (step > 1e-8 && evaluations < 4000) {
    bool improved = false;
    for (int d = 0; d < k; ++d) {
      for (double dir : {1.0, -1.0}) {
        ShapeParams q = cand.params;
        q.values[static_cast<std::size_t>(d)] = clamp_param(q.values[static_cast<std::size_t>(d)] + dir * step);
        if (q == cand.params) continue;
        const double v = template_iou(fp, cand.shape, q);
        ++evaluations;
        if (v > cand.iou) {
          cand.iou = v;
          cand.params = q;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
}

// Runs the grid over one class/pose and returns the best grid candidate.
Candidate grid_search(const PreparedPolygon& fp, ShapeClass c, int pose) {
  Candidate best{c, pose, ShapeParams{}, -1.0};
  const int k = param_count(c);
  if (k == 0) {
    best.iou = template_iou(fp, c, best.params);
    return best;
  }
  const int n1 = k > 1 ? 9 : 1;
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < n1; ++j) {
      ShapeParams p;
      p.values = {0.1 * (i + 1), k > 1 ? 0.1 * (j + 1) : 0.5};
      const double v = template_iou(fp, c, p);
      if (v > best.iou) best = {c, pose, p, v};
    }
  }
  return best;
}

Polygon pose_polygon(const Polygon& p, int pose) {
  return geometry::transform(p, [pose](Vec2 v) { return apply_pose(pose, v); });
}

}  // namespace

int param_count(ShapeClass c) {
  switch (c) {
    case ShapeClass::kRect:
      return 0;
    case ShapeClass::kTriangle:
      return 1;
    default:
      return 2;
  }
}

std::string_view class_name(ShapeClass c) {
  static constexpr std::array<std::string_view, kNumClasses> kNames{"rect", "u",  "l",         "h",
                                                                    "t",    "x",  "courtyard", "triangle"};
  return kNames[static_cast<std::size_t>(c)];
}

std::optional<ShapeClass> class_from_name(std::string_view name) {
  for (int i = 0; i < kNumClasses; ++i) {
    if (class_name(static_cast<ShapeClass>(i)) == name) return static_cast<ShapeClass>(i);
  }
  return std::nullopt;
}

ShapeClass class_from_index(int index) {
  if (index < 0 || index >= kNumClasses) throw InvalidParams("shape class index out of range: " + std::to_string(index));
  return static_cast<ShapeClass>(index);
}

double geometric_param(ShapeClass c, int i, double normalized) {
  const Range r = param_range(c, i);
  return r.lo + (r.hi - r.lo) * normalized;
}

Polygon template_polygon(ShapeClass c, const ShapeParams& params) {
  const int k = param_count(c);
  for (int i = 0; i < k; ++i) {
    const double v = params.values[static_cast<std::size_t>(i)];
    if (!(v > 0.0 && v < 1.0)) {
      throw InvalidParams(std::string(class_name(c)) + " parameter " + std::to_string(i) + " outside (0,1): " +
                          std::to_string(v));
    }
  }
  const double p0 = k > 0 ? geometric_param(c, 0, params.values[0]) : 0.0;
  const double p1 = k > 1 ? geometric_param(c, 1, params.values[1]) : 0.0;
  TemplateGeom g = build_geom(c, p0, p1);
  return Polygon::from_trusted_rings(std::move(g.outer), std::move(g.holes));
}

Vec2 apply_pose(int pose, Vec2 v) {
  switch (pose) {
    case 0:
      return v;
    case 1:
      return {1 - v.x, v.y};
    case 2:
      return {v.x, 1 - v.y};
    case 3:
      return {1 - v.x, 1 - v.y};
    case 4:
      return {v.y, v.x};
    case 5:
      return {1 - v.y, v.x};
    case 6:
      return {v.y, 1 - v.x};
    case 7:
      return {1 - v.y, 1 - v.x};
    default:
      throw InvalidParams("pose index out of range: " + std::to_string(pose));
  }
}

int inverse_pose(int pose) {
  if (pose == 5) return 6;
  if (pose == 6) return 5;
  if (pose < 0 || pose >= kNumPoses) throw InvalidParams("pose index out of range: " + std::to_string(pose));
  return pose;
}

std::span<const int> class_poses(ShapeClass c) {
  switch (c) {
    case ShapeClass::kH:
      return kPosesTwo;
    case ShapeClass::kL:
      return kPosesCorner;
    case ShapeClass::kU:
    case ShapeClass::kT:
    case ShapeClass::kTriangle:
      return kPosesSide;
    default:
      return kPosesOne;
  }
}

Polygon posed_template(ShapeClass c, const ShapeParams& params, int pose) {
  return pose_polygon(template_polygon(c, params), pose);
}

Polygon normalize_to_rect(const Polygon& footprint, const geometry::RotatedRect& rect) {
  const geometry::CanonicalFrame f = geometry::frame_from_rect(rect);
  return geometry::transform(footprint, [&f](Vec2 v) {
    const Vec2 c = geometry::to_canonical(v, f);
    return Vec2{(c.x + 1.0) / 2.0, (c.y + 1.0) / 2.0};
  });
}

FitResult fit_shape(const Polygon& footprint) {
  const Polygon unit = normalize_to_rect(footprint, geometry::min_rotated_rect(footprint));

  std::array<std::optional<PreparedPolygon>, kNumPoses> prepared;
  auto prepared_for = [&](int pose) -> const PreparedPolygon& {
    auto& slot = prepared[static_cast<std::size_t>(pose)];
    if (!slot) slot.emplace(pose_polygon(unit, inverse_pose(pose)));
    return *slot;
  };

  std::vector<Candidate> grid;
  double best_grid = -1.0;
  for (int ci = 0; ci < kNumClasses; ++ci) {
    const auto c = static_cast<ShapeClass>(ci);
    for (int pose : class_poses(c)) {
      grid.push_back(grid_search(prepared_for(pose), c, pose));
      best_grid = std::max(best_grid, grid.back().iou);
    }
  }

  Candidate best = grid.front();
  for (Candidate& cand : grid) {
    if (cand.iou >= best_grid - 0.05) refine(prepared_for(cand.pose), cand);
    // Candidates are in class order, so strict improvement keeps the lower
    // class on ties.
    if (cand.iou > best.iou) best = cand;
  }
  return FitResult{best.shape, best.iou, best.params, best.pose};
}

FitResult fit_class_in_rect(const Polygon& footprint, const geometry::RotatedRect& rect, ShapeClass c) {
  const Polygon unit = normalize_to_rect(footprint, rect);
  Candidate best{c, 0, ShapeParams{}, -1.0};
  for (int pose : class_poses(c)) {
    const PreparedPolygon fp(pose_polygon(unit, inverse_pose(pose)));
    Candidate cand = grid_search(fp, c, pose);
    refine(fp, cand);
    if (cand.iou > best.iou) best = cand;
  }
  return FitResult{best.shape, best.iou, best.params, best.pose};
}

}  // namespace urbangen::shapelib
