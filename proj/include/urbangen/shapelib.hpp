#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>

#include "urbangen/geometry.hpp"

namespace urbangen::shapelib {

enum class ShapeClass : int {
  kRect = 0,
  kU = 1,
  kL = 2,
  kH = 3,
  kT = 4,
  kX = 5,
  kCourtyard = 6,
  kTriangle = 7,
};

inline constexpr int kNumClasses = 8;

// Normalized template parameters. Only the first param_count(class) entries
// are meaningful; each must lie in (0, 1) and is mapped affinely onto the
// geometric range of that parameter.
struct ShapeParams {
  std::array<double, 2> values{0.5, 0.5};

  friend bool operator==(const ShapeParams&, const ShapeParams&) = default;
};

int param_count(ShapeClass c);
std::string_view class_name(ShapeClass c);
std::optional<ShapeClass> class_from_name(std::string_view name);
ShapeClass class_from_index(int index);

// Geometric value (fraction of the unit box) of normalized parameter `i`.
// U/H arm width 0.15..0.35; T stem and bar 0.25..0.55; L arms, U base,
// X band widths and courtyard hole 0.3..0.7; H middle bar 0.2..0.6;
// triangle apex x = p.
double geometric_param(ShapeClass c, int i, double normalized);

// Template in the unit box [0,1]^2, touching all four sides.
// Throws InvalidParams when a used parameter is outside (0, 1).
geometry::Polygon template_polygon(ShapeClass c, const ShapeParams& params);

// Poses are the eight symmetries of the unit box; pose 0 is the identity.
inline constexpr int kNumPoses = 8;
geometry::Vec2 apply_pose(int pose, geometry::Vec2 v);
int inverse_pose(int pose);
// Poses that give distinct silhouettes for the class (the rest coincide with
// one of these under a change of parameters).
std::span<const int> class_poses(ShapeClass c);

geometry::Polygon posed_template(ShapeClass c, const ShapeParams& params, int pose);

struct FitResult {
  ShapeClass shape = ShapeClass::kRect;
  double iou = 0.0;
  ShapeParams params;
  int pose = 0;
};

// Maps a footprint into the unit box of the given rectangle (long axis to +x).
geometry::Polygon normalize_to_rect(const geometry::Polygon& footprint, const geometry::RotatedRect& rect);

// Best template for the footprint in its own minimum rotated rectangle:
// 9-step grid over the parameters of every class and pose, then pattern-search
// refinement of the near-best candidates. Equal IoU resolves to the lower
// class code.
FitResult fit_shape(const geometry::Polygon& footprint);

// Fit of one class with the footprint normalized into a given rectangle.
FitResult fit_class_in_rect(const geometry::Polygon& footprint, const geometry::RotatedRect& rect, ShapeClass c);

}  // namespace urbangen::shapelib
