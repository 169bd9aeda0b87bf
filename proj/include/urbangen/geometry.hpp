#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace urbangen::geometry {

// Geometric tolerance in canonical (unit-scale) coordinates.
inline constexpr double kDefaultEps = 1e-9;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {a.x * s, a.y * s}; }
  friend constexpr bool operator==(Vec2 a, Vec2 b) = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

// Open ring: the first vertex is not repeated at the end.
using Ring = std::vector<Vec2>;
using Triangle = std::array<Vec2, 3>;

struct Bounds {
  Vec2 lo;
  Vec2 hi;
};

// Planar polygon with optional holes. The outer ring is counter-clockwise,
// holes are clockwise, every ring is simple with positive enclosed area.
class Polygon {
 public:
  Polygon() = default;

  // Validates and normalizes: drops a repeated closing vertex and consecutive
  // duplicates, reverses clockwise outer rings (with a logged warning) and
  // orients holes clockwise. Throws InvalidGeometry on degenerate or
  // self-intersecting rings.
  explicit Polygon(Ring outer, std::vector<Ring> holes = {});

  // Trusted construction for rings derived from already valid polygons
  // (affine images, templates). Orientation is fixed silently; no
  // simplicity check.
  static Polygon from_trusted_rings(Ring outer, std::vector<Ring> holes = {});

  static Polygon rectangle(Vec2 lo, Vec2 hi);

  const Ring& outer() const noexcept { return outer_; }
  const std::vector<Ring>& holes() const noexcept { return holes_; }
  bool empty() const noexcept { return outer_.empty(); }

 private:
  Ring outer_;
  std::vector<Ring> holes_;
};

double ring_signed_area(std::span<const Vec2> ring);

// Throws InvalidGeometry describing the first defect found.
void validate_ring(std::span<const Vec2> ring, double eps = kDefaultEps);
bool ring_is_simple(std::span<const Vec2> ring, double eps = kDefaultEps);

double polygon_area(const Polygon& p);
Vec2 polygon_centroid(const Polygon& p);
bool contains(const Polygon& p, Vec2 pt);
bool ring_contains(std::span<const Vec2> ring, Vec2 pt);

Bounds bounds(std::span<const Vec2> pts);
Bounds bounds(const Polygon& p);


// Ear-clipping triangulation of one simple ring (any orientation); output
// triangles are counter-clockwise.
std::vector<Triangle> triangulate_ring(std::span<const Vec2> ring);

// Triangulation of the polygon region, holes bridged into the outer ring.
// Returned indices address `vertices` = outer ring followed by each hole.
struct IndexedTriangulation {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;
};
IndexedTriangulation triangulate(const Polygon& p);

// Area of the intersection of two convex counter-clockwise polygons.
double convex_intersection_area(std::span<const Vec2> a, std::span<const Vec2> b);

double intersection_area(const Polygon& p, const Polygon& q);
double polygon_iou(const Polygon& p, const Polygon& q);

// Polygon with cached per-ring triangulations, for repeated area queries
// against the same shape.
class PreparedPolygon {
 public:
  explicit PreparedPolygon(const Polygon& p);

  double area() const noexcept { return area_; }
  const Bounds& bounds() const noexcept { return bounds_; }

  // Area of the intersection with a convex counter-clockwise polygon.
  double intersection_area_convex(std::span<const Vec2> convex) const;
  double intersection_area(const PreparedPolygon& other) const;

 private:
  struct RingPart {
    std::vector<Triangle> triangles;
    std::vector<Bounds> triangle_bounds;
    Bounds bounds;
    double sign = 1.0;
  };
  std::vector<RingPart> rings_;
  Bounds bounds_;
  double area_ = 0.0;
};

std::vector<Vec2> convex_hull(std::span<const Vec2> pts);

struct RotatedRect {
  Vec2 center;
  double angle = 0.0;  // direction of the long side, in [0, pi)
  double extent_long = 0.0;
  double extent_short = 0.0;

  // Counter-clockwise, starting at (-long/2, -short/2) in the rect's frame.
  std::array<Vec2, 4> corners() const;
};

// Minimum-area enclosing rectangle via rotating calipers on the hull. Among
// equal-area candidates the smallest edge angle in [0, pi/2) wins.
RotatedRect min_rotated_rect(std::span<const Vec2> pts);
RotatedRect min_rotated_rect(const Polygon& p);

// Maps a block's minimum rotated rectangle onto [-1,1]^2, long axis along +x.
struct CanonicalFrame {
  double rotation = 0.0;  // world angle of the canonical +x axis
  Vec2 translation;       // world position of the canonical origin
  double width = 1.0;     // W, long extent in meters
  double height = 1.0;    // H, short extent in meters
};

CanonicalFrame canonical_frame(const Polygon& block);
CanonicalFrame frame_from_rect(const RotatedRect& r);
Vec2 to_canonical(Vec2 pt, const CanonicalFrame& f);
Vec2 from_canonical(Vec2 pt, const CanonicalFrame& f);

Vec2 rotate(Vec2 p, double angle);

// Applies a point map to every ring; orientation is repaired afterwards so
// reflections are allowed. The map must be affine and non-degenerate.
template <typename F>
Polygon transform(const Polygon& p, F&& fn) {
  Ring outer;
  outer.reserve(p.outer().size());
  for (const Vec2& v : p.outer()) outer.push_back(fn(v));
  std::vector<Ring> holes;
  holes.reserve(p.holes().size());
  for (const Ring& h : p.holes()) {
    Ring r;
    r.reserve(h.size());
    for (const Vec2& v : h) r.push_back(fn(v));
    holes.push_back(std::move(r));
  }
  return Polygon::from_trusted_rings(std::move(outer), std::move(holes));
}

// Constructive operations backed by Boost.Geometry.
std::vector<Polygon> clip(const Polygon& subject, const Polygon& region);
// Negative buffer with mitred joins; may split into several parts or vanish.
std::vector<Polygon> inset(const Polygon& p, double distance);

}  // namespace urbangen::geometry
