#include "urbangen/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numbers>
#include <sstream>
#include <utility>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>
#include <boost/geometry/geometries/multi_polygon.hpp>

#include "urbangen/errors.hpp"
#include "urbangen/log.hpp"

namespace urbangen::geometry {

namespace {

constexpr double kPi = std::numbers::pi;

double orient(Vec2 a, Vec2 b, Vec2 c) { return cross(b - a, c - a); }

Ring clean_ring(Ring ring, double eps) {
  Ring out;
  out.reserve(ring.size());
  for (const Vec2& v : ring) {
    if (!out.empty() && norm(v - out.back()) <= eps) continue;
    out.push_back(v);
  }
  while (out.size() > 1 && norm(out.front() - out.back()) <= eps) out.pop_back();
  return out;
}

double ring_scale(std::span<const Vec2> ring) {
  const Bounds b = bounds(ring);
  return std::max({b.hi.x - b.lo.x, b.hi.y - b.lo.y, 1e-300});
}

int sign_tol(double v, double tol) {
  if (v > tol) return 1;
  if (v < -tol) return -1;
  return 0;
}

bool on_segment(Vec2 a, Vec2 b, Vec2 p, double tol) {
  return p.x >= std::min(a.x, b.x) - tol && p.x <= std::max(a.x, b.x) + tol &&
         p.y >= std::min(a.y, b.y) - tol && p.y <= std::max(a.y, b.y) + tol;
}

// Inclusive test: touching counts as intersecting.
bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 p3, Vec2 p4, double tol_area, double tol_len) {
  const int d1 = sign_tol(orient(p3, p4, p1), tol_area);
  const int d2 = sign_tol(orient(p3, p4, p2), tol_area);
  const int d3 = sign_tol(orient(p1, p2, p3), tol_area);
  const int d4 = sign_tol(orient(p1, p2, p4), tol_area);
  if (d1 * d2 < 0 && d3 * d4 < 0) return true;
  if (d1 == 0 && on_segment(p3, p4, p1, tol_len)) return true;
  if (d2 == 0 && on_segment(p3, p4, p2, tol_len)) return true;
  if (d3 == 0 && on_segment(p1, p2, p3, tol_len)) return true;
  if (d4 == 0 && on_segment(p1, p2, p4, tol_len)) return true;
  return false;
}

std::string describe_defect(std::span<const Vec2> ring, double eps) {
  const std::size_t n = ring.size();
  if (n < 3) return "ring has fewer than 3 distinct vertices";
  const double scale = ring_scale(ring);
  if (std::abs(ring_signed_area(ring)) <= eps * scale * scale) return "ring is degenerate (zero area)";
  for (const Vec2& v : ring) {
    if (!std::isfinite(v.x) || !std::isfinite(v.y)) return "ring has non-finite coordinates";
  }
  const double tol_len = eps * scale;
  const double tol_area = eps * scale * scale;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = ring[i];
    const Vec2 b = ring[(i + 1) % n];
    const Vec2 c = ring[(i + 2) % n];
    if (sign_tol(cross(b - a, c - b), tol_area) == 0 && dot(b - a, c - b) < 0.0) {
      std::ostringstream os;
      os << "ring folds back on itself at vertex " << (i + 1) % n;
      return os.str();
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = ring[i];
    const Vec2 b = ring[(i + 1) % n];
    const double ex0 = std::min(a.x, b.x), ex1 = std::max(a.x, b.x);
    const double ey0 = std::min(a.y, b.y), ey1 = std::max(a.y, b.y);
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;  // adjacent through the closing edge
      const Vec2 c = ring[j];
      const Vec2 d = ring[(j + 1) % n];
      if (std::max(c.x, d.x) < ex0 - tol_len || std::min(c.x, d.x) > ex1 + tol_len ||
          std::max(c.y, d.y) < ey0 - tol_len || std::min(c.y, d.y) > ey1 + tol_len) {
        continue;
      }
      if (segments_intersect(a, b, c, d, tol_area, tol_len)) {
        std::ostringstream os;
        os << "ring self-intersects (edges " << i << " and " << j << ")";
        return os.str();
      }
    }
  }
  return {};
}

void orient_ring(Ring& ring, bool ccw) {
  if ((ring_signed_area(ring) > 0.0) != ccw) std::reverse(ring.begin(), ring.end());
}

}  // namespace

// ---------------------------------------------------------------------------
// Polygon

Polygon::Polygon(Ring outer, std::vector<Ring> holes) {
  outer = clean_ring(std::move(outer), kDefaultEps);
  validate_ring(outer);
  if (ring_signed_area(outer) < 0.0) {
    log_warning("clockwise outer ring reversed to counter-clockwise");
    std::reverse(outer.begin(), outer.end());
  }
  for (Ring& h : holes) {
    h = clean_ring(std::move(h), kDefaultEps);
    validate_ring(h);
    orient_ring(h, /*ccw=*/false);
    for (const Vec2& v : h) {
      if (!ring_contains(outer, v)) throw InvalidGeometry("hole vertex lies outside the outer ring");
    }
  }
  outer_ = std::move(outer);
  holes_ = std::move(holes);
}

Polygon Polygon::from_trusted_rings(Ring outer, std::vector<Ring> holes) {
  Polygon p;
  orient_ring(outer, true);
  for (Ring& h : holes) orient_ring(h, false);
  p.outer_ = std::move(outer);
  p.holes_ = std::move(holes);
  return p;
}

Polygon Polygon::rectangle(Vec2 lo, Vec2 hi) {
  return Polygon({{lo.x, lo.y}, {hi.x, lo.y}, {hi.x, hi.y}, {lo.x, hi.y}});
}

// ---------------------------------------------------------------------------
// Scalar queries

double ring_signed_area(std::span<const Vec2> ring) {
  const std::size_t n = ring.size();
  if (n < 3) return 0.0;
  // Shoelace relative to the first vertex for better conditioning far from
  // the origin.
  const Vec2 o = ring[0];
  double s = 0.0;
  for (std::size_t i = 1; i + 1 < n; ++i) s += cross(ring[i] - o, ring[i + 1] - o);
  return 0.5 * s;
}

void validate_ring(std::span<const Vec2> ring, double eps) {
  const std::string defect = describe_defect(ring, eps);
  if (!defect.empty()) throw InvalidGeometry(defect);
}

bool ring_is_simple(std::span<const Vec2> ring, double eps) { return describe_defect(ring, eps).empty(); }

double polygon_area(const Polygon& p) {
  if (p.empty()) throw InvalidGeometry("empty polygon");
  double a = std::abs(ring_signed_area(p.outer()));
  for (const Ring& h : p.holes()) a -= std::abs(ring_signed_area(h));
  return a;
}

Vec2 polygon_centroid(const Polygon& p) {
  double area = 0.0;
  Vec2 acc;
  const Vec2 o = p.outer().front();
  auto add_ring = [&](const Ring& r) {
    const std::size_t n = r.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 a = r[i] - o;
      const Vec2 b = r[(i + 1) % n] - o;
      const double c = cross(a, b);
      area += c;
      acc = acc + (a + b) * c;
    }
  };
  add_ring(p.outer());
  for (const Ring& h : p.holes()) add_ring(h);
  if (area == 0.0) throw InvalidGeometry("centroid of zero-area polygon");
  return o + acc * (1.0 / (3.0 * area));
}

bool ring_contains(std::span<const Vec2> ring, Vec2 pt) {
  bool inside = false;
  const std::size_t n = ring.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = ring[i];
    const Vec2 b = ring[j];
    if ((a.y > pt.y) != (b.y > pt.y)) {
      const double x = a.x + (pt.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (pt.x < x) inside = !inside;
    }
  }
  return inside;
}

bool contains(const Polygon& p, Vec2 pt) {
  if (!ring_contains(p.outer(), pt)) return false;
  for (const Ring& h : p.holes()) {
    if (ring_contains(h, pt)) return false;
  }
  return true;
}

Bounds bounds(std::span<const Vec2> pts) {
  Bounds b{{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()},
           {-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()}};
  for (const Vec2& v : pts) {
    b.lo.x = std::min(b.lo.x, v.x);
    b.lo.y = std::min(b.lo.y, v.y);
    b.hi.x = std::max(b.hi.x, v.x);
    b.hi.y = std::max(b.hi.y, v.y);
  }
  return b;
}

Bounds bounds(const Polygon& p) { return bounds(p.outer()); }

// ---------------------------------------------------------------------------
// Triangulation

namespace {

bool point_in_triangle_closed(Vec2 p, Vec2 a, Vec2 b, Vec2 c, double tol) {
  return orient(a, b, p) >= -tol && orient(b, c, p) >= -tol && orient(c, a, p) >= -tol;
}

// Ear clipping over an index ring into `verts`. The ring must be
// counter-clockwise; repeated indices (hole bridges) are allowed.
void ear_clip(const std::vector<Vec2>& verts, std::vector<int> ring, std::vector<std::array<int, 3>>& out) {
  if (ring.size() < 3) return;
  const double scale = ring_scale(verts);
  const double tol = 1e-12 * scale * scale;
  std::size_t guard = 0;
  std::size_t k = 0;
  while (ring.size() > 3) {
    const std::size_t m = ring.size();
    bool clipped = false;
    for (std::size_t step = 0; step < m; ++step) {
      const std::size_t i = (k + step) % m;
      const int ia = ring[(i + m - 1) % m];
      const int ib = ring[i];
      const int ic = ring[(i + 1) % m];
      const Vec2 a = verts[ia], b = verts[ib], c = verts[ic];
      const double turn = orient(a, b, c);
      if (turn <= tol) continue;
      bool blocked = false;
      for (std::size_t t = 0; t < m && !blocked; ++t) {
        const int iv = ring[t];
        if (iv == ia || iv == ib || iv == ic) continue;
        const Vec2 v = verts[iv];
        if (v == a || v == b || v == c) continue;
        if (point_in_triangle_closed(v, a, b, c, tol)) blocked = true;
      }
      if (blocked) continue;
      out.push_back({ia, ib, ic});
      ring.erase(ring.begin() + static_cast<std::ptrdiff_t>(i));
      k = i % ring.size();
      clipped = true;
      break;
    }
    if (!clipped) {
      // No strict ear: drop a vertex whose turn is (near) zero, or as a last
      // resort clip the most convex corner.
      std::size_t best = 0;
      double best_turn = -std::numeric_limits<double>::infinity();
      bool dropped = false;
      for (std::size_t i = 0; i < m; ++i) {
        const Vec2 a = verts[ring[(i + m - 1) % m]], b = verts[ring[i]], c = verts[ring[(i + 1) % m]];
        const double turn = orient(a, b, c);
        if (std::abs(turn) <= tol) {
          ring.erase(ring.begin() + static_cast<std::ptrdiff_t>(i));
          dropped = true;
          break;
        }
        if (turn > best_turn) {
          best_turn = turn;
          best = i;
        }
      }
      if (!dropped) {
        out.push_back({ring[(best + m - 1) % m], ring[best], ring[(best + 1) % m]});
        ring.erase(ring.begin() + static_cast<std::ptrdiff_t>(best));
      }
      k = 0;
    }
    if (++guard > 100000) break;
  }
  if (ring.size() == 3 && orient(verts[ring[0]], verts[ring[1]], verts[ring[2]]) > tol) {
    out.push_back({ring[0], ring[1], ring[2]});
  }
}

}  // namespace

std::vector<Triangle> triangulate_ring(std::span<const Vec2> ring) {
  std::vector<Vec2> verts(ring.begin(), ring.end());
  if (ring_signed_area(verts) < 0.0) std::reverse(verts.begin(), verts.end());
  std::vector<int> idx(verts.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  std::vector<std::array<int, 3>> tris;
  tris.reserve(verts.size());
  ear_clip(verts, std::move(idx), tris);
  std::vector<Triangle> out;
  out.reserve(tris.size());
  for (const auto& t : tris) out.push_back({verts[t[0]], verts[t[1]], verts[t[2]]});
  return out;
}

IndexedTriangulation triangulate(const Polygon& p) {
  IndexedTriangulation result;
  result.vertices = p.outer();
  std::vector<int> ring(p.outer().size());
  for (std::size_t i = 0; i < ring.size(); ++i) ring[i] = static_cast<int>(i);

  struct HoleRef {
    int start;
    int count;
    int rightmost;
  };
  std::vector<HoleRef> holes;
  for (const Ring& h : p.holes()) {
    const int start = static_cast<int>(result.vertices.size());
    int rightmost = start;
    for (std::size_t i = 0; i < h.size(); ++i) {
      result.vertices.push_back(h[i]);
      const int id = start + static_cast<int>(i);
      const Vec2 v = result.vertices[id];
      const Vec2 r = result.vertices[rightmost];
      if (v.x > r.x || (v.x == r.x && v.y < r.y)) rightmost = id;
    }
    holes.push_back({start, static_cast<int>(h.size()), rightmost});
  }
  std::sort(holes.begin(), holes.end(), [&](const HoleRef& a, const HoleRef& b) {
    return result.vertices[a.rightmost].x > result.vertices[b.rightmost].x;
  });

  const auto& V = result.vertices;
  for (const HoleRef& hole : holes) {
    // Bridge from the hole's rightmost vertex M along +x to the ring.
    const Vec2 m = V[hole.rightmost];
    double best_x = std::numeric_limits<double>::infinity();
    std::size_t best_edge = 0;
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 a = V[ring[i]];
      const Vec2 b = V[ring[(i + 1) % n]];
      if ((a.y > m.y) == (b.y > m.y)) continue;
      const double x = a.x + (m.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (x >= m.x && x < best_x) {
        best_x = x;
        best_edge = i;
      }
    }
    if (!std::isfinite(best_x)) throw InvalidGeometry("hole is not enclosed by the outer ring");
    const Vec2 hit{best_x, m.y};
    const std::size_t ea = best_edge, eb = (best_edge + 1) % n;
    std::size_t cand = V[ring[ea]].x > V[ring[eb]].x ? ea : eb;
    // Any ring vertex strictly inside triangle (M, hit, cand) could block the
    // bridge; take the one closest in angle to the ray.
    const Vec2 pc = V[ring[cand]];
    double best_angle = std::numeric_limits<double>::infinity();
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 v = V[ring[i]];
      if (v == pc) continue;
      if (v.x < m.x) continue;
      const double o1 = orient(m, hit, pc);
      Vec2 t0 = m, t1 = hit, t2 = pc;
      if (o1 < 0) std::swap(t1, t2);
      if (!point_in_triangle_closed(v, t0, t1, t2, 0.0)) continue;
      const Vec2 d = v - m;
      const double ang = std::abs(std::atan2(d.y, d.x));
      const double dist = norm(d);
      if (ang < best_angle || (ang == best_angle && dist < best_dist)) {
        best_angle = ang;
        best_dist = dist;
        cand = i;
      }
    }
    std::vector<int> spliced;
    spliced.reserve(ring.size() + static_cast<std::size_t>(hole.count) + 2);
    for (std::size_t i = 0; i <= cand; ++i) spliced.push_back(ring[i]);
    const int offset = hole.rightmost - hole.start;
    for (int k = 0; k <= hole.count; ++k) spliced.push_back(hole.start + (offset + k) % hole.count);
    spliced.push_back(ring[cand]);
    for (std::size_t i = cand + 1; i < ring.size(); ++i) spliced.push_back(ring[i]);
    ring = std::move(spliced);
  }
  ear_clip(result.vertices, std::move(ring), result.triangles);
  return result;
}

// ---------------------------------------------------------------------------
// Intersection

double convex_intersection_area(std::span<const Vec2> a, std::span<const Vec2> b) {
  if (a.size() < 3 || b.size() < 3) return 0.0;
  thread_local std::vector<Vec2> cur;
  thread_local std::vector<Vec2> next;
  cur.assign(a.begin(), a.end());
  const std::size_t nb = b.size();
  for (std::size_t e = 0; e < nb && !cur.empty(); ++e) {
    const Vec2 p0 = b[e];
    const Vec2 p1 = b[(e + 1) % nb];
    const Vec2 dir = p1 - p0;
    next.clear();
    const std::size_t nc = cur.size();
    for (std::size_t i = 0; i < nc; ++i) {
      const Vec2 s = cur[i];
      const Vec2 t = cur[(i + 1) % nc];
      const double ds = cross(dir, s - p0);
      const double dt = cross(dir, t - p0);
      const bool s_in = ds >= 0.0;
      const bool t_in = dt >= 0.0;
      if (s_in) next.push_back(s);
      if (s_in != t_in) {
        const double r = ds / (ds - dt);
        next.push_back(s + (t - s) * r);
      }
    }
    std::swap(cur, next);
  }
  if (cur.size() < 3) return 0.0;
  return std::max(0.0, ring_signed_area(cur));
}

namespace {

bool overlaps(const Bounds& a, const Bounds& b) {
  return a.lo.x <= b.hi.x && b.lo.x <= a.hi.x && a.lo.y <= b.hi.y && b.lo.y <= a.hi.y;
}

}  // namespace

PreparedPolygon::PreparedPolygon(const Polygon& p) {
  if (p.empty()) throw InvalidGeometry("empty polygon");
  auto add = [&](const Ring& r, double sign) {
    RingPart part;
    part.sign = sign;
    part.triangles = triangulate_ring(r);
    part.triangle_bounds.reserve(part.triangles.size());
    for (const Triangle& t : part.triangles) part.triangle_bounds.push_back(geometry::bounds(t));
    part.bounds = geometry::bounds(r);
    rings_.push_back(std::move(part));
  };
  add(p.outer(), 1.0);
  for (const Ring& h : p.holes()) add(h, -1.0);
  bounds_ = geometry::bounds(p.outer());
  area_ = polygon_area(p);
}

double PreparedPolygon::intersection_area_convex(std::span<const Vec2> convex) const {
  const Bounds cb = geometry::bounds(convex);
  if (!overlaps(cb, bounds_)) return 0.0;
  double total = 0.0;
  for (const RingPart& r : rings_) {
    if (!overlaps(cb, r.bounds)) continue;
    double s = 0.0;
    for (std::size_t i = 0; i < r.triangles.size(); ++i) {
      if (!overlaps(cb, r.triangle_bounds[i])) continue;
      s += convex_intersection_area(r.triangles[i], convex);
    }
    total += r.sign * s;
  }
  return std::max(0.0, total);
}

double PreparedPolygon::intersection_area(const PreparedPolygon& other) const {
  if (!overlaps(bounds_, other.bounds_)) return 0.0;
  double total = 0.0;
  for (const RingPart& r : rings_) {
    for (const RingPart& q : other.rings_) {
      if (!overlaps(r.bounds, q.bounds)) continue;
      double s = 0.0;
      for (std::size_t i = 0; i < r.triangles.size(); ++i) {
        const Bounds& bi = r.triangle_bounds[i];
        if (!overlaps(bi, q.bounds)) continue;
        for (std::size_t j = 0; j < q.triangles.size(); ++j) {
          if (!overlaps(bi, q.triangle_bounds[j])) continue;
          s += convex_intersection_area(r.triangles[i], q.triangles[j]);
        }
      }
      total += r.sign * q.sign * s;
    }
  }
  return std::clamp(total, 0.0, std::min(area_, other.area_));
}

double intersection_area(const Polygon& p, const Polygon& q) {
  return PreparedPolygon(p).intersection_area(PreparedPolygon(q));
}

double polygon_iou(const Polygon& p, const Polygon& q) {
  const PreparedPolygon pp(p);
  const PreparedPolygon pq(q);
  const double inter = pp.intersection_area(pq);
  const double uni = pp.area() + pq.area() - inter;
  if (uni <= 0.0) throw InvalidGeometry("IoU of degenerate polygons");
  return std::clamp(inter / uni, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Hull, rotated rectangle, canonical frame

std::vector<Vec2> convex_hull(std::span<const Vec2> pts) {
  std::vector<Vec2> p(pts.begin(), pts.end());
  std::sort(p.begin(), p.end(), [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  p.erase(std::unique(p.begin(), p.end()), p.end());
  if (p.size() < 3) return p;
  std::vector<Vec2> h(2 * p.size());
  std::size_t k = 0;
  for (const Vec2& v : p) {
    while (k >= 2 && orient(h[k - 2], h[k - 1], v) <= 0.0) --k;
    h[k++] = v;
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
    const Vec2 v = p[i];
    while (k >= t && orient(h[k - 2], h[k - 1], v) <= 0.0) --k;
    h[k++] = v;
  }
  h.resize(k - 1);
  return h;
}

std::array<Vec2, 4> RotatedRect::corners() const {
  const Vec2 u{std::cos(angle), std::sin(angle)};
  const Vec2 v{-u.y, u.x};
  const double a = extent_long / 2.0;
  const double b = extent_short / 2.0;
  return {center - u * a - v * b, center + u * a - v * b, center + u * a + v * b, center - u * a + v * b};
}

RotatedRect min_rotated_rect(std::span<const Vec2> pts) {
  const std::vector<Vec2> hull = convex_hull(pts);
  if (hull.size() < 3) throw InvalidGeometry("minimum rotated rectangle of a degenerate point set");
  const std::size_t n = hull.size();

  struct Candidate {
    double phi;
    double area;
    double a;
    double b;
    Vec2 center;
  };
  std::vector<Candidate> cands;
  cands.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 d = hull[(i + 1) % n] - hull[i];
    double phi = std::fmod(std::atan2(d.y, d.x), kPi / 2.0);
    if (phi < 0.0) phi += kPi / 2.0;
    if (phi >= kPi / 2.0) phi -= kPi / 2.0;
    const Vec2 u{std::cos(phi), std::sin(phi)};
    const Vec2 v{-u.y, u.x};
    double umin = std::numeric_limits<double>::infinity(), umax = -umin;
    double vmin = umin, vmax = -umin;
    for (const Vec2& p : hull) {
      const double pu = dot(p, u);
      const double pv = dot(p, v);
      umin = std::min(umin, pu);
      umax = std::max(umax, pu);
      vmin = std::min(vmin, pv);
      vmax = std::max(vmax, pv);
    }
    const double a = umax - umin;
    const double b = vmax - vmin;
    cands.push_back({phi, a * b, a, b, u * ((umin + umax) / 2.0) + v * ((vmin + vmax) / 2.0)});
  }
  double min_area = std::numeric_limits<double>::infinity();
  for (const Candidate& c : cands) min_area = std::min(min_area, c.area);
  const double tie_tol = 1e-12 * min_area;
  const Candidate* best = nullptr;
  for (const Candidate& c : cands) {
    if (c.area > min_area + tie_tol) continue;
    if (best == nullptr || c.phi < best->phi) best = &c;
  }
  RotatedRect r;
  r.center = best->center;
  if (best->a >= best->b) {
    r.angle = best->phi;
    r.extent_long = best->a;
    r.extent_short = best->b;
  } else {
    r.angle = best->phi + kPi / 2.0;
    r.extent_long = best->b;
    r.extent_short = best->a;
  }
  return r;
}

RotatedRect min_rotated_rect(const Polygon& p) {
  if (p.empty()) throw InvalidGeometry("empty polygon");
  return min_rotated_rect(std::span<const Vec2>(p.outer()));
}

CanonicalFrame frame_from_rect(const RotatedRect& r) {
  if (!(r.extent_short > 0.0)) throw InvalidGeometry("canonical frame of a degenerate rectangle");
  return CanonicalFrame{r.angle, r.center, r.extent_long, r.extent_short};
}

CanonicalFrame canonical_frame(const Polygon& block) { return frame_from_rect(min_rotated_rect(block)); }

Vec2 rotate(Vec2 p, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * p.x - s * p.y, s * p.x + c * p.y};
}

Vec2 to_canonical(Vec2 pt, const CanonicalFrame& f) {
  const Vec2 local = rotate(pt - f.translation, -f.rotation);
  return {2.0 * local.x / f.width, 2.0 * local.y / f.height};
}

Vec2 from_canonical(Vec2 pt, const CanonicalFrame& f) {
  const Vec2 local{pt.x * f.width / 2.0, pt.y * f.height / 2.0};
  return rotate(local, f.rotation) + f.translation;
}

// ---------------------------------------------------------------------------
// Boost.Geometry-backed constructive operations

namespace {

namespace bg = boost::geometry;
using BgPoint = bg::model::d2::point_xy<double>;
using BgPolygon = bg::model::polygon<BgPoint, /*ClockWise=*/false, /*Closed=*/true>;
using BgMulti = bg::model::multi_polygon<BgPolygon>;

BgPolygon to_bg(const Polygon& p) {
  BgPolygon out;
  for (const Vec2& v : p.outer()) out.outer().emplace_back(v.x, v.y);
  out.outer().emplace_back(p.outer().front().x, p.outer().front().y);
  for (const Ring& h : p.holes()) {
    auto& ring = out.inners().emplace_back();
    for (const Vec2& v : h) ring.emplace_back(v.x, v.y);
    ring.emplace_back(h.front().x, h.front().y);
  }
  return out;
}

std::vector<Polygon> from_bg(const BgMulti& multi) {
  std::vector<Polygon> out;
  for (const BgPolygon& bp : multi) {
    Ring outer;
    for (const BgPoint& pt : bp.outer()) outer.push_back({pt.x(), pt.y()});
    std::vector<Ring> holes;
    for (const auto& inner : bp.inners()) {
      Ring h;
      for (const BgPoint& pt : inner) h.push_back({pt.x(), pt.y()});
      holes.push_back(std::move(h));
    }
    try {
      // Silence the orientation warning: Boost may emit either orientation
      // for degenerate slivers, which are then rejected anyway.
      Ring o = clean_ring(std::move(outer), kDefaultEps);
      orient_ring(o, true);
      out.emplace_back(std::move(o), std::move(holes));
    } catch (const InvalidGeometry&) {
      // Degenerate slivers produced by the boolean op are dropped.
    }
  }
  return out;
}

}  // namespace

std::vector<Polygon> clip(const Polygon& subject, const Polygon& region) {
  BgMulti out;
  bg::intersection(to_bg(subject), to_bg(region), out);
  return from_bg(out);
}

std::vector<Polygon> inset(const Polygon& p, double distance) {
  if (distance <= 0.0) return {p};
  const BgPolygon src = to_bg(p);
  BgMulti out;
  bg::strategy::buffer::distance_symmetric<double> dist(-distance);
  bg::strategy::buffer::join_miter join;
  bg::strategy::buffer::end_flat end;
  bg::strategy::buffer::point_square point;
  bg::strategy::buffer::side_straight side;
  bg::buffer(src, out, dist, side, join, end, point);
  return from_bg(out);
}

}  // namespace urbangen::geometry
