#pragma once

// Shared generators and independent oracles for the test suites. Nothing here
// calls into the library's area/intersection code paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "urbangen/geometry.hpp"

namespace urbangen::testing {

using geometry::Polygon;
using geometry::Ring;
using geometry::Vec2;

// Winding-number point test, independent of the library's crossing test.
inline bool winding_inside(const Ring& ring, Vec2 p) {
  int wn = 0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = ring[i];
    const Vec2 b = ring[(i + 1) % n];
    const double side = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
    if (a.y <= p.y) {
      if (b.y > p.y && side > 0) ++wn;
    } else {
      if (b.y <= p.y && side < 0) --wn;
    }
  }
  return wn != 0;
}

inline bool winding_inside(const Polygon& poly, Vec2 p) {
  if (!winding_inside(poly.outer(), p)) return false;
  for (const Ring& h : poly.holes()) {
    if (winding_inside(h, p)) return false;
  }
  return true;
}

struct Box {
  double x0, y0, x1, y1;
  double area() const { return (x1 - x0) * (y1 - y0); }
};

inline Box box_of(const std::vector<const Polygon*>& polys) {
  Box b{1e300, 1e300, -1e300, -1e300};
  for (const Polygon* p : polys) {
    for (const Vec2& v : p->outer()) {
      b.x0 = std::min(b.x0, v.x);
      b.y0 = std::min(b.y0, v.y);
      b.x1 = std::max(b.x1, v.x);
      b.y1 = std::max(b.y1, v.y);
    }
  }
  return b;
}

// Monte Carlo estimate of the area where `pred(point)` holds inside `box`.
template <typename Pred>
double monte_carlo_area(const Box& box, std::size_t samples, std::uint64_t seed, Pred&& pred) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(box.x0, box.x1);
  std::uniform_real_distribution<double> uy(box.y0, box.y1);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    if (pred(Vec2{ux(rng), uy(rng)})) ++hits;
  }
  return box.area() * static_cast<double>(hits) / static_cast<double>(samples);
}

// Star-shaped (hence simple) polygon around `center`.
inline Ring random_star_ring(std::mt19937_64& rng, int n, Vec2 center, double r_min, double r_max) {
  // Jittered even spacing keeps every angular gap below pi.
  const double step = 2.0 * std::numbers::pi / n;
  std::uniform_real_distribution<double> ua(-0.4 * step, 0.4 * step);
  std::uniform_real_distribution<double> ur(r_min, r_max);
  std::vector<double> angles(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) angles[static_cast<std::size_t>(i)] = i * step + ua(rng);
  Ring ring;
  for (double a : angles) {
    const double r = ur(rng);
    ring.push_back({center.x + r * std::cos(a), center.y + r * std::sin(a)});
  }
  return ring;
}

inline Ring random_convex_ring(std::mt19937_64& rng, int n, Vec2 center, double r) {
  std::uniform_real_distribution<double> ua(0.0, 2.0 * std::numbers::pi);
  std::vector<double> angles(static_cast<std::size_t>(n));
  for (double& a : angles) a = ua(rng);
  std::sort(angles.begin(), angles.end());
  std::uniform_real_distribution<double> sx(0.5, 1.5);
  const double ax = sx(rng);
  Ring ring;
  for (double a : angles) ring.push_back({center.x + ax * r * std::cos(a), center.y + r * std::sin(a)});
  return ring;
}

inline Polygon rect_polygon(Vec2 center, double w, double h, double angle) {
  const Vec2 u{std::cos(angle), std::sin(angle)};
  const Vec2 v{-u.y, u.x};
  return Polygon({center - u * (w / 2) - v * (h / 2), center + u * (w / 2) - v * (h / 2),
                  center + u * (w / 2) + v * (h / 2), center - u * (w / 2) + v * (h / 2)});
}

}  // namespace urbangen::testing
