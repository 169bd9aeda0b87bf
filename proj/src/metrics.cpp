#include "urbangen/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "json.hpp"

#include "urbangen/errors.hpp"

namespace urbangen::metrics {

using geometry::Bounds;
using geometry::Polygon;

namespace {

bool boxes_overlap(const Bounds& a, const Bounds& b) {
  return a.lo.x < b.hi.x && b.lo.x < a.hi.x && a.lo.y < b.hi.y && b.lo.y < a.hi.y;
}

double box_iou(const BoxDescriptor& a, const BoxDescriptor& b) {
  const double ix = std::max(0.0, std::min(a.x + a.l / 2, b.x + b.l / 2) - std::max(a.x - a.l / 2, b.x - b.l / 2));
  const double iy = std::max(0.0, std::min(a.y + a.w / 2, b.y + b.w / 2) - std::max(a.y - a.w / 2, b.y - b.w / 2));
  const double inter = ix * iy;
  const double uni = a.l * a.w + b.l * b.w - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

}  // namespace

LayoutSample to_sample(const Polygon& block, const blockgraph::GeneratedLayout& layout) {
  LayoutSample s{block, {}};
  for (const auto& b : layout.buildings) s.buildings.push_back({b.footprint, b.height});
  return s;
}

std::string MetricsReport::to_json() const {
  const nlohmann::ordered_json j = {{"l_sim", l_sim},   {"opr", opr},
                                    {"obr", obr},       {"wd_bbx", wd_bbx},
                                    {"wd_count", wd_count}, {"blocks", blocks},
                                    {"gen_buildings", gen_buildings}, {"ref_buildings", ref_buildings}};
  return j.dump(2);
}

double overlap_ratio(const LayoutSample& s) {
  double total = 0.0;
  std::vector<Bounds> boxes;
  for (const auto& b : s.buildings) {
    total += geometry::polygon_area(b.footprint);
    boxes.push_back(geometry::bounds(b.footprint));
  }
  if (total <= 0.0) return 0.0;
  double overlap = 0.0;
  for (std::size_t i = 0; i < s.buildings.size(); ++i) {
    for (std::size_t j = i + 1; j < s.buildings.size(); ++j) {
      if (!boxes_overlap(boxes[i], boxes[j])) continue;
      overlap += geometry::intersection_area(s.buildings[i].footprint, s.buildings[j].footprint);
    }
  }
  return std::min(1.0, overlap / total);
}

double out_of_block_ratio(const LayoutSample& s, double eps) {
  if (s.buildings.empty()) return 0.0;
  std::size_t outside = 0;
  for (const auto& b : s.buildings) {
    const double area = geometry::polygon_area(b.footprint);
    const double in = geometry::intersection_area(b.footprint, s.block);
    if (area - in > eps * area) ++outside;
  }
  return static_cast<double>(outside) / static_cast<double>(s.buildings.size());
}

double wd_1d(std::vector<double> xs, std::vector<double> ys) {
  if (xs.empty() || ys.empty()) throw EmptyDistribution("wasserstein distance of an empty sample");
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  // Walk both quantile functions; breakpoints are (i+1)/n and (j+1)/m,
  // compared exactly in units of 1/(n m).
  const std::size_t n = xs.size(), m = ys.size();
  std::size_t i = 0, j = 0, t = 0;
  double acc = 0.0;
  while (i < n && j < m) {
    const std::size_t bx = (i + 1) * m, by = (j + 1) * n;
    const std::size_t next = std::min(bx, by);
    acc += static_cast<double>(next - t) * std::abs(xs[i] - ys[j]);
    t = next;
    if (bx == next) ++i;
    if (by == next) ++j;
  }
  return acc / static_cast<double>(n * m);
}

std::vector<BoxDescriptor> box_descriptors(const LayoutSample& s) {
  std::vector<BoxDescriptor> out;
  if (s.buildings.empty()) return out;
  const geometry::CanonicalFrame f = geometry::canonical_frame(s.block);
  for (const auto& b : s.buildings) {
    const Bounds box = blockgraph::canonical_box(b.footprint, f);
    out.push_back({(box.lo.x + box.hi.x) / 4 + 0.5, (box.lo.y + box.hi.y) / 4 + 0.5, (box.hi.x - box.lo.x) / 2,
                   (box.hi.y - box.lo.y) / 2});
  }
  return out;
}

double wd_count(const std::vector<LayoutSample>& gen, const std::vector<LayoutSample>& ref) {
  auto counts = [](const std::vector<LayoutSample>& v) {
    std::vector<double> c;
    for (const auto& s : v) c.push_back(static_cast<double>(s.buildings.size()));
    return c;
  };
  return wd_1d(counts(gen), counts(ref));
}

double wd_bbx(const std::vector<LayoutSample>& gen, const std::vector<LayoutSample>& ref) {
  std::array<std::vector<double>, 4> g, r;
  auto collect = [](const std::vector<LayoutSample>& v, std::array<std::vector<double>, 4>& into) {
    for (const auto& s : v) {
      for (const BoxDescriptor& d : box_descriptors(s)) {
        into[0].push_back(d.x);
        into[1].push_back(d.y);
        into[2].push_back(d.l);
        into[3].push_back(d.w);
      }
    }
  };
  collect(gen, g);
  collect(ref, r);
  double sum = 0.0;
  for (int k = 0; k < 4; ++k) sum += wd_1d(g[static_cast<std::size_t>(k)], r[static_cast<std::size_t>(k)]);
  return sum / 4.0;
}

std::vector<int> min_cost_assignment(const std::vector<double>& cost, int rows, int cols) {
  if (rows == 0 || cols == 0) return std::vector<int>(static_cast<std::size_t>(rows), -1);
  if (rows > cols) {
    std::vector<double> t(cost.size());
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) t[static_cast<std::size_t>(c * rows + r)] = cost[static_cast<std::size_t>(r * cols + c)];
    }
    const std::vector<int> back = min_cost_assignment(t, cols, rows);
    std::vector<int> out(static_cast<std::size_t>(rows), -1);
    for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(back[static_cast<std::size_t>(c)])] = c;
    return out;
  }
  // Shortest augmenting path with potentials, rows <= cols; 1-based
  // internally with column 0 as the virtual start.
  const double inf = std::numeric_limits<double>::infinity();
  const auto n = static_cast<std::size_t>(rows), m = static_cast<std::size_t>(cols);
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> out(n, -1);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) out[p[j] - 1] = static_cast<int>(j - 1);
  }
  return out;
}

double layout_similarity(const LayoutSample& a, const LayoutSample& b) {
  const auto da = box_descriptors(a);
  const auto db = box_descriptors(b);
  if (da.empty() && db.empty()) return 1.0;
  if (da.empty() || db.empty()) return 0.0;
  const int na = static_cast<int>(da.size()), nb = static_cast<int>(db.size());
  std::vector<double> cost(static_cast<std::size_t>(na * nb));
  for (int i = 0; i < na; ++i) {
    for (int j = 0; j < nb; ++j) {
      cost[static_cast<std::size_t>(i * nb + j)] =
          std::hypot(da[static_cast<std::size_t>(i)].x - db[static_cast<std::size_t>(j)].x,
                     da[static_cast<std::size_t>(i)].y - db[static_cast<std::size_t>(j)].y);
    }
  }
  const std::vector<int> match = min_cost_assignment(cost, na, nb);
  double sum = 0.0;
  for (int i = 0; i < na; ++i) {
    const int j = match[static_cast<std::size_t>(i)];
    if (j >= 0) sum += box_iou(da[static_cast<std::size_t>(i)], db[static_cast<std::size_t>(j)]);
  }
  return sum / static_cast<double>(std::max(na, nb));
}

MetricsReport evaluate(const std::vector<LayoutSample>& gen, const std::vector<LayoutSample>& ref) {
  if (gen.size() != ref.size()) throw AlignmentError("generated and reference block lists differ in length");
  if (gen.empty()) throw EmptyDistribution("no blocks to evaluate");
  MetricsReport r;
  r.blocks = gen.size();
  for (std::size_t i = 0; i < gen.size(); ++i) {
    r.l_sim += layout_similarity(gen[i], ref[i]);
    r.opr += overlap_ratio(gen[i]);
    r.obr += out_of_block_ratio(gen[i]);
    r.gen_buildings += gen[i].buildings.size();
    r.ref_buildings += ref[i].buildings.size();
  }
  const auto nb = static_cast<double>(gen.size());
  r.l_sim /= nb;
  r.opr /= nb;
  r.obr /= nb;
  r.wd_count = wd_count(gen, ref);
  // No buildings on either side leaves nothing to compare.
  r.wd_bbx = (r.gen_buildings == 0 && r.ref_buildings == 0) ? 0.0 : wd_bbx(gen, ref);
  return r;
}

}  // namespace urbangen::metrics
