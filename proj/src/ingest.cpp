#include "urbangen/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "urbangen/errors.hpp"
#include "urbangen/log.hpp"
#include "urbangen/rng.hpp"
#include "urbangen/shapelib.hpp"

namespace urbangen::ingest {

using geojson::Json;
using geometry::Bounds;
using geometry::Polygon;
using geometry::Vec2;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

const Json& features_of(const Json& doc) {
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features") ||
      !doc["features"].is_array()) {
    throw IoError("not a GeoJSON FeatureCollection");
  }
  return doc["features"];
}

const Json& properties_of(const Json& f) {
  static const Json empty = Json::object();
  return f.contains("properties") && f["properties"].is_object() ? f["properties"] : empty;
}

// Largest polygon part; MultiPolygon parts beyond the first are reported.
Polygon main_part(const Json& f, LoadReport& report, std::size_t index) {
  if (!f.is_object() || !f.contains("geometry")) throw InvalidGeometry("feature without geometry");
  std::vector<Polygon> parts = geojson::parse_polygons(f["geometry"]);
  if (parts.size() > 1) {
    report.warnings.push_back("feature " + std::to_string(index) + ": kept the largest of " +
                              std::to_string(parts.size()) + " polygon parts");
  }
  return *std::max_element(parts.begin(), parts.end(), [](const Polygon& a, const Polygon& b) {
    return geometry::polygon_area(a) < geometry::polygon_area(b);
  });
}

std::optional<std::string> string_property(const Json& props, const char* key) {
  if (!props.contains(key)) return std::nullopt;
  const Json& v = props[key];
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) {
    std::ostringstream ss;
    ss << v.get<double>();
    return ss.str();
  }
  return std::nullopt;
}

void check_planar(const std::vector<Bounds>& boxes, LoadReport& report) {
  if (boxes.empty()) return;
  Bounds all = boxes.front();
  for (const Bounds& b : boxes) {
    all.lo.x = std::min(all.lo.x, b.lo.x);
    all.lo.y = std::min(all.lo.y, b.lo.y);
    all.hi.x = std::max(all.hi.x, b.hi.x);
    all.hi.y = std::max(all.hi.y, b.hi.y);
  }
  if (all.lo.x >= -180 && all.hi.x <= 180 && all.lo.y >= -90 && all.hi.y <= 90 && all.hi.x - all.lo.x < 5 &&
      all.hi.y - all.lo.y < 5) {
    const std::string msg = "coordinates look like longitude/latitude; planar meters are expected";
    report.warnings.push_back(msg);
    log_warning(msg);
  }
}

const Polygon& item_polygon(const BlockFeature& b) { return b.boundary; }
const Polygon& item_polygon(const RawBuilding& b) { return b.footprint; }
const Polygon& item_polygon(const LandUseFeature& l) { return l.polygon; }

template <typename T, typename Parse>
Loaded<T> parse_features(const Json& doc, const char* what, Parse&& parse) {
  Loaded<T> out;
  const Json& features = features_of(doc);
  std::vector<Bounds> boxes;
  for (std::size_t i = 0; i < features.size(); ++i) {
    ++out.report.features;
    try {
      std::optional<T> item = parse(features[i], out.report, i);
      if (!item) continue;
      boxes.push_back(geometry::bounds(item_polygon(*item)));
      out.items.push_back(std::move(*item));
      ++out.report.loaded;
    } catch (const InvalidGeometry& e) {
      out.report.skipped.push_back("feature " + std::to_string(i) + ": " + e.what());
    }
  }
  check_planar(boxes, out.report);
  if (out.items.empty()) throw EmptyDataset(std::string("no valid ") + what + " features");
  return out;
}

}  // namespace

std::optional<int> LandUseTable::lookup(const Json& value) const {
  std::optional<int> idx;
  if (value.is_number_integer()) {
    idx = static_cast<int>(value.get<long long>());
  } else if (value.is_number()) {
    const double d = value.get<double>();
    if (d == std::floor(d)) idx = static_cast<int>(d);
  } else if (value.is_string()) {
    const std::string s = lower(value.get<std::string>());
    if (auto it = names.find(s); it != names.end()) {
      idx = it->second;
    } else if (!s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }) &&
               s.size() < 9) {
      idx = std::stoi(s);
    }
  }
  if (idx && (*idx < 0 || *idx >= classes)) return std::nullopt;
  return idx;
}

std::string LandUseTable::name(int index) const {
  for (const auto& [k, v] : names) {
    if (v == index) return k;
  }
  return std::to_string(index);
}

Loaded<BlockFeature> parse_blocks(const Json& doc, const LoadOptions& opt) {
  return parse_features<BlockFeature>(
      doc, "block", [&](const Json& f, LoadReport& report, std::size_t i) -> std::optional<BlockFeature> {
        const Json& props = properties_of(f);
        const auto id = string_property(props, "id");
        if (!id || id->empty()) {
          report.skipped.push_back("feature " + std::to_string(i) + ": missing id");
          return std::nullopt;
        }
        BlockFeature b{*id, main_part(f, report, i), std::nullopt};
        if (props.contains("land_use")) {
          b.land_use = opt.table.lookup(props["land_use"]);
          if (!b.land_use) {
            report.skipped.push_back("feature " + std::to_string(i) + ": unknown land use");
            return std::nullopt;
          }
        }
        return b;
      });
}

Loaded<RawBuilding> parse_buildings(const Json& doc, const LoadOptions& opt) {
  return parse_features<RawBuilding>(
      doc, "building", [&](const Json& f, LoadReport& report, std::size_t i) -> std::optional<RawBuilding> {
        const Json& props = properties_of(f);
        double h = std::numeric_limits<double>::quiet_NaN();
        if (props.contains("height") && props["height"].is_number()) h = props["height"].get<double>();
        if (std::isnan(h) && !opt.impute_missing_height) {
          report.skipped.push_back("feature " + std::to_string(i) + ": missing height");
          return std::nullopt;
        }
        if (!std::isnan(h) && !(h > 0.0 && std::isfinite(h))) {
          report.skipped.push_back("feature " + std::to_string(i) + ": non-positive height");
          return std::nullopt;
        }
        const auto id = string_property(props, "id");
        return RawBuilding{main_part(f, report, i), h, id.value_or(std::to_string(i))};
      });
}

Loaded<LandUseFeature> parse_landuse(const Json& doc, const LoadOptions& opt) {
  return parse_features<LandUseFeature>(
      doc, "land-use", [&](const Json& f, LoadReport& report, std::size_t i) -> std::optional<LandUseFeature> {
        const Json& props = properties_of(f);
        std::optional<int> cls;
        for (const char* key : {"class", "land_use"}) {
          if (props.contains(key)) {
            cls = opt.table.lookup(props[key]);
            break;
          }
        }
        if (!cls) {
          report.skipped.push_back("feature " + std::to_string(i) + ": missing or unknown class");
          return std::nullopt;
        }
        return LandUseFeature{main_part(f, report, i), *cls};
      });
}

Loaded<BlockFeature> load_blocks(const std::string& path, const LoadOptions& opt) {
  return parse_blocks(geojson::read_file(path), opt);
}
Loaded<RawBuilding> load_buildings(const std::string& path, const LoadOptions& opt) {
  return parse_buildings(geojson::read_file(path), opt);
}
Loaded<LandUseFeature> load_landuse(const std::string& path, const LoadOptions& opt) {
  return parse_landuse(geojson::read_file(path), opt);
}

JoinResult spatial_join(const std::vector<Polygon>& blocks, const std::vector<RawBuilding>& buildings) {
  std::vector<Bounds> boxes;
  boxes.reserve(blocks.size());
  for (const Polygon& b : blocks) boxes.push_back(geometry::bounds(b));
  JoinResult r;
  r.block_of.assign(buildings.size(), -1);
  for (std::size_t i = 0; i < buildings.size(); ++i) {
    const Vec2 c = geometry::polygon_centroid(buildings[i].footprint);
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      const Bounds& bb = boxes[k];
      if (c.x < bb.lo.x || c.x > bb.hi.x || c.y < bb.lo.y || c.y > bb.hi.y) continue;
      if (geometry::contains(blocks[k], c)) {
        r.block_of[i] = static_cast<int>(k);
        break;
      }
    }
    if (r.block_of[i] < 0) ++r.dropped;
  }
  return r;
}

LandUseAssignment assign_landuse(const std::vector<Polygon>& blocks, const std::vector<LandUseFeature>& landuse,
                                 int num_classes) {
  LandUseAssignment out;
  std::vector<Bounds> lboxes;
  for (const auto& l : landuse) lboxes.push_back(geometry::bounds(l.polygon));
  for (const Polygon& block : blocks) {
    const Bounds bb = geometry::bounds(block);
    std::vector<double> area(static_cast<std::size_t>(num_classes), 0.0);
    for (std::size_t k = 0; k < landuse.size(); ++k) {
      const Bounds& lb = lboxes[k];
      if (lb.hi.x <= bb.lo.x || lb.lo.x >= bb.hi.x || lb.hi.y <= bb.lo.y || lb.lo.y >= bb.hi.y) continue;
      if (landuse[k].land_use < 0 || landuse[k].land_use >= num_classes) continue;
      area[static_cast<std::size_t>(landuse[k].land_use)] += geometry::intersection_area(block, landuse[k].polygon);
    }
    // Ties within clipping roundoff go to the lower class.
    const double top = *std::max_element(area.begin(), area.end());
    const double tol = 1e-9 * std::max(1.0, geometry::polygon_area(block));
    if (top <= tol) {
      out.classes.push_back(0);
      ++out.defaulted;
    } else {
      const auto best = std::find_if(area.begin(), area.end(), [&](double a) { return a >= top - tol; });
      out.classes.push_back(static_cast<int>(best - area.begin()));
    }
  }
  if (out.defaulted > 0) {
    log_warning(std::to_string(out.defaulted) + " block(s) overlap no land-use polygon; class 0 assigned");
  }
  return out;
}

std::vector<BlockRecord> assemble(const std::vector<BlockFeature>& blocks, std::vector<RawBuilding> buildings,
                                  const std::vector<LandUseFeature>& landuse, int num_classes,
                                  AssembleReport* report) {
  std::vector<Polygon> polys;
  for (const auto& b : blocks) polys.push_back(b.boundary);
  const JoinResult join = spatial_join(polys, buildings);
  const LandUseAssignment lu = assign_landuse(polys, landuse, num_classes);
  std::vector<BlockRecord> records;
  std::size_t defaulted = 0;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    int cls = lu.classes[k];
    if (blocks[k].land_use) {
      cls = *blocks[k].land_use;
    } else if (landuse.empty() || geometry::polygon_area(polys[k]) <= 0.0) {
      cls = 0;
      ++defaulted;
    } else if (lu.classes[k] == 0) {
      // Distinguish a real class-0 winner from the no-overlap default.
      bool any = false;
      for (const auto& l : landuse) {
        if (geometry::intersection_area(polys[k], l.polygon) > 0.0) {
          any = true;
          break;
        }
      }
      if (!any) ++defaulted;
    }
    records.push_back({blocks[k].id, blocks[k].boundary, cls, {}});
  }
  // Per-class median height for buildings that arrived without one.
  std::size_t imputed = 0;
  std::vector<std::vector<double>> heights(static_cast<std::size_t>(std::max(1, num_classes)));
  for (std::size_t i = 0; i < buildings.size(); ++i) {
    const int k = join.block_of[i];
    if (k >= 0 && !std::isnan(buildings[i].height)) {
      heights[static_cast<std::size_t>(records[static_cast<std::size_t>(k)].land_use)].push_back(buildings[i].height);
    }
  }
  std::vector<double> median(heights.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t c = 0; c < heights.size(); ++c) {
    auto& h = heights[c];
    if (h.empty()) continue;
    std::sort(h.begin(), h.end());
    median[c] = h.size() % 2 == 1 ? h[h.size() / 2] : 0.5 * (h[h.size() / 2 - 1] + h[h.size() / 2]);
  }
  for (std::size_t i = 0; i < buildings.size(); ++i) {
    const int k = join.block_of[i];
    if (k < 0) continue;
    BlockRecord& rec = records[static_cast<std::size_t>(k)];
    if (std::isnan(buildings[i].height)) {
      const double m = median[static_cast<std::size_t>(rec.land_use)];
      if (std::isnan(m)) continue;
      buildings[i].height = m;
      ++imputed;
    }
    rec.buildings.push_back(std::move(buildings[i]));
  }
  std::stable_sort(records.begin(), records.end(), [](const BlockRecord& a, const BlockRecord& b) { return a.id < b.id; });
  if (report != nullptr) {
    report->dropped_buildings = join.dropped;
    report->defaulted_landuse = defaulted;
    report->imputed_heights = imputed;
  }
  return records;
}

Dataset build_dataset(const std::vector<BlockRecord>& records, const blockgraph::GraphConfig& cfg) {
  Dataset ds;
  for (const BlockRecord& r : records) {
    if (r.buildings.empty()) {
      ds.excluded.push_back({r.id, "no buildings"});
      continue;
    }
    std::vector<blockgraph::BuildingInput> in;
    for (const auto& b : r.buildings) in.push_back({b.footprint, b.height});
    try {
      ds.items.push_back({blockgraph::build_layout_graph(r.boundary, in, cfg, r.id), r.boundary, r.land_use});
    } catch (const BlockTooDense& e) {
      ds.excluded.push_back({r.id, std::string("too dense: ") + e.what()});
    } catch (const NonPositiveHeight& e) {
      ds.excluded.push_back({r.id, std::string("non-positive height: ") + e.what()});
    } catch (const InvalidGeometry& e) {
      ds.excluded.push_back({r.id, std::string("invalid geometry: ") + e.what()});
    }
  }
  if (ds.items.empty()) throw EmptyDataset("no block passed the dataset filters");
  return ds;
}

std::string exclusion_log(const std::vector<Exclusion>& excluded) {
  std::string out;
  for (const auto& e : excluded) {
    std::string reason = e.reason;
    std::replace(reason.begin(), reason.end(), '\n', ' ');
    std::replace(reason.begin(), reason.end(), '\t', ' ');
    out += e.block_id + "\t" + reason + "\n";
  }
  return out;
}

std::vector<SynthProfile> default_profiles() {
  std::vector<SynthProfile> p(5);
  // residential: regular rows of small houses
  p[0].rows = {2, 4};
  p[0].cols = {3, 6};
  p[0].height_mean = 12.0;
  p[0].height_std = 3.0;
  p[0].fill = 0.35;
  p[0].shape_weights = {6, 0, 2, 0, 0, 0, 0, 0};
  // commercial: few tall buildings
  p[1].rows = {1, 2};
  p[1].cols = {1, 3};
  p[1].height_mean = 60.0;
  p[1].height_std = 15.0;
  p[1].fill = 0.45;
  p[1].shape_weights = {5, 1, 1, 0, 1, 0, 1, 0};
  // industrial: large low sheds
  p[2].rows = {1, 2};
  p[2].cols = {1, 3};
  p[2].height_mean = 10.0;
  p[2].height_std = 2.0;
  p[2].fill = 0.5;
  // public
  p[3].rows = {1, 2};
  p[3].cols = {1, 2};
  p[3].height_mean = 18.0;
  p[3].height_std = 5.0;
  p[3].fill = 0.3;
  p[3].shape_weights = {3, 1, 0, 1, 0, 0, 1, 0};
  // recreation: sparse small pavilions
  p[4].rows = {1, 2};
  p[4].cols = {1, 3};
  p[4].height_mean = 6.0;
  p[4].height_std = 1.5;
  p[4].fill = 0.1;
  return p;
}

std::vector<BlockRecord> synth_corpus(std::uint64_t seed, int n_blocks, const std::vector<SynthProfile>& profiles) {
  if (n_blocks < 1 || profiles.empty()) throw InvalidParams("synth_corpus needs at least one block and one profile");
  for (const auto& p : profiles) {
    if (p.rows[0] < 1 || p.rows[1] < p.rows[0] || p.rows[1] > 10 || p.cols[0] < 1 || p.cols[1] < p.cols[0] ||
        p.cols[1] > 12 || !(p.fill > 0.0 && p.fill <= 0.6) || !(p.height_mean > 0.0) || p.height_std < 0.0) {
      throw InvalidParams("invalid synthetic profile");
    }
  }
  const int lattice = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_blocks))));
  std::vector<BlockRecord> out;
  for (int k = 0; k < n_blocks; ++k) {
    CounterRng rng(hash_combine(seed, static_cast<std::uint64_t>(k)));
    auto uniform = [&](double a, double b) { return a + (b - a) * rng.uniform(); };
    auto int_in = [&](std::array<int, 2> r) {
      return r[0] + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(r[1] - r[0] + 1));
    };
    const int cls = k % static_cast<int>(profiles.size());
    const SynthProfile& p = profiles[static_cast<std::size_t>(cls)];
    const double W = uniform(110.0, 180.0);
    const double H = uniform(60.0, 95.0);
    const double angle = uniform(0.0, std::numbers::pi);
    const Vec2 center{300.0 * (k % lattice), 300.0 * (k / lattice)};
    auto world = [&](Vec2 local) { return center + geometry::rotate(local, angle); };

    BlockRecord rec;
    rec.id = "b" + std::to_string(k);
    rec.land_use = cls;
    rec.boundary = Polygon({world({-W / 2, -H / 2}), world({W / 2, -H / 2}), world({W / 2, H / 2}), world({-W / 2, H / 2})});

    const int rows = int_in(p.rows), cols = int_in(p.cols);
    const double cw = W / cols, ch = H / rows;
    const double base = std::max(3.0, p.height_mean + p.height_std * rng.normal());
    double wsum = 0.0;
    for (double w : p.shape_weights) wsum += w;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        // Shape class by weight; pose and parameters uniform.
        shapelib::ShapeClass shape = shapelib::ShapeClass::kRect;
        if (wsum > 0.0) {
          double pick = rng.uniform() * wsum;
          for (int s = 0; s < shapelib::kNumClasses; ++s) {
            pick -= p.shape_weights[static_cast<std::size_t>(s)];
            if (pick <= 0.0) {
              shape = shapelib::class_from_index(s);
              break;
            }
          }
        }
        const auto poses = shapelib::class_poses(shape);
        const int pose = poses[rng.next_u64() % poses.size()];
        shapelib::ShapeParams params;
        params.values = {uniform(0.2, 0.8), uniform(0.2, 0.8)};
        const Polygon tmpl = shapelib::posed_template(shape, params, pose);
        // Enlarge non-rectangular templates so the footprint area still
        // matches the fill ratio, within the cell.
        const double grow = std::sqrt(1.0 / geometry::polygon_area(tmpl));
        const double aspect = uniform(0.85, 1.15);
        const double s = std::sqrt(p.fill);
        const double bw = std::min(0.95 * cw, cw * s * aspect * grow);
        const double bh = std::min(0.95 * ch, ch * s / aspect * grow);
        const double dx = 0.3 * (cw - bw) / 2 * uniform(-1.0, 1.0);
        const double dy = 0.3 * (ch - bh) / 2 * uniform(-1.0, 1.0);
        const Vec2 cell{-W / 2 + (c + 0.5) * cw + dx, H / 2 - (r + 0.5) * ch + dy};
        const Polygon fp = geometry::transform(tmpl, [&](Vec2 q) {
          return world({cell.x + (q.x - 0.5) * bw, cell.y + (q.y - 0.5) * bh});
        });
        const double h = std::clamp(base * uniform(0.9, 1.1), 3.0, 195.0);
        rec.buildings.push_back({fp, h, rec.id + "_" + std::to_string(r * cols + c)});
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

Json DatasetStats::to_json(const LandUseTable& table) const {
  Json per_class = Json::object();
  for (std::size_t c = 0; c < blocks_per_class.size(); ++c) {
    per_class[table.name(static_cast<int>(c))] = blocks_per_class[c];
  }
  return Json{{"total_blocks", buildings_per_block.blocks},
              {"buildings_per_block",
               {{"max", buildings_per_block.max},
                {"min", buildings_per_block.min},
                {"avg", buildings_per_block.avg},
                {"std", buildings_per_block.std}}},
              {"blocks_per_land_use", per_class}};
}

DatasetStats dataset_stats(const std::vector<BlockRecord>& records, int num_classes) {
  if (records.empty()) throw EmptyDataset("no records");
  DatasetStats s;
  s.blocks_per_class.assign(static_cast<std::size_t>(num_classes), 0);
  CountSummary& c = s.buildings_per_block;
  c.blocks = records.size();
  c.min = std::numeric_limits<std::size_t>::max();
  double sum = 0.0;
  for (const auto& r : records) {
    const std::size_t n = r.buildings.size();
    c.max = std::max(c.max, n);
    c.min = std::min(c.min, n);
    sum += static_cast<double>(n);
    if (r.land_use >= 0 && r.land_use < num_classes) ++s.blocks_per_class[static_cast<std::size_t>(r.land_use)];
  }
  c.avg = sum / static_cast<double>(records.size());
  double var = 0.0;
  for (const auto& r : records) var += std::pow(static_cast<double>(r.buildings.size()) - c.avg, 2);
  c.std = std::sqrt(var / static_cast<double>(records.size()));
  return s;
}

}  // namespace urbangen::ingest
