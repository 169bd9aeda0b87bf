#include "urbangen/artifactio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "urbangen/errors.hpp"

namespace urbangen::artifactio {

using blockgraph::GeneratedBuilding;
using blockgraph::GeneratedLayout;
using geometry::Polygon;

namespace {

constexpr char kMagic[8] = {'U', 'G', 'C', 'K', 'P', 'T', '\r', '\n'};

std::vector<const GeneratedLayout*> by_block_id(const std::vector<GeneratedLayout>& layouts) {
  std::vector<const GeneratedLayout*> order;
  for (const auto& l : layouts) order.push_back(&l);
  std::stable_sort(order.begin(), order.end(),
                   [](const GeneratedLayout* a, const GeneratedLayout* b) { return a->block_id < b->block_id; });
  return order;
}

const Json& require(const Json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) throw IoError(std::string("missing '") + key + "'");
  return obj[key];
}

}  // namespace

Json export_geojson(const std::vector<GeneratedLayout>& layouts, const std::map<std::string, Polygon>& blocks) {
  Json features = Json::array();
  for (const GeneratedLayout* l : by_block_id(layouts)) {
    if (auto it = blocks.find(l->block_id); it != blocks.end()) {
      features.push_back({{"type", "Feature"},
                          {"geometry", geojson::polygon_geometry(it->second, kCoordinateQuantum)},
                          {"properties", {{"block_id", l->block_id}, {"kind", "block"}, {"land_use", l->land_use}}}});
    }
    for (std::size_t k = 0; k < l->buildings.size(); ++k) {
      const GeneratedBuilding& b = l->buildings[k];
      features.push_back({{"type", "Feature"},
                          {"geometry", geojson::polygon_geometry(b.footprint, kCoordinateQuantum)},
                          {"properties",
                           {{"block_id", l->block_id},
                            {"height", b.height},
                            {"index", k},
                            {"kind", "building"},
                            {"land_use", l->land_use},
                            {"shape", std::string(shapelib::class_name(b.shape))}}}});
    }
  }
  return Json{{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

std::string geojson_text(const std::vector<GeneratedLayout>& layouts, const std::map<std::string, Polygon>& blocks) {
  return export_geojson(layouts, blocks).dump() + "\n";
}

LayoutDocument parse_layouts(const Json& doc) {
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection") throw IoError("not a FeatureCollection");
  const Json& features = require(doc, "features");
  if (!features.is_array()) throw IoError("features is not an array");
  LayoutDocument out;
  std::map<std::string, std::size_t> index;
  auto layout_for = [&](const std::string& id, int land_use) -> GeneratedLayout& {
    auto [it, fresh] = index.emplace(id, out.layouts.size());
    if (fresh) out.layouts.push_back({id, land_use, {}});
    return out.layouts[it->second];
  };
  for (const Json& f : features) {
    const Json& props = require(f, "properties");
    const Json& id = require(props, "block_id");
    if (!id.is_string()) throw IoError("block_id must be a string");
    const int land_use = props.value("land_use", 0);
    std::vector<Polygon> parts = geojson::parse_polygons(require(f, "geometry"));
    if (parts.size() != 1) throw InvalidGeometry("layout features must be single polygons");
    if (props.value("kind", "building") == "block") {
      layout_for(id.get<std::string>(), land_use);
      out.blocks[id.get<std::string>()] = std::move(parts[0]);
      continue;
    }
    const Json& h = require(props, "height");
    if (!h.is_number() || !(h.get<double>() > 0.0)) throw IoError("height must be a positive number");
    GeneratedBuilding b;
    b.footprint = std::move(parts[0]);
    b.height = h.get<double>();
    if (props.contains("shape")) {
      const auto s = shapelib::class_from_name(props["shape"].get<std::string>());
      if (!s) throw IoError("unknown shape '" + props["shape"].get<std::string>() + "'");
      b.shape = *s;
    }
    layout_for(id.get<std::string>(), land_use).buildings.push_back(std::move(b));
  }
  return out;
}

LayoutDocument load_layouts(const std::string& path) {
  const Json doc = geojson::read_file(path);
  try {
    return parse_layouts(doc);
  } catch (const Json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

Mesh extrude(const Polygon& footprint, double height) {
  if (!(height > 0.0)) throw NonPositiveHeight("extrusion height must be positive");
  const geometry::IndexedTriangulation tri = geometry::triangulate(footprint);
  const int n = static_cast<int>(tri.vertices.size());
  Mesh m;
  for (const auto& v : tri.vertices) m.vertices.push_back({v.x, v.y, 0.0});
  for (const auto& v : tri.vertices) m.vertices.push_back({v.x, v.y, height});
  for (auto t : tri.triangles) {
    const auto& a = tri.vertices[static_cast<std::size_t>(t[0])];
    const auto& b = tri.vertices[static_cast<std::size_t>(t[1])];
    const auto& c = tri.vertices[static_cast<std::size_t>(t[2])];
    if (geometry::cross(b - a, c - a) < 0) std::swap(t[1], t[2]);
    m.triangles.push_back({t[0], t[2], t[1]});  // bottom faces down
    m.triangles.push_back({t[0] + n, t[1] + n, t[2] + n});
  }
  // Walls: with the outer ring counter-clockwise and holes clockwise, the
  // solid lies left of every ring edge, so (a, b, b', a') faces outward.
  int start = 0;
  auto walls = [&](std::size_t size) {
    const int len = static_cast<int>(size);
    for (int i = 0; i < len; ++i) {
      const int a = start + i, b = start + (i + 1) % len;
      m.triangles.push_back({a, b, b + n});
      m.triangles.push_back({a, b + n, a + n});
    }
    start += len;
  };
  walls(footprint.outer().size());
  for (const auto& h : footprint.holes()) walls(h.size());
  return m;
}

std::string export_obj(const std::vector<GeneratedLayout>& layouts) {
  std::string out = "# urbangen building extrusions, z up, meters\n";
  char buf[128];
  std::size_t base = 1;
  for (const GeneratedLayout* l : by_block_id(layouts)) {
    for (std::size_t k = 0; k < l->buildings.size(); ++k) {
      const Mesh m = extrude(l->buildings[k].footprint, l->buildings[k].height);
      out += "o bldg_" + l->block_id + "_" + std::to_string(k) + "\n";
      for (const Vec3& v : m.vertices) {
        std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
        out += buf;
      }
      for (const auto& t : m.triangles) {
        std::snprintf(buf, sizeof buf, "f %zu %zu %zu\n", base + static_cast<std::size_t>(t[0]),
                      base + static_cast<std::size_t>(t[1]), base + static_cast<std::size_t>(t[2]));
        out += buf;
      }
      base += m.vertices.size();
    }
  }
  return out;
}

Json records_json(const std::vector<ingest::BlockRecord>& records) {
  Json blocks = Json::array();
  for (const auto& r : records) {
    Json buildings = Json::array();
    for (const auto& b : r.buildings) {
      buildings.push_back({{"geometry", geojson::polygon_geometry(b.footprint)},
                           {"height", b.height},
                           {"source_id", b.source_id}});
    }
    blocks.push_back({{"id", r.id},
                      {"land_use", r.land_use},
                      {"geometry", geojson::polygon_geometry(r.boundary)},
                      {"buildings", std::move(buildings)}});
  }
  return Json{{"format", "urbangen-records"}, {"version", 1}, {"blocks", std::move(blocks)}};
}

std::vector<ingest::BlockRecord> parse_records(const Json& doc) {
  if (!doc.is_object() || doc.value("format", "") != "urbangen-records") throw IoError("not a record corpus");
  std::vector<ingest::BlockRecord> out;
  try {
    for (const Json& b : require(doc, "blocks")) {
      ingest::BlockRecord r;
      r.id = require(b, "id").get<std::string>();
      r.land_use = require(b, "land_use").get<int>();
      r.boundary = geojson::parse_polygons(require(b, "geometry")).at(0);
      for (const Json& x : require(b, "buildings")) {
        r.buildings.push_back({geojson::parse_polygons(require(x, "geometry")).at(0), require(x, "height").get<double>(),
                               x.value("source_id", "")});
      }
      out.push_back(std::move(r));
    }
  } catch (const Json::exception& e) {
    throw IoError(std::string("malformed record corpus: ") + e.what());
  }
  return out;
}

void save_records(const std::string& path, const std::vector<ingest::BlockRecord>& records) {
  geojson::write_file(path, records_json(records).dump() + "\n");
}

std::vector<ingest::BlockRecord> load_records(const std::string& path) {
  return parse_records(geojson::read_file(path));
}

Json model_config_json(const model::ModelConfig& c) {
  return Json{{"grid_rows", c.dims.rows},   {"grid_cols", c.dims.cols},     {"hidden", c.hidden},
              {"latent", c.latent},         {"heads", c.heads},             {"layers", c.layers},
              {"cond_dim", c.cond_dim},     {"height_bins", c.height_bins}, {"edge_bins", c.edge_bins},
              {"slope", c.slope}};
}

model::ModelConfig model_config_from_json(const Json& j) {
  model::ModelConfig c;
  c.dims.rows = j.value("grid_rows", c.dims.rows);
  c.dims.cols = j.value("grid_cols", c.dims.cols);
  c.hidden = j.value("hidden", c.hidden);
  c.latent = j.value("latent", c.latent);
  c.heads = j.value("heads", c.heads);
  c.layers = j.value("layers", c.layers);
  c.cond_dim = j.value("cond_dim", c.cond_dim);
  c.height_bins = j.value("height_bins", c.height_bins);
  c.edge_bins = j.value("edge_bins", c.edge_bins);
  c.slope = j.value("slope", c.slope);
  return c;
}

Json train_config_json(const model::TrainConfig& c) {
  return Json{{"epochs", c.epochs},
              {"lambda_exist", c.lambda_exist},
              {"lambda_pos", c.lambda_pos},
              {"lambda_size", c.lambda_size},
              {"lambda_height", c.lambda_height},
              {"lambda_shape", c.lambda_shape},
              {"lambda_iou", c.lambda_iou},
              {"lambda_edge", c.lambda_edge},
              {"beta_kl", c.beta_kl},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"seed", c.seed}};
}

model::TrainConfig train_config_from_json(const Json& j) {
  model::TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.lambda_exist = j.value("lambda_exist", c.lambda_exist);
  c.lambda_pos = j.value("lambda_pos", c.lambda_pos);
  c.lambda_size = j.value("lambda_size", c.lambda_size);
  c.lambda_height = j.value("lambda_height", c.lambda_height);
  c.lambda_shape = j.value("lambda_shape", c.lambda_shape);
  c.lambda_iou = j.value("lambda_iou", c.lambda_iou);
  c.lambda_edge = j.value("lambda_edge", c.lambda_edge);
  c.beta_kl = j.value("beta_kl", c.beta_kl);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::string shape_text(long rows, long cols) { return std::to_string(rows) + "x" + std::to_string(cols); }

void append_tensors(const nn::ParamSet& ps, const std::string& prefix, Json& list, std::string& body) {
  for (int i = 0; i < ps.size(); ++i) {
    const nn::Matrix& m = ps.value(i);
    list.push_back({{"name", prefix + ps.name(i)}, {"rows", m.rows()}, {"cols", m.cols()}});
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) put_u64(body, std::bit_cast<std::uint64_t>(m(r, c)));
    }
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const model::CVAE& cvae, const condition::BlockAutoencoder& ae,
                     const model::TrainConfig& tc, int num_classes) {
  Json tensors = Json::array();
  std::string body;
  append_tensors(cvae.params(), "cvae/", tensors, body);
  append_tensors(ae.params(), "ae/", tensors, body);
  const Json header{{"model", model_config_json(cvae.config())},
                    {"train", train_config_json(tc)},
                    {"num_classes", num_classes},
                    {"seed", tc.seed},
                    {"tensors", std::move(tensors)}};
  const std::string text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  const std::uint32_t version = kCheckpointVersion;
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((version >> (8 * i)) & 0xFF));
  put_u64(out, text.size());
  out += text;
  out += body;
  geojson::write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path, const model::ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
  if (data.size() < 20 || std::memcmp(data.data(), kMagic, sizeof kMagic) != 0) {
    throw CorruptCheckpoint(path + ": not a checkpoint (bad magic)");
  }
  std::uint32_t version = 0;
  for (int i = 0; i < 4; ++i) version |= static_cast<std::uint32_t>(bytes[8 + i]) << (8 * i);
  if (version != kCheckpointVersion) {
    throw CorruptCheckpoint(path + ": format version " + std::to_string(version) + ", expected " +
                            std::to_string(kCheckpointVersion));
  }
  const std::uint64_t header_size = get_u64(bytes + 12);
  if (header_size > data.size() - 20) throw CorruptCheckpoint(path + ": truncated header");
  Json header;
  try {
    header = Json::parse(data.substr(20, header_size));
  } catch (const Json::exception& e) {
    throw CorruptCheckpoint(path + ": unreadable header: " + e.what());
  }

  Checkpoint ck;
  try {
    ck.model_config = model_config_from_json(header.at("model"));
    ck.train_config = train_config_from_json(header.at("train"));
    ck.num_classes = header.at("num_classes").get<int>();
    if (expected != nullptr && !(*expected == ck.model_config)) {
      if (!(expected->dims == ck.model_config.dims)) {
        throw CorruptCheckpoint(path + ": grid " + shape_text(ck.model_config.dims.rows, ck.model_config.dims.cols) +
                                " in file, " + shape_text(expected->dims.rows, expected->dims.cols) + " expected");
      }
      throw CorruptCheckpoint(path + ": model configuration differs from the expected one");
    }
    ck.cvae = std::make_unique<model::CVAE>(ck.model_config, 0);
  } catch (const Json::exception& e) {
    throw CorruptCheckpoint(path + ": bad header: " + e.what());
  } catch (const InvalidParams& e) {
    throw CorruptCheckpoint(path + ": bad model configuration: " + e.what());
  }
  ck.autoencoder = std::make_unique<condition::BlockAutoencoder>(0);

  std::size_t offset = 20 + header_size;
  std::size_t filled = 0;
  std::set<std::string> seen;
  try {
    for (const Json& t : header.at("tensors")) {
      const std::string name = t.at("name").get<std::string>();
      const long rows = t.at("rows").get<long>(), cols = t.at("cols").get<long>();
      nn::ParamSet* ps = nullptr;
      std::string local;
      if (name.rfind("cvae/", 0) == 0) {
        ps = &ck.cvae->params();
        local = name.substr(5);
      } else if (name.rfind("ae/", 0) == 0) {
        ps = &ck.autoencoder->params();
        local = name.substr(3);
      } else {
        throw CorruptCheckpoint(path + ": unknown tensor " + name);
      }
      const int idx = ps->find(local);
      if (!seen.insert(name).second) throw CorruptCheckpoint(path + ": duplicate tensor " + name);
      if (idx < 0) throw CorruptCheckpoint(path + ": unknown tensor " + name);
      nn::Matrix& m = ps->value(idx);
      if (m.rows() != rows || m.cols() != cols) {
        throw CorruptCheckpoint(path + ": tensor " + name + " is " + shape_text(rows, cols) + " in file, model needs " +
                                shape_text(m.rows(), m.cols()));
      }
      const std::size_t need = static_cast<std::size_t>(rows * cols) * 8;
      if (data.size() - offset < need) throw CorruptCheckpoint(path + ": truncated at tensor " + name);
      for (long r = 0; r < rows; ++r) {
        for (long c = 0; c < cols; ++c) {
          m(r, c) = std::bit_cast<double>(get_u64(bytes + offset));
          offset += 8;
        }
      }
      ++filled;
    }
  } catch (const Json::exception& e) {
    throw CorruptCheckpoint(path + ": bad tensor table: " + e.what());
  }
  const std::size_t total = static_cast<std::size_t>(ck.cvae->params().size() + ck.autoencoder->params().size());
  if (filled != total) {
    throw CorruptCheckpoint(path + ": " + std::to_string(filled) + " tensors stored, model has " +
                            std::to_string(total));
  }
  if (offset != data.size()) throw CorruptCheckpoint(path + ": trailing bytes after the last tensor");
  return ck;
}

}  // namespace urbangen::artifactio
