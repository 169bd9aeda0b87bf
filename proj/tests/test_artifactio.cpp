#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "oracles.hpp"
#include "test_support.hpp"
#include "urbangen/artifactio.hpp"
#include "urbangen/errors.hpp"
#include "urbangen/log.hpp"

using namespace urbangen;
using namespace urbangen::geometry;
using namespace urbangen::artifactio;
using blockgraph::GeneratedBuilding;
using blockgraph::GeneratedLayout;
using namespace urbangen::testing;

namespace {

const LogSink quiet = set_log_sink([](LogLevel, std::string_view) {});

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("urbangen_artifactio_" + name);
}

// Layouts decoded from the synthetic corpus, so footprints carry clipping
// and template vertices rather than round numbers.
std::vector<GeneratedLayout> corpus_layouts(int n, std::map<std::string, Polygon>* blocks) {
  std::vector<GeneratedLayout> out;
  auto profiles = ingest::default_profiles();
  for (auto& p : profiles) p.shape_weights = {1, 1, 1, 1, 1, 1, 1, 1};
  for (const auto& r : ingest::synth_corpus(3, n, profiles)) {
    std::vector<blockgraph::BuildingInput> in;
    for (const auto& b : r.buildings) in.push_back({b.footprint, b.height});
    const auto g = blockgraph::build_layout_graph(r.boundary, in, {}, r.id);
    out.push_back({r.id, r.land_use, blockgraph::degraph(g, r.boundary)});
    if (blocks != nullptr) (*blocks)[r.id] = r.boundary;
  }
  return out;
}

model::ModelConfig tiny_config() {
  model::ModelConfig c;
  c.dims = blockgraph::GridDims{2, 3};
  c.hidden = 8;
  c.latent = 4;
  c.heads = 1;
  c.height_bins = 6;
  c.edge_bins = 5;
  return c;
}

}  // namespace

TEST_CASE("geojson export basics") {
  const Json empty = export_geojson({});
  CHECK(empty["type"] == "FeatureCollection");
  CHECK(empty["features"].empty());

  GeneratedLayout l{"blk", 2, {}};
  l.buildings.push_back({rect_polygon({0, 0}, 10, 6, 0.2), 12.345678901234567, shapelib::ShapeClass::kRect});
  l.buildings.push_back({rect_polygon({20, 0}, 8, 8, 0.2), 0.1 + 0.2, shapelib::ShapeClass::kL});
  const Json doc = export_geojson({l});
  REQUIRE(doc["features"].size() == 2);
  CHECK(doc["features"][0]["properties"]["height"].get<double>() == 12.345678901234567);
  CHECK(doc["features"][1]["properties"]["height"].get<double>() == 0.1 + 0.2);
  CHECK(doc["features"][1]["properties"]["shape"] == "l");
  CHECK(doc["features"][1]["properties"]["land_use"] == 2);
  const LayoutDocument back = parse_layouts(Json::parse(doc.dump()));
  REQUIRE(back.layouts.size() == 1);
  CHECK(back.layouts[0].buildings[1].height == 0.1 + 0.2);
  CHECK(back.layouts[0].buildings[1].shape == shapelib::ShapeClass::kL);
}

TEST_CASE("geojson export, load, export is byte-identical") {
  std::map<std::string, Polygon> blocks;
  const auto layouts = corpus_layouts(40, &blocks);
  const std::string first = geojson_text(layouts, blocks);
  const auto path = temp_file("layouts.geojson");
  geojson::write_file(path.string(), first);
  const LayoutDocument doc = load_layouts(path.string());
  CHECK(doc.blocks.size() == 40);
  const std::string second = geojson_text(doc.layouts, doc.blocks);
  CHECK(first == second);
  CHECK(geojson_text(layouts, blocks) == first);
  std::filesystem::remove(path);

  // Coordinates survive within the export quantum.
  std::map<std::string, const GeneratedLayout*> by_id;
  for (const auto& l : doc.layouts) by_id[l.block_id] = &l;
  double worst = 0.0;
  for (const auto& l : layouts) {
    const GeneratedLayout& m = *by_id.at(l.block_id);
    REQUIRE(m.buildings.size() == l.buildings.size());
    for (std::size_t k = 0; k < l.buildings.size(); ++k) {
      const Ring& a = l.buildings[k].footprint.outer();
      const Ring& b = m.buildings[k].footprint.outer();
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max({worst, std::abs(a[i].x - b[i].x), std::abs(a[i].y - b[i].y)});
      }
      CHECK(m.buildings[k].height == l.buildings[k].height);
    }
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("export orders layouts by block id") {
  GeneratedLayout b{"b", 0, {{rect_polygon({0, 0}, 4, 4, 0), 3.0, {}}}};
  GeneratedLayout a{"a", 1, {{rect_polygon({9, 0}, 4, 4, 0), 5.0, {}}}};
  const Json doc = export_geojson({b, a});
  CHECK(doc["features"][0]["properties"]["block_id"] == "a");
  const auto objects = parse_obj(export_obj({b, a}));
  REQUIRE(objects.size() == 2);
  CHECK(objects[0].name == "bldg_a_0");
  CHECK(objects[1].name == "bldg_b_0");
}

TEST_CASE("obj extrusion counts") {
  SUBCASE("box") {
    const Mesh m = extrude(rect_polygon({3, 4}, 10, 5, 0.4), 7.0);
    CHECK(m.vertices.size() == 8);
    CHECK(m.triangles.size() == 12);
  }
  SUBCASE("L shape") {
    const Polygon l({{0, 0}, {10, 0}, {10, 4}, {4, 4}, {4, 9}, {0, 9}});
    const Mesh m = extrude(l, 3.0);
    CHECK(m.vertices.size() == 12);
    CHECK(m.triangles.size() == 20);
  }
  SUBCASE("courtyard") {
    const Polygon c({{0, 0}, {20, 0}, {20, 20}, {0, 20}}, {{{5, 5}, {5, 15}, {15, 15}, {15, 5}}});
    const Mesh m = extrude(c, 3.0);
    CHECK(m.vertices.size() == 16);
    // caps: n + 2h - 2 triangles each; walls: 2 per ring edge
    CHECK(m.triangles.size() == 2 * (8 + 2 - 2) + 16);
  }
  CHECK_THROWS_AS(extrude(rect_polygon({0, 0}, 1, 1, 0), 0.0), NonPositiveHeight);
}

TEST_CASE("obj meshes are watertight with prism volume") {
  const auto layouts = corpus_layouts(30, nullptr);
  const auto objects = parse_obj(export_obj(layouts));
  std::vector<const GeneratedBuilding*> flat;
  std::vector<std::string> names;
  for (const auto& l : layouts) {
    for (std::size_t k = 0; k < l.buildings.size(); ++k) {
      flat.push_back(&l.buildings[k]);
      names.push_back("bldg_" + l.block_id + "_" + std::to_string(k));
    }
  }
  // corpus ids are already sorted only within equal digit counts
  std::vector<std::size_t> order(flat.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return names[a].substr(0, names[a].rfind('_')) < names[b].substr(0, names[b].rfind('_'));
  });
  REQUIRE(objects.size() == flat.size());
  std::size_t holes = 0;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const GeneratedBuilding& b = *flat[order[i]];
    CHECK(objects[i].name == names[order[i]]);
    CHECK(watertight(objects[i]));
    const double expect = footprint_area(b.footprint) * b.height;
    CHECK(std::abs(signed_volume(objects[i]) - expect) <= 1e-6 * expect);
    holes += b.footprint.holes().size();
  }
  CHECK(holes > 0);
}

TEST_CASE("record corpus round trip") {
  const auto recs = ingest::synth_corpus(5, 12, ingest::default_profiles());
  const auto path = temp_file("records.json");
  save_records(path.string(), recs);
  const auto back = load_records(path.string());
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].id == recs[i].id);
    CHECK(back[i].land_use == recs[i].land_use);
    CHECK(back[i].boundary.outer() == recs[i].boundary.outer());
    REQUIRE(back[i].buildings.size() == recs[i].buildings.size());
    for (std::size_t k = 0; k < recs[i].buildings.size(); ++k) {
      CHECK(back[i].buildings[k].height == recs[i].buildings[k].height);
      CHECK(back[i].buildings[k].footprint.outer() == recs[i].buildings[k].footprint.outer());
    }
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(parse_records(Json{{"format", "other"}}), IoError);
}

TEST_CASE("checkpoint round trip is bitwise") {
  const auto cfg = tiny_config();
  model::CVAE m(cfg, 17);
  condition::BlockAutoencoder ae(23);
  model::TrainConfig tc;
  tc.epochs = 33;
  tc.seed = 0xFFFFFFFFFFFFFFF1ull;
  tc.beta_kl = 0.25;
  const auto path = temp_file("model.ckpt");
  save_checkpoint(path.string(), m, ae, tc, 5);
  const Checkpoint ck = load_checkpoint(path.string(), &cfg);
  CHECK(ck.model_config == cfg);
  CHECK(ck.train_config.epochs == 33);
  CHECK(ck.train_config.seed == tc.seed);
  CHECK(ck.train_config.beta_kl == 0.25);
  CHECK(ck.num_classes == 5);
  auto same = [](const nn::ParamSet& a, const nn::ParamSet& b) {
    if (a.size() != b.size()) return false;
    for (int i = 0; i < a.size(); ++i) {
      if (a.name(i) != b.name(i) || a.value(i).rows() != b.value(i).rows() || a.value(i).cols() != b.value(i).cols())
        return false;
      if (std::memcmp(a.value(i).data(), b.value(i).data(), sizeof(double) * a.value(i).size()) != 0) return false;
    }
    return true;
  };
  CHECK(same(ck.cvae->params(), m.params()));
  CHECK(same(ck.autoencoder->params(), ae.params()));
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint corruption is detected") {
  const auto cfg = tiny_config();
  model::CVAE m(cfg, 1);
  condition::BlockAutoencoder ae(1);
  const auto path = temp_file("corrupt.ckpt");
  save_checkpoint(path.string(), m, ae, {}, 5);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    bytes = ss.str();
  }
  auto write = [&](const std::string& b) { geojson::write_file(path.string(), b); };

  SUBCASE("truncated") {
    write(bytes.substr(0, bytes.size() - 9));
    CHECK_THROWS_AS(load_checkpoint(path.string()), CorruptCheckpoint);
    write(bytes.substr(0, 30));
    CHECK_THROWS_AS(load_checkpoint(path.string()), CorruptCheckpoint);
  }
  SUBCASE("trailing bytes") {
    write(bytes + "x");
    CHECK_THROWS_AS(load_checkpoint(path.string()), CorruptCheckpoint);
  }
  SUBCASE("bad magic and version") {
    std::string b = bytes;
    b[0] = 'X';
    write(b);
    CHECK_THROWS_AS(load_checkpoint(path.string()), CorruptCheckpoint);
    b = bytes;
    b[8] = 2;
    write(b);
    CHECK_THROWS_WITH_AS(load_checkpoint(path.string()), doctest::Contains("version 2"), CorruptCheckpoint);
  }
  SUBCASE("different grid dims") {
    write(bytes);
    auto other = cfg;
    other.dims = blockgraph::GridDims{3, 3};
    try {
      load_checkpoint(path.string(), &other);
      FAIL("expected CorruptCheckpoint");
    } catch (const CorruptCheckpoint& e) {
      const std::string msg = e.what();
      CHECK(msg.find("2x3") != std::string::npos);
      CHECK(msg.find("3x3") != std::string::npos);
    }
  }
  SUBCASE("header dims disagree with tensor shapes") {
    const std::string from = "\"grid_cols\":3", to = "\"grid_cols\":4";
    std::string b = bytes;
    const auto at = b.find(from);
    REQUIRE(at != std::string::npos);
    b.replace(at, from.size(), to);
    write(b);
    try {
      load_checkpoint(path.string());
      FAIL("expected CorruptCheckpoint");
    } catch (const CorruptCheckpoint& e) {
      const std::string msg = e.what();
      CHECK(msg.find("6x8") != std::string::npos);
      CHECK(msg.find("8x8") != std::string::npos);
    }
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.ckpt"), IoError);
}
