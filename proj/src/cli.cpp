#include "urbangen/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "urbangen/artifactio.hpp"
#include "urbangen/errors.hpp"
#include "urbangen/log.hpp"
#include "urbangen/metrics.hpp"
#include "urbangen/service.hpp"
#include "urbangen/shapelib.hpp"
// After Eigen: <resolv.h> defines a _res macro that clashes with Eigen.
#include "httplib.h"

namespace urbangen::cli {

namespace {

std::string fixed(double v, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

Json autoencoder_json(const condition::AutoencoderConfig& c) {
  return Json{{"epochs", c.epochs},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"eval_every", c.eval_every}};
}

void check(bool ok, const std::string& what) {
  if (!ok) throw InvalidParams("config: " + what);
}

}  // namespace

Json Config::to_json() const {
  Json names = Json::object();
  for (const auto& [k, v] : table.names) names[k] = v;
  Json m = artifactio::model_config_json(model);
  m.erase("cond_dim");
  return Json{{"seed", seed},
              {"land_use", {{"classes", table.classes}, {"names", names}}},
              {"model", m},
              {"train", artifactio::train_config_json(train)},
              {"autoencoder", autoencoder_json(autoencoder)}};
}

Config config_from_json(const Json& j) {
  if (!j.is_object()) throw InvalidParams("config: expected a JSON object");
  Config c;
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("land_use")) {
      const Json& lu = j["land_use"];
      c.table.classes = lu.value("classes", c.table.classes);
      if (lu.contains("names")) {
        c.table.names.clear();
        for (const auto& [k, v] : lu["names"].items()) {
          std::string key = k;
          std::transform(key.begin(), key.end(), key.begin(),
                         [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
          c.table.names[key] = v.get<int>();
        }
      }
    }
    const Json m = j.value("model", Json::object());
    c.model = artifactio::model_config_from_json(m);
    Json t = j.value("train", Json::object());
    if (!t.contains("seed")) t["seed"] = c.seed;
    c.train = artifactio::train_config_from_json(t);
    const Json a = j.value("autoencoder", Json::object());
    c.autoencoder.epochs = a.value("epochs", c.autoencoder.epochs);
    c.autoencoder.learning_rate = a.value("learning_rate", c.autoencoder.learning_rate);
    c.autoencoder.batch_size = a.value("batch_size", c.autoencoder.batch_size);
    c.autoencoder.seed = a.value("seed", c.seed);
    c.autoencoder.eval_every = a.value("eval_every", c.autoencoder.eval_every);
  } catch (const Json::exception& e) {
    throw InvalidParams(std::string("config: ") + e.what());
  }
  check(c.table.classes >= 1, "land_use.classes must be at least 1");
  for (const auto& [k, v] : c.table.names) check(v >= 0 && v < c.table.classes, "class index of '" + k + "'");
  c.model.cond_dim = condition::kEmbedDim + c.table.classes + 2;
  check(c.train.epochs >= 1 && c.train.batch_size >= 1 && c.train.learning_rate > 0, "train settings");
  check(c.autoencoder.epochs >= 0 && c.autoencoder.batch_size >= 1 && c.autoencoder.learning_rate > 0,
        "autoencoder settings");
  return c;
}

Config load_config(const std::string& path) { return config_from_json(geojson::read_file(path)); }

std::vector<ingest::BlockRecord> load_corpus(const std::string& spec, const Config& cfg) {
  if (spec.rfind("synth", 0) == 0 && spec.size() > 5 &&
      std::all_of(spec.begin() + 5, spec.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
    const auto profiles = ingest::default_profiles();
    if (static_cast<int>(profiles.size()) != cfg.num_classes()) {
      throw InvalidParams("synthetic corpora need " + std::to_string(profiles.size()) + " land-use classes");
    }
    return ingest::synth_corpus(cfg.seed, std::stoi(spec.substr(5)), profiles);
  }
  return artifactio::load_records(spec);
}

std::vector<condition::BlockRaster> block_rasters(const ingest::Dataset& ds, int num_classes) {
  std::vector<condition::BlockRaster> out;
  for (const auto& item : ds.items) {
    const auto s = condition::block_scalars(item.block);
    out.push_back(condition::rasterize_block(item.block, s.l_hat, s.p_hat, item.land_use, num_classes));
  }
  return out;
}

std::vector<model::Sample> make_samples(const ingest::Dataset& ds, const condition::BlockAutoencoder& ae,
                                        int num_classes) {
  std::vector<model::Sample> out;
  for (const auto& item : ds.items) {
    out.push_back({item.graph, condition::encode_condition(item.block, item.land_use, ae, num_classes).concat()});
  }
  return out;
}

TrainedGenerator train_generator(const std::vector<ingest::BlockRecord>& records, const Config& cfg,
                                 const ProgressFn& progress) {
  blockgraph::GraphConfig gcfg;
  gcfg.dims = cfg.model.dims;
  const ingest::Dataset ds = ingest::build_dataset(records, gcfg);
  TrainedGenerator out;
  out.excluded = ds.excluded;
  out.samples = ds.items.size();
  out.autoencoder = std::make_unique<condition::BlockAutoencoder>(cfg.autoencoder.seed);
  if (cfg.autoencoder.epochs > 0) {
    out.ae_result = condition::train_block_autoencoder(*out.autoencoder, block_rasters(ds, cfg.num_classes()),
                                                       cfg.autoencoder);
    if (progress) {
      for (std::size_t e = 0; e < out.ae_result.epoch_loss.size(); ++e) {
        progress("autoencoder", static_cast<int>(e) + 1, out.ae_result.epoch_loss[e]);
      }
    }
  }
  const auto samples = make_samples(ds, *out.autoencoder, cfg.num_classes());
  out.cvae = std::make_unique<model::CVAE>(cfg.model, cfg.train.seed);
  model::EpochCallback cb;
  if (progress) cb = [&](int epoch, double loss) { progress("cvae", epoch + 1, loss); };
  out.cvae_result = model::train(*out.cvae, samples, cfg.train, cb);
  return out;
}

std::string format_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t c = 0; c < width.size(); ++c) {
      const std::string cell = c < cells.size() ? cells[c] : "";
      // First column left-aligned, numbers right-aligned.
      if (c == 0) {
        s += cell + std::string(width[c] - cell.size(), ' ');
      } else {
        s += "  " + std::string(width[c] - cell.size(), ' ') + cell;
      }
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s + "\n";
  };
  std::string out = line(header);
  std::size_t total = 0;
  for (std::size_t w : width) total += w;
  out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
  for (const auto& r : rows) out += line(r);
  return out;
}

namespace {

std::string stats_tables(const ingest::DatasetStats& s, const std::string& source, const ingest::LandUseTable& table) {
  const auto& c = s.buildings_per_block;
  std::string out = format_table({"Source", "Max", "Min", "Avg", "Std", "Total Blocks"},
                                 {{source, std::to_string(c.max), std::to_string(c.min), fixed(c.avg, 1),
                                   fixed(c.std, 1), std::to_string(c.blocks)}});
  std::vector<std::vector<std::string>> rows;
  for (std::size_t k = 0; k < s.blocks_per_class.size(); ++k) {
    rows.push_back({table.name(static_cast<int>(k)), std::to_string(s.blocks_per_class[k])});
  }
  return out + "\n" + format_table({"Land use", "Blocks"}, rows);
}

// Blocks with their land use, from a blocks layer (class from the block's
// own property or a land-use layer) or a record corpus.
struct BlockInput {
  std::string id;
  geometry::Polygon boundary;
  int land_use = 0;
};

std::vector<BlockInput> read_blocks(const std::string& blocks_path, const std::string& landuse_path,
                                    const std::string& corpus, const Config& cfg, std::ostream& err) {
  std::vector<BlockInput> out;
  if (!corpus.empty()) {
    for (auto& r : load_corpus(corpus, cfg)) out.push_back({r.id, r.boundary, r.land_use});
    return out;
  }
  ingest::LoadOptions opt;
  opt.table = cfg.table;
  auto blocks = ingest::load_blocks(blocks_path, opt);
  for (const auto& s : blocks.report.skipped) err << "skipped " << s << "\n";
  std::vector<ingest::LandUseFeature> landuse;
  if (!landuse_path.empty()) landuse = ingest::load_landuse(landuse_path, opt).items;
  for (const auto& r : ingest::assemble(blocks.items, {}, landuse, cfg.num_classes())) {
    out.push_back({r.id, r.boundary, r.land_use});
  }
  return out;
}

struct Snapshot {
  artifactio::Checkpoint ck;
  std::shared_ptr<service::ModelSnapshot> snapshot;
};

Snapshot load_model(const std::string& path) {
  Snapshot s;
  s.ck = artifactio::load_checkpoint(path);
  s.snapshot = std::make_shared<service::ModelSnapshot>();
  s.snapshot->cvae = std::shared_ptr<const model::CVAE>(std::move(s.ck.cvae));
  s.snapshot->autoencoder = std::shared_ptr<const condition::BlockAutoencoder>(std::move(s.ck.autoencoder));
  s.snapshot->num_classes = s.ck.num_classes;
  s.snapshot->graph.dims = s.ck.model_config.dims;
  return s;
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  geojson::write_file(path, text);
  out << "wrote " << path << "\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vector-native 3D building layout generation per city block"};
  app.require_subcommand(1);
  std::string config_path;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path,
                 std::string("JSON config file (default: $") + kConfigEnv + " when set)");
  auto* seed_opt = app.add_option("--seed", seed, "Seed for synthesis, training and generation");
  auto* quiet = app.add_flag("--quiet", "Suppress the effective-config echo and library warnings");

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Join GeoJSON layers into a record corpus and print statistics");
  std::string in_blocks, in_buildings, in_landuse, in_out, in_excl;
  bool impute = false;
  ingest_cmd->add_option("--blocks", in_blocks, "Block polygons (properties: id, optional land_use)")->required();
  ingest_cmd->add_option("--buildings", in_buildings, "Building footprints (properties: height)")->required();
  ingest_cmd->add_option("--landuse", in_landuse, "Land-use polygons (properties: class)");
  ingest_cmd->add_option("--out", in_out, "Output record corpus (JSON)")->required();
  ingest_cmd->add_option("--exclusions", in_excl, "Write excluded blocks as id<TAB>reason");
  ingest_cmd->add_flag("--impute-heights", impute, "Fill missing heights with the per-class median");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic record corpus");
  int synth_n = 200;
  std::string synth_out, synth_blocks_out, synth_buildings_out;
  synth_cmd->add_option("--blocks", synth_n, "Number of blocks")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--out", synth_out, "Output record corpus (JSON)")->required();
  synth_cmd->add_option("--out-blocks", synth_blocks_out, "Also write the blocks as GeoJSON");
  synth_cmd->add_option("--out-buildings", synth_buildings_out, "Also write the buildings as GeoJSON");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Fit shape templates to every building and report per class");
  std::string fit_corpus;
  int fit_limit = 0;
  fit_cmd->add_option("--corpus", fit_corpus, "Record corpus or synth<N>")->required();
  fit_cmd->add_option("--limit", fit_limit, "Fit at most this many buildings (0: all)")->check(CLI::NonNegativeNumber);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the block autoencoder, then the layout CVAE");
  std::string tr_corpus, tr_out, tr_log;
  int tr_epochs = 0, tr_ae_epochs = -1, tr_batch = 0, tr_rows = 0, tr_cols = 0;
  double tr_lr = 0.0;
  train_cmd->add_option("--corpus", tr_corpus, "Record corpus or synth<N>")->required();
  train_cmd->add_option("--out", tr_out, "Checkpoint path")->required();
  auto* epochs_opt = train_cmd->add_option("--epochs", tr_epochs, "CVAE epochs")->check(CLI::PositiveNumber);
  auto* ae_epochs_opt =
      train_cmd->add_option("--ae-epochs", tr_ae_epochs, "Autoencoder epochs")->check(CLI::NonNegativeNumber);
  auto* lr_opt = train_cmd->add_option("--lr", tr_lr, "CVAE learning rate")->check(CLI::PositiveNumber);
  auto* batch_opt = train_cmd->add_option("--batch-size", tr_batch, "CVAE batch size")->check(CLI::PositiveNumber);
  auto* rows_opt = train_cmd->add_option("--grid-rows", tr_rows, "Grid rows")->check(CLI::PositiveNumber);
  auto* cols_opt = train_cmd->add_option("--grid-cols", tr_cols, "Grid columns")->check(CLI::PositiveNumber);
  train_cmd->add_option("--loss-log", tr_log, "Write per-epoch losses as CSV");

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "Sample layouts for blocks with a trained checkpoint");
  std::string gen_blocks, gen_landuse, gen_corpus, gen_ckpt, gen_out, gen_obj;
  auto* gen_blocks_opt = gen_cmd->add_option("--blocks", gen_blocks, "Block polygons (properties: id, land_use)");
  gen_cmd->add_option("--landuse", gen_landuse, "Land-use polygons for blocks without a land_use property");
  auto* gen_corpus_opt = gen_cmd->add_option("--corpus", gen_corpus, "Take blocks from a record corpus or synth<N>");
  gen_blocks_opt->excludes(gen_corpus_opt);
  gen_cmd->add_option("--ckpt", gen_ckpt, "Checkpoint")->required();
  gen_cmd->add_option("--out", gen_out, "Output layouts (GeoJSON)")->required();
  gen_cmd->add_option("--obj", gen_obj, "Also write an OBJ extrusion");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Compare generated layouts against references");
  std::string ev_gen, ev_ref, ev_blocks, ev_out;
  eval_cmd->add_option("--gen", ev_gen, "Generated layouts (GeoJSON)")->required();
  eval_cmd->add_option("--ref", ev_ref, "Reference layouts (GeoJSON)")->required();
  eval_cmd->add_option("--blocks", ev_blocks, "Block polygons, when the layout files carry none");
  eval_cmd->add_option("--out", ev_out, "Write the report as JSON");

  // export
  auto* export_cmd = app.add_subcommand("export", "Convert layouts or a record corpus to GeoJSON or OBJ");
  std::string ex_in, ex_out, ex_format = "geojson";
  export_cmd->add_option("--in", ex_in, "Layouts (GeoJSON) or a record corpus")->required();
  export_cmd->add_option("--out", ex_out, "Output path")->required();
  export_cmd->add_option("--format", ex_format, "geojson or obj")->check(CLI::IsMember({"geojson", "obj"}));

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP editing service");
  std::string sv_ckpt, sv_host = "127.0.0.1";
  int sv_port = 8080;
  serve_cmd->add_option("--ckpt", sv_ckpt, "Checkpoint (without one, generate answers 409)");
  serve_cmd->add_option("--host", sv_host, "Bind address");
  serve_cmd->add_option("--port", sv_port, "Port")->check(CLI::Range(1, 65535));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    app.exit(e, out, err);
    return 2;
  }

  LogSink previous;
  const bool silent = quiet->count() > 0;
  if (silent) previous = set_log_sink([](LogLevel level, std::string_view) { (void)level; });
  struct RestoreSink {
    bool active;
    LogSink sink;
    ~RestoreSink() {
      if (active) set_log_sink(std::move(sink));
    }
  } restore{silent, previous};

  try {
    if (config_path.empty()) {
      if (const char* env = std::getenv(kConfigEnv); env != nullptr && *env != '\0') config_path = env;
    }
    Config cfg = config_path.empty() ? config_from_json(Json::object()) : load_config(config_path);
    if (seed_opt->count() > 0) {
      cfg.seed = seed;
      cfg.train.seed = seed;
      cfg.autoencoder.seed = seed;
    }
    if (epochs_opt->count() > 0) cfg.train.epochs = tr_epochs;
    if (ae_epochs_opt->count() > 0) cfg.autoencoder.epochs = tr_ae_epochs;
    if (lr_opt->count() > 0) cfg.train.learning_rate = tr_lr;
    if (batch_opt->count() > 0) cfg.train.batch_size = tr_batch;
    if (rows_opt->count() > 0) cfg.model.dims.rows = tr_rows;
    if (cols_opt->count() > 0) cfg.model.dims.cols = tr_cols;
    if (!silent) err << "config " << cfg.to_json().dump() << "\n";

    if (ingest_cmd->parsed()) {
      ingest::LoadOptions opt;
      opt.table = cfg.table;
      opt.impute_missing_height = impute;
      auto blocks = ingest::load_blocks(in_blocks, opt);
      auto buildings = ingest::load_buildings(in_buildings, opt);
      std::vector<ingest::LandUseFeature> landuse;
      if (!in_landuse.empty()) landuse = ingest::load_landuse(in_landuse, opt).items;
      for (const auto* r : {&blocks.report, &buildings.report}) {
        for (const auto& s : r->skipped) err << "skipped " << s << "\n";
        for (const auto& w : r->warnings) err << "warning " << w << "\n";
      }
      ingest::AssembleReport rep;
      const auto records = ingest::assemble(blocks.items, std::move(buildings.items), landuse, cfg.num_classes(), &rep);
      blockgraph::GraphConfig gcfg;
      gcfg.dims = cfg.model.dims;
      const ingest::Dataset ds = ingest::build_dataset(records, gcfg);
      std::set<std::string> kept;
      for (const auto& item : ds.items) kept.insert(item.graph.block_id);
      std::vector<ingest::BlockRecord> usable;
      for (const auto& r : records) {
        if (kept.count(r.id) > 0) usable.push_back(r);
      }
      out << "blocks " << blocks.report.loaded << "/" << blocks.report.features << " loaded, buildings "
          << buildings.report.loaded << "/" << buildings.report.features << " loaded, " << rep.dropped_buildings
          << " outside every block, " << rep.imputed_heights << " heights imputed, " << ds.excluded.size()
          << " blocks excluded\n\n";
      out << stats_tables(ingest::dataset_stats(usable, cfg.num_classes()), in_buildings, cfg.table);
      if (!in_excl.empty()) write_text(in_excl, ingest::exclusion_log(ds.excluded), out);
      artifactio::save_records(in_out, usable);
      out << "wrote " << in_out << "\n";
    } else if (synth_cmd->parsed()) {
      const auto records = load_corpus("synth" + std::to_string(synth_n), cfg);
      artifactio::save_records(synth_out, records);
      out << stats_tables(ingest::dataset_stats(records, cfg.num_classes()), "synthetic", cfg.table);
      out << "wrote " << synth_out << "\n";
      if (!synth_blocks_out.empty()) {
        Json features = Json::array();
        for (const auto& r : records) {
          features.push_back({{"type", "Feature"},
                              {"geometry", geojson::polygon_geometry(r.boundary)},
                              {"properties", {{"id", r.id}, {"land_use", cfg.table.name(r.land_use)}}}});
        }
        write_text(synth_blocks_out, Json{{"type", "FeatureCollection"}, {"features", features}}.dump() + "\n", out);
      }
      if (!synth_buildings_out.empty()) {
        Json features = Json::array();
        for (const auto& r : records) {
          for (const auto& b : r.buildings) {
            features.push_back({{"type", "Feature"},
                                {"geometry", geojson::polygon_geometry(b.footprint)},
                                {"properties", {{"id", b.source_id}, {"height", b.height}}}});
          }
        }
        write_text(synth_buildings_out, Json{{"type", "FeatureCollection"}, {"features", features}}.dump() + "\n",
                   out);
      }
    } else if (fit_cmd->parsed()) {
      const auto records = load_corpus(fit_corpus, cfg);
      std::map<int, std::pair<int, double>> per_class;
      std::vector<double> ious;
      int done = 0;
      for (const auto& r : records) {
        for (const auto& b : r.buildings) {
          if (fit_limit > 0 && done >= fit_limit) break;
          const auto f = shapelib::fit_shape(b.footprint);
          auto& [n, sum] = per_class[static_cast<int>(f.shape)];
          ++n;
          sum += f.iou;
          ious.push_back(f.iou);
          ++done;
        }
      }
      std::vector<std::vector<std::string>> rows;
      for (const auto& [c, v] : per_class) {
        rows.push_back({std::string(shapelib::class_name(static_cast<shapelib::ShapeClass>(c))),
                        std::to_string(v.first), fixed(v.second / v.first, 4)});
      }
      out << format_table({"Shape", "Buildings", "Mean IoU"}, rows);
      if (!ious.empty()) {
        std::sort(ious.begin(), ious.end());
        const double mean = std::accumulate(ious.begin(), ious.end(), 0.0) / static_cast<double>(ious.size());
        out << "\n" << ious.size() << " buildings, mean IoU " << fixed(mean, 4) << ", min " << fixed(ious.front(), 4)
            << "\n";
      }
    } else if (train_cmd->parsed()) {
      const auto records = load_corpus(tr_corpus, cfg);
      std::string csv = "stage,epoch,loss\n";
      const int every = std::max(1, cfg.train.epochs / 25);
      const TrainedGenerator g = train_generator(records, cfg, [&](const std::string& stage, int epoch, double loss) {
        csv += stage + "," + std::to_string(epoch) + "," + fixed(loss, 9) + "\n";
        if (stage == "cvae" && (epoch == 1 || epoch % every == 0 || epoch == cfg.train.epochs)) {
          out << "epoch " << std::setw(4) << epoch << "  loss " << fixed(loss, 4) << "\n" << std::flush;
        }
      });
      for (const auto& e : g.excluded) err << "excluded " << e.block_id << ": " << e.reason << "\n";
      const auto& losses = g.cvae_result.epoch_loss;
      out << "trained on " << g.samples << " blocks; loss " << fixed(losses.front(), 4) << " -> "
          << fixed(losses.back(), 4) << " (" << fixed(losses.back() / losses.front(), 3) << " of epoch 1)\n";
      if (!g.ae_result.mse_curve.empty()) {
        out << "autoencoder reconstruction MSE " << fixed(g.ae_result.mse_curve.front(), 5) << " -> "
            << fixed(g.ae_result.mse_curve.back(), 5) << "\n";
      }
      artifactio::save_checkpoint(tr_out, *g.cvae, *g.autoencoder, cfg.train, cfg.num_classes());
      out << "wrote " << tr_out << "\n";
      if (!tr_log.empty()) write_text(tr_log, csv, out);
    } else if (gen_cmd->parsed()) {
      if (gen_blocks.empty() && gen_corpus.empty()) throw InvalidParams("generate needs --blocks or --corpus");
      const Snapshot m = load_model(gen_ckpt);
      const auto blocks = read_blocks(gen_blocks, gen_landuse, gen_corpus, cfg, err);
      std::vector<blockgraph::GeneratedLayout> layouts;
      std::map<std::string, geometry::Polygon> outlines;
      std::size_t buildings = 0;
      for (const auto& b : blocks) {
        layouts.push_back(model::sample_layout(b.boundary, b.land_use, *m.snapshot->cvae, *m.snapshot->autoencoder,
                                               cfg.seed, b.id, m.snapshot->graph, m.snapshot->num_classes));
        outlines[b.id] = b.boundary;
        buildings += layouts.back().buildings.size();
      }
      out << "generated " << buildings << " buildings in " << layouts.size() << " blocks\n";
      const std::string text = artifactio::geojson_text(layouts, outlines);
      write_text(gen_out, text, out);
      // The OBJ is built from the written (quantized) layouts so both files
      // carry the same coordinates.
      if (!gen_obj.empty()) {
        write_text(gen_obj, artifactio::export_obj(artifactio::parse_layouts(Json::parse(text)).layouts), out);
      }
    } else if (eval_cmd->parsed()) {
      const auto gen = artifactio::load_layouts(ev_gen);
      const auto ref = artifactio::load_layouts(ev_ref);
      std::map<std::string, geometry::Polygon> outlines = ref.blocks;
      for (const auto& [k, v] : gen.blocks) outlines.emplace(k, v);
      if (!ev_blocks.empty()) {
        ingest::LoadOptions opt;
        opt.table = cfg.table;
        for (const auto& b : ingest::load_blocks(ev_blocks, opt).items) outlines.emplace(b.id, b.boundary);
      }
      std::map<std::string, const blockgraph::GeneratedLayout*> gen_by_id, ref_by_id;
      for (const auto& l : gen.layouts) gen_by_id[l.block_id] = &l;
      for (const auto& l : ref.layouts) ref_by_id[l.block_id] = &l;
      std::vector<metrics::LayoutSample> gs, rs;
      for (const auto& [id, r] : ref_by_id) {
        auto g = gen_by_id.find(id);
        if (g == gen_by_id.end()) throw AlignmentError("block " + id + " has no generated layout");
        auto o = outlines.find(id);
        if (o == outlines.end()) throw AlignmentError("no outline for block " + id + "; pass --blocks");
        gs.push_back(metrics::to_sample(o->second, *g->second));
        rs.push_back(metrics::to_sample(o->second, *r));
      }
      if (gen_by_id.size() != ref_by_id.size()) {
        throw AlignmentError(std::to_string(gen_by_id.size()) + " generated blocks vs " +
                             std::to_string(ref_by_id.size()) + " reference blocks");
      }
      const metrics::MetricsReport rep = metrics::evaluate(gs, rs);
      out << format_table({"Method", "L-Sim", "OPR (%)", "OBR (%)", "WD(bbx)", "WD(count)"},
                          {{ev_gen, fixed(rep.l_sim, 4), fixed(100 * rep.opr, 2), fixed(100 * rep.obr, 2),
                            fixed(rep.wd_bbx, 4), fixed(rep.wd_count, 4)}});
      out << rep.blocks << " blocks, " << rep.gen_buildings << " generated / " << rep.ref_buildings
          << " reference buildings\n";
      if (!ev_out.empty()) write_text(ev_out, rep.to_json() + "\n", out);
    } else if (export_cmd->parsed()) {
      const Json doc = geojson::read_file(ex_in);
      std::vector<blockgraph::GeneratedLayout> layouts;
      std::map<std::string, geometry::Polygon> outlines;
      if (doc.is_object() && doc.contains("format")) {
        for (const auto& r : artifactio::parse_records(doc)) {
          blockgraph::GeneratedLayout l{r.id, r.land_use, {}};
          for (const auto& b : r.buildings) {
            l.buildings.push_back({b.footprint, b.height, shapelib::fit_shape(b.footprint).shape});
          }
          outlines[r.id] = r.boundary;
          layouts.push_back(std::move(l));
        }
      } else {
        auto d = artifactio::parse_layouts(doc);
        layouts = std::move(d.layouts);
        outlines = std::move(d.blocks);
      }
      if (ex_format == "obj") {
        write_text(ex_out, artifactio::export_obj(layouts), out);
      } else {
        write_text(ex_out, artifactio::geojson_text(layouts, outlines), out);
      }
    } else if (serve_cmd->parsed()) {
      std::shared_ptr<service::ModelSnapshot> snapshot;
      if (!sv_ckpt.empty()) snapshot = load_model(sv_ckpt).snapshot;
      service::DistrictService svc(snapshot, cfg.seed, cfg.table);
      httplib::Server server;
      service::mount(server, svc);
      out << "listening on http://" << sv_host << ":" << sv_port << "\n" << std::flush;
      if (!server.listen(sv_host, sv_port)) throw IoError("cannot listen on " + sv_host + ":" + std::to_string(sv_port));
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace urbangen::cli
