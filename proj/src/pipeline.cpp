#include "kan/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include <fmt/core.h>
#include <fmt/ranges.h>

#include "kan/backprop.hpp"
#include "kan/errors.hpp"
#include "kan/model_io.hpp"
#include "kan/plot.hpp"
#include "kan/unsupervised.hpp"

namespace kan {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// configuration

namespace {

template <class T>
T take(const json& doc, const char* key) {
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("config key '{}' has the wrong type", key));
  }
}

std::pair<double, double> take_range(const json& doc, const char* key) {
  const auto v = take<std::vector<double>>(doc, key);
  if (v.size() != 2) throw ConfigError(fmt::format("config key '{}' needs two numbers", key));
  return {v[0], v[1]};
}

}  // namespace

std::pair<EdgeRef, std::string> parse_override(std::string_view text) {
  if (text.rfind("edge=", 0) == 0) text.remove_prefix(5);
  const auto colon = text.find(':');
  if (colon == std::string_view::npos || colon + 1 == text.size()) {
    throw ConfigError(fmt::format("override '{}' must look like l/j/i:basis", text));
  }
  try {
    return {parse_edge_ref(text.substr(0, colon)), std::string(text.substr(colon + 1))};
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

void PipelineConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train_fraction must be in (0, 1)");
  if (out.empty()) fail("out must not be empty");
  if (samples < 2) fail("samples must be at least 2");
  if (!(d_range.first > 0.0 && d_range.first < d_range.second && d_range.second < 1.0)) {
    fail("d_range must satisfy 0 < lo < hi < 1");
  }
  if (!(train_range.first < train_range.second)) fail("train_range must satisfy lo < hi");
  if (shape.size() < 2) fail("shape needs at least two entries");
  for (const auto w : shape) {
    if (w == 0) fail("shape entries must be positive");
  }
  if (shape.back() != 1) fail("shape must end in a single output");
  if (grid.intervals < 1) fail("grid_intervals must be at least 1");
  if (grid.order < 0) fail("spline_order must be non-negative");
  if (!(r2_floor >= 0.0 && r2_floor <= 1.0)) fail("r2_floor must be in [0, 1]");
  if (!(tie_tolerance >= 0.0)) fail("tie_tolerance must be non-negative");
  if (!(refine.learning_rate > 0.0)) fail("refine_learning_rate must be positive");
  if (!(noise >= 0.0 && noise < 1.0)) fail("noise must be in [0, 1)");
  for (const auto w : mlp_hidden) {
    if (w == 0) fail("mlp_hidden entries must be positive");
  }
  if (hidden == 0) fail("hidden must be positive");
  if (!(unsup_threshold >= 0.0)) fail("unsup_threshold must be non-negative");
  if (morris_trajectories < 2) fail("morris_trajectories must be at least 2");
  if (morris_levels < 2) fail("morris_levels must be at least 2");
  if (sensitivity_units != "normalized" && sensitivity_units != "raw") {
    fail("sensitivity_units must be 'normalized' or 'raw'");
  }
  for (const auto& [edge, basis] : overrides) {
    if (!default_library().find(basis)) fail(fmt::format("override names unknown basis '{}'", basis));
  }
  try {
    train.validate();
    dab.validate();
  } catch (const InvalidArgument& e) {
    fail(e.what());
  }
}

json PipelineConfig::to_json() const {
  json ov = json::object();
  for (const auto& [e, b] : overrides) ov[fmt::format("{}/{}/{}", e.layer, e.out, e.in)] = b;
  return {
      {"data", data},
      {"features", features},
      {"target", target},
      {"train_fraction", train_fraction},
      {"seed", seed},
      {"threads", threads},
      {"out", out},
      {"model", model},
      {"samples", samples},
      {"d_range", {d_range.first, d_range.second}},
      {"train_range", {train_range.first, train_range.second}},
      {"dab",
       {{"inductance", dab.inductance},
        {"power", dab.power},
        {"frequency", dab.frequency},
        {"turns_ratio", dab.turns_ratio},
        {"input_voltage", dab.input_voltage}}},
      {"shape", shape},
      {"grid_intervals", grid.intervals},
      {"spline_order", grid.order},
      {"lambda", train.lambda},
      {"mu1", train.mu1},
      {"mu2", train.mu2},
      {"learning_rate", train.learning_rate},
      {"final_learning_rate", train.final_learning_rate},
      {"steps", train.max_steps},
      {"batch_size", train.batch_size},
      {"convergence_tol", train.convergence_tol},
      {"prune_threshold", train.prune_threshold},
      {"r2_floor", r2_floor},
      {"tie_tolerance", tie_tolerance},
      {"overrides", ov},
      {"refine_learning_rate", refine.learning_rate},
      {"refine_steps", refine.max_steps},
      {"noise", noise},
      {"with_mlp", with_mlp},
      {"mlp_hidden", mlp_hidden},
      {"extra_data", extra_data},
      {"hidden", hidden},
      {"unsup_threshold", unsup_threshold},
      {"morris_trajectories", morris_trajectories},
      {"morris_levels", morris_levels},
      {"sensitivity_units", sensitivity_units},
  };
}

PipelineConfig config_from_json(const json& doc, PipelineConfig c) {
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    const char* k = key.c_str();
    if (key == "data") c.data = take<std::string>(doc, k);
    else if (key == "features") c.features = take<std::vector<std::string>>(doc, k);
    else if (key == "target") c.target = take<std::string>(doc, k);
    else if (key == "train_fraction") c.train_fraction = take<double>(doc, k);
    else if (key == "seed") c.seed = take<std::uint64_t>(doc, k);
    else if (key == "threads") c.threads = take<unsigned>(doc, k);
    else if (key == "out") c.out = take<std::string>(doc, k);
    else if (key == "model") c.model = take<std::string>(doc, k);
    else if (key == "samples") c.samples = take<std::size_t>(doc, k);
    else if (key == "d_range") c.d_range = take_range(doc, k);
    else if (key == "train_range") c.train_range = take_range(doc, k);
    else if (key == "dab") {
      if (!value.is_object()) throw ConfigError("config key 'dab' must be an object");
      for (const auto& [dk, dv] : value.items()) {
        const char* p = dk.c_str();
        if (dk == "inductance") c.dab.inductance = take<double>(value, p);
        else if (dk == "power") c.dab.power = take<double>(value, p);
        else if (dk == "frequency") c.dab.frequency = take<double>(value, p);
        else if (dk == "turns_ratio") c.dab.turns_ratio = take<double>(value, p);
        else if (dk == "input_voltage") c.dab.input_voltage = take<double>(value, p);
        else throw ConfigError(fmt::format("unknown config key 'dab.{}'", dk));
      }
    }
    else if (key == "shape") c.shape = take<std::vector<std::size_t>>(doc, k);
    else if (key == "grid_intervals") c.grid.intervals = take<int>(doc, k);
    else if (key == "spline_order") c.grid.order = take<int>(doc, k);
    else if (key == "lambda") c.train.lambda = take<double>(doc, k);
    else if (key == "mu1") c.train.mu1 = take<double>(doc, k);
    else if (key == "mu2") c.train.mu2 = take<double>(doc, k);
    else if (key == "learning_rate") c.train.learning_rate = take<double>(doc, k);
    else if (key == "final_learning_rate") c.train.final_learning_rate = take<double>(doc, k);
    else if (key == "steps") c.train.max_steps = take<std::size_t>(doc, k);
    else if (key == "batch_size") c.train.batch_size = take<std::size_t>(doc, k);
    else if (key == "convergence_tol") c.train.convergence_tol = take<double>(doc, k);
    else if (key == "prune_threshold") c.train.prune_threshold = take<double>(doc, k);
    else if (key == "r2_floor") c.r2_floor = take<double>(doc, k);
    else if (key == "tie_tolerance") c.tie_tolerance = take<double>(doc, k);
    else if (key == "overrides") {
      if (!value.is_object()) throw ConfigError("config key 'overrides' must be an object");
      c.overrides.clear();
      for (const auto& [edge, basis] : value.items()) {
        if (!basis.is_string()) throw ConfigError("override values must be basis names");
        const auto [ref, id] = parse_override(edge + ":" + basis.get<std::string>());
        c.overrides[ref] = id;
      }
    }
    else if (key == "refine_learning_rate") c.refine.learning_rate = take<double>(doc, k);
    else if (key == "refine_steps") c.refine.max_steps = take<std::size_t>(doc, k);
    else if (key == "noise") c.noise = take<double>(doc, k);
    else if (key == "with_mlp") c.with_mlp = take<bool>(doc, k);
    else if (key == "mlp_hidden") c.mlp_hidden = take<std::vector<std::size_t>>(doc, k);
    else if (key == "extra_data") c.extra_data = take<std::string>(doc, k);
    else if (key == "hidden") c.hidden = take<std::size_t>(doc, k);
    else if (key == "unsup_threshold") c.unsup_threshold = take<double>(doc, k);
    else if (key == "morris_trajectories") c.morris_trajectories = take<std::size_t>(doc, k);
    else if (key == "morris_levels") c.morris_levels = take<std::size_t>(doc, k);
    else if (key == "sensitivity_units") c.sensitivity_units = take<std::string>(doc, k);
    else throw ConfigError(fmt::format("unknown config key '{}'", key));
  }
  return c;
}

PipelineConfig read_config_file(const fs::path& path, PipelineConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file {}", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("config file {} is not valid JSON: {}", path.string(), e.what()));
  }
  return config_from_json(doc, std::move(base));
}

// ---------------------------------------------------------------------------
// file helpers

namespace {

fs::path out_dir(const PipelineConfig& c) { return fs::path(c.out); }

/// Explicit --model, else the newest upstream stage snapshot, else model.json.
/// Reading snapshots keeps a re-run stage from consuming its own output.
fs::path model_in(const PipelineConfig& c, std::initializer_list<const char*> upstream) {
  if (!c.model.empty()) return c.model;
  for (const char* stage : upstream) {
    const auto p = out_dir(c) / "stages" / (std::string(stage) + ".json");
    if (fs::exists(p)) return p;
  }
  return out_dir(c) / "model.json";
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\"");
  const auto last = s.find_last_not_of(" \t\r\"");
  return first == std::string::npos ? std::string() : s.substr(first, last - first + 1);
}

std::vector<std::string> csv_header(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw DataError(fmt::format("{} is empty (no header row)", path.string()));
  std::vector<std::string> cols;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) cols.push_back(trim(cell));
  return cols;
}

/// Where a dataset lives plus how it is split; persisted in model metadata.
struct DataRecord {
  fs::path path;
  CsvSchema schema;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
};

CsvSchema resolve_schema(const fs::path& path, std::vector<std::string> features,
                         std::string target) {
  if (features.empty() || target.empty()) {
    const auto header = csv_header(path);
    if (header.size() < 2) throw DataError(fmt::format("{} needs at least two columns", path.string()));
    if (target.empty()) target = header.back();
    if (features.empty()) {
      for (const auto& h : header) {
        if (h != target) features.push_back(h);
      }
    }
  }
  return {std::move(features), std::move(target)};
}

DataRecord data_from_config(const PipelineConfig& c) {
  DataRecord r;
  r.path = c.data.empty() ? out_dir(c) / "data.csv" : fs::path(c.data);
  r.schema = resolve_schema(r.path, c.features, c.target);
  r.train_fraction = c.train_fraction;
  r.split_seed = c.seed;
  return r;
}

/// Record stored with paths relative to the output directory, so identical
/// runs in different directories produce identical model files.
json record_json(const DataRecord& r, const PipelineConfig& c) {
  const auto rel = fs::absolute(r.path).lexically_relative(fs::absolute(out_dir(c)));
  return {{"path", rel.generic_string()},
          {"features", r.schema.features},
          {"target", r.schema.target},
          {"train_fraction", r.train_fraction},
          {"split_seed", r.split_seed}};
}

/// The model's own record wins over the config, except an explicit data path.
DataRecord data_for_model(const PipelineConfig& c, const json& meta) {
  if (!meta.is_object() || !meta.contains("dataset")) return data_from_config(c);
  const json& d = meta["dataset"];
  DataRecord r;
  try {
    r.path = c.data.empty() ? out_dir(c) / d.at("path").get<std::string>() : fs::path(c.data);
    r.schema.features = d.at("features").get<std::vector<std::string>>();
    r.schema.target = d.at("target").get<std::string>();
    r.train_fraction = d.at("train_fraction").get<double>();
    r.split_seed = d.at("split_seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw SchemaError("/metadata/dataset", e.what());
  }
  return r;
}

Dataset load_split(const DataRecord& r) {
  return split(load_csv(r.path, r.schema), r.train_fraction, r.split_seed);
}

struct LoadedModel {
  KanNetwork net;
  json meta;
};

LoadedModel load(const PipelineConfig& c, std::initializer_list<const char*> upstream) {
  LoadedModel m;
  m.net = read_model_file(model_in(c, upstream), &m.meta);
  if (!m.meta.is_object()) m.meta = json::object();
  return m;
}

void append_stage(json& meta, json stage) {
  if (!meta.contains("stages")) meta["stages"] = json::array();
  meta["stages"].push_back(std::move(stage));
}

void save(const PipelineConfig& c, const KanNetwork& net, const json& meta, const char* stage) {
  fs::create_directories(out_dir(c) / "stages");
  write_model_file(out_dir(c) / "model.json", net, meta);
  write_model_file(out_dir(c) / "stages" / (std::string(stage) + ".json"), net, meta);
}

void plots(const PipelineConfig& c, const KanNetwork& net, const std::vector<double>& x,
           std::size_t rows, StageOutcome& outcome) {
  for (auto& w : write_layer_plots(net, x, rows, out_dir(c) / "plots")) {
    outcome.warnings.push_back("plot: " + w);
  }
}

void check_names(const KanNetwork& net, const CsvSchema& schema) {
  if (net.input_names != schema.features) {
    throw DataError(fmt::format("model expects features [{}] but the dataset provides [{}]",
                                fmt::join(net.input_names, ", "), fmt::join(schema.features, ", ")));
  }
}

std::vector<double> predict(const KanNetwork& net, std::span<const double> x, std::size_t rows) {
  const std::size_t n = net.n_inputs();
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = net.forward(x.subspan(r * n, n))[0];
  return out;
}

std::string shape_text(const std::vector<std::size_t>& s) { return fmt::format("[{}]", fmt::join(s, ",")); }

}  // namespace

// ---------------------------------------------------------------------------
// stages

StageOutcome simulate_dab(const PipelineConfig& c) {
  c.validate();
  std::optional<std::pair<double, double>> exclude;
  const auto [lo, hi] = c.d_range;
  const auto [tlo, thi] = c.train_range;
  if (lo <= tlo && thi <= hi && (lo < tlo || thi < hi)) exclude = c.train_range;
  Dataset d = generate_dab(c.dab, c.samples, lo, hi, c.seed, exclude);
  const fs::path path = c.data.empty() ? out_dir(c) / "data.csv" : fs::path(c.data);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_csv(path, d);
  json source = {{"generator", "dab"},
                 {"seed", c.seed},
                 {"samples", c.samples},
                 {"d_range", {lo, hi}},
                 {"constant", c.dab.constant()}};
  if (exclude) source["excluded_interior"] = {exclude->first, exclude->second};
  write_json(fs::path(path.string() + ".json"), dataset_metadata(d, source));
  StageOutcome o;
  o.messages.push_back(fmt::format("wrote {} rows to {}", d.rows(), path.string()));
  return o;
}

StageOutcome simulate_pv(const PipelineConfig& c) {
  c.validate();
  Dataset d = generate_pv_surrogate(c.samples, c.seed);
  const fs::path path = c.data.empty() ? out_dir(c) / "data.csv" : fs::path(c.data);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_csv(path, d);
  write_json(fs::path(path.string() + ".json"),
             dataset_metadata(d, {{"generator", "pv_surrogate"}, {"seed", c.seed}, {"samples", c.samples}}));
  StageOutcome o;
  o.messages.push_back(fmt::format("wrote {} rows to {}", d.rows(), path.string()));
  return o;
}

StageOutcome run_train(const PipelineConfig& c) {
  c.validate();
  set_thread_count(c.threads);
  const DataRecord rec = data_from_config(c);
  const Dataset d = load_split(rec);
  if (c.shape.front() != d.n_features()) {
    throw ConfigError(fmt::format("shape {} expects {} inputs but the dataset has {} features",
                                  shape_text(c.shape), c.shape.front(), d.n_features()));
  }
  const auto x = d.feature_matrix(d.train);
  const auto y = d.target_values(d.train);
  KanNetwork net = init_network(c.shape, c.grid, c.seed);
  net.input_names = d.feature_names();
  net.output_names = {d.target.name};
  fit_normalizers(net, x, y, d.train.size());
  TrainConfig tc = c.train;
  tc.seed = c.seed;
  const TrainReport rep = train(net, Batch{x, y, d.train.size()}, tc);

  json meta = {{"dataset", record_json(rec, c)}};
  append_stage(meta, {{"stage", "train"},
                      {"seed", c.seed},
                      {"lambda", tc.lambda},
                      {"mu1", tc.mu1},
                      {"mu2", tc.mu2},
                      {"learning_rate", tc.learning_rate},
                      {"steps", rep.steps},
                      {"converged", rep.converged},
                      {"snapshot_id", rep.snapshot_id}});
  save(c, net, meta, "train");
  std::ostringstream trace;
  write_trace_csv(trace, rep.trace);
  write_text(out_dir(c) / "train_trace.csv", trace.str());
  StageOutcome o;
  plots(c, net, x, d.train.size(), o);
  const auto& last = rep.trace.back();
  o.messages.push_back(fmt::format("trained {} for {} steps ({}) in {:.1f}s: total {:.4g}, pred {:.4g}",
                                   shape_text(c.shape), rep.steps,
                                   rep.converged ? "converged" : "step limit", rep.wall_seconds,
                                   last.total, last.pred));
  return o;
}

json prune_report_json(const PruneReport& r) {
  json layers = json::array();
  for (std::size_t l = 0; l < r.importance.size(); ++l) {
    json kept = json::array();
    for (const bool k : r.kept[l]) kept.push_back(k);
    layers.push_back({{"layer", l}, {"importance", r.importance[l]}, {"kept", kept}});
  }
  return {{"original_shape", r.original_shape},
          {"resulting_shape", r.resulting_shape},
          {"forced_retention", r.forced_retention},
          {"nodes", layers}};
}

StageOutcome run_prune(const PipelineConfig& c) {
  c.validate();
  set_thread_count(c.threads);
  auto [net, meta] = load(c, {"train"});
  const DataRecord rec = data_for_model(c, meta);
  const Dataset d = load_split(rec);
  check_names(net, rec.schema);
  const auto x = d.feature_matrix(d.train);
  auto [pruned, rep] = prune(net, x, d.train.size(), c.train.prune_threshold);
  append_stage(meta, {{"stage", "prune"},
                      {"threshold", c.train.prune_threshold},
                      {"resulting_shape", rep.resulting_shape}});
  save(c, pruned, meta, "prune");
  write_json(out_dir(c) / "prune_report.json", prune_report_json(rep));
  StageOutcome o;
  plots(c, pruned, x, d.train.size(), o);
  if (rep.forced_retention) o.warnings.push_back("a hidden layer would have been emptied; kept its strongest node");
  o.messages.push_back(fmt::format("pruned {} -> {}", shape_text(rep.original_shape),
                                   shape_text(rep.resulting_shape)));
  return o;
}

StageOutcome run_symbolify(const PipelineConfig& c) {
  c.validate();
  set_thread_count(c.threads);
  auto [net, meta] = load(c, {"prune", "train"});
  const DataRecord rec = data_for_model(c, meta);
  const Dataset d = load_split(rec);
  check_names(net, rec.schema);
  const auto x = d.feature_matrix(d.train);
  SnapOptions opts;
  opts.r2_floor = c.r2_floor;
  opts.tie_tolerance = c.tie_tolerance;
  opts.overrides = c.overrides;
  const SnapReport rep = snap_network(net, x, d.train.size(), opts);

  json ov = json::object();
  for (const auto& [e, b] : c.overrides) ov[fmt::format("{}/{}/{}", e.layer, e.out, e.in)] = b;
  append_stage(meta, {{"stage", "symbolify"},
                      {"r2_floor", c.r2_floor},
                      {"tie_tolerance", c.tie_tolerance},
                      {"overrides", ov},
                      {"all_snapped", rep.all_snapped()}});
  save(c, net, meta, "symbolify");
  write_json(out_dir(c) / "snap_report.json", rep.to_json());
  StageOutcome o;
  plots(c, net, x, d.train.size(), o);
  for (const auto& e : rep.entries) {
    o.messages.push_back(fmt::format("edge {}/{}/{}: {} {} (r2 {:.6f}){}", e.edge.layer, e.edge.out,
                                     e.edge.in, e.snapped ? "snapped to" : "kept spline, best",
                                     e.chosen.basis ? e.chosen.basis->id : "none", e.chosen.r2,
                                     e.mode == SnapMode::kOverride ? " [override]" : ""));
    if (!e.snapped) {
      o.warnings.push_back(fmt::format("edge {}/{}/{} stays spline", e.edge.layer, e.edge.out, e.edge.in));
    }
  }
  if (rep.all_snapped()) {
    const std::string f = emit_formula(net);
    write_text(out_dir(c) / "formula.txt", f + "\n");
    o.messages.push_back(f);
  }
  return o;
}

StageOutcome run_refine(const PipelineConfig& c) {
  c.validate();
  set_thread_count(c.threads);
  auto [net, meta] = load(c, {"symbolify"});
  require_symbolic(net, "refine");
  const DataRecord rec = data_for_model(c, meta);
  const Dataset d = load_split(rec);
  check_names(net, rec.schema);
  const auto x = d.feature_matrix(d.train);
  const auto y = d.target_values(d.train);
  const RefineReport rep = refine(net, Batch{x, y, d.train.size()}, c.refine);
  append_stage(meta, {{"stage", "refine"},
                      {"learning_rate", c.refine.learning_rate},
                      {"steps", rep.steps},
                      {"initial_loss", rep.initial_loss},
                      {"final_loss", rep.final_loss}});
  save(c, net, meta, "refine");
  const std::string f = emit_formula(net);
  write_text(out_dir(c) / "formula.txt", f + "\n");
  StageOutcome o;
  o.messages.push_back(fmt::format("refined in {} steps: loss {:.4g} -> {:.4g}", rep.steps,
                                   rep.initial_loss, rep.final_loss));
  o.messages.push_back(f);
  return o;
}

StageOutcome run_eval(const PipelineConfig& c) {
  c.validate();
  set_thread_count(c.threads);
  auto [net, meta] = load(c, {});
  const DataRecord rec = data_for_model(c, meta);
  const Dataset d = load_split(rec);
  check_names(net, rec.schema);
  const auto xtr = d.feature_matrix(d.train), ytr = d.target_values(d.train);
  const auto xte = d.feature_matrix(d.test), yte = d.target_values(d.test);
  const std::size_t ntr = d.train.size(), nte = d.test.size();

  struct Split {
    std::string tag;
    std::vector<double> x, y;
    std::size_t rows;
  };
  std::vector<Split> splits{{"Training set", xtr, ytr, ntr}, {"Test set", xte, yte, nte}};
  if (c.noise > 0.0) {
    splits.push_back({"Training set(noise)", add_noise(xtr, c.noise, c.seed + 1), ytr, ntr});
    splits.push_back({"Test set(noise)", add_noise(xte, c.noise, c.seed + 2), yte, nte});
  }
  if (!c.extra_data.empty()) {
    const Dataset extra = load_csv(c.extra_data, rec.schema);
    splits.push_back({"Extra set", extra.feature_matrix(), extra.target_values(), extra.rows()});
  }

  std::vector<ModelScores> scores(1);
  scores[0].model = "KAN";
  for (const auto& s : splits) scores[0].columns.push_back(measure(s.tag, s.y, predict(net, s.x, s.rows)));
  if (c.with_mlp) {
    std::vector<std::size_t> shape{d.n_features()};
    shape.insert(shape.end(), c.mlp_hidden.begin(), c.mlp_hidden.end());
    shape.push_back(1);
    Mlp mlp = init_mlp(shape, c.seed);
    TrainConfig tc = c.train;
    tc.seed = c.seed;
    mlp_train(mlp, Batch{xtr, ytr, ntr}, tc);
    ModelScores m{"MLP", {}};
    for (const auto& s : splits) m.columns.push_back(measure(s.tag, s.y, mlp.predict(s.x, s.rows)));
    scores.push_back(std::move(m));
  }
  std::ostringstream csv;
  write_metrics_csv(csv, scores);
  write_text(out_dir(c) / "metrics.csv", csv.str());
  write_json(out_dir(c) / "metrics.json", metrics_json(scores));
  StageOutcome o;
  o.messages.push_back(format_comparison_table(scores));
  return o;
}

StageOutcome run_unsup_select(const PipelineConfig& c) {
  c.validate();
  set_thread_count(c.threads);
  const DataRecord rec = data_from_config(c);
  const Dataset d = load_csv(rec.path, rec.schema);
  // the target is one more variable of the relation
  std::vector<std::string> names = d.feature_names();
  names.push_back(d.target.name);
  const std::size_t w = names.size();
  std::vector<double> x(d.rows() * w);
  for (std::size_t r = 0; r < d.rows(); ++r) {
    for (std::size_t i = 0; i + 1 < w; ++i) x[r * w + i] = d.features[i].values[r];
    x[r * w + w - 1] = d.target.values[r];
  }
  const auto set = build_contrastive(x, d.rows(), names, c.seed);
  UnsupervisedConfig uc;
  uc.hidden = c.hidden;
  uc.grid = c.grid;
  uc.train = c.train;
  uc.train.seed = c.seed;
  uc.threshold = c.unsup_threshold;
  auto [net, rep] = train_unsupervised(set, uc);

  write_json(out_dir(c) / "importance.json", rep.to_json());
  std::ostringstream csv;
  rep.write_csv(csv);
  write_text(out_dir(c) / "importance.csv", csv.str());
  write_model_file(out_dir(c) / "unsup_model.json", net, {{"stage", "unsup-select"}, {"seed", c.seed}});

  StageOutcome o;
  for (const auto& e : rep.ranking) {
    o.messages.push_back(fmt::format("{:<16} {:.6g}{}", e.variable, e.magnitude, e.kept ? "" : "  dropped"));
  }
  const auto kept = rep.kept();
  o.messages.push_back(fmt::format("structure [{},{},1] -> [{},1,1]", w, c.hidden, kept.size()));
  if (kept.size() < 2) o.warnings.push_back("no dependency found: fewer than two variables kept");
  return o;
}

StageOutcome run_sensitivity(const PipelineConfig& c) {
  c.validate();
  set_thread_count(c.threads);
  auto [net, meta] = load(c, {});
  const DataRecord rec = data_for_model(c, meta);
  const Dataset d = load_csv(rec.path, rec.schema);
  check_names(net, rec.schema);
  const std::size_t n = d.n_features();
  const bool raw = c.sensitivity_units == "raw";
  std::vector<double> lo(n), hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    lo[i] = raw ? d.ranges[i].min : 0.0;
    hi[i] = raw ? d.ranges[i].max : 1.0;
  }
  const MinMax out_range = d.ranges.back();
  std::vector<double> buf(n);
  ScalarModel model = [&](std::span<const double> u) {
    for (std::size_t i = 0; i < n; ++i) buf[i] = raw ? u[i] : d.ranges[i].denormalize(u[i]);
    const double y = net.forward(buf)[0];
    return raw ? y : out_range.normalize(y);
  };
  MorrisConfig mc;
  mc.trajectories = c.morris_trajectories;
  mc.levels = c.morris_levels;
  mc.seed = c.seed;
  const auto names = d.feature_names();
  const auto rep = morris_sensitivity(model, lo, hi, names, mc);
  std::ostringstream csv;
  write_sensitivity_csv(csv, rep);
  write_text(out_dir(c) / "sensitivity.csv", csv.str());
  json doc = rep.to_json();
  doc["units"] = c.sensitivity_units;
  write_json(out_dir(c) / "sensitivity.json", doc);
  StageOutcome o;
  for (std::size_t i = 0; i < n; ++i) o.messages.push_back(fmt::format("{:<16} {:.6g}", names[i], rep.mu_star[i]));
  return o;
}

StageOutcome run_correlate(const PipelineConfig& c) {
  c.validate();
  const DataRecord rec = data_from_config(c);
  const Dataset d = load_csv(rec.path, rec.schema);
  const auto names = d.feature_names();
  const auto rows = correlate_columns(d.feature_matrix(), d.rows(), names, d.target.values);
  std::ostringstream csv;
  write_correlation_csv(csv, rows);
  write_text(out_dir(c) / "correlation.csv", csv.str());
  StageOutcome o;
  auto cell = [](const std::optional<double>& v) { return v ? fmt::format("{:+.4f}", *v) : std::string("undefined"); };
  for (const auto& r : rows) {
    o.messages.push_back(fmt::format("{:<16} {:>9} {:>9} {:>9}", r.variable, cell(r.pearson),
                                     cell(r.spearman), cell(r.kendall)));
    if (!r.pearson) o.warnings.push_back(fmt::format("correlation undefined for '{}'", r.variable));
  }
  return o;
}

}  // namespace kan
