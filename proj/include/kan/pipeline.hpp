#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kan/analysis.hpp"
#include "kan/dataset.hpp"
#include "kan/spline.hpp"
#include "kan/symbolic.hpp"
#include "kan/training.hpp"

namespace kan {

/// Settings shared by every pipeline command. The JSON form uses the field
/// names below; unknown keys are rejected.
struct PipelineConfig {
  // data
  std::string data;  // CSV path; empty means <out>/data.csv or the model's record
  std::vector<std::string> features;  // empty: every column except the target
  std::string target;                 // empty: last column
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out = "out";
  std::string model;  // input model; empty means <out>/model.json

  // simulate-dab / simulate-pv
  std::size_t samples = 50000;
  std::pair<double, double> d_range{0.3, 0.7};
  /// Interior of this range is skipped when d_range strictly contains it.
  std::pair<double, double> train_range{0.3, 0.7};
  DabParams dab;

  // train / prune
  std::vector<std::size_t> shape{1, 3, 1};
  GridConfig grid;
  TrainConfig train = [] {
    TrainConfig c;
    c.lambda = 0.01;
    return c;
  }();

  // symbolify / refine
  double r2_floor = 0.8;
  double tie_tolerance = 0.1;
  std::map<EdgeRef, std::string> overrides;
  RefineConfig refine;

  // eval
  double noise = 0.0;
  bool with_mlp = false;
  std::vector<std::size_t> mlp_hidden{32, 32};
  std::string extra_data;  // second dataset evaluated in full, e.g. outside the training range

  // unsup-select
  std::size_t hidden = 1;
  double unsup_threshold = 1e-2;

  // sensitivity
  std::size_t morris_trajectories = 50;
  std::size_t morris_levels = 4;
  /// "normalized": unit box over the min-max ranges with min-max scaled output;
  /// "raw": data units for both.
  std::string sensitivity_units = "normalized";

  /// Throws ConfigError on out-of-range values.
  void validate() const;
  nlohmann::json to_json() const;
};

/// Applies the keys of `doc` on top of `base`. Throws ConfigError naming
/// unknown keys or values of the wrong type.
PipelineConfig config_from_json(const nlohmann::json& doc, PipelineConfig base = {});
PipelineConfig read_config_file(const std::filesystem::path& path, PipelineConfig base = {});

/// "l/j/i:basis", optionally prefixed with "edge=".
std::pair<EdgeRef, std::string> parse_override(std::string_view text);

/// Everything a stage reports back to the caller besides its files.
struct StageOutcome {
  std::vector<std::string> messages;
  std::vector<std::string> warnings;
};

StageOutcome simulate_dab(const PipelineConfig& config);
StageOutcome simulate_pv(const PipelineConfig& config);

/// Writes model.json, train_trace.csv and plots/.
StageOutcome run_train(const PipelineConfig& config);
/// Writes model.json, prune_report.json and plots/.
StageOutcome run_prune(const PipelineConfig& config);
/// Writes model.json, snap_report.json, plots/ and (when fully symbolic) formula.txt.
StageOutcome run_symbolify(const PipelineConfig& config);
/// Writes model.json and formula.txt. Throws UnsnappedError on spline edges.
StageOutcome run_refine(const PipelineConfig& config);
/// Writes metrics.csv and metrics.json; the comparison table is the first message.
StageOutcome run_eval(const PipelineConfig& config);
/// Writes importance.json and importance.csv.
StageOutcome run_unsup_select(const PipelineConfig& config);
/// Writes sensitivity.csv and sensitivity.json.
StageOutcome run_sensitivity(const PipelineConfig& config);
/// Writes correlation.csv.
StageOutcome run_correlate(const PipelineConfig& config);

nlohmann::json prune_report_json(const PruneReport& report);

}  // namespace kan
