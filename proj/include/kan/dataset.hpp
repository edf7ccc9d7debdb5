#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace kan {

struct Column {
  std::string name;
  std::string unit;
  std::vector<double> values;
};

struct MinMax {
  double min = 0.0;
  double max = 1.0;
  /// min == max; normalized values are pinned to 0.5.
  bool degenerate = false;

  double normalize(double v) const noexcept {
    return degenerate ? 0.5 : (v - min) / (max - min);
  }
  double denormalize(double v) const noexcept {
    return degenerate ? min : min + v * (max - min);
  }
};

/// Named feature columns plus one target column, with optional split and
/// normalization bookkeeping.
struct Dataset {
  std::vector<Column> features;
  Column target;
  /// Per feature then target; recorded from the clean data.
  std::vector<MinMax> ranges;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::uint64_t split_seed = 0;
  double train_fraction = 0.0;
  std::size_t dropped_rows = 0;

  std::size_t rows() const noexcept { return target.values.size(); }
  std::size_t n_features() const noexcept { return features.size(); }
  std::vector<std::string> feature_names() const;

  /// Row-major rows x n_features matrix for the given row indices
  /// (all rows when `idx` is empty).
  std::vector<double> feature_matrix(std::span<const std::size_t> idx = {}) const;
  std::vector<double> target_values(std::span<const std::size_t> idx = {}) const;
  std::vector<std::size_t> all_indices() const;

  /// Throws DataError when columns have unequal lengths.
  void check() const;
};

/// Circuit constants of the dual active bridge; V_out = C / (D (1 - D)) with
/// C = 2 L P f / (n V_in). Defaults give C = 2.
struct DabParams {
  double inductance = 60e-6;     // H
  double power = 100.0 / 3.0;    // W
  double frequency = 50e3;       // Hz
  double turns_ratio = 1.0;
  double input_voltage = 100.0;  // V

  double constant() const noexcept {
    return 2.0 * inductance * power * frequency / (turns_ratio * input_voltage);
  }
  double output_voltage(double duty) const noexcept {
    return constant() / (duty * (1.0 - duty));
  }
  void validate() const;
};

/// D ~ Uniform[d_lo, d_hi], skipping D strictly inside `exclude` when given.
/// Requires 0 < d_lo < d_hi < 1.
Dataset generate_dab(const DabParams& params, std::size_t count, double d_lo, double d_hi,
                     std::uint64_t seed,
                     std::optional<std::pair<double, double>> exclude = std::nullopt);

/// Seven-variable photovoltaic surrogate: power driven by radiation,
/// temperature and wind speed, plus three independent nuisance columns.
/// Target is "power"; features are the six meteorological variables.
Dataset generate_pv_surrogate(std::size_t count, std::uint64_t seed);

struct CsvSchema {
  std::vector<std::string> features;
  std::string target;
};

/// Reads a comma separated file with one header row. Rows with missing or
/// non-numeric values in schema columns are dropped and counted.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// Writes features then target, with a header row.
void write_csv(const std::filesystem::path& path, const Dataset& data);

struct NormalizeResult {
  Dataset data;
  std::vector<MinMax> params;
  /// Names of constant columns that were pinned to 0.5.
  std::vector<std::string> warnings;
};

/// Maps every column (features and target) onto [0, 1].
NormalizeResult minmax_normalize(const Dataset& data);
std::vector<double> denormalize(const MinMax& params, std::span<const double> values);

/// Random disjoint train/test assignment with floor(fraction * rows) train
/// rows. Index lists are returned sorted.
Dataset split(Dataset data, double train_fraction, std::uint64_t seed);

/// Sidecar describing schema, ranges, split and generator settings.
nlohmann::json dataset_metadata(const Dataset& data, const nlohmann::json& source = nullptr);

}  // namespace kan
