#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kan/backprop.hpp"
#include "kan/errors.hpp"
#include "kan/network.hpp"
#include "kan/training.hpp"

namespace kan {

/// Root mean squared error. Throws InvalidArgument on empty or unequal input.
double rmse(std::span<const double> y, std::span<const double> predicted);
/// Energy error: mean absolute deviation.
double energy_error(std::span<const double> y, std::span<const double> predicted);

struct MetricReport {
  std::string tag;  // e.g. "test" or "test(noise)"
  double rmse = 0.0;
  double ee = 0.0;
  std::size_t samples = 0;
};

MetricReport measure(std::string tag, std::span<const double> y,
                     std::span<const double> predicted);

/// One model's metrics across the table columns.
struct ModelScores {
  std::string model;
  std::vector<MetricReport> columns;
};

/// CSV with header model,tag,rmse,ee,samples.
void write_metrics_csv(std::ostream& out, std::span<const ModelScores> scores);
nlohmann::json metrics_json(std::span<const ModelScores> scores);

/// Two rows (RMSE, EE) per model, one column per MetricReport tag:
///
///         Metric  Training set  Test set
///   KAN   RMSE    0.0042        0.0042
///         EE      0.0041        0.0041
std::string format_comparison_table(std::span<const ModelScores> scores);

/// Correlation is undefined (constant input or fewer than 2 samples).
class UndefinedCorrelation : public DataError {
 public:
  using DataError::DataError;
};

double pearson(std::span<const double> x, std::span<const double> y);
/// Pearson correlation of average ranks.
double spearman(std::span<const double> x, std::span<const double> y);
/// Tau-b, computed by merge-sort discordance counting in O(n log n).
double kendall(std::span<const double> x, std::span<const double> y);

/// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

struct CorrelationRow {
  std::string variable;
  /// Empty when undefined for this variable.
  std::optional<double> pearson;
  std::optional<double> spearman;
  std::optional<double> kendall;
};

/// Correlations of every feature column of a rows x n matrix against y.
/// Undefined coefficients are left empty instead of throwing.
std::vector<CorrelationRow> correlate_columns(std::span<const double> features, std::size_t rows,
                                             std::span<const std::string> names,
                                             std::span<const double> y);

/// CSV with header variable,pearson,spearman,kendall; undefined cells read "undefined".
void write_correlation_csv(std::ostream& out, std::span<const CorrelationRow> rows);

struct MorrisConfig {
  std::size_t trajectories = 50;
  std::size_t levels = 4;
  /// Step in unit-range coordinates; <= 0 selects levels / (2 (levels - 1)).
  double delta = 0.0;
  std::uint64_t seed = 0;
};

struct SensitivityReport {
  std::vector<std::string> variables;
  /// Mean |elementary effect| per variable, in output units per input unit.
  std::vector<double> mu_star;
  std::size_t trajectories = 0;
  double delta = 0.0;

  nlohmann::json to_json() const;
};

/// CSV with header variable,mu_star.
void write_sensitivity_csv(std::ostream& out, const SensitivityReport& report);

using ScalarModel = std::function<double(std::span<const double>)>;

/// Morris one-at-a-time screening over the box [lo, hi]. Elementary effects
/// are measured in box units, so a linear model recovers |coefficients|.
/// Model failures are rethrown as NumericalError naming the trajectory.
SensitivityReport morris_sensitivity(const ScalarModel& model, std::span<const double> lo,
                                     std::span<const double> hi,
                                     std::span<const std::string> names,
                                     const MorrisConfig& config = {});

/// v * (1 + u) with u ~ Uniform(-level, level). Requires 0 <= level < 1.
std::vector<double> add_noise(std::span<const double> values, double level, std::uint64_t seed);

/// Fully connected network with SiLU on hidden nodes and a linear output,
/// wrapped in the same normalizers as a KanNetwork.
struct Mlp {
  std::vector<std::size_t> shape;
  /// weights[l] is shape[l+1] x shape[l], row-major.
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  AffineMap input_normalizer;
  AffineMap output_denormalizer;

  std::size_t parameter_count() const;
  /// Weights then biases, layer by layer.
  std::vector<double*> parameters();
  std::vector<double> forward(std::span<const double> x) const;
  /// rows x n_outputs predictions in raw units.
  std::vector<double> predict(std::span<const double> inputs, std::size_t rows) const;
};

/// Weights ~ Normal(0, 1/fan_in), zero biases, identity normalizers.
Mlp init_mlp(std::span<const std::size_t> shape, std::uint64_t seed);

/// Normalized-output MSE and its gradient in Mlp::parameters() order.
std::pair<double, std::vector<double>> mlp_loss_gradient(const Mlp& mlp, const Batch& batch);

struct MlpReport {
  std::size_t steps = 0;
  double final_loss = 0.0;
  bool converged = false;
};

/// Adam on the normalized MSE with the optimizer settings of `config`
/// (regularization weights are ignored). Normalizers are fitted from the
/// batch before training.
MlpReport mlp_train(Mlp& mlp, const Batch& batch, const TrainConfig& config);

}  // namespace kan
