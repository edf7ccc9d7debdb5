#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kan/network.hpp"
#include "kan/spline.hpp"
#include "kan/training.hpp"

namespace kan {

/// Real rows (label 1) stacked on column-shuffled copies (label 0).
struct ContrastiveSet {
  std::vector<std::string> variables;
  /// 2N x d row-major; rows [0, N) are positives.
  std::vector<double> features;
  std::vector<double> labels;
  std::size_t positives = 0;
  std::uint64_t seed = 0;

  std::size_t rows() const noexcept { return labels.size(); }
  std::size_t width() const noexcept { return variables.size(); }
  bool is_positive(std::size_t row) const noexcept { return row < positives; }
};

/// Each negative column is an independent permutation of the positive column.
/// Requires N >= 2 and d >= 2.
ContrastiveSet build_contrastive(std::span<const double> x, std::size_t rows,
                                 std::vector<std::string> variables, std::uint64_t seed);

struct ImportanceEntry {
  std::string variable;
  double magnitude = 0.0;
  bool kept = false;
};

struct ImportanceReport {
  /// Sorted by magnitude, largest first; ties keep input order.
  std::vector<ImportanceEntry> ranking;
  double threshold = 0.0;

  std::vector<std::string> kept() const;
  nlohmann::json to_json() const;
  /// Two columns: variable,magnitude (ranking order).
  void write_csv(std::ostream& out) const;
};

struct UnsupervisedConfig {
  std::size_t hidden = 1;
  GridConfig grid;
  TrainConfig train = [] {
    TrainConfig c;
    c.lambda = 0.01;
    return c;
  }();
  /// Variables whose first-layer magnitude falls below this are dropped.
  double threshold = 1e-2;
};

/// Trains a [d, hidden, 1] KAN on the {1, 0} labels. The last layer is fixed
/// to the gaussian basis with trainable affine parameters, so the hidden
/// nodes learn a relation that vanishes on real rows. Importance of input i
/// is the summed L1 of its first-layer edges over the positive rows.
std::pair<KanNetwork, ImportanceReport> train_unsupervised(const ContrastiveSet& set,
                                                           const UnsupervisedConfig& config);

/// L1 importance of every input of a trained unsupervised network.
ImportanceReport importance(const KanNetwork& net, const ContrastiveSet& set, double threshold);

}  // namespace kan
