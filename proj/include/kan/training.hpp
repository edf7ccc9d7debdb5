#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "kan/backprop.hpp"
#include "kan/errors.hpp"
#include "kan/network.hpp"

namespace kan {

struct TrainConfig {
  double lambda = 0.0;
  double mu1 = 1.0;
  double mu2 = 1.0;
  double learning_rate = 1e-2;
  /// Learning rate reached at max_steps by exponential decay. Values <= 0
  /// keep the rate constant.
  double final_learning_rate = 0.0;
  std::size_t max_steps = 2000;
  /// 0 selects full-batch training.
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  double prune_threshold = 1e-2;
  double convergence_tol = 1e-9;
  /// Improvement window (in steps) for the convergence test.
  std::size_t convergence_window = 50;

  LossWeights weights() const { return {lambda, mu1, mu2}; }
  /// Throws InvalidArgument on out-of-range values.
  void validate() const;
};

struct TraceRow {
  std::size_t step;
  double total;
  double pred;
  double l1;
  double entropy;
};

struct TrainReport {
  std::vector<TraceRow> trace;
  std::string snapshot_id;
  double wall_seconds = 0.0;
  std::size_t steps = 0;
  bool converged = false;
};

/// CSV with header step,total,pred,l1,entropy.
void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace);

/// Training produced a non-finite loss. Carries the last finite parameters.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(std::size_t step, KanNetwork last_finite, const std::string& detail);
  std::size_t step() const noexcept { return step_; }
  const KanNetwork& last_finite() const noexcept { return last_finite_; }

 private:
  std::size_t step_;
  KanNetwork last_finite_;
};

/// Full regularized objective on a batch.
LossComponents total_loss(const KanNetwork& net, const Batch& batch, const TrainConfig& config);

/// Minimizes total_loss with Adam. Stops at max_steps or when the best total
/// loss improved by less than convergence_tol over the last
/// convergence_window steps. On divergence the network is restored to the
/// last finite state and TrainingDiverged is thrown.
TrainReport train(KanNetwork& net, const Batch& batch, const TrainConfig& config);

struct PruneReport {
  /// importance[l][i] for hidden layer l (1-based in the network); index 0
  /// and the last entry are empty because inputs and outputs are never pruned.
  std::vector<std::vector<double>> importance;
  std::vector<std::vector<bool>> kept;
  std::vector<std::size_t> original_shape;
  std::vector<std::size_t> resulting_shape;
  /// A hidden layer would have been emptied; its best node was retained.
  bool forced_retention = false;
};

/// Removes hidden nodes whose importance min(max incoming |phi|_1,
/// max outgoing |phi|_1), measured on `raw_inputs`, is below threshold.
std::pair<KanNetwork, PruneReport> prune(const KanNetwork& net, std::span<const double> raw_inputs,
                                         std::size_t rows, double threshold);

}  // namespace kan
