#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kan/network.hpp"

namespace kan {

/// Row-major view of a batch in raw (un-normalized) units.
struct Batch {
  std::span<const double> inputs;   // rows x n_inputs
  std::span<const double> targets;  // rows x n_outputs
  std::size_t rows = 0;
};

/// Weights of the regularized objective
///   pred + lambda * (mu1 * sum_l |Phi_l|_1 + mu2 * sum_l S(Phi_l)).
struct LossWeights {
  double lambda = 0.0;
  double mu1 = 1.0;
  double mu2 = 1.0;
};

struct LossComponents {
  double total = 0.0;
  double pred = 0.0;
  double l1 = 0.0;       // sum over layers of |Phi_l|_1
  double entropy = 0.0;  // sum over layers of S(Phi_l)
  /// Some layer had |Phi|_1 = 0; its entropy was taken as 0.
  bool degenerate_entropy = false;
};

/// Loss components plus dL/dtheta in KanNetwork::parameters() order.
struct GradientRecord {
  LossComponents loss;
  std::vector<double> gradient;
};

/// Prediction loss is the mean squared error in the network's normalized
/// output coordinates, averaged over rows and outputs.
LossComponents evaluate_loss(const KanNetwork& net, const Batch& batch, const LossWeights& w);

/// Reverse-mode gradient of the full objective, including the L1 and entropy
/// terms (subgradient sign(phi) at |phi|). Throws NumericalError naming the
/// layer and edge when a non-finite value shows up.
GradientRecord backward(const KanNetwork& net, const Batch& batch, const LossWeights& w);

/// Number of worker threads used for batch evaluation; 0 restores the
/// default (hardware concurrency). Results do not depend on this setting.
void set_thread_count(unsigned n);
unsigned thread_count();

}  // namespace kan
