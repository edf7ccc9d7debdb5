#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kan/network.hpp"

namespace kan {

/// Mean absolute edge output (1/N) sum_k |phi(x_k)| over the edge's inputs.
double edge_l1(const EdgeActivation& edge, std::span<const double> inputs);

/// Per-edge L1 magnitudes of a layer as an n_out x n_in row-major matrix.
/// `inputs` holds rows x n_in node values feeding the layer.
std::vector<double> edge_l1_matrix(const KanLayer& layer, std::span<const double> inputs,
                                   std::size_t rows);

/// |Phi|_1: sum of edge_l1 over all edges of the layer.
double layer_l1(const KanLayer& layer, std::span<const double> inputs, std::size_t rows);

struct EntropyResult {
  double value = 0.0;
  /// |Phi|_1 was zero; the entropy is reported as 0.
  bool degenerate = false;
};

/// S(Phi) = -sum p log p with p = |phi|_1 / |Phi|_1 (natural log).
EntropyResult layer_entropy(const KanLayer& layer, std::span<const double> inputs,
                            std::size_t rows);

/// Node values and edge magnitudes of every layer for a batch of raw inputs.
struct LayerTrace {
  std::vector<double> inputs;   // rows x n_in, values entering the layer
  std::vector<double> edge_l1;  // n_out x n_in
};

std::vector<LayerTrace> trace_network(const KanNetwork& net, std::span<const double> raw_inputs,
                                      std::size_t rows);

}  // namespace kan
