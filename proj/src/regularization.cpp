#include "kan/regularization.hpp"

#include <cmath>

#include <fmt/core.h>

#include "kan/errors.hpp"

namespace kan {

double edge_l1(const EdgeActivation& edge, std::span<const double> inputs) {
  if (inputs.empty()) throw InvalidArgument("edge_l1 needs at least one sample");
  if (edge.form() == EdgeForm::kZero) return 0.0;
  double acc = 0.0;
  for (double x : inputs) acc += std::abs(edge.eval(x));
  return acc / static_cast<double>(inputs.size());
}

std::vector<double> edge_l1_matrix(const KanLayer& layer, std::span<const double> inputs,
                                   std::size_t rows) {
  if (rows == 0) throw InvalidArgument("layer statistics need at least one sample");
  if (inputs.size() != rows * layer.n_in()) {
    throw ShapeError(fmt::format("layer expects {} x {} inputs, got {} values", rows,
                                 layer.n_in(), inputs.size()));
  }
  std::vector<double> out(layer.n_in() * layer.n_out(), 0.0);
  std::vector<double> column(rows);
  for (std::size_t i = 0; i < layer.n_in(); ++i) {
    for (std::size_t r = 0; r < rows; ++r) column[r] = inputs[r * layer.n_in() + i];
    for (std::size_t j = 0; j < layer.n_out(); ++j) {
      out[j * layer.n_in() + i] = edge_l1(layer.edge(j, i), column);
    }
  }
  return out;
}

double layer_l1(const KanLayer& layer, std::span<const double> inputs, std::size_t rows) {
  double total = 0.0;
  for (double v : edge_l1_matrix(layer, inputs, rows)) total += v;
  return total;
}

EntropyResult layer_entropy(const KanLayer& layer, std::span<const double> inputs,
                            std::size_t rows) {
  const auto mags = edge_l1_matrix(layer, inputs, rows);
  double total = 0.0;
  for (double v : mags) total += v;
  if (total <= 0.0) return {0.0, true};
  double s = 0.0;
  for (double v : mags) {
    if (v > 0.0) {
      const double p = v / total;
      s -= p * std::log(p);
    }
  }
  return {s, false};
}

std::vector<LayerTrace> trace_network(const KanNetwork& net, std::span<const double> raw_inputs,
                                      std::size_t rows) {
  const std::size_t n0 = net.n_inputs();
  if (raw_inputs.size() != rows * n0) {
    throw ShapeError(fmt::format("expected {} x {} inputs, got {} values", rows, n0,
                                 raw_inputs.size()));
  }
  std::vector<double> cur(rows * n0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < n0; ++i) {
      cur[r * n0 + i] = net.input_normalizer.apply(i, raw_inputs[r * n0 + i]);
    }
  }
  std::vector<LayerTrace> traces;
  for (const auto& layer : net.layers()) {
    LayerTrace t;
    t.edge_l1 = edge_l1_matrix(layer, cur, rows);
    std::vector<double> next(rows * layer.n_out());
    for (std::size_t r = 0; r < rows; ++r) {
      layer.apply(std::span<const double>(cur).subspan(r * layer.n_in(), layer.n_in()),
                  std::span<double>(next).subspan(r * layer.n_out(), layer.n_out()));
    }
    t.inputs = std::move(cur);
    traces.push_back(std::move(t));
    cur = std::move(next);
  }
  return traces;
}

}  // namespace kan
