#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "kan/backprop.hpp"
#include "kan/network.hpp"

namespace fixtures {

struct OwnedBatch {
  std::vector<double> inputs;
  std::vector<double> targets;
  std::size_t rows = 0;
  kan::Batch batch() const { return kan::Batch{inputs, targets, rows}; }
};

/// Smooth random regression problem with `n_in` features in [-2, 3].
inline OwnedBatch random_batch(std::size_t n_in, std::size_t rows, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 3.0);
  OwnedBatch b;
  b.rows = rows;
  for (std::size_t r = 0; r < rows; ++r) {
    double y = 0.0;
    for (std::size_t i = 0; i < n_in; ++i) {
      const double x = u(rng);
      b.inputs.push_back(x);
      y += std::sin(x + static_cast<double>(i)) + 0.1 * x * x;
    }
    b.targets.push_back(y);
  }
  return b;
}

/// 9.04 * arctan(8.7 * (0.5 - D)^2 - 1.21) + 15.96 as a two-layer network
/// acting on raw D.
inline kan::KanNetwork printed_dab_network() {
  const auto& lib = kan::default_library();
  std::vector<kan::KanLayer> layers;
  layers.emplace_back(1, 1, std::vector<kan::EdgeActivation>{
                                kan::EdgeActivation::symbolic(lib.get("square"), -1.0, 0.5, 8.7, -1.21)});
  layers.emplace_back(1, 1, std::vector<kan::EdgeActivation>{
                                kan::EdgeActivation::symbolic(lib.get("arctan"), 1.0, 0.0, 9.04, 15.96)});
  kan::KanNetwork net(std::move(layers));
  net.input_names = {"D"};
  net.output_names = {"V_out"};
  return net;
}

/// c * g(a x + b) + d on x in [-1, 1], one case per non-constant, non-singular
/// basis. Parameters keep each curve distinguishable from simpler bases.
struct SnapCase {
  const char* basis;
  double a, b, c, d;
  /// Bases that represent the same family under an affine change.
  std::vector<std::string> equivalent;
};

inline std::vector<SnapCase> snapping_cases() {
  return {
      {"identity", 2.0, 0.3, 1.5, -0.2, {}},
      {"square", 1.5, 0.2, 2.0, 0.1, {}},
      {"cube", 1.2, 0.1, 1.0, 0.0, {}},
      {"exp", 1.5, 0.0, 1.0, 0.0, {}},
      {"sin", 3.0, 1.0, 2.0, -0.5, {"cos"}},
      {"cos", 3.0, 0.5, 1.0, 0.2, {"sin"}},
      {"arctan", 3.0, 0.5, 1.0, 0.0, {}},
      {"tanh", 2.5, 0.3, 1.0, 0.0, {"sigmoid"}},
      {"sigmoid", 5.0, 0.5, 1.0, 0.0, {"tanh"}},
      {"gaussian", 2.0, 0.3, 1.0, 0.0, {}},
      {"abs", 1.0, 0.2, 1.0, 0.0, {}},
  };
}

/// Samples of a snapping case with Normal(0, noise) added to y.
inline std::pair<std::vector<double>, std::vector<double>> snap_samples(const SnapCase& sc,
                                                                        std::size_t n,
                                                                        double noise,
                                                                        std::uint64_t seed) {
  const kan::Basis& g = kan::default_library().get(sc.basis);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> e(0.0, noise);
  std::vector<double> xs(n), ys(n);
  for (std::size_t k = 0; k < n; ++k) {
    xs[k] = u(rng);
    ys[k] = sc.c * g.value(sc.a * xs[k] + sc.b) + sc.d + e(rng);
  }
  return {xs, ys};
}

}  // namespace fixtures
