#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "kan/basis_library.hpp"
#include "kan/spline.hpp"

namespace kan {

/// x / (1 + exp(-x))
double silu(double x) noexcept;
double silu_derivative(double x) noexcept;

enum class EdgeForm { kSpline, kSymbolic, kZero };

const char* to_string(EdgeForm form) noexcept;

/// w_b * silu(x) + w_s * sum_i c_i B_i(x)
struct SplineEdge {
  SplineGrid grid;
  double w_b = 1.0;
  double w_s = 1.0;
  std::vector<double> coeffs;
};

/// c * g(a*x + b) + d
struct SymbolicEdge {
  const Basis* basis = nullptr;
  double a = 1.0;
  double b = 0.0;
  double c = 1.0;
  double d = 0.0;
};

struct ZeroEdge {};

/// A learnable univariate function living on one network edge.
///
/// Trainable parameters are exposed in a fixed order: spline edges as
/// (w_b, w_s, c_0 .. c_{n-1}), symbolic edges as (a, b, c, d), zero edges
/// have none.
class EdgeActivation {
 public:
  EdgeActivation() : edge_(ZeroEdge{}) {}

  static EdgeActivation spline(SplineGrid grid, double w_b, double w_s,
                               std::vector<double> coeffs);
  static EdgeActivation symbolic(const Basis& basis, double a, double b, double c, double d);
  static EdgeActivation zero() { return EdgeActivation(); }

  EdgeForm form() const noexcept;
  const SplineEdge* as_spline() const noexcept { return std::get_if<SplineEdge>(&edge_); }
  SplineEdge* as_spline() noexcept { return std::get_if<SplineEdge>(&edge_); }
  const SymbolicEdge* as_symbolic() const noexcept { return std::get_if<SymbolicEdge>(&edge_); }
  SymbolicEdge* as_symbolic() noexcept { return std::get_if<SymbolicEdge>(&edge_); }

  /// Throws DomainError when a symbolic basis is singular at a*x+b.
  double eval(double x) const;

  /// Value plus d(phi)/dx.
  double eval_with_slope(double x, double& slope) const;

  /// Adds upstream * d(phi)/d(theta) into `grad` (sized parameter_count())
  /// and returns upstream * d(phi)/dx.
  double accumulate_gradient(double x, double upstream, std::span<double> grad) const;

  std::size_t parameter_count() const noexcept;
  void append_parameters(std::vector<double*>& out);
  void append_parameter_values(std::vector<double>& out) const;

 private:
  explicit EdgeActivation(std::variant<SplineEdge, SymbolicEdge, ZeroEdge> e)
      : edge_(std::move(e)) {}

  std::variant<SplineEdge, SymbolicEdge, ZeroEdge> edge_;
};

/// Dense n_out x n_in grid of edges; edge(j, i) connects input i to output j.
class KanLayer {
 public:
  KanLayer(std::size_t n_in, std::size_t n_out);
  KanLayer(std::size_t n_in, std::size_t n_out, std::vector<EdgeActivation> edges);

  std::size_t n_in() const noexcept { return n_in_; }
  std::size_t n_out() const noexcept { return n_out_; }
  EdgeActivation& edge(std::size_t j, std::size_t i) { return edges_[j * n_in_ + i]; }
  const EdgeActivation& edge(std::size_t j, std::size_t i) const { return edges_[j * n_in_ + i]; }
  std::span<EdgeActivation> edges() noexcept { return edges_; }
  std::span<const EdgeActivation> edges() const noexcept { return edges_; }

  /// out_j = sum_i phi_ji(in_i)
  void apply(std::span<const double> in, std::span<double> out) const;

 private:
  std::size_t n_in_;
  std::size_t n_out_;
  std::vector<EdgeActivation> edges_;
};

/// Per-feature affine map v -> scale * v + offset.
struct AffineMap {
  std::vector<double> scale;
  std::vector<double> offset;

  static AffineMap identity(std::size_t n);
  /// Maps [min_i, max_i] onto [lo, hi]; constant features map to the midpoint.
  static AffineMap from_range(std::span<const double> min, std::span<const double> max,
                              double lo, double hi);
  std::size_t size() const noexcept { return scale.size(); }
  double apply(std::size_t i, double v) const noexcept { return scale[i] * v + offset[i]; }
  double invert(std::size_t i, double v) const noexcept { return (v - offset[i]) / scale[i]; }
  friend bool operator==(const AffineMap&, const AffineMap&) = default;
};

/// Stack of KAN layers plus the normalizers binding raw data to the grid
/// domain. Forward maps raw inputs to target units.
class KanNetwork {
 public:
  KanNetwork() = default;
  explicit KanNetwork(std::vector<KanLayer> layers);

  std::vector<std::size_t> shape() const;
  std::size_t n_inputs() const;
  std::size_t n_outputs() const;
  std::vector<KanLayer>& layers() noexcept { return layers_; }
  const std::vector<KanLayer>& layers() const noexcept { return layers_; }

  AffineMap input_normalizer;
  AffineMap output_denormalizer;
  std::vector<std::string> input_names;
  std::vector<std::string> output_names;

  /// Raw input -> raw output. Throws ShapeError on length mismatch.
  std::vector<double> forward(std::span<const double> x) const;
  /// Normalized input -> normalized output (no affine maps applied).
  std::vector<double> forward_normalized(std::span<const double> x) const;

  std::size_t parameter_count() const;
  /// Pointers to every trainable parameter in layer / row-major edge order.
  std::vector<double*> parameters();
  std::vector<double> parameter_values() const;

  /// Validates layer adjacency and normalizer sizes; throws ShapeError.
  void check() const;

 private:
  std::vector<KanLayer> layers_;
};

/// Sets normalizers from data ranges: inputs onto the grid domain [lo, hi],
/// outputs from [lo, hi] back to target units.
void fit_normalizers(KanNetwork& net, std::span<const double> inputs,
                     std::span<const double> targets, std::size_t rows, double lo = -1.0,
                     double hi = 1.0);

/// Every edge SPLINE with w_b = w_s = 1 and coefficients ~ Normal(0, 0.1).
KanNetwork init_network(std::span<const std::size_t> shape, const GridConfig& grid,
                        std::uint64_t seed);

/// FNV-1a digest of all parameters, used as a snapshot id.
std::string parameter_digest(const KanNetwork& net);

}  // namespace kan
