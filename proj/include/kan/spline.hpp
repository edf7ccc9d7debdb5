#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace kan {

/// Uniform B-spline knot grid over [lo, hi] with G intervals and order k.
///
/// The interior knots split the domain into G equal intervals; k extra knots
/// with the same spacing extend the grid past each end, giving G + 2k + 1
/// knots and G + k basis functions. Inputs outside the domain are clamped.
class SplineGrid {
 public:
  static constexpr int kMaxOrder = 7;

  SplineGrid(double lo, double hi, int intervals, int order);

  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  int intervals() const noexcept { return intervals_; }
  int order() const noexcept { return order_; }
  double spacing() const noexcept { return h_; }
  const std::vector<double>& knots() const noexcept { return knots_; }
  std::size_t basis_count() const noexcept {
    return static_cast<std::size_t>(intervals_ + order_);
  }

  double clamp(double x) const noexcept;

  /// Evaluates the k+1 bases that can be nonzero at x (after clamping).
  /// Writes them to `out[0..k]` and returns the index of the first one.
  std::size_t local_values(double x, std::span<double> out) const;

  /// Same support as local_values, writing values and d/dx derivatives.
  /// Derivatives are zero outside the domain because of the clamp.
  std::size_t local_values_and_derivatives(double x, std::span<double> values,
                                           std::span<double> derivs) const;

  friend bool operator==(const SplineGrid&, const SplineGrid&) = default;

 private:
  std::size_t span_index(double xc) const noexcept;

  double lo_;
  double hi_;
  int intervals_;
  int order_;
  double h_;
  std::vector<double> knots_;
};

/// All G+k basis values B_i(x).
std::vector<double> basis_values(const SplineGrid& grid, double x);

/// All G+k derivatives dB_i/dx.
std::vector<double> basis_derivatives(const SplineGrid& grid, double x);

/// Default grid used by the engine: G=5 cubic splines on [-1, 1].
struct GridConfig {
  int intervals = 5;
  int order = 3;
  double lo = -1.0;
  double hi = 1.0;

  SplineGrid make() const { return SplineGrid(lo, hi, intervals, order); }
};

}  // namespace kan
