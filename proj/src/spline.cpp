#include "kan/spline.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/core.h>

#include "kan/errors.hpp"

namespace kan {

namespace {

// Cox-de Boor triangle for the degree-`degree` bases that are nonzero on
// knot span [t_j, t_j+1). out[m] holds B_{j-degree+m}.
void cox_de_boor(const std::vector<double>& t, std::size_t j, double x,
                 int degree, double* out) {
  std::array<double, SplineGrid::kMaxOrder + 1> left{};
  std::array<double, SplineGrid::kMaxOrder + 1> right{};
  out[0] = 1.0;
  for (int r = 1; r <= degree; ++r) {
    left[r] = x - t[j + 1 - r];
    right[r] = t[j + r] - x;
    double saved = 0.0;
    for (int s = 0; s < r; ++s) {
      const double temp = out[s] / (right[s + 1] + left[r - s]);
      out[s] = saved + right[s + 1] * temp;
      saved = left[r - s] * temp;
    }
    out[r] = saved;
  }
}

}  // namespace

SplineGrid::SplineGrid(double lo, double hi, int intervals, int order)
    : lo_(lo), hi_(hi), intervals_(intervals), order_(order) {
  if (intervals < 1) {
    throw InvalidArgument(fmt::format("spline grid needs G >= 1, got {}", intervals));
  }
  if (order < 0 || order > kMaxOrder) {
    throw InvalidArgument(
        fmt::format("spline order must be in [0, {}], got {}", kMaxOrder, order));
  }
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw InvalidArgument(fmt::format("spline domain [{}, {}] is empty or reversed", lo, hi));
  }
  h_ = (hi - lo) / intervals;
  const int n_knots = intervals + 2 * order + 1;
  knots_.resize(static_cast<std::size_t>(n_knots));
  for (int i = 0; i < n_knots; ++i) {
    knots_[static_cast<std::size_t>(i)] = lo + (i - order) * h_;
  }
  // pin the domain ends exactly
  knots_[static_cast<std::size_t>(order)] = lo;
  knots_[static_cast<std::size_t>(order + intervals)] = hi;
}

double SplineGrid::clamp(double x) const noexcept { return std::clamp(x, lo_, hi_); }

std::size_t SplineGrid::span_index(double xc) const noexcept {
  auto cell = static_cast<long>(std::floor((xc - lo_) / h_));
  cell = std::clamp(cell, 0L, static_cast<long>(intervals_) - 1);
  auto j = static_cast<std::size_t>(cell + order_);
  // floor() can land one cell off near a knot; fix against the stored knots
  if (xc < knots_[j] && j > static_cast<std::size_t>(order_)) --j;
  if (xc >= knots_[j + 1] && j + 1 < static_cast<std::size_t>(order_ + intervals_)) ++j;
  return j;
}

std::size_t SplineGrid::local_values(double x, std::span<double> out) const {
  const double xc = clamp(x);
  const std::size_t j = span_index(xc);
  cox_de_boor(knots_, j, xc, order_, out.data());
  return j - static_cast<std::size_t>(order_);
}

std::size_t SplineGrid::local_values_and_derivatives(double x, std::span<double> values,
                                                     std::span<double> derivs) const {
  const double xc = clamp(x);
  const std::size_t j = span_index(xc);
  cox_de_boor(knots_, j, xc, order_, values.data());
  const auto k = static_cast<std::size_t>(order_);
  if (order_ == 0 || x < lo_ || x > hi_) {
    std::fill_n(derivs.begin(), k + 1, 0.0);
    return j - k;
  }
  std::array<double, kMaxOrder + 1> lower{};
  cox_de_boor(knots_, j, xc, order_ - 1, lower.data());
  const double inv_h = 1.0 / h_;
  for (std::size_t m = 0; m <= k; ++m) {
    const double a = m > 0 ? lower[m - 1] : 0.0;
    const double b = m < k ? lower[m] : 0.0;
    derivs[m] = (a - b) * inv_h;
  }
  return j - k;
}

std::vector<double> basis_values(const SplineGrid& grid, double x) {
  std::vector<double> all(grid.basis_count(), 0.0);
  std::array<double, SplineGrid::kMaxOrder + 1> local{};
  const std::size_t first = grid.local_values(x, local);
  for (int m = 0; m <= grid.order(); ++m) all[first + static_cast<std::size_t>(m)] = local[static_cast<std::size_t>(m)];
  return all;
}

std::vector<double> basis_derivatives(const SplineGrid& grid, double x) {
  std::vector<double> all(grid.basis_count(), 0.0);
  std::array<double, SplineGrid::kMaxOrder + 1> vals{};
  std::array<double, SplineGrid::kMaxOrder + 1> ders{};
  const std::size_t first = grid.local_values_and_derivatives(x, vals, ders);
  for (int m = 0; m <= grid.order(); ++m) all[first + static_cast<std::size_t>(m)] = ders[static_cast<std::size_t>(m)];
  return all;
}

}  // namespace kan
