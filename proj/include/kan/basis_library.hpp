#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kan {

/// A named univariate function g used by symbolic edges c*g(a*x+b)+d.
struct Basis {
  std::string_view id;
  double (*value)(double);
  double (*derivative)(double);
  bool (*in_domain)(double);
  /// True when every point of [lo, hi] is in the domain.
  bool (*interval_in_domain)(double lo, double hi);
  /// True when the function has points where it is undefined.
  bool singular;
};

/// Ordered set of basis functions. Order doubles as the simplicity ranking
/// used to break ties during snapping: earlier entries are preferred.
class BasisLibrary {
 public:
  static constexpr int kVersion = 1;

  explicit BasisLibrary(std::vector<Basis> entries);

  std::span<const Basis> entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  /// nullptr when the id is unknown.
  const Basis* find(std::string_view id) const noexcept;
  /// Throws InvalidArgument for unknown ids.
  const Basis& get(std::string_view id) const;
  std::size_t rank(const Basis& basis) const;

 private:
  std::vector<Basis> entries_;
};

/// constant, identity, square, cube, reciprocal, sqrt, exp, log, sin, cos,
/// tan, arctan, tanh, sigmoid, gaussian, abs
const BasisLibrary& default_library();

}  // namespace kan
