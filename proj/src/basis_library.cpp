#include "kan/basis_library.hpp"

#include <cmath>
#include <set>

#include <fmt/core.h>

#include "kan/errors.hpp"

namespace kan {

namespace {

bool anywhere(double) { return true; }
bool nonzero(double z) { return z != 0.0; }
bool nonnegative(double z) { return z >= 0.0; }
bool positive(double z) { return z > 0.0; }
bool exp_range(double z) { return z < 700.0; }
bool cos_nonzero(double z) { return std::abs(std::cos(z)) > 1e-12; }

bool any_interval(double, double) { return true; }
bool nonzero_interval(double lo, double hi) { return lo > 0.0 || hi < 0.0; }
bool nonnegative_interval(double lo, double) { return lo >= 0.0; }
bool positive_interval(double lo, double) { return lo > 0.0; }
bool exp_interval(double, double hi) { return hi < 700.0; }
// no pole (k + 1/2) pi inside [lo, hi]
bool tan_interval(double lo, double hi) {
  constexpr double kPi = 3.14159265358979323846;
  return std::floor(lo / kPi - 0.5) == std::floor(hi / kPi - 0.5) && cos_nonzero(lo) &&
         cos_nonzero(hi);
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

const std::vector<Basis>& builtin() {
  static const std::vector<Basis> list = {
      {"constant", [](double) { return 1.0; }, [](double) { return 0.0; }, anywhere, any_interval, false},
      {"identity", [](double z) { return z; }, [](double) { return 1.0; }, anywhere, any_interval, false},
      {"square", [](double z) { return z * z; }, [](double z) { return 2.0 * z; }, anywhere, any_interval, false},
      {"cube", [](double z) { return z * z * z; }, [](double z) { return 3.0 * z * z; }, anywhere,
       any_interval, false},
      {"reciprocal", [](double z) { return 1.0 / z; }, [](double z) { return -1.0 / (z * z); },
       nonzero, nonzero_interval, true},
      {"sqrt", [](double z) { return std::sqrt(z); },
       [](double z) { return 0.5 / std::sqrt(z); }, nonnegative, nonnegative_interval, true},
      {"exp", [](double z) { return std::exp(z); }, [](double z) { return std::exp(z); },
       exp_range, exp_interval, false},
      {"log", [](double z) { return std::log(z); }, [](double z) { return 1.0 / z; }, positive, positive_interval,
       true},
      {"sin", [](double z) { return std::sin(z); }, [](double z) { return std::cos(z); }, anywhere, any_interval,
       false},
      {"cos", [](double z) { return std::cos(z); }, [](double z) { return -std::sin(z); },
       anywhere, any_interval, false},
      {"tan", [](double z) { return std::tan(z); },
       [](double z) {
         const double c = std::cos(z);
         return 1.0 / (c * c);
       },
       cos_nonzero, tan_interval, true},
      {"arctan", [](double z) { return std::atan(z); }, [](double z) { return 1.0 / (1.0 + z * z); },
       anywhere, any_interval, false},
      {"tanh", [](double z) { return std::tanh(z); },
       [](double z) {
         const double t = std::tanh(z);
         return 1.0 - t * t;
       },
       anywhere, any_interval, false},
      {"sigmoid", sigmoid,
       [](double z) {
         const double s = sigmoid(z);
         return s * (1.0 - s);
       },
       anywhere, any_interval, false},
      {"gaussian", [](double z) { return std::exp(-z * z); },
       [](double z) { return -2.0 * z * std::exp(-z * z); }, anywhere, any_interval, false},
      {"abs", [](double z) { return std::abs(z); },
       [](double z) { return z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0); }, anywhere, any_interval, false},
  };
  return list;
}

}  // namespace

BasisLibrary::BasisLibrary(std::vector<Basis> entries) : entries_(std::move(entries)) {
  std::set<std::string_view> seen;
  for (const auto& b : entries_) {
    if (!seen.insert(b.id).second) {
      throw InvalidArgument(fmt::format("duplicate basis id '{}'", b.id));
    }
  }
}

const Basis* BasisLibrary::find(std::string_view id) const noexcept {
  for (const auto& b : entries_) {
    if (b.id == id) return &b;
  }
  return nullptr;
}

const Basis& BasisLibrary::get(std::string_view id) const {
  if (const Basis* b = find(id)) return *b;
  throw InvalidArgument(fmt::format("unknown basis '{}'", id));
}

std::size_t BasisLibrary::rank(const Basis& basis) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].id == basis.id) return i;
  }
  throw InvalidArgument(fmt::format("basis '{}' is not in this library", basis.id));
}

const BasisLibrary& default_library() {
  static const BasisLibrary lib(builtin());
  return lib;
}

}  // namespace kan
