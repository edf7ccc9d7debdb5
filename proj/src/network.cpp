#include "kan/network.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <random>

#include <fmt/core.h>

#include "kan/errors.hpp"

namespace kan {

double silu(double x) noexcept {
  if (x >= 0.0) return x / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return x * e / (1.0 + e);
}

double silu_derivative(double x) noexcept {
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  return s * (1.0 + x * (1.0 - s));
}

const char* to_string(EdgeForm form) noexcept {
  switch (form) {
    case EdgeForm::kSpline: return "spline";
    case EdgeForm::kSymbolic: return "symbolic";
    case EdgeForm::kZero: return "zero";
  }
  return "?";
}

// ---------------------------------------------------------------- edges

EdgeActivation EdgeActivation::spline(SplineGrid grid, double w_b, double w_s,
                                      std::vector<double> coeffs) {
  if (coeffs.size() != grid.basis_count()) {
    throw ShapeError(fmt::format("spline edge needs {} coefficients, got {}",
                                 grid.basis_count(), coeffs.size()));
  }
  return EdgeActivation(SplineEdge{std::move(grid), w_b, w_s, std::move(coeffs)});
}

EdgeActivation EdgeActivation::symbolic(const Basis& basis, double a, double b, double c,
                                        double d) {
  if (a == 0.0 && basis.id != "constant") {
    throw InvalidArgument(fmt::format("symbolic edge '{}' needs a != 0", basis.id));
  }
  return EdgeActivation(SymbolicEdge{&basis, a, b, c, d});
}

EdgeForm EdgeActivation::form() const noexcept {
  switch (edge_.index()) {
    case 0: return EdgeForm::kSpline;
    case 1: return EdgeForm::kSymbolic;
    default: return EdgeForm::kZero;
  }
}

namespace {

double symbolic_arg(const SymbolicEdge& s, double x) {
  const double z = s.a * x + s.b;
  if (!s.basis->in_domain(z)) {
    throw DomainError(fmt::format("{} is singular at argument {}", s.basis->id, z));
  }
  return z;
}

}  // namespace

double EdgeActivation::eval(double x) const {
  if (const auto* s = std::get_if<SplineEdge>(&edge_)) {
    std::array<double, SplineGrid::kMaxOrder + 1> vals{};
    const std::size_t first = s->grid.local_values(x, vals);
    double acc = 0.0;
    for (int m = 0; m <= s->grid.order(); ++m) {
      acc += s->coeffs[first + static_cast<std::size_t>(m)] * vals[static_cast<std::size_t>(m)];
    }
    return s->w_b * silu(x) + s->w_s * acc;
  }
  if (const auto* s = std::get_if<SymbolicEdge>(&edge_)) {
    return s->c * s->basis->value(symbolic_arg(*s, x)) + s->d;
  }
  return 0.0;
}

double EdgeActivation::eval_with_slope(double x, double& slope) const {
  if (const auto* s = std::get_if<SplineEdge>(&edge_)) {
    std::array<double, SplineGrid::kMaxOrder + 1> vals{};
    std::array<double, SplineGrid::kMaxOrder + 1> ders{};
    const std::size_t first = s->grid.local_values_and_derivatives(x, vals, ders);
    double acc = 0.0;
    double dacc = 0.0;
    for (int m = 0; m <= s->grid.order(); ++m) {
      const double c = s->coeffs[first + static_cast<std::size_t>(m)];
      acc += c * vals[static_cast<std::size_t>(m)];
      dacc += c * ders[static_cast<std::size_t>(m)];
    }
    slope = s->w_b * silu_derivative(x) + s->w_s * dacc;
    return s->w_b * silu(x) + s->w_s * acc;
  }
  if (const auto* s = std::get_if<SymbolicEdge>(&edge_)) {
    const double z = symbolic_arg(*s, x);
    slope = s->c * s->basis->derivative(z) * s->a;
    return s->c * s->basis->value(z) + s->d;
  }
  slope = 0.0;
  return 0.0;
}

double EdgeActivation::accumulate_gradient(double x, double upstream,
                                           std::span<double> grad) const {
  if (const auto* s = std::get_if<SplineEdge>(&edge_)) {
    std::array<double, SplineGrid::kMaxOrder + 1> vals{};
    std::array<double, SplineGrid::kMaxOrder + 1> ders{};
    const std::size_t first = s->grid.local_values_and_derivatives(x, vals, ders);
    double acc = 0.0;
    double dacc = 0.0;
    const double scaled = upstream * s->w_s;
    for (int m = 0; m <= s->grid.order(); ++m) {
      const auto idx = first + static_cast<std::size_t>(m);
      const auto mm = static_cast<std::size_t>(m);
      acc += s->coeffs[idx] * vals[mm];
      dacc += s->coeffs[idx] * ders[mm];
      grad[2 + idx] += scaled * vals[mm];
    }
    grad[0] += upstream * silu(x);
    grad[1] += upstream * acc;
    return upstream * (s->w_b * silu_derivative(x) + s->w_s * dacc);
  }
  if (const auto* s = std::get_if<SymbolicEdge>(&edge_)) {
    const double z = symbolic_arg(*s, x);
    const double g = s->basis->value(z);
    const double dg = s->basis->derivative(z);
    grad[0] += upstream * s->c * dg * x;
    grad[1] += upstream * s->c * dg;
    grad[2] += upstream * g;
    grad[3] += upstream;
    return upstream * s->c * dg * s->a;
  }
  return 0.0;
}

std::size_t EdgeActivation::parameter_count() const noexcept {
  if (const auto* s = std::get_if<SplineEdge>(&edge_)) return 2 + s->coeffs.size();
  if (std::holds_alternative<SymbolicEdge>(edge_)) return 4;
  return 0;
}

void EdgeActivation::append_parameters(std::vector<double*>& out) {
  if (auto* s = std::get_if<SplineEdge>(&edge_)) {
    out.push_back(&s->w_b);
    out.push_back(&s->w_s);
    for (double& c : s->coeffs) out.push_back(&c);
  } else if (auto* s = std::get_if<SymbolicEdge>(&edge_)) {
    out.insert(out.end(), {&s->a, &s->b, &s->c, &s->d});
  }
}

void EdgeActivation::append_parameter_values(std::vector<double>& out) const {
  if (const auto* s = std::get_if<SplineEdge>(&edge_)) {
    out.push_back(s->w_b);
    out.push_back(s->w_s);
    out.insert(out.end(), s->coeffs.begin(), s->coeffs.end());
  } else if (const auto* s = std::get_if<SymbolicEdge>(&edge_)) {
    out.insert(out.end(), {s->a, s->b, s->c, s->d});
  }
}

// ---------------------------------------------------------------- layers

KanLayer::KanLayer(std::size_t n_in, std::size_t n_out)
    : KanLayer(n_in, n_out, std::vector<EdgeActivation>(n_in * n_out)) {}

KanLayer::KanLayer(std::size_t n_in, std::size_t n_out, std::vector<EdgeActivation> edges)
    : n_in_(n_in), n_out_(n_out), edges_(std::move(edges)) {
  if (n_in == 0 || n_out == 0) {
    throw ShapeError(fmt::format("layer dimensions must be positive, got {}x{}", n_out, n_in));
  }
  if (edges_.size() != n_in * n_out) {
    throw ShapeError(fmt::format("layer {}x{} needs {} edges, got {}", n_out, n_in,
                                 n_in * n_out, edges_.size()));
  }
}

void KanLayer::apply(std::span<const double> in, std::span<double> out) const {
  for (std::size_t j = 0; j < n_out_; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n_in_; ++i) acc += edge(j, i).eval(in[i]);
    out[j] = acc;
  }
}

// ---------------------------------------------------------------- normalizers

AffineMap AffineMap::identity(std::size_t n) {
  return AffineMap{std::vector<double>(n, 1.0), std::vector<double>(n, 0.0)};
}

AffineMap AffineMap::from_range(std::span<const double> min, std::span<const double> max,
                                double lo, double hi) {
  AffineMap m;
  for (std::size_t i = 0; i < min.size(); ++i) {
    const double span = max[i] - min[i];
    if (span > 0.0) {
      const double s = (hi - lo) / span;
      m.scale.push_back(s);
      m.offset.push_back(lo - s * min[i]);
    } else {
      m.scale.push_back(1.0);
      m.offset.push_back(0.5 * (lo + hi) - min[i]);
    }
  }
  return m;
}

// ---------------------------------------------------------------- network

KanNetwork::KanNetwork(std::vector<KanLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ShapeError("network needs at least one layer");
  input_normalizer = AffineMap::identity(layers_.front().n_in());
  output_denormalizer = AffineMap::identity(layers_.back().n_out());
  for (std::size_t i = 0; i < layers_.front().n_in(); ++i) {
    input_names.push_back(layers_.front().n_in() == 1 ? "x" : fmt::format("x{}", i + 1));
  }
  for (std::size_t j = 0; j < layers_.back().n_out(); ++j) {
    output_names.push_back(layers_.back().n_out() == 1 ? "y" : fmt::format("y{}", j + 1));
  }
  check();
}

std::vector<std::size_t> KanNetwork::shape() const {
  std::vector<std::size_t> s;
  if (layers_.empty()) return s;
  s.push_back(layers_.front().n_in());
  for (const auto& l : layers_) s.push_back(l.n_out());
  return s;
}

std::size_t KanNetwork::n_inputs() const { return layers_.empty() ? 0 : layers_.front().n_in(); }
std::size_t KanNetwork::n_outputs() const { return layers_.empty() ? 0 : layers_.back().n_out(); }

void KanNetwork::check() const {
  for (std::size_t l = 1; l < layers_.size(); ++l) {
    if (layers_[l].n_in() != layers_[l - 1].n_out()) {
      throw ShapeError(fmt::format("layer {} has n_in={} but layer {} has n_out={}", l,
                                   layers_[l].n_in(), l - 1, layers_[l - 1].n_out()));
    }
  }
  if (input_normalizer.size() != n_inputs() || input_normalizer.offset.size() != n_inputs()) {
    throw ShapeError("input normalizer size does not match network inputs");
  }
  if (output_denormalizer.size() != n_outputs() ||
      output_denormalizer.offset.size() != n_outputs()) {
    throw ShapeError("output denormalizer size does not match network outputs");
  }
  if (input_names.size() != n_inputs() || output_names.size() != n_outputs()) {
    throw ShapeError("variable names do not match network dimensions");
  }
}

std::vector<double> KanNetwork::forward_normalized(std::span<const double> x) const {
  if (x.size() != n_inputs()) {
    throw ShapeError(fmt::format("network expects {} inputs, got {}", n_inputs(), x.size()));
  }
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (const auto& layer : layers_) {
    next.assign(layer.n_out(), 0.0);
    layer.apply(cur, next);
    cur.swap(next);
  }
  return cur;
}

std::vector<double> KanNetwork::forward(std::span<const double> x) const {
  if (x.size() != n_inputs()) {
    throw ShapeError(fmt::format("network expects {} inputs, got {}", n_inputs(), x.size()));
  }
  std::vector<double> xn(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xn[i] = input_normalizer.apply(i, x[i]);
  auto y = forward_normalized(xn);
  for (std::size_t j = 0; j < y.size(); ++j) y[j] = output_denormalizer.apply(j, y[j]);
  return y;
}

std::size_t KanNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) {
    for (const auto& e : l.edges()) n += e.parameter_count();
  }
  return n;
}

std::vector<double*> KanNetwork::parameters() {
  std::vector<double*> out;
  for (auto& l : layers_) {
    for (auto& e : l.edges()) e.append_parameters(out);
  }
  return out;
}

std::vector<double> KanNetwork::parameter_values() const {
  std::vector<double> out;
  for (const auto& l : layers_) {
    for (const auto& e : l.edges()) e.append_parameter_values(out);
  }
  return out;
}

void fit_normalizers(KanNetwork& net, std::span<const double> inputs,
                     std::span<const double> targets, std::size_t rows, double lo, double hi) {
  const std::size_t n_in = net.n_inputs();
  const std::size_t n_out = net.n_outputs();
  if (rows == 0 || inputs.size() != rows * n_in || targets.size() != rows * n_out) {
    throw ShapeError("fit_normalizers: batch dimensions do not match the network");
  }
  auto range = [rows](std::span<const double> data, std::size_t width) {
    std::vector<double> mn(width, INFINITY), mx(width, -INFINITY);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < width; ++c) {
        mn[c] = std::min(mn[c], data[r * width + c]);
        mx[c] = std::max(mx[c], data[r * width + c]);
      }
    }
    return std::pair{mn, mx};
  };
  auto [imin, imax] = range(inputs, n_in);
  net.input_normalizer = AffineMap::from_range(imin, imax, lo, hi);
  // the output map runs the other way: grid domain -> target units
  auto [omin, omax] = range(targets, n_out);
  AffineMap to_grid = AffineMap::from_range(omin, omax, lo, hi);
  AffineMap back = AffineMap::identity(n_out);
  for (std::size_t j = 0; j < n_out; ++j) {
    back.scale[j] = 1.0 / to_grid.scale[j];
    back.offset[j] = -to_grid.offset[j] / to_grid.scale[j];
  }
  net.output_denormalizer = back;
}

KanNetwork init_network(std::span<const std::size_t> shape, const GridConfig& grid,
                        std::uint64_t seed) {
  if (shape.size() < 2) {
    throw InvalidArgument(fmt::format("network shape needs at least 2 entries, got {}", shape.size()));
  }
  for (std::size_t s : shape) {
    if (s == 0) throw InvalidArgument("network shape entries must be positive");
  }
  const SplineGrid g = grid.make();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> coeff(0.0, 0.1);
  std::vector<KanLayer> layers;
  for (std::size_t l = 0; l + 1 < shape.size(); ++l) {
    std::vector<EdgeActivation> edges;
    edges.reserve(shape[l] * shape[l + 1]);
    for (std::size_t e = 0; e < shape[l] * shape[l + 1]; ++e) {
      std::vector<double> c(g.basis_count());
      for (double& v : c) v = coeff(rng);
      edges.push_back(EdgeActivation::spline(g, 1.0, 1.0, std::move(c)));
    }
    layers.emplace_back(shape[l], shape[l + 1], std::move(edges));
  }
  return KanNetwork(std::move(layers));
}

std::string parameter_digest(const KanNetwork& net) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& layer : net.layers()) {
    for (const auto& e : layer.edges()) {
      const auto form = static_cast<int>(e.form());
      mix(&form, sizeof form);
      if (const auto* s = e.as_symbolic()) mix(s->basis->id.data(), s->basis->id.size());
    }
  }
  for (double v : net.parameter_values()) mix(&v, sizeof v);
  return fmt::format("{:016x}", h);
}

}  // namespace kan
