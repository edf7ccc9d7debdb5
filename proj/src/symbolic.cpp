#include "kan/symbolic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <fmt/core.h>
#include <fmt/ranges.h>

#include "kan/errors.hpp"
#include "kan/optimizer.hpp"

namespace kan {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Trial {
  double r2 = kNegInf;
  double c = 0.0;
  double d = 0.0;
  std::size_t excluded = 0;
};

bool better(double lhs, double rhs) {
  if (std::isnan(lhs)) return false;
  if (std::isnan(rhs)) return true;
  return lhs > rhs;
}

/// Least-squares (c, d) for y ~ c * g(a x + b) + d over in-domain samples.
Trial evaluate(const Basis& g, double a, double b, std::span<const double> xs,
               std::span<const double> ys, double x_lo, double x_hi, double max_excluded,
               bool exact_residual, std::vector<double>& gz, std::vector<char>& use) {
  const std::size_t n = xs.size();
  Trial t;
  const double z1 = a * x_lo + b;
  const double z2 = a * x_hi + b;
  const bool whole = g.interval_in_domain(std::min(z1, z2), std::max(z1, z2));
  if (!whole && max_excluded <= 0.0) return t;

  gz.resize(n);
  use.assign(n, 1);
  std::size_t excluded = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double z = a * xs[k] + b;
    if (!whole && !g.in_domain(z)) {
      use[k] = 0;
      ++excluded;
      continue;
    }
    gz[k] = g.value(z);
    if (!std::isfinite(gz[k])) {
      use[k] = 0;
      ++excluded;
    }
  }
  if (static_cast<double>(excluded) > max_excluded * static_cast<double>(n)) return t;
  const std::size_t m = n - excluded;
  if (m < 2) return t;

  double gm = 0.0;
  double ym = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!use[k]) continue;
    gm += gz[k];
    ym += ys[k];
  }
  gm /= static_cast<double>(m);
  ym /= static_cast<double>(m);
  double sgg = 0.0;
  double sgy = 0.0;
  double syy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!use[k]) continue;
    const double dg = gz[k] - gm;
    const double dy = ys[k] - ym;
    sgg += dg * dg;
    sgy += dg * dy;
    syy += dy * dy;
  }
  if (!(syy > 0.0) || !std::isfinite(sgg)) return t;
  t.excluded = excluded;
  if (!(sgg > 1e-14 * (gm * gm + 1e-300) * static_cast<double>(m)) || sgg == 0.0) {
    t.c = 0.0;
    t.d = ym;
    t.r2 = 0.0;
    return t;
  }
  t.c = sgy / sgg;
  t.d = ym - t.c * gm;
  double ss_res = 0.0;
  if (exact_residual) {
    for (std::size_t k = 0; k < n; ++k) {
      if (!use[k]) continue;
      const double r = ys[k] - (t.c * gz[k] + t.d);
      ss_res += r * r;
    }
  } else {
    ss_res = std::max(0.0, syy - t.c * sgy);
  }
  t.r2 = 1.0 - ss_res / syy;
  if (!std::isfinite(t.r2)) t.r2 = kNegInf;
  return t;
}

/// Levenberg-Marquardt on (a, b, c, d) starting from the search result;
/// (c, d) are re-solved in closed form after every accepted step.
void polish(const Basis& g, std::span<const double> xs, std::span<const double> ys, double x_lo,
            double x_hi, double max_excluded, double& a, double& b, std::vector<double>& gz,
            std::vector<char>& use) {
  Trial cur = evaluate(g, a, b, xs, ys, x_lo, x_hi, max_excluded, true, gz, use);
  if (cur.r2 == kNegInf) return;
  double mu = 1e-3;
  for (int it = 0; it < 200; ++it) {
    Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
    Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
    // `use` and `gz` still describe the current point
    for (std::size_t k = 0; k < xs.size(); ++k) {
      if (!use[k]) continue;
      const double z = a * xs[k] + b;
      const double slope = cur.c * g.derivative(z);
      const Eigen::Vector4d j(slope * xs[k], slope, gz[k], 1.0);
      const double r = cur.c * gz[k] + cur.d - ys[k];
      jtj.noalias() += j * j.transpose();
      jtr.noalias() += j * r;
    }
    bool moved = false;
    while (mu < 1e12) {
      Eigen::Matrix4d damped = jtj;
      damped.diagonal() *= 1.0 + mu;
      damped.diagonal().array() += 1e-300;
      const Eigen::Vector4d step = damped.ldlt().solve(-jtr);
      if (!step.allFinite()) {
        mu *= 4.0;
        continue;
      }
      const double na = a + step[0];
      const double nb = b + step[1];
      const Trial t = evaluate(g, na, nb, xs, ys, x_lo, x_hi, max_excluded, true, gz, use);
      if (t.r2 > cur.r2) {
        const double gain = t.r2 - cur.r2;
        a = na;
        b = nb;
        cur = t;
        mu = std::max(mu / 3.0, 1e-12);
        moved = gain > 1e-15 * std::max(1e-300, 1.0 - cur.r2);
        break;
      }
      mu *= 4.0;
    }
    // leave gz/use consistent with (a, b) for the next Jacobian
    cur = evaluate(g, a, b, xs, ys, x_lo, x_hi, max_excluded, true, gz, use);
    if (!moved) return;
  }
}

std::vector<std::size_t> strided(std::size_t n, std::size_t limit) {
  std::vector<std::size_t> idx;
  if (limit == 0 || n <= limit) {
    idx.resize(n);
    for (std::size_t k = 0; k < n; ++k) idx[k] = k;
    return idx;
  }
  idx.reserve(limit);
  for (std::size_t k = 0; k < limit; ++k) idx.push_back(k * n / limit);
  return idx;
}

}  // namespace

AffineFit fit_affine(const Basis& g, std::span<const double> xs, std::span<const double> ys,
                     const FitOptions& options) {
  const std::size_t n = xs.size();
  if (ys.size() != n) {
    throw InvalidArgument(fmt::format("fit_affine: {} inputs but {} outputs", n, ys.size()));
  }
  if (n < 10) throw InvalidArgument(fmt::format("fit_affine needs at least 10 samples, got {}", n));

  AffineFit fit;
  fit.basis = &g;
  const auto [ylo, yhi] = std::minmax_element(ys.begin(), ys.end());
  double ymean = 0.0;
  for (double y : ys) ymean += y;
  ymean /= static_cast<double>(n);
  if (!(*yhi - *ylo > 1e-14 * std::max(1.0, std::abs(ymean)))) {
    fit.basis = default_library().find("constant");
    fit.c = 0.0;
    fit.d = ymean;
    fit.r2 = std::numeric_limits<double>::quiet_NaN();
    fit.degenerate = true;
    return fit;
  }

  const auto [xlo_it, xhi_it] = std::minmax_element(xs.begin(), xs.end());
  const double x_lo = *xlo_it;
  const double x_hi = *xhi_it;
  const double mid = 0.5 * (x_lo + x_hi);
  const double half = x_hi > x_lo ? 0.5 * (x_hi - x_lo) : 1.0;

  std::vector<double> sx, sy;
  for (std::size_t k : strided(n, options.search_samples)) {
    sx.push_back(xs[k]);
    sy.push_back(ys[k]);
  }
  std::vector<double> gz;
  std::vector<char> use;

  // z = alpha * (u - x0) with u = (x - mid) / half
  auto to_ab = [&](double sign, double log_mag, double x0) {
    const double alpha = sign * std::pow(10.0, log_mag);
    return std::pair{alpha / half, -alpha * (mid / half + x0)};
  };
  auto score = [&](double sign, double log_mag, double x0) {
    const auto [a, b] = to_ab(sign, log_mag, x0);
    return evaluate(g, a, b, sx, sy, x_lo, x_hi, options.max_excluded_fraction, false, gz, use).r2;
  };

  double a = 1.0;
  double b = 0.0;
  const bool searchable = g.id != "constant" && g.id != "identity";
  if (searchable) {
    struct Point {
      double r2, sign, log_mag, x0;
    };
    std::vector<Point> coarse;
    constexpr int kGrid = 41;
    for (double sign : {1.0, -1.0}) {
      for (int p = 0; p < kGrid; ++p) {
        const double log_mag = -2.0 + 4.0 * p / (kGrid - 1);
        for (int q = 0; q < kGrid; ++q) {
          const double x0 = -5.0 + 10.0 * q / (kGrid - 1);
          coarse.push_back({score(sign, log_mag, x0), sign, log_mag, x0});
        }
      }
    }
    std::stable_sort(coarse.begin(), coarse.end(),
                     [](const Point& l, const Point& r) { return better(l.r2, r.r2); });

    Point best{kNegInf, 1.0, 0.0, 0.0};
    const std::size_t starts = std::min<std::size_t>(3, coarse.size());
    for (std::size_t s = 0; s < starts; ++s) {
      Point cur = coarse[s];
      if (cur.r2 == kNegInf) break;
      double step_m = 0.1;
      double step_x = 0.25;
      for (int pass = 0; pass <= 5; ++pass) {
        for (int move = 0; move < 50; ++move) {
          Point cand = cur;
          for (int dm = -1; dm <= 1; ++dm) {
            for (int dx = -1; dx <= 1; ++dx) {
              if (dm == 0 && dx == 0) continue;
              const double lm = std::clamp(cur.log_mag + dm * step_m, -4.0, 4.0);
              const double x0 = cur.x0 + dx * step_x;
              const double r2 = score(cur.sign, lm, x0);
              if (better(r2, cand.r2)) cand = {r2, cur.sign, lm, x0};
            }
          }
          if (!better(cand.r2, cur.r2)) break;
          cur = cand;
        }
        step_m *= 0.5;
        step_x *= 0.5;
      }
      if (better(cur.r2, best.r2)) best = cur;
    }
    if (best.r2 == kNegInf) {
      fit.r2 = kNegInf;
      fit.coverage_warning = true;
      return fit;
    }
    std::tie(a, b) = to_ab(best.sign, best.log_mag, best.x0);
    polish(g, xs, ys, x_lo, x_hi, options.max_excluded_fraction, a, b, gz, use);
  }

  const Trial t = evaluate(g, a, b, xs, ys, x_lo, x_hi, options.max_excluded_fraction, true, gz, use);
  fit.a = a;
  fit.b = b;
  fit.c = t.c;
  fit.d = t.d;
  fit.r2 = t.r2;
  fit.excluded = t.excluded;
  fit.coverage_warning =
      t.r2 == kNegInf ||
      static_cast<double>(t.excluded) > 0.05 * static_cast<double>(n);
  return fit;
}

EdgeRef parse_edge_ref(std::string_view text) {
  EdgeRef ref;
  std::size_t* fields[] = {&ref.layer, &ref.out, &ref.in};
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int k = 0; k < 3; ++k) {
    const auto [next, ec] = std::from_chars(p, end, *fields[k]);
    if (ec != std::errc() || (k < 2 && (next == end || *next != '/')) || (k == 2 && next != end)) {
      throw InvalidArgument(fmt::format("edge reference '{}' is not of the form l/j/i", text));
    }
    p = next + 1;
  }
  return ref;
}

std::pair<std::optional<EdgeActivation>, SnapEntry> snap_samples(
    std::span<const double> xs, std::span<const double> ys, const SnapOptions& options,
    std::optional<std::string_view> override_basis) {
  const BasisLibrary& lib = *options.library;
  std::vector<double> sx, sy;
  for (std::size_t k : strided(xs.size(), options.max_samples)) {
    sx.push_back(xs[k]);
    sy.push_back(ys[k]);
  }

  SnapEntry entry;
  entry.mode = override_basis ? SnapMode::kOverride : SnapMode::kAuto;
  auto make_edge = [](const AffineFit& f) {
    return EdgeActivation::symbolic(*f.basis, f.a, f.b, f.c, f.d);
  };

  if (override_basis) {
    const Basis& g = lib.get(*override_basis);
    entry.chosen = fit_affine(g, sx, sy, options.fit);
    entry.candidates = {entry.chosen};
    entry.snapped = entry.chosen.degenerate || entry.chosen.r2 != kNegInf;
    if (!entry.snapped) return {std::nullopt, entry};
    return {make_edge(entry.chosen), entry};
  }

  for (const Basis& g : lib.entries()) {
    AffineFit f = fit_affine(g, sx, sy, options.fit);
    if (f.degenerate) {
      entry.chosen = f;
      entry.candidates = {f};
      entry.snapped = true;
      return {make_edge(f), entry};
    }
    entry.candidates.push_back(f);
  }
  std::stable_sort(entry.candidates.begin(), entry.candidates.end(),
                   [](const AffineFit& l, const AffineFit& r) { return better(l.r2, r.r2); });
  const double best_gap = 1.0 - entry.candidates.front().r2;
  const double limit = best_gap * (1.0 + options.tie_tolerance) + 1e-15;
  const AffineFit* chosen = &entry.candidates.front();
  for (const AffineFit& f : entry.candidates) {
    if (1.0 - f.r2 <= limit && lib.rank(*f.basis) < lib.rank(*chosen->basis)) chosen = &f;
  }
  entry.chosen = *chosen;
  entry.snapped = entry.chosen.r2 >= options.r2_floor;
  if (!entry.snapped) return {std::nullopt, entry};
  return {make_edge(entry.chosen), entry};
}

std::pair<EdgeActivation, SnapEntry> snap_edge(const EdgeActivation& edge,
                                               std::span<const double> inputs,
                                               const SnapOptions& options,
                                               std::optional<std::string_view> override_basis) {
  if (edge.form() != EdgeForm::kSpline) {
    throw InvalidArgument(fmt::format("only spline edges can be snapped, got a {} edge",
                                      to_string(edge.form())));
  }
  std::vector<double> ys(inputs.size());
  for (std::size_t k = 0; k < inputs.size(); ++k) ys[k] = edge.eval(inputs[k]);
  auto [snapped, entry] = snap_samples(inputs, ys, options, override_basis);
  return {snapped ? *snapped : edge, entry};
}

bool SnapReport::all_snapped() const {
  return std::all_of(entries.begin(), entries.end(), [](const SnapEntry& e) { return e.snapped; });
}

namespace {

nlohmann::json fit_json(const AffineFit& f) {
  nlohmann::json j{{"basis", f.basis ? std::string(f.basis->id) : std::string()},
                   {"a", f.a},
                   {"b", f.b},
                   {"c", f.c},
                   {"d", f.d}};
  // non-finite scores have no JSON number form
  j["r2"] = std::isfinite(f.r2) ? nlohmann::json(f.r2) : nlohmann::json(nullptr);
  if (f.excluded > 0) j["excluded"] = f.excluded;
  if (f.coverage_warning) j["coverage_warning"] = true;
  return j;
}

}  // namespace

nlohmann::json SnapReport::to_json() const {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : entries) {
    std::string status = e.snapped ? "snapped" : "unsnapped";
    if (e.chosen.degenerate) status = "degenerate";
    nlohmann::json runners = nlohmann::json::array();
    for (const auto& c : e.candidates) {
      if (c.basis != e.chosen.basis) runners.push_back(fit_json(c));
    }
    edges.push_back({{"layer", e.edge.layer},
                     {"out", e.edge.out},
                     {"in", e.edge.in},
                     {"status", status},
                     {"mode", e.mode == SnapMode::kAuto ? "auto" : "user-override"},
                     {"chosen", fit_json(e.chosen)},
                     {"runners_up", runners}});
  }
  return {{"r2_floor", r2_floor},
          {"basis_library_version", BasisLibrary::kVersion},
          {"all_snapped", all_snapped()},
          {"edges", edges}};
}

SnapReport snap_network(KanNetwork& net, std::span<const double> raw_inputs, std::size_t rows,
                        const SnapOptions& options) {
  net.check();
  const std::size_t n_in = net.n_inputs();
  if (raw_inputs.size() != rows * n_in) {
    throw ShapeError(fmt::format("snap: expected {} input values, got {}", rows * n_in,
                                 raw_inputs.size()));
  }
  if (rows == 0) throw InvalidArgument("snap: empty batch");
  auto& layers = net.layers();
  for (const auto& [ref, basis] : options.overrides) {
    if (ref.layer >= layers.size() || ref.out >= layers[ref.layer].n_out() ||
        ref.in >= layers[ref.layer].n_in()) {
      throw InvalidArgument(fmt::format("override for {}/{}/{} names no edge of a network shaped {}",
                                        ref.layer, ref.out, ref.in,
                                        fmt::join(net.shape(), ",")));
    }
    options.library->get(basis);
  }

  const auto idx = strided(rows, options.max_samples);
  const std::size_t m = idx.size();
  // column-major node values so each edge sees a contiguous sample vector
  std::vector<std::vector<double>> nodes(n_in, std::vector<double>(m));
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t i = 0; i < n_in; ++i) {
      nodes[i][r] = net.input_normalizer.apply(i, raw_inputs[idx[r] * n_in + i]);
    }
  }

  SnapReport report;
  report.r2_floor = options.r2_floor;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& layer = layers[l];
    for (std::size_t j = 0; j < layer.n_out(); ++j) {
      for (std::size_t i = 0; i < layer.n_in(); ++i) {
        const EdgeRef ref{l, j, i};
        const auto ov = options.overrides.find(ref);
        if (layer.edge(j, i).form() != EdgeForm::kSpline) {
          if (ov != options.overrides.end()) {
            throw InvalidArgument(fmt::format("override for {}/{}/{}: edge is {}, not spline", l,
                                              j, i, to_string(layer.edge(j, i).form())));
          }
          continue;
        }
        std::optional<std::string_view> basis;
        if (ov != options.overrides.end()) basis = ov->second;
        auto [edge, entry] = snap_edge(layer.edge(j, i), nodes[i], options, basis);
        entry.edge = ref;
        layer.edge(j, i) = std::move(edge);
        report.entries.push_back(std::move(entry));
      }
    }
    std::vector<std::vector<double>> next(layer.n_out(), std::vector<double>(m, 0.0));
    for (std::size_t j = 0; j < layer.n_out(); ++j) {
      for (std::size_t i = 0; i < layer.n_in(); ++i) {
        const auto& e = layer.edge(j, i);
        if (e.form() == EdgeForm::kZero) continue;
        for (std::size_t r = 0; r < m; ++r) next[j][r] += e.eval(nodes[i][r]);
      }
    }
    nodes = std::move(next);
  }
  return report;
}

namespace {

std::vector<std::string> spline_edges(const KanNetwork& net) {
  std::vector<std::string> out;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& layer = net.layers()[l];
    for (std::size_t j = 0; j < layer.n_out(); ++j) {
      for (std::size_t i = 0; i < layer.n_in(); ++i) {
        if (layer.edge(j, i).form() == EdgeForm::kSpline) {
          out.push_back(fmt::format("layer {} edge ({},{})", l, j, i));
        }
      }
    }
  }
  return out;
}

}  // namespace

void require_symbolic(const KanNetwork& net, std::string_view what) {
  const auto bad = spline_edges(net);
  if (!bad.empty()) {
    throw UnsnappedError(
        fmt::format("{} needs a fully symbolic network; spline edges remain at {}", what,
                    fmt::join(bad, ", ")));
  }
}

RefineReport refine(KanNetwork& net, const Batch& batch, const RefineConfig& config) {
  require_symbolic(net, "refine");
  if (!(config.learning_rate > 0.0)) throw InvalidArgument("refine learning rate must be positive");
  const LossWeights pred_only{0.0, 1.0, 1.0};
  auto params = net.parameters();
  std::vector<double> best_params = net.parameter_values();

  RefineReport report;
  report.initial_loss = evaluate_loss(net, batch, pred_only).pred;
  double best = report.initial_loss;
  if (params.empty()) {
    report.final_loss = best;
    return report;
  }

  Adam adam(config.learning_rate);
  double lr = config.learning_rate;
  std::vector<double> history;
  for (std::size_t step = 0; step < config.max_steps; ++step) {
    GradientRecord rec;
    bool failed = false;
    try {
      rec = backward(net, batch, pred_only);
      failed = !std::isfinite(rec.loss.pred);
    } catch (const DomainError&) {
      failed = true;
    } catch (const NumericalError&) {
      failed = true;
    }
    report.steps = step + 1;
    if (failed) {
      for (std::size_t k = 0; k < params.size(); ++k) *params[k] = best_params[k];
      lr *= 0.5;
      ++report.learning_rate_halvings;
      adam = Adam(lr);
      if (lr < 1e-12 * config.learning_rate) break;
      continue;
    }
    if (rec.loss.pred < best) {
      best = rec.loss.pred;
      for (std::size_t k = 0; k < params.size(); ++k) best_params[k] = *params[k];
    }
    history.push_back(best);
    if (history.size() > config.window &&
        history[history.size() - 1 - config.window] - best < config.tol) {
      break;
    }
    adam.step(params, rec.gradient);
  }
  for (std::size_t k = 0; k < params.size(); ++k) *params[k] = best_params[k];
  report.final_loss = best;
  return report;
}

}  // namespace kan
