#include "kan/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>
#include <fmt/core.h>

#include "kan/optimizer.hpp"

namespace kan {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.empty()) throw InvalidArgument(fmt::format("{}: empty input", what));
  if (a.size() != b.size()) {
    throw InvalidArgument(fmt::format("{}: length mismatch ({} vs {})", what, a.size(), b.size()));
  }
}

}  // namespace

double rmse(std::span<const double> y, std::span<const double> predicted) {
  check_pair(y, predicted, "rmse");
  double s = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) s += (predicted[k] - y[k]) * (predicted[k] - y[k]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

double energy_error(std::span<const double> y, std::span<const double> predicted) {
  check_pair(y, predicted, "energy_error");
  double s = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) s += std::abs(predicted[k] - y[k]);
  return s / static_cast<double>(y.size());
}

MetricReport measure(std::string tag, std::span<const double> y,
                     std::span<const double> predicted) {
  return {std::move(tag), rmse(y, predicted), energy_error(y, predicted), y.size()};
}

void write_metrics_csv(std::ostream& out, std::span<const ModelScores> scores) {
  out << "model,tag,rmse,ee,samples\n";
  for (const auto& m : scores) {
    for (const auto& c : m.columns) {
      out << fmt::format("{},{},{},{},{}\n", m.model, c.tag, c.rmse, c.ee, c.samples);
    }
  }
}

nlohmann::json metrics_json(std::span<const ModelScores> scores) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& m : scores) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : m.columns) {
      cols.push_back({{"tag", c.tag}, {"rmse", c.rmse}, {"ee", c.ee}, {"samples", c.samples}});
    }
    doc.push_back({{"model", m.model}, {"metrics", cols}});
  }
  return doc;
}

std::string format_comparison_table(std::span<const ModelScores> scores) {
  std::vector<std::string> titles;
  for (const auto& m : scores) {
    for (const auto& c : m.columns) {
      if (std::find(titles.begin(), titles.end(), c.tag) == titles.end()) titles.push_back(c.tag);
    }
  }
  std::size_t name_w = 0;
  for (const auto& m : scores) name_w = std::max(name_w, m.model.size());
  std::vector<std::size_t> widths;
  for (const auto& t : titles) widths.push_back(std::max<std::size_t>(t.size(), 8));

  auto cell = [](const ModelScores& m, const std::string& tag, bool use_rmse) -> std::string {
    for (const auto& c : m.columns) {
      if (c.tag == tag) return fmt::format("{:.4f}", use_rmse ? c.rmse : c.ee);
    }
    return "-";
  };

  std::string out = fmt::format("{:<{}}  {:<6}", "", name_w, "Metric");
  for (std::size_t t = 0; t < titles.size(); ++t) out += fmt::format("  {:<{}}", titles[t], widths[t]);
  out += '\n';
  for (const auto& m : scores) {
    for (int row = 0; row < 2; ++row) {
      out += fmt::format("{:<{}}  {:<6}", row == 0 ? m.model : "", name_w, row == 0 ? "RMSE" : "EE");
      for (std::size_t t = 0; t < titles.size(); ++t) {
        out += fmt::format("  {:<{}}", cell(m, titles[t], row == 0), widths[t]);
      }
      while (!out.empty() && out.back() == ' ') out.pop_back();
      out += '\n';
    }
  }
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("pearson: length mismatch");
  if (x.size() < 2) throw UndefinedCorrelation("pearson: fewer than 2 samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
    syy += (y[k] - my) * (y[k] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelation("pearson: constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("spearman: length mismatch");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  try {
    return pearson(rx, ry);
  } catch (const UndefinedCorrelation&) {
    throw UndefinedCorrelation("spearman: constant input");
  }
}

namespace {

using Count = long long;

/// Pairs tied within runs of equal values of a sorted sequence.
template <class Eq>
Count tied_pairs(std::size_t n, Eq equal) {
  Count total = 0, run = 1;
  for (std::size_t k = 1; k <= n; ++k) {
    if (k < n && equal(k - 1, k)) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

/// Sorts v ascending and returns the number of inversions (strict).
Count merge_count(std::vector<double>& v, std::vector<double>& buf, std::size_t lo,
                  std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  Count swaps = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<Count>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace

double kendall(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("kendall: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) throw UndefinedCorrelation("kendall: fewer than 2 samples");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  const Count total = static_cast<Count>(n) * static_cast<Count>(n - 1) / 2;
  const Count x_ties = tied_pairs(n, [&](std::size_t a, std::size_t b) { return x[idx[a]] == x[idx[b]]; });
  const Count joint_ties = tied_pairs(n, [&](std::size_t a, std::size_t b) {
    return x[idx[a]] == x[idx[b]] && y[idx[a]] == y[idx[b]];
  });
  std::vector<double> ys(n), buf(n);
  for (std::size_t k = 0; k < n; ++k) ys[k] = y[idx[k]];
  const Count discordant = merge_count(ys, buf, 0, n);
  const Count y_ties = tied_pairs(n, [&](std::size_t a, std::size_t b) { return ys[a] == ys[b]; });

  const double nx = static_cast<double>(total - x_ties);
  const double ny = static_cast<double>(total - y_ties);
  if (nx == 0.0 || ny == 0.0) throw UndefinedCorrelation("kendall: constant input");
  const double s = static_cast<double>(total - x_ties - y_ties + joint_ties - 2 * discordant);
  return std::clamp(s / std::sqrt(nx * ny), -1.0, 1.0);
}

std::vector<CorrelationRow> correlate_columns(std::span<const double> features, std::size_t rows,
                                             std::span<const std::string> names,
                                             std::span<const double> y) {
  const std::size_t d = names.size();
  if (features.size() != rows * d || y.size() != rows) {
    throw ShapeError("correlate_columns: matrix dimensions do not match");
  }
  std::vector<CorrelationRow> out;
  std::vector<double> col(rows);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t r = 0; r < rows; ++r) col[r] = features[r * d + c];
    CorrelationRow row{names[c], {}, {}, {}};
    auto guarded = [&](auto fn) -> std::optional<double> {
      try {
        return fn(col, y);
      } catch (const UndefinedCorrelation&) {
        return std::nullopt;
      }
    };
    row.pearson = guarded([](auto a, auto b) { return pearson(a, b); });
    row.spearman = guarded([](auto a, auto b) { return spearman(a, b); });
    row.kendall = guarded([](auto a, auto b) { return kendall(a, b); });
    out.push_back(std::move(row));
  }
  return out;
}

void write_correlation_csv(std::ostream& out, std::span<const CorrelationRow> rows) {
  auto cell = [](const std::optional<double>& v) {
    return v ? fmt::format("{}", *v) : std::string("undefined");
  };
  out << "variable,pearson,spearman,kendall\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{}\n", r.variable, cell(r.pearson), cell(r.spearman), cell(r.kendall));
  }
}

nlohmann::json SensitivityReport::to_json() const {
  nlohmann::json vars = nlohmann::json::array();
  for (std::size_t i = 0; i < variables.size(); ++i) {
    vars.push_back({{"variable", variables[i]}, {"mu_star", mu_star[i]}});
  }
  return {{"trajectories", trajectories}, {"delta", delta}, {"variables", vars}};
}

void write_sensitivity_csv(std::ostream& out, const SensitivityReport& report) {
  out << "variable,mu_star\n";
  for (std::size_t i = 0; i < report.variables.size(); ++i) {
    out << fmt::format("{},{}\n", report.variables[i], report.mu_star[i]);
  }
}

SensitivityReport morris_sensitivity(const ScalarModel& model, std::span<const double> lo,
                                     std::span<const double> hi,
                                     std::span<const std::string> names,
                                     const MorrisConfig& config) {
  const std::size_t d = lo.size();
  if (d == 0 || hi.size() != d || names.size() != d) {
    throw InvalidArgument("morris: box bounds and names must have equal nonzero length");
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (!std::isfinite(lo[i]) || !std::isfinite(hi[i]) || hi[i] < lo[i]) {
      throw InvalidArgument(fmt::format("morris: invalid bounds for '{}'", names[i]));
    }
  }
  if (config.trajectories < 2) throw InvalidArgument("morris: need at least 2 trajectories");
  if (config.levels < 2) throw InvalidArgument("morris: need at least 2 levels");
  const double p = static_cast<double>(config.levels);
  const double delta = config.delta > 0.0 ? config.delta : p / (2.0 * (p - 1.0));
  if (delta > 1.0) throw InvalidArgument("morris: delta exceeds the unit range");

  // base levels from which at least one step of size delta stays in [0, 1]
  std::vector<double> starts;
  for (std::size_t k = 0; k < config.levels; ++k) {
    const double u = static_cast<double>(k) / (p - 1.0);
    if (u + delta <= 1.0 + 1e-12 || u - delta >= -1e-12) starts.push_back(u);
  }
  if (starts.empty()) throw InvalidArgument("morris: no grid level admits the step");

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
  std::vector<double> sum(d, 0.0);
  std::vector<double> u(d), x(d);
  std::vector<std::size_t> order(d);

  auto to_box = [&](std::size_t i, double v) { return lo[i] + v * (hi[i] - lo[i]); };
  for (std::size_t t = 0; t < config.trajectories; ++t) {
    for (std::size_t i = 0; i < d; ++i) u[i] = starts[pick(rng)];
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    try {
      for (std::size_t i = 0; i < d; ++i) x[i] = to_box(i, u[i]);
      double f0 = model(x);
      for (const std::size_t i : order) {
        const double step = u[i] + delta <= 1.0 + 1e-12 ? delta : -delta;
        u[i] += step;
        x[i] = to_box(i, u[i]);
        const double f1 = model(x);
        const double width = hi[i] - lo[i];
        if (width > 0.0) sum[i] += std::abs((f1 - f0) / (step * width));
        f0 = f1;
      }
    } catch (const std::exception& e) {
      throw NumericalError(fmt::format("morris trajectory {}: {}", t, e.what()));
    }
  }
  SensitivityReport report;
  report.variables.assign(names.begin(), names.end());
  report.trajectories = config.trajectories;
  report.delta = delta;
  for (const double s : sum) report.mu_star.push_back(s / static_cast<double>(config.trajectories));
  return report;
}

std::vector<double> add_noise(std::span<const double> values, double level, std::uint64_t seed) {
  if (!(level >= 0.0 && level < 1.0)) throw InvalidArgument("noise level must be in [0, 1)");
  std::vector<double> out(values.begin(), values.end());
  if (level == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-level, level);
  for (double& v : out) v *= 1.0 + u(rng);
  return out;
}

// ---------------------------------------------------------------------------
// MLP baseline

namespace {

using Matrix = Eigen::MatrixXd;
using RowMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

double silu_scalar(double z) { return z / (1.0 + std::exp(-z)); }
double silu_slope(double z) {
  const double s = 1.0 / (1.0 + std::exp(-z));
  return s * (1.0 + z * (1.0 - s));
}

/// Normalized inputs, one column per row of the batch.
Matrix normalized_inputs(const Mlp& mlp, std::span<const double> inputs, std::size_t rows) {
  const std::size_t n_in = mlp.shape.front();
  Matrix a(n_in, rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < n_in; ++i) {
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) =
          mlp.input_normalizer.apply(i, inputs[r * n_in + i]);
    }
  }
  return a;
}

struct ForwardPass {
  std::vector<Matrix> pre;   // pre-activations per layer
  std::vector<Matrix> post;  // post[0] = input, post[l+1] = activation of layer l
};

ForwardPass run(const Mlp& mlp, Matrix input) {
  ForwardPass fp;
  fp.post.push_back(std::move(input));
  const std::size_t L = mlp.weights.size();
  for (std::size_t l = 0; l < L; ++l) {
    const auto rows = static_cast<Eigen::Index>(mlp.shape[l + 1]);
    const auto cols = static_cast<Eigen::Index>(mlp.shape[l]);
    RowMap W(mlp.weights[l].data(), rows, cols);
    Eigen::Map<const Eigen::VectorXd> b(mlp.biases[l].data(), rows);
    Matrix z = W * fp.post.back();
    z.colwise() += b;
    Matrix a = l + 1 < L ? Matrix(z.unaryExpr(&silu_scalar)) : z;
    fp.pre.push_back(std::move(z));
    fp.post.push_back(std::move(a));
  }
  return fp;
}

void check_shape(std::span<const std::size_t> shape) {
  if (shape.size() < 2) throw InvalidArgument("MLP shape needs at least 2 entries");
  for (const auto w : shape) {
    if (w == 0) throw InvalidArgument("MLP layer widths must be positive");
  }
}

}  // namespace

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

std::vector<double*> Mlp::parameters() {
  std::vector<double*> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (double& w : weights[l]) out.push_back(&w);
    for (double& b : biases[l]) out.push_back(&b);
  }
  return out;
}

std::vector<double> Mlp::predict(std::span<const double> inputs, std::size_t rows) const {
  if (inputs.size() != rows * shape.front()) throw ShapeError("MLP input dimensions do not match");
  const auto fp = run(*this, normalized_inputs(*this, inputs, rows));
  const Matrix& y = fp.post.back();
  const std::size_t n_out = shape.back();
  std::vector<double> out(rows * n_out);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n_out; ++j) {
      out[r * n_out + j] = output_denormalizer.apply(
          j, y(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(r)));
    }
  }
  return out;
}

std::vector<double> Mlp::forward(std::span<const double> x) const { return predict(x, 1); }

Mlp init_mlp(std::span<const std::size_t> shape, std::uint64_t seed) {
  check_shape(shape);
  Mlp mlp;
  mlp.shape.assign(shape.begin(), shape.end());
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < shape.size(); ++l) {
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(shape[l])));
    std::vector<double> w(shape[l + 1] * shape[l]);
    for (double& v : w) v = normal(rng);
    mlp.weights.push_back(std::move(w));
    mlp.biases.emplace_back(shape[l + 1], 0.0);
  }
  mlp.input_normalizer = AffineMap::identity(shape.front());
  mlp.output_denormalizer = AffineMap::identity(shape.back());
  return mlp;
}

std::pair<double, std::vector<double>> mlp_loss_gradient(const Mlp& mlp, const Batch& batch) {
  const std::size_t n_out = mlp.shape.back();
  if (batch.rows == 0) throw InvalidArgument("MLP batch is empty");
  if (batch.inputs.size() != batch.rows * mlp.shape.front() ||
      batch.targets.size() != batch.rows * n_out) {
    throw ShapeError("MLP batch dimensions do not match");
  }
  const auto fp = run(mlp, normalized_inputs(mlp, batch.inputs, batch.rows));
  const auto rows = static_cast<Eigen::Index>(batch.rows);
  Matrix target(static_cast<Eigen::Index>(n_out), rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n_out; ++j) {
      target(static_cast<Eigen::Index>(j), r) =
          mlp.output_denormalizer.invert(j, batch.targets[static_cast<std::size_t>(r) * n_out + j]);
    }
  }
  const double count = static_cast<double>(batch.rows * n_out);
  Matrix diff = fp.post.back() - target;
  const double loss = diff.squaredNorm() / count;
  if (!std::isfinite(loss)) throw NumericalError("MLP loss is not finite");

  const std::size_t L = mlp.weights.size();
  std::vector<Matrix> grad_w(L);
  std::vector<Eigen::VectorXd> grad_b(L);
  Matrix delta = (2.0 / count) * diff;
  for (std::size_t l = L; l-- > 0;) {
    grad_w[l] = delta * fp.post[l].transpose();
    grad_b[l] = delta.rowwise().sum();
    if (l == 0) break;
    const auto r = static_cast<Eigen::Index>(mlp.shape[l + 1]);
    const auto c = static_cast<Eigen::Index>(mlp.shape[l]);
    RowMap W(mlp.weights[l].data(), r, c);
    Matrix back = W.transpose() * delta;
    delta = back.cwiseProduct(fp.pre[l - 1].unaryExpr(&silu_slope));
  }

  std::vector<double> grad;
  grad.reserve(mlp.parameter_count());
  for (std::size_t l = 0; l < L; ++l) {
    for (Eigen::Index i = 0; i < grad_w[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < grad_w[l].cols(); ++j) grad.push_back(grad_w[l](i, j));
    }
    for (Eigen::Index i = 0; i < grad_b[l].size(); ++i) grad.push_back(grad_b[l](i));
  }
  return {loss, std::move(grad)};
}

MlpReport mlp_train(Mlp& mlp, const Batch& batch, const TrainConfig& config) {
  config.validate();
  check_shape(mlp.shape);
  const std::size_t n_in = mlp.shape.front();
  const std::size_t n_out = mlp.shape.back();
  if (batch.rows == 0 || batch.inputs.size() != batch.rows * n_in ||
      batch.targets.size() != batch.rows * n_out) {
    throw ShapeError("MLP batch dimensions do not match");
  }
  // same normalization as the KAN: inputs and outputs mapped onto [-1, 1]
  KanNetwork probe(std::vector<KanLayer>{KanLayer(n_in, n_out)});
  fit_normalizers(probe, batch.inputs, batch.targets, batch.rows);
  mlp.input_normalizer = probe.input_normalizer;
  mlp.output_denormalizer = probe.output_denormalizer;

  Adam adam(config.learning_rate);
  auto params = mlp.parameters();
  const bool minibatch = config.batch_size > 0 && config.batch_size < batch.rows;
  const double decay =
      config.final_learning_rate > 0.0 && config.max_steps > 1
          ? std::log(config.final_learning_rate / config.learning_rate) /
                static_cast<double>(config.max_steps - 1)
          : 0.0;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(batch.rows);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = batch.rows;
  std::vector<double> mb_in, mb_out;

  MlpReport report;
  std::vector<double> best_history;
  double best = INFINITY;
  for (std::size_t step = 0; step < config.max_steps; ++step) {
    Batch current = batch;
    if (minibatch) {
      if (cursor + config.batch_size > batch.rows) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      mb_in.resize(config.batch_size * n_in);
      mb_out.resize(config.batch_size * n_out);
      for (std::size_t r = 0; r < config.batch_size; ++r) {
        const std::size_t src = order[cursor + r];
        std::copy_n(batch.inputs.begin() + static_cast<std::ptrdiff_t>(src * n_in), n_in,
                    mb_in.begin() + static_cast<std::ptrdiff_t>(r * n_in));
        std::copy_n(batch.targets.begin() + static_cast<std::ptrdiff_t>(src * n_out), n_out,
                    mb_out.begin() + static_cast<std::ptrdiff_t>(r * n_out));
      }
      cursor += config.batch_size;
      current = Batch{mb_in, mb_out, config.batch_size};
    }
    auto [loss, grad] = mlp_loss_gradient(mlp, current);
    report.final_loss = loss;
    report.steps = step + 1;
    best = std::min(best, loss);
    best_history.push_back(best);
    const std::size_t w = config.convergence_window;
    if (best_history.size() > w &&
        best_history[best_history.size() - 1 - w] - best < config.convergence_tol) {
      report.converged = true;
      break;
    }
    adam.set_learning_rate(config.learning_rate * std::exp(decay * static_cast<double>(step)));
    adam.step(params, grad);
  }
  return report;
}

}  // namespace kan
