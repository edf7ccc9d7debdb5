#include "kan/unsupervised.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include <fmt/core.h>

#include "kan/errors.hpp"
#include "kan/regularization.hpp"

namespace kan {

ContrastiveSet build_contrastive(std::span<const double> x, std::size_t rows,
                                 std::vector<std::string> variables, std::uint64_t seed) {
  const std::size_t d = variables.size();
  if (rows < 2) throw InvalidArgument("contrastive set needs at least 2 rows");
  if (d < 2) throw InvalidArgument("contrastive set needs at least 2 variables");
  if (x.size() != rows * d) throw ShapeError("contrastive input dimensions do not match");

  ContrastiveSet set;
  set.variables = std::move(variables);
  set.positives = rows;
  set.seed = seed;
  set.features.resize(2 * rows * d);
  std::copy(x.begin(), x.end(), set.features.begin());
  set.labels.assign(rows, 1.0);
  set.labels.resize(2 * rows, 0.0);

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> perm(rows);
  for (std::size_t c = 0; c < d; ++c) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t r = 0; r < rows; ++r) {
      set.features[(rows + r) * d + c] = x[perm[r] * d + c];
    }
  }
  return set;
}

std::vector<std::string> ImportanceReport::kept() const {
  std::vector<std::string> out;
  for (const auto& e : ranking) {
    if (e.kept) out.push_back(e.variable);
  }
  return out;
}

nlohmann::json ImportanceReport::to_json() const {
  nlohmann::json vars = nlohmann::json::array();
  for (std::size_t k = 0; k < ranking.size(); ++k) {
    vars.push_back({{"rank", k + 1},
                    {"variable", ranking[k].variable},
                    {"magnitude", ranking[k].magnitude},
                    {"kept", ranking[k].kept}});
  }
  const auto kept_vars = kept();
  return {{"threshold", threshold},
          {"variables", vars},
          {"kept", kept_vars},
          {"structure", {kept_vars.size(), 1, 1}}};
}

void ImportanceReport::write_csv(std::ostream& out) const {
  out << "variable,magnitude\n";
  for (const auto& e : ranking) out << fmt::format("{},{}\n", e.variable, e.magnitude);
}

ImportanceReport importance(const KanNetwork& net, const ContrastiveSet& set, double threshold) {
  const std::size_t d = set.width();
  if (net.n_inputs() != d) throw ShapeError("network inputs do not match the contrastive set");
  const std::span<const double> positives(set.features.data(), set.positives * d);
  const auto traces = trace_network(net, positives, set.positives);
  const KanLayer& first = net.layers().front();
  const auto& l1 = traces.front().edge_l1;

  ImportanceReport report;
  report.threshold = threshold;
  for (std::size_t i = 0; i < d; ++i) {
    double m = 0.0;
    for (std::size_t j = 0; j < first.n_out(); ++j) m += l1[j * d + i];
    report.ranking.push_back({set.variables[i], m, m >= threshold});
  }
  std::stable_sort(report.ranking.begin(), report.ranking.end(),
                   [](const ImportanceEntry& a, const ImportanceEntry& b) {
                     return a.magnitude > b.magnitude;
                   });
  return report;
}

std::pair<KanNetwork, ImportanceReport> train_unsupervised(const ContrastiveSet& set,
                                                           const UnsupervisedConfig& config) {
  if (config.hidden == 0) throw InvalidArgument("hidden width must be positive");
  const std::size_t d = set.width();
  const std::vector<std::size_t> shape{d, config.hidden, 1};
  KanNetwork net = init_network(shape, config.grid, config.train.seed);
  net.input_names = set.variables;
  net.output_names = {"label"};

  // gaussian readout spanning the normalized label range [-1, 1]
  const Basis& gaussian = default_library().get("gaussian");
  const double h = static_cast<double>(config.hidden);
  for (auto& e : net.layers().back().edges()) {
    e = EdgeActivation::symbolic(gaussian, 1.0, 0.0, 2.0 / h, -1.0 / h);
  }
  fit_normalizers(net, set.features, set.labels, set.rows());
  train(net, Batch{set.features, set.labels, set.rows()}, config.train);
  ImportanceReport report = importance(net, set, config.threshold);
  return {std::move(net), std::move(report)};
}

}  // namespace kan
