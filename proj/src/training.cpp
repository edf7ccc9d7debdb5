#include "kan/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/core.h>

#include "kan/optimizer.hpp"
#include "kan/regularization.hpp"

namespace kan {

void TrainConfig::validate() const {
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw InvalidArgument(fmt::format("{} must be a finite non-negative number, got {}", name, v));
    }
  };
  nonneg(lambda, "lambda");
  nonneg(mu1, "mu1");
  nonneg(mu2, "mu2");
  nonneg(prune_threshold, "prune_threshold");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument(fmt::format("learning_rate must be positive, got {}", learning_rate));
  }
  if (!std::isfinite(final_learning_rate)) {
    throw InvalidArgument("final_learning_rate must be finite");
  }
  if (max_steps == 0) throw InvalidArgument("max_steps must be positive");
  if (!(convergence_tol > 0.0)) {
    throw InvalidArgument(fmt::format("convergence_tol must be positive, got {}", convergence_tol));
  }
  if (convergence_window == 0) throw InvalidArgument("convergence_window must be positive");
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "step,total,pred,l1,entropy\n";
  for (const auto& r : trace) {
    out << fmt::format("{},{},{},{},{}\n", r.step, r.total, r.pred, r.l1, r.entropy);
  }
}

TrainingDiverged::TrainingDiverged(std::size_t step, KanNetwork last_finite,
                                   const std::string& detail)
    : NumericalError(fmt::format("training diverged at step {}: {}", step, detail)),
      step_(step),
      last_finite_(std::move(last_finite)) {}

LossComponents total_loss(const KanNetwork& net, const Batch& batch, const TrainConfig& config) {
  return evaluate_loss(net, batch, config.weights());
}

TrainReport train(KanNetwork& net, const Batch& batch, const TrainConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n_in = net.n_inputs();
  const std::size_t n_out = net.n_outputs();
  if (batch.rows == 0) throw InvalidArgument("training batch is empty");

  Adam adam(config.learning_rate);
  auto params = net.parameters();
  const LossWeights weights = config.weights();
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

  TrainReport report;
  std::vector<double> best_history;
  double best = INFINITY;
  std::vector<double> snapshot = net.parameter_values();

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

    GradientRecord rec;
    try {
      rec = backward(net, current, weights);
    } catch (const NumericalError& e) {
      for (std::size_t k = 0; k < params.size(); ++k) *params[k] = snapshot[k];
      throw TrainingDiverged(step, net, e.what());
    } catch (const DomainError& e) {
      for (std::size_t k = 0; k < params.size(); ++k) *params[k] = snapshot[k];
      throw TrainingDiverged(step, net, e.what());
    }
    report.trace.push_back({step, rec.loss.total, rec.loss.pred, rec.loss.l1, rec.loss.entropy});
    best = std::min(best, rec.loss.total);
    best_history.push_back(best);
    report.steps = step + 1;

    const std::size_t w = config.convergence_window;
    if (best_history.size() > w &&
        best_history[best_history.size() - 1 - w] - best < config.convergence_tol) {
      report.converged = true;
      break;
    }

    for (std::size_t k = 0; k < params.size(); ++k) snapshot[k] = *params[k];
    adam.set_learning_rate(config.learning_rate * std::exp(decay * static_cast<double>(step)));
    adam.step(params, rec.gradient);
  }

  report.snapshot_id = parameter_digest(net);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::pair<KanNetwork, PruneReport> prune(const KanNetwork& net, std::span<const double> raw_inputs,
                                         std::size_t rows, double threshold) {
  if (!(threshold >= 0.0)) throw InvalidArgument("prune threshold must be non-negative");
  const auto shape = net.shape();
  const std::size_t L = net.layers().size();
  const auto traces = trace_network(net, raw_inputs, rows);

  PruneReport report;
  report.original_shape = shape;
  report.importance.resize(shape.size());
  report.kept.resize(shape.size());
  report.kept.front().assign(shape.front(), true);
  report.kept.back().assign(shape.back(), true);

  for (std::size_t l = 1; l < L; ++l) {
    const auto& in_layer = net.layers()[l - 1];  // edges into node layer l
    const auto& out_layer = net.layers()[l];     // edges out of node layer l
    const auto& in_mag = traces[l - 1].edge_l1;
    const auto& out_mag = traces[l].edge_l1;
    std::vector<double> imp(shape[l]);
    for (std::size_t node = 0; node < shape[l]; ++node) {
      double in_max = 0.0;
      for (std::size_t i = 0; i < in_layer.n_in(); ++i) {
        in_max = std::max(in_max, in_mag[node * in_layer.n_in() + i]);
      }
      double out_max = 0.0;
      for (std::size_t j = 0; j < out_layer.n_out(); ++j) {
        out_max = std::max(out_max, out_mag[j * out_layer.n_in() + node]);
      }
      imp[node] = std::min(in_max, out_max);
    }
    std::vector<bool> keep(shape[l]);
    bool any = false;
    for (std::size_t node = 0; node < shape[l]; ++node) {
      keep[node] = !(imp[node] < threshold);
      any = any || keep[node];
    }
    if (!any) {
      const auto best = static_cast<std::size_t>(
          std::distance(imp.begin(), std::max_element(imp.begin(), imp.end())));
      keep[best] = true;
      report.forced_retention = true;
    }
    report.importance[l] = std::move(imp);
    report.kept[l] = std::move(keep);
  }

  std::vector<KanLayer> layers;
  for (std::size_t l = 0; l < L; ++l) {
    const auto& src = net.layers()[l];
    std::vector<std::size_t> ins, outs;
    for (std::size_t i = 0; i < src.n_in(); ++i) {
      if (report.kept[l][i]) ins.push_back(i);
    }
    for (std::size_t j = 0; j < src.n_out(); ++j) {
      if (report.kept[l + 1][j]) outs.push_back(j);
    }
    std::vector<EdgeActivation> edges;
    for (std::size_t j : outs) {
      for (std::size_t i : ins) edges.push_back(src.edge(j, i));
    }
    layers.emplace_back(ins.size(), outs.size(), std::move(edges));
  }
  KanNetwork pruned(std::move(layers));
  pruned.input_normalizer = net.input_normalizer;
  pruned.output_denormalizer = net.output_denormalizer;
  pruned.input_names = net.input_names;
  pruned.output_names = net.output_names;
  report.resulting_shape = pruned.shape();
  return {std::move(pruned), std::move(report)};
}

}  // namespace kan
