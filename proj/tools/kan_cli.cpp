// kan: command-line front end for the KAN modeling pipeline.
//
//   kan simulate-dab --out run
//   kan train --out run --shape 1,3,1 --lambda 0.01
//   kan prune --out run && kan symbolify --out run && kan refine --out run
//   kan eval --out run --noise 0.1 --with-mlp
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.

#include <cstdio>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "kan/errors.hpp"
#include "kan/pipeline.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kDataError = 3;
constexpr int kNumericalError = 4;

/// "a,b" -> pair; used for --d-range and --train-range.
std::pair<double, double> parse_pair(const std::string& text, const char* flag) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw kan::ConfigError(fmt::format("{} expects lo,hi", flag));
  try {
    return {std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
  } catch (const std::exception&) {
    throw kan::ConfigError(fmt::format("{} expects two numbers, got '{}'", flag, text));
  }
}

std::vector<std::size_t> parse_list(const std::string& text, const char* flag) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw kan::ConfigError(fmt::format("{} expects comma separated sizes, got '{}'", flag, text));
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

/// Finds --config before the real parse so its values become the defaults
/// that command-line flags then override.
std::string config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string_view a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.rfind("--config=", 0) == 0) return std::string(a.substr(9));
  }
  return {};
}

void report(const kan::StageOutcome& o) {
  for (const auto& m : o.messages) fmt::print("{}\n", m);
  for (const auto& w : o.warnings) fmt::print(stderr, "warning: {}\n", w);
}

}  // namespace

int main(int argc, char** argv) {
  kan::PipelineConfig cfg;
  try {
    if (auto path = config_path(argc, argv); !path.empty()) cfg = kan::read_config_file(path);
  } catch (const kan::ConfigError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kConfigError;
  }

  CLI::App app{"Kolmogorov-Arnold network modeling pipeline"};
  app.require_subcommand(1);
  std::string config_file;
  app.add_option("--config", config_file, "JSON config; command-line flags take precedence");

  std::string d_range, train_range, shape, mlp_hidden;
  std::vector<std::string> overrides;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--out", cfg.out, "output directory")->capture_default_str();
    sub->add_option("--seed", cfg.seed, "seed for sampling, splitting and initialization")
        ->capture_default_str();
    sub->add_option("--threads", cfg.threads, "worker threads (0 = hardware)")->capture_default_str();
  };
  auto data = [&](CLI::App* sub) {
    sub->add_option("--data", cfg.data, "dataset CSV (default <out>/data.csv)");
    sub->add_option("--features", cfg.features, "feature columns (default: all but target)")
        ->delimiter(',');
    sub->add_option("--target", cfg.target, "target column (default: last column)");
    sub->add_option("--train-fraction", cfg.train_fraction)->capture_default_str();
  };
  auto model = [&](CLI::App* sub) {
    sub->add_option("--model", cfg.model, "input model (default <out>/model.json)");
  };

  std::vector<std::pair<CLI::App*, std::function<kan::StageOutcome(const kan::PipelineConfig&)>>> commands;

  auto* sim_dab = app.add_subcommand("simulate-dab", "write a DAB dataset from the closed-form oracle");
  common(sim_dab);
  sim_dab->add_option("--data", cfg.data, "output CSV (default <out>/data.csv)");
  sim_dab->add_option("--samples", cfg.samples)->capture_default_str();
  sim_dab->add_option("--d-range", d_range, "duty range lo,hi (default 0.3,0.7)");
  sim_dab->add_option("--train-range", train_range,
                      "training range whose interior is skipped when --d-range contains it");
  sim_dab->add_option("--inductance", cfg.dab.inductance)->capture_default_str();
  sim_dab->add_option("--power", cfg.dab.power)->capture_default_str();
  sim_dab->add_option("--frequency", cfg.dab.frequency)->capture_default_str();
  sim_dab->add_option("--turns-ratio", cfg.dab.turns_ratio)->capture_default_str();
  sim_dab->add_option("--input-voltage", cfg.dab.input_voltage)->capture_default_str();
  commands.emplace_back(sim_dab, kan::simulate_dab);

  auto* sim_pv = app.add_subcommand("simulate-pv", "write the synthetic photovoltaic dataset");
  common(sim_pv);
  sim_pv->add_option("--data", cfg.data, "output CSV (default <out>/data.csv)");
  sim_pv->add_option("--samples", cfg.samples)->capture_default_str();
  commands.emplace_back(sim_pv, kan::simulate_pv);

  auto* train = app.add_subcommand("train", "train a spline KAN with sparsity regularization");
  common(train);
  data(train);
  train->add_option("--shape", shape, "layer widths, e.g. 1,3,1");
  train->add_option("--grid-intervals", cfg.grid.intervals)->capture_default_str();
  train->add_option("--spline-order", cfg.grid.order)->capture_default_str();
  train->add_option("--lambda", cfg.train.lambda)->capture_default_str();
  train->add_option("--mu1", cfg.train.mu1)->capture_default_str();
  train->add_option("--mu2", cfg.train.mu2)->capture_default_str();
  train->add_option("--learning-rate", cfg.train.learning_rate)->capture_default_str();
  train->add_option("--final-learning-rate", cfg.train.final_learning_rate)->capture_default_str();
  train->add_option("--steps", cfg.train.max_steps)->capture_default_str();
  train->add_option("--batch-size", cfg.train.batch_size, "0 = full batch")->capture_default_str();
  commands.emplace_back(train, kan::run_train);

  auto* prune = app.add_subcommand("prune", "remove weak hidden nodes");
  common(prune);
  data(prune);
  model(prune);
  prune->add_option("--threshold", cfg.train.prune_threshold)->capture_default_str();
  commands.emplace_back(prune, kan::run_prune);

  auto* symb = app.add_subcommand("symbolify", "snap spline edges to library functions");
  common(symb);
  data(symb);
  model(symb);
  symb->add_option("--r2-floor", cfg.r2_floor)->capture_default_str();
  symb->add_option("--tie-tolerance", cfg.tie_tolerance)->capture_default_str();
  symb->add_option("--override", overrides, "force a basis: l/j/i:basis (repeatable)");
  commands.emplace_back(symb, kan::run_symbolify);

  auto* ref = app.add_subcommand("refine", "fine-tune the affine parameters of a symbolic model");
  common(ref);
  data(ref);
  model(ref);
  ref->add_option("--learning-rate", cfg.refine.learning_rate)->capture_default_str();
  ref->add_option("--steps", cfg.refine.max_steps)->capture_default_str();
  commands.emplace_back(ref, kan::run_refine);

  auto* ev = app.add_subcommand("eval", "RMSE and energy error on the train and test splits");
  common(ev);
  data(ev);
  model(ev);
  ev->add_option("--noise", cfg.noise, "multiplicative input noise level")->capture_default_str();
  ev->add_flag("--with-mlp", cfg.with_mlp, "train and report the MLP baseline");
  ev->add_option("--mlp-hidden", mlp_hidden, "MLP hidden widths (default 32,32)");
  ev->add_option("--steps", cfg.train.max_steps, "MLP training steps")->capture_default_str();
  ev->add_option("--extra-data", cfg.extra_data, "additional CSV evaluated in full");
  commands.emplace_back(ev, kan::run_eval);

  auto* unsup = app.add_subcommand("unsup-select", "rank variables by contrastive dependency discovery");
  common(unsup);
  data(unsup);
  unsup->add_option("--hidden", cfg.hidden)->capture_default_str();
  unsup->add_option("--threshold", cfg.unsup_threshold)->capture_default_str();
  unsup->add_option("--lambda", cfg.train.lambda)->capture_default_str();
  unsup->add_option("--steps", cfg.train.max_steps)->capture_default_str();
  commands.emplace_back(unsup, kan::run_unsup_select);

  auto* sens = app.add_subcommand("sensitivity", "Morris screening of a saved model");
  common(sens);
  data(sens);
  model(sens);
  sens->add_option("--trajectories", cfg.morris_trajectories)->capture_default_str();
  sens->add_option("--levels", cfg.morris_levels)->capture_default_str();
  sens->add_option("--units", cfg.sensitivity_units, "normalized or raw")->capture_default_str();
  commands.emplace_back(sens, kan::run_sensitivity);

  auto* corr = app.add_subcommand("correlate", "Pearson, Spearman and Kendall of each feature vs target");
  common(corr);
  data(corr);
  commands.emplace_back(corr, kan::run_correlate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (!d_range.empty()) cfg.d_range = parse_pair(d_range, "--d-range");
    if (!train_range.empty()) cfg.train_range = parse_pair(train_range, "--train-range");
    if (!shape.empty()) cfg.shape = parse_list(shape, "--shape");
    if (!mlp_hidden.empty()) cfg.mlp_hidden = parse_list(mlp_hidden, "--mlp-hidden");
    for (const auto& o : overrides) {
      const auto [edge, basis] = kan::parse_override(o);
      cfg.overrides[edge] = basis;
    }
    for (const auto& [sub, run] : commands) {
      if (sub->parsed()) report(run(cfg));
    }
  } catch (const kan::ConfigError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kConfigError;
  } catch (const kan::UnsnappedError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kConfigError;
  } catch (const kan::InvalidArgument& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kConfigError;
  } catch (const kan::DataError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kDataError;
  } catch (const kan::SchemaError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kDataError;
  } catch (const kan::ShapeError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kDataError;
  } catch (const kan::NumericalError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kNumericalError;
  } catch (const kan::DomainError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kNumericalError;
  } catch (const std::filesystem::filesystem_error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kDataError;
  }
  return 0;
}
