#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kan/backprop.hpp"
#include "kan/basis_library.hpp"
#include "kan/network.hpp"

namespace kan {

struct FitOptions {
  /// Share of samples allowed outside the basis domain at a candidate (a, b).
  /// Zero additionally requires the whole input interval to map into the domain.
  double max_excluded_fraction = 0.05;
  /// Samples used during the (a, b) search; the final fit uses all of them.
  std::size_t search_samples = 512;
};

/// Best c * g(a x + b) + d found for one basis.
struct AffineFit {
  const Basis* basis = nullptr;
  double a = 1.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;
  /// 1 - SS_res / SS_tot on the included samples; NaN when degenerate,
  /// -inf when no (a, b) kept enough samples in the domain.
  double r2 = 0.0;
  std::size_t excluded = 0;
  bool coverage_warning = false;
  /// Constant targets: basis is "constant", c = 0, d = mean.
  bool degenerate = false;
};

/// Coarse-to-fine search over (a, b) with (c, d) solved by least squares.
/// Needs at least 10 samples.
AffineFit fit_affine(const Basis& g, std::span<const double> xs, std::span<const double> ys,
                     const FitOptions& options = {});

struct EdgeRef {
  std::size_t layer = 0;
  std::size_t out = 0;
  std::size_t in = 0;
  auto operator<=>(const EdgeRef&) const = default;
};

/// "l/j/i" as used on the command line.
EdgeRef parse_edge_ref(std::string_view text);

enum class SnapMode { kAuto, kOverride };

struct SnapEntry {
  EdgeRef edge;
  bool snapped = false;
  SnapMode mode = SnapMode::kAuto;
  /// Chosen fit (or the best rejected one when unsnapped).
  AffineFit chosen;
  /// Every evaluated basis, best first.
  std::vector<AffineFit> candidates;
};

struct SnapOptions {
  const BasisLibrary* library = &default_library();
  double r2_floor = 0.8;
  /// Candidates whose unexplained variance is within this relative margin
  /// of the best are tied; ties go to the earlier library entry.
  double tie_tolerance = 0.1;
  /// Node-input samples per edge (strided subsample of the batch).
  std::size_t max_samples = 2000;
  FitOptions fit{0.0, 512};
  std::map<EdgeRef, std::string> overrides;
};

/// Snaps raw (x, y) samples; the returned edge stays empty (zero) when the
/// entry is unsnapped.
std::pair<std::optional<EdgeActivation>, SnapEntry> snap_samples(
    std::span<const double> xs, std::span<const double> ys, const SnapOptions& options,
    std::optional<std::string_view> override_basis = std::nullopt);

/// Fits the spline edge's own outputs over `inputs` (its observed node
/// values). Non-spline edges are rejected with InvalidArgument.
std::pair<EdgeActivation, SnapEntry> snap_edge(
    const EdgeActivation& edge, std::span<const double> inputs, const SnapOptions& options,
    std::optional<std::string_view> override_basis = std::nullopt);

struct SnapReport {
  std::vector<SnapEntry> entries;
  double r2_floor = 0.8;
  bool all_snapped() const;
  nlohmann::json to_json() const;
};

/// Snaps every spline edge layer by layer, recomputing node inputs after
/// each layer so deeper edges see the already-snapped upstream values.
SnapReport snap_network(KanNetwork& net, std::span<const double> raw_inputs, std::size_t rows,
                        const SnapOptions& options = {});

/// Throws UnsnappedError naming every spline edge; `what` prefixes the message.
void require_symbolic(const KanNetwork& net, std::string_view what);

struct RefineConfig {
  double learning_rate = 1e-3;
  std::size_t max_steps = 5000;
  double tol = 1e-12;
  std::size_t window = 100;
};

struct RefineReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t steps = 0;
  std::size_t learning_rate_halvings = 0;
};

/// Fine-tunes every symbolic (a, b, c, d) on the prediction loss. The
/// returned network is the best seen, so the loss never increases. Throws
/// UnsnappedError when a spline edge is present.
RefineReport refine(KanNetwork& net, const Batch& batch, const RefineConfig& config = {});

/// Tree form of a fully symbolic network in raw input and output units.
struct ExprNode {
  enum class Kind { kInput, kConstant, kApply, kSum };
  Kind kind = Kind::kConstant;
  std::size_t input = 0;
  double value = 0.0;
  /// c * g(a * child + b) + d
  const Basis* basis = nullptr;
  double a = 1.0;
  double b = 0.0;
  double c = 1.0;
  double d = 0.0;
  std::vector<ExprNode> children;

  double eval(std::span<const double> x) const;
};

struct SymbolicExpression {
  ExprNode root;
  std::vector<std::string> input_names;
  std::string output_name;

  double eval(std::span<const double> x) const { return root.eval(x); }
  /// `decimals` < 0 prints every coefficient at full round-trip precision.
  std::string render(int decimals = 2) const;
};

/// Builds the expression for one output. Throws UnsnappedError listing every
/// spline edge.
SymbolicExpression to_expression(const KanNetwork& net, std::size_t output = 0);

/// "name = expression" at the given precision.
std::string emit_formula(const KanNetwork& net, int decimals = 2, std::size_t output = 0);

}  // namespace kan
