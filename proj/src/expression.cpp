#include <cmath>
#include <string>

#include <fmt/core.h>

#include "kan/errors.hpp"
#include "kan/symbolic.hpp"

namespace kan {

double ExprNode::eval(std::span<const double> x) const {
  switch (kind) {
    case Kind::kInput:
      return x[input];
    case Kind::kConstant:
      return value;
    case Kind::kApply:
      return c * basis->value(a * children.front().eval(x) + b) + d;
    case Kind::kSum: {
      double s = 0.0;
      for (const auto& ch : children) s += ch.eval(x);
      return s;
    }
  }
  return 0.0;
}

namespace {

using Kind = ExprNode::Kind;

ExprNode constant(double v) {
  ExprNode n;
  n.kind = Kind::kConstant;
  n.value = v;
  return n;
}

/// Node value as scale * expr + offset.
struct NodeValue {
  ExprNode expr;
  double scale = 1.0;
  double offset = 0.0;
};

/// phi(scale * expr + offset) for one symbolic edge.
ExprNode apply_edge(const SymbolicEdge& e, const NodeValue& v) {
  if (v.expr.kind == Kind::kConstant) {
    return constant(e.c * e.basis->value(e.a * (v.scale * v.expr.value + v.offset) + e.b) + e.d);
  }
  if (e.basis->id == "constant") return constant(e.c + e.d);
  ExprNode n;
  n.kind = Kind::kApply;
  n.basis = e.basis;
  n.a = e.a * v.scale;
  n.b = e.a * v.offset + e.b;
  n.c = e.c;
  n.d = e.d;
  n.children.push_back(v.expr);
  return n;
}

/// Sums edge terms into a node value, pulling additive constants out.
NodeValue collect(std::vector<ExprNode> terms) {
  NodeValue v;
  std::vector<ExprNode> applies;
  for (auto& t : terms) {
    if (t.kind == Kind::kConstant) {
      v.offset += t.value;
    } else {
      v.offset += t.d;
      t.d = 0.0;
      applies.push_back(std::move(t));
    }
  }
  if (applies.empty()) {
    v.expr = constant(v.offset);
    v.offset = 0.0;
  } else if (applies.size() == 1) {
    v.scale = applies.front().c;
    applies.front().c = 1.0;
    v.expr = std::move(applies.front());
  } else {
    v.expr.kind = Kind::kSum;
    v.expr.children = std::move(applies);
  }
  return v;
}

class Renderer {
 public:
  Renderer(int decimals, const std::vector<std::string>& names)
      : decimals_(decimals), names_(names) {}

  std::string number(double v) const {
    if (decimals_ < 0) return fmt::format("{:.17g}", v);
    std::string s = fmt::format("{:.{}f}", v, decimals_);
    if (s.find('.') != std::string::npos) {
      while (s.back() == '0') s.pop_back();
      if (s.back() == '.') s.pop_back();
    }
    if (s == "-0") s = "0";
    return s;
  }
  bool is_zero(double v) const { return number(v) == "0"; }
  bool is_one(double v) const { return number(v) == "1"; }

  struct Text {
    std::string s;
    /// Safe to use as a factor or base without parentheses.
    bool atomic;
  };

  Text node(const ExprNode& n) const {
    switch (n.kind) {
      case Kind::kInput:
        return {names_.at(n.input), true};
      case Kind::kConstant: {
        const std::string s = number(n.value);
        return {s, s.front() != '-'};
      }
      case Kind::kApply:
        return apply(n);
      case Kind::kSum: {
        std::string s;
        for (const auto& ch : n.children) {
          const Text t = node(ch);
          if (t.s == "0") continue;
          if (s.empty()) {
            s = t.s;
          } else if (t.s.front() == '-') {
            s += " - " + t.s.substr(1);
          } else {
            s += " + " + t.s;
          }
        }
        return {s.empty() ? "0" : s, false};
      }
    }
    return {"0", true};
  }

  /// scale * inner + shift, preferring "shift - inner" for negative scales.
  Text linear(double scale, const Text& inner, double shift) const {
    if (is_zero(scale)) return {number(shift), !is_zero(shift) && shift >= 0};
    const std::string factor = inner.atomic ? inner.s : "(" + inner.s + ")";
    std::string term;
    double mag = std::abs(scale);
    if (is_one(mag)) {
      term = scale > 0 ? inner.s : factor;
    } else {
      term = number(mag) + "*" + factor;
    }
    if (is_zero(shift)) {
      if (scale > 0) return {term, inner.atomic && is_one(mag)};
      return {"-" + term, false};
    }
    if (scale < 0 && shift > 0) return {number(shift) + " - " + term, false};
    const std::string lead = scale > 0 ? term : "-" + term;
    if (scale > 0 && is_one(mag) && !inner.atomic) {
      // an unparenthesized sum may start with a minus, which is still fine
      return {inner.s + (shift < 0 ? " - " : " + ") + number(std::abs(shift)), false};
    }
    return {lead + (shift < 0 ? " - " : " + ") + number(std::abs(shift)), false};
  }

  Text apply(const ExprNode& n) const {
    const Text arg = linear(n.a, node(n.children.front()), n.b);
    const std::string_view id = n.basis->id;
    const std::string paren = "(" + arg.s + ")";
    const std::string base = arg.atomic ? arg.s : paren;
    Text core;
    if (id == "identity") {
      core = arg;
    } else if (id == "square") {
      core = {base + "^2", true};
    } else if (id == "cube") {
      core = {base + "^3", true};
    } else if (id == "reciprocal") {
      core = {"1/" + base, false};
    } else if (id == "gaussian") {
      core = {"exp(-" + base + "^2)", true};
    } else if (id == "constant") {
      return {number(n.c + n.d), true};
    } else {
      core = {std::string(id) + paren, true};
    }
    return linear(n.c, core, n.d);
  }

 private:
  int decimals_;
  const std::vector<std::string>& names_;
};

}  // namespace

SymbolicExpression to_expression(const KanNetwork& net, std::size_t output) {
  require_symbolic(net, "formula emission");
  net.check();
  if (output >= net.n_outputs()) {
    throw InvalidArgument(fmt::format("output {} out of range for {} outputs", output,
                                      net.n_outputs()));
  }
  std::vector<NodeValue> nodes(net.n_inputs());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    nodes[i].expr.kind = Kind::kInput;
    nodes[i].expr.input = i;
    nodes[i].scale = net.input_normalizer.scale[i];
    nodes[i].offset = net.input_normalizer.offset[i];
  }
  for (const auto& layer : net.layers()) {
    std::vector<NodeValue> next;
    for (std::size_t j = 0; j < layer.n_out(); ++j) {
      std::vector<ExprNode> terms;
      for (std::size_t i = 0; i < layer.n_in(); ++i) {
        if (const auto* s = layer.edge(j, i).as_symbolic()) terms.push_back(apply_edge(*s, nodes[i]));
      }
      next.push_back(collect(std::move(terms)));
    }
    nodes = std::move(next);
  }

  const NodeValue& v = nodes[output];
  const double S = net.output_denormalizer.scale[output];
  const double O = net.output_denormalizer.offset[output];
  SymbolicExpression expr;
  expr.input_names = net.input_names;
  expr.output_name = net.output_names.at(output);
  switch (v.expr.kind) {
    case Kind::kConstant:
      expr.root = constant(S * (v.scale * v.expr.value + v.offset) + O);
      break;
    case Kind::kApply:
      expr.root = v.expr;
      expr.root.c = S * v.scale * v.expr.c;
      expr.root.d = S * (v.scale * v.expr.d + v.offset) + O;
      break;
    default: {
      expr.root = v.expr;
      for (auto& ch : expr.root.children) {
        ch.c *= S * v.scale;
        ch.d *= S * v.scale;
      }
      expr.root.children.push_back(constant(S * v.offset + O));
      break;
    }
  }
  return expr;
}

std::string SymbolicExpression::render(int decimals) const {
  Renderer r(decimals, input_names);
  return r.node(root).s;
}

std::string emit_formula(const KanNetwork& net, int decimals, std::size_t output) {
  const auto expr = to_expression(net, output);
  return expr.output_name + " = " + expr.render(decimals);
}

}  // namespace kan
