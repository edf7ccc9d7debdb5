#pragma once

// Minimal recursive-descent evaluator for emitted formulas. Independent of
// the library's expression tree: it only sees the rendered text.

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <stdexcept>
#include <string>

namespace oracle {

class FormulaEvaluator {
 public:
  FormulaEvaluator(std::string text, std::map<std::string, double> vars)
      : s_(std::move(text)), vars_(std::move(vars)) {}

  /// Evaluates the right-hand side of "name = expr" (or a bare expression).
  double run() {
    const auto eq = s_.find(" = ");
    if (eq != std::string::npos) pos_ = eq + 3;
    const double v = expr();
    skip();
    if (pos_ != s_.size()) throw std::runtime_error("trailing input at " + std::to_string(pos_));
    return v;
  }

 private:
  void skip() {
    while (pos_ < s_.size() && s_[pos_] == ' ') ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  double expr() {
    double v = term();
    for (;;) {
      if (eat('+')) v += term();
      else if (eat('-')) v -= term();
      else return v;
    }
  }
  double term() {
    double v = unary();
    for (;;) {
      if (eat('*')) v *= unary();
      else if (eat('/')) v /= unary();
      else return v;
    }
  }
  double unary() {
    if (eat('-')) return -unary();
    return power();
  }
  double power() {
    const double base = primary();
    if (eat('^')) return std::pow(base, unary());
    return base;
  }
  double primary() {
    skip();
    if (eat('(')) {
      const double v = expr();
      if (!eat(')')) throw std::runtime_error("missing )");
      return v;
    }
    if (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) {
      char* end = nullptr;
      const double v = std::strtod(s_.c_str() + pos_, &end);
      pos_ = static_cast<std::size_t>(end - s_.c_str());
      return v;
    }
    std::string name;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
      name += s_[pos_++];
    }
    if (name.empty()) throw std::runtime_error("unexpected character at " + std::to_string(pos_));
    if (eat('(')) {
      const double x = expr();
      if (!eat(')')) throw std::runtime_error("missing ) after " + name);
      return call(name, x);
    }
    const auto it = vars_.find(name);
    if (it == vars_.end()) throw std::runtime_error("unknown variable " + name);
    return it->second;
  }
  static double call(const std::string& f, double x) {
    if (f == "sin") return std::sin(x);
    if (f == "cos") return std::cos(x);
    if (f == "tan") return std::tan(x);
    if (f == "arctan") return std::atan(x);
    if (f == "tanh") return std::tanh(x);
    if (f == "sigmoid") return 1.0 / (1.0 + std::exp(-x));
    if (f == "exp") return std::exp(x);
    if (f == "log") return std::log(x);
    if (f == "sqrt") return std::sqrt(x);
    if (f == "abs") return std::abs(x);
    throw std::runtime_error("unknown function " + f);
  }

  std::string s_;
  std::map<std::string, double> vars_;
  std::size_t pos_ = 0;
};

inline double eval_formula(const std::string& text, const std::map<std::string, double>& vars) {
  return FormulaEvaluator(text, vars).run();
}

}  // namespace oracle
