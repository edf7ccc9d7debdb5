#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "kan/unsupervised.hpp"

namespace {

std::vector<std::string> names(std::size_t d) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < d; ++i) out.push_back("x" + std::to_string(i + 1));
  return out;
}

/// Columns x1..x3 drive x4 = x1 + x2^2 - x3; the rest are independent noise.
std::vector<double> rule_data(std::size_t rows, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> x(rows * d);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < d; ++c) x[r * d + c] = u(rng);
    x[r * d + 3] = x[r * d] + x[r * d + 1] * x[r * d + 1] - x[r * d + 2];
  }
  return x;
}

kan::UnsupervisedConfig quick(std::uint64_t seed) {
  kan::UnsupervisedConfig cfg;
  cfg.train.lambda = 0.02;
  cfg.train.max_steps = 1500;
  cfg.train.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("contrastive construction") {
  const auto x = rule_data(5, 7, 1);
  const auto set = kan::build_contrastive(x, 5, names(7), 42);
  CHECK(set.rows() == 10);
  CHECK(std::count(set.labels.begin(), set.labels.end(), 1.0) == 5);
  CHECK(std::count(set.labels.begin(), set.labels.end(), 0.0) == 5);
  CHECK(std::equal(x.begin(), x.end(), set.features.begin()));
  for (std::size_t c = 0; c < 7; ++c) {
    std::vector<double> pos, neg;
    for (std::size_t r = 0; r < 5; ++r) {
      pos.push_back(set.features[r * 7 + c]);
      neg.push_back(set.features[(5 + r) * 7 + c]);
    }
    CHECK(std::is_permutation(pos.begin(), pos.end(), neg.begin()));
  }
  CHECK(kan::build_contrastive(x, 5, names(7), 42).features == set.features);
  CHECK(kan::build_contrastive(x, 5, names(7), 43).features != set.features);

  CHECK_THROWS_AS(kan::build_contrastive(std::vector<double>(7), 1, names(7), 0),
                  kan::InvalidArgument);
  CHECK_THROWS_AS(kan::build_contrastive(std::vector<double>(5), 5, names(1), 0),
                  kan::InvalidArgument);
}

TEST_CASE("dependency discovery on a seven-variable rule") {
  const std::size_t rows = 1000;
  const auto x = rule_data(rows, 7, 3);
  const auto set = kan::build_contrastive(x, rows, names(7), 3);
  auto [net, report] = kan::train_unsupervised(set, quick(3));

  REQUIRE(report.ranking.size() == 7);
  for (std::size_t k = 1; k < report.ranking.size(); ++k) {
    CHECK(report.ranking[k - 1].magnitude >= report.ranking[k].magnitude);
  }
  std::vector<std::string> top;
  for (std::size_t k = 0; k < 4; ++k) top.push_back(report.ranking[k].variable);
  std::sort(top.begin(), top.end());
  CHECK(top == std::vector<std::string>{"x1", "x2", "x3", "x4"});
  for (std::size_t k = 4; k < 7; ++k) CHECK_FALSE(report.ranking[k].kept);
  CHECK(report.to_json()["structure"] == nlohmann::json::array({4, 1, 1}));

  // label balance: real rows score higher than shuffled ones
  double pos = 0.0, neg = 0.0;
  for (std::size_t r = 0; r < set.rows(); ++r) {
    const double p = net.forward(std::span<const double>(&set.features[r * 7], 7))[0];
    (set.is_positive(r) ? pos : neg) += p;
  }
  CHECK(pos / rows > neg / rows);

  std::ostringstream csv;
  report.write_csv(csv);
  CHECK(csv.str().rfind("variable,magnitude\n", 0) == 0);
}

TEST_CASE("duplicated informative column keeps both copies") {
  const std::size_t rows = 600, d = 5;
  auto base = rule_data(rows, 7, 5);
  std::vector<double> x;
  for (std::size_t r = 0; r < rows; ++r) {
    // x1, x2, x3, x4, copy of x1
    for (std::size_t c = 0; c < 4; ++c) x.push_back(base[r * 7 + c]);
    x.push_back(base[r * 7]);
  }
  const auto set = kan::build_contrastive(x, rows, names(d), 5);
  auto [net, report] = kan::train_unsupervised(set, quick(5));
  for (const auto& e : report.ranking) {
    if (e.variable == "x1" || e.variable == "x5") CHECK(e.magnitude > 0.0);
  }
}

TEST_CASE("pure noise column is dropped") {
  int dropped = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t rows = 1000;
    auto base = rule_data(rows, 7, 100 + seed);
    std::vector<double> x;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < 5; ++c) x.push_back(base[r * 7 + c]);
    }
    const auto set = kan::build_contrastive(x, rows, names(5), seed);
    const auto report = kan::train_unsupervised(set, quick(seed)).second;
    for (const auto& e : report.ranking) {
      if (e.variable == "x5" && !e.kept) ++dropped;
    }
  }
  CHECK(dropped >= 9);
}
