#include <doctest.h>

#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "kan/errors.hpp"
#include "kan/spline.hpp"
#include "support/oracles.hpp"

using kan::SplineGrid;

TEST_CASE("grid layout") {
  SplineGrid g(-1.0, 1.0, 5, 3);
  CHECK(g.knots().size() == 5 + 2 * 3 + 1);
  CHECK(g.basis_count() == 8);
  for (std::size_t i = 1; i < g.knots().size(); ++i) CHECK(g.knots()[i] > g.knots()[i - 1]);
  CHECK(g.knots()[3] == -1.0);
  CHECK(g.knots()[8] == 1.0);
}

TEST_CASE("invalid grids are rejected at construction") {
  CHECK_THROWS_AS(SplineGrid(0.0, 1.0, 0, 3), kan::InvalidArgument);
  CHECK_THROWS_AS(SplineGrid(1.0, 0.0, 4, 3), kan::InvalidArgument);
  CHECK_THROWS_AS(SplineGrid(1.0, 1.0, 4, 3), kan::InvalidArgument);
  CHECK_THROWS_AS(SplineGrid(0.0, 1.0, 4, -1), kan::InvalidArgument);
}

TEST_CASE("degree-0 bases are interval indicators") {
  SplineGrid g(0.0, 1.0, 4, 0);
  auto v = kan::basis_values(g, 0.1);
  CHECK(v == std::vector<double>{1, 0, 0, 0});
}

TEST_CASE("linear hat functions") {
  SplineGrid g(0.0, 1.0, 2, 1);
  auto v = kan::basis_values(g, 0.25);
  REQUIRE(v.size() == 3);
  CHECK(v[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(v[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(v[2] == 0.0);
  auto d = kan::basis_derivatives(g, 0.25);
  CHECK(d[0] == doctest::Approx(-2.0));
  CHECK(d[1] == doctest::Approx(2.0));
  CHECK(d[2] == 0.0);
}

TEST_CASE("matches recursive Cox-de Boor oracle") {
  std::mt19937_64 rng(7);
  for (int k = 0; k <= 3; ++k) {
    for (int G : {1, 2, 5, 11}) {
      SplineGrid g(-1.0, 1.0, G, k);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (int s = 0; s < 50; ++s) {
        const double x = u(rng);
        auto got = kan::basis_values(g, x);
        auto want = oracle::all_bases(-1.0, 1.0, G, k, x);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("partition of unity, non-negativity and local support") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k <= 3; ++k) {
    for (int G = 1; G <= 20; ++G) {
      SplineGrid g(-1.0, 1.0, G, k);
      for (int s = 0; s < 40; ++s) {
        const double x = -1.0 + 2.0 * u(rng);
        auto v = kan::basis_values(g, x);
        const double sum = std::accumulate(v.begin(), v.end(), 0.0);
        CHECK(std::abs(sum - 1.0) <= 1e-12);
        int nonzero = 0;
        for (double b : v) {
          CHECK(b >= 0.0);
          CHECK(b <= 1.0 + 1e-15);
          if (b != 0.0) ++nonzero;
        }
        CHECK(nonzero <= k + 1);
      }
      // both domain ends are inside the partition
      for (double x : {-1.0, 1.0}) {
        auto v = kan::basis_values(g, x);
        CHECK(std::abs(std::accumulate(v.begin(), v.end(), 0.0) - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("derivatives sum to zero and match finite differences") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.98, 0.98);
  for (int k = 1; k <= 3; ++k) {
    SplineGrid g(-1.0, 1.0, 5, k);
    for (int s = 0; s < 100; ++s) {
      const double x = u(rng);
      // stay away from knots where lower-order pieces have kinks
      const double rel = (x + 1.0) / g.spacing();
      if (std::abs(rel - std::round(rel)) < 1e-3) continue;
      auto d = kan::basis_derivatives(g, x);
      CHECK(std::abs(std::accumulate(d.begin(), d.end(), 0.0)) <= 1e-10);
      for (std::size_t i = 0; i < d.size(); ++i) {
        auto f = [&](double z) { return kan::basis_values(g, z)[i]; };
        const double fd = oracle::central_difference(f, x, 1e-6);
        CHECK(oracle::close_rel(d[i], fd, 1e-5, 1e-7));
      }
    }
  }
}

TEST_CASE("out-of-domain inputs clamp to the boundary") {
  SplineGrid g(-1.0, 1.0, 5, 3);
  CHECK(kan::basis_values(g, 3.0) == kan::basis_values(g, 1.0));
  CHECK(kan::basis_values(g, -7.0) == kan::basis_values(g, -1.0));
  auto d = kan::basis_derivatives(g, 2.0);
  for (double v : d) CHECK(v == 0.0);
}
