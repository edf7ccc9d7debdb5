#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "kan/dataset.hpp"
#include "kan/errors.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name, const std::string& contents) {
  const auto dir = fs::temp_directory_path() / "kan_dataset_tests";
  fs::create_directories(dir);
  const auto p = dir / name;
  std::ofstream(p, std::ios::binary) << contents;
  return p;
}

}  // namespace

TEST_CASE("DAB generator") {
  kan::DabParams p;
  CHECK(p.constant() == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(p.output_voltage(0.5) == doctest::Approx(8.0).epsilon(1e-14));

  auto d = kan::generate_dab(p, 2000, 0.3, 0.7, 11);
  REQUIRE(d.rows() == 2000);
  for (std::size_t r = 0; r < d.rows(); ++r) {
    const double duty = d.features[0].values[r];
    CHECK(duty >= 0.3);
    CHECK(duty <= 0.7);
    // symmetry of D(1 - D)
    CHECK(std::abs(p.output_voltage(1.0 - duty) - d.target.values[r]) <= 1e-12);
  }
  auto again = kan::generate_dab(p, 2000, 0.3, 0.7, 11);
  CHECK(again.features[0].values == d.features[0].values);

  CHECK_THROWS_AS(kan::generate_dab(p, 10, 0.3, 1.0, 1), kan::InvalidArgument);
  CHECK_THROWS_AS(kan::generate_dab(p, 10, 0.0, 0.5, 1), kan::InvalidArgument);
  kan::DabParams bad;
  bad.inductance = -1.0;
  CHECK_THROWS_AS(kan::generate_dab(bad, 10, 0.3, 0.7, 1), kan::InvalidArgument);

  auto gap = kan::generate_dab(p, 1000, 0.2, 0.8, 3, std::pair{0.3, 0.7});
  for (double duty : gap.features[0].values) CHECK((duty <= 0.3 || duty >= 0.7));
}

TEST_CASE("CSV ingestion") {
  const kan::CsvSchema schema{{"voltage", "current"}, "SOC"};
  SUBCASE("well formed") {
    auto p = scratch("ok.csv", "voltage,current,SOC\n3.9,-1.5,0.8\n3.7,-2.0,0.6\n3.5,0.5,0.4\n");
    auto d = kan::load_csv(p, schema);
    CHECK(d.rows() == 3);
    CHECK(d.dropped_rows == 0);
    CHECK(d.features[1].values[0] == -1.5);
    auto twice = kan::load_csv(p, schema);
    CHECK(twice.target.values == d.target.values);
  }
  SUBCASE("corrupt row is dropped") {
    auto p = scratch("bad.csv", "voltage,current,SOC\n3.9,-1.5,0.8\n3.7,abc,0.6\n3.5,,0.4\n3.1,0.2,0.1\n");
    auto d = kan::load_csv(p, schema);
    CHECK(d.rows() == 2);
    CHECK(d.dropped_rows == 2);
  }
  SUBCASE("distinct errors") {
    auto missing = scratch("missing.csv", "voltage,current\n1,2\n");
    try {
      kan::load_csv(missing, schema);
      FAIL("expected DataError");
    } catch (const kan::DataError& e) {
      CHECK(std::string(e.what()).find("missing column 'SOC'") != std::string::npos);
    }
    auto empty = scratch("empty.csv", "");
    try {
      kan::load_csv(empty, schema);
      FAIL("expected DataError");
    } catch (const kan::DataError& e) {
      CHECK(std::string(e.what()).find("empty") != std::string::npos);
    }
    auto none = scratch("none.csv", "voltage,current,SOC\nx,y,z\n");
    try {
      kan::load_csv(none, schema);
      FAIL("expected DataError");
    } catch (const kan::DataError& e) {
      CHECK(std::string(e.what()).find("no usable rows") != std::string::npos);
    }
  }
}

TEST_CASE("CSV round trip is exact") {
  auto d = kan::generate_dab(kan::DabParams{}, 100, 0.3, 0.7, 4);
  auto p = fs::temp_directory_path() / "kan_dataset_tests" / "dab.csv";
  fs::create_directories(p.parent_path());
  kan::write_csv(p, d);
  auto back = kan::load_csv(p, {{"D"}, "V_out"});
  CHECK(back.features[0].values == d.features[0].values);
  CHECK(back.target.values == d.target.values);
}

TEST_CASE("min-max normalization") {
  kan::Dataset d;
  d.features = {{"a", "", {0.0, 5.0, 10.0}}, {"flat", "", {3.0, 3.0, 3.0}}};
  d.target = {"y", "", {-1.0, 2.5, 7.0}};
  auto res = kan::minmax_normalize(d);
  CHECK(res.data.features[0].values == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(res.data.features[1].values == std::vector<double>{0.5, 0.5, 0.5});
  CHECK(res.warnings == std::vector<std::string>{"flat"});
  auto back = kan::denormalize(res.params[2], res.data.target.values);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(back[i] - d.target.values[i]) <= 1e-12);
}

TEST_CASE("split") {
  auto d = kan::generate_dab(kan::DabParams{}, 50000, 0.3, 0.7, 1);
  auto s = kan::split(d, 0.8, 7);
  CHECK(s.train.size() == 40000);
  CHECK(s.test.size() == 10000);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  for (auto i : s.test) CHECK_FALSE(all.count(i));
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 50000);
  CHECK(kan::split(d, 0.8, 7).train == s.train);
  CHECK(kan::split(d, 0.8, 8).train != s.train);

  auto odd = kan::split(kan::generate_dab(kan::DabParams{}, 7, 0.3, 0.7, 1), 0.5, 1);
  CHECK(odd.train.size() == 3);

  CHECK_THROWS_AS(kan::split(d, 1.0, 1), kan::InvalidArgument);
  CHECK_THROWS_AS(kan::split(d, 0.0, 1), kan::InvalidArgument);
  CHECK_THROWS_AS(kan::split(kan::generate_dab(kan::DabParams{}, 1, 0.3, 0.7, 1), 0.5, 1),
                  kan::InvalidArgument);

  auto meta = kan::dataset_metadata(s);
  CHECK(meta["split"]["train_rows"] == 40000);
  CHECK(meta["columns"][1]["name"] == "V_out");
}

TEST_CASE("PV surrogate") {
  auto d = kan::generate_pv_surrogate(500, 2);
  CHECK(d.n_features() == 6);
  CHECK(d.target.name == "power");
  d.check();
  CHECK(kan::generate_pv_surrogate(500, 2).target.values == d.target.values);
}
