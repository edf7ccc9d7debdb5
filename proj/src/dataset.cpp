#include "kan/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/core.h>

#include "kan/errors.hpp"

namespace kan {

std::vector<std::string> Dataset::feature_names() const {
  std::vector<std::string> out;
  for (const auto& f : features) out.push_back(f.name);
  return out;
}

std::vector<std::size_t> Dataset::all_indices() const {
  std::vector<std::size_t> idx(rows());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

std::vector<double> Dataset::feature_matrix(std::span<const std::size_t> idx) const {
  const std::size_t n = idx.empty() ? rows() : idx.size();
  std::vector<double> out(n * features.size());
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t src = idx.empty() ? r : idx[r];
    for (std::size_t c = 0; c < features.size(); ++c) {
      out[r * features.size() + c] = features[c].values[src];
    }
  }
  return out;
}

std::vector<double> Dataset::target_values(std::span<const std::size_t> idx) const {
  if (idx.empty()) return target.values;
  std::vector<double> out(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) out[r] = target.values[idx[r]];
  return out;
}

void Dataset::check() const {
  for (const auto& f : features) {
    if (f.values.size() != rows()) {
      throw DataError(fmt::format("column '{}' has {} values but target '{}' has {}", f.name,
                                  f.values.size(), target.name, rows()));
    }
  }
}

void DabParams::validate() const {
  for (auto [v, name] : {std::pair{inductance, "inductance"}, std::pair{power, "power"},
                         std::pair{frequency, "frequency"}, std::pair{turns_ratio, "turns ratio"},
                         std::pair{input_voltage, "input voltage"}}) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw InvalidArgument(fmt::format("DAB {} must be strictly positive, got {}", name, v));
    }
  }
}

namespace {

MinMax range_of(const std::vector<double>& v) {
  MinMax m;
  if (v.empty()) return m;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  m.min = *lo;
  m.max = *hi;
  m.degenerate = !(m.max > m.min);
  return m;
}

void record_ranges(Dataset& d) {
  d.ranges.clear();
  for (const auto& f : d.features) d.ranges.push_back(range_of(f.values));
  d.ranges.push_back(range_of(d.target.values));
}

}  // namespace

Dataset generate_dab(const DabParams& params, std::size_t count, double d_lo, double d_hi,
                     std::uint64_t seed, std::optional<std::pair<double, double>> exclude) {
  params.validate();
  if (!(d_lo > 0.0) || !(d_hi < 1.0) || !(d_lo < d_hi)) {
    throw InvalidArgument(fmt::format(
        "duty range [{}, {}] must satisfy 0 < lo < hi < 1 (V_out is singular at 0 and 1)", d_lo,
        d_hi));
  }
  if (exclude && exclude->first <= d_lo && exclude->second >= d_hi) {
    throw InvalidArgument("excluded interval covers the whole duty range");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(d_lo, d_hi);
  Dataset d;
  d.features.push_back({"D", "", {}});
  d.target = {"V_out", "V", {}};
  d.features[0].values.reserve(count);
  d.target.values.reserve(count);
  while (d.target.values.size() < count) {
    const double duty = u(rng);
    if (exclude && duty > exclude->first && duty < exclude->second) continue;
    d.features[0].values.push_back(duty);
    d.target.values.push_back(params.output_voltage(duty));
  }
  record_ranges(d);
  return d;
}

Dataset generate_pv_surrogate(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset d;
  d.features = {{"radiation", "W/m2", {}},   {"temperature", "degC", {}},
                {"wind_speed", "m/s", {}},   {"wind_direction", "deg", {}},
                {"rainfall", "mm", {}},      {"air_pressure", "hPa", {}}};
  d.target = {"power", "kW", {}};
  constexpr double kPi = 3.14159265358979323846;
  for (std::size_t r = 0; r < count; ++r) {
    const double rad = unit(rng);
    const double temp = unit(rng);
    const double wind = unit(rng);
    const double direction = 360.0 * unit(rng);
    const double rain = -2.0 * std::log(1.0 - unit(rng));
    const double pressure = 1013.0 + 8.0 * noise(rng);
    const double norm_power =
        0.7 * rad + 0.2 * (1.0 - temp) + 0.1 * std::sin(kPi * wind) + 0.005 * noise(rng);
    d.features[0].values.push_back(1000.0 * rad);
    d.features[1].values.push_back(5.0 + 35.0 * temp);
    d.features[2].values.push_back(12.0 * wind);
    d.features[3].values.push_back(direction);
    d.features[4].values.push_back(rain);
    d.features[5].values.push_back(pressure);
    d.target.values.push_back(5.0 * norm_power);
  }
  record_ranges(d);
  return d;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line) || split_line(line) == std::vector<std::string>{""}) {
    throw DataError(fmt::format("'{}' is empty (no header row)", path.string()));
  }
  const auto header = split_line(line);
  auto locate = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw DataError(fmt::format("missing column '{}' in '{}'", name, path.string()));
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> cols;
  for (const auto& f : schema.features) cols.push_back(locate(f));
  cols.push_back(locate(schema.target));

  Dataset d;
  for (const auto& f : schema.features) d.features.push_back({f, "", {}});
  d.target = {schema.target, "", {}};
  std::vector<double> row(cols.size());
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_line(line);
    bool ok = true;
    for (std::size_t k = 0; k < cols.size() && ok; ++k) {
      if (cols[k] >= cells.size()) {
        ok = false;
        break;
      }
      const auto v = parse_number(cells[cols[k]]);
      if (!v) ok = false;
      else row[k] = *v;
    }
    if (!ok) {
      ++d.dropped_rows;
      continue;
    }
    for (std::size_t k = 0; k + 1 < cols.size(); ++k) d.features[k].values.push_back(row[k]);
    d.target.values.push_back(row.back());
  }
  if (d.rows() == 0) {
    throw DataError(fmt::format("'{}' has no usable rows ({} dropped)", path.string(),
                                d.dropped_rows));
  }
  record_ranges(d);
  return d;
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  data.check();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  for (const auto& f : data.features) out << f.name << ',';
  out << data.target.name << '\n';
  std::string buf;
  for (std::size_t r = 0; r < data.rows(); ++r) {
    buf.clear();
    for (const auto& f : data.features) {
      buf += fmt::format("{},", f.values[r]);
    }
    buf += fmt::format("{}\n", data.target.values[r]);
    out << buf;
  }
}

NormalizeResult minmax_normalize(const Dataset& data) {
  data.check();
  NormalizeResult res;
  res.data = data;
  auto apply = [&res](Column& col) {
    const MinMax m = range_of(col.values);
    if (m.degenerate) res.warnings.push_back(col.name);
    for (double& v : col.values) v = m.normalize(v);
    res.params.push_back(m);
  };
  for (auto& f : res.data.features) apply(f);
  apply(res.data.target);
  return res;
}

std::vector<double> denormalize(const MinMax& params, std::span<const double> values) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = params.denormalize(values[i]);
  return out;
}

Dataset split(Dataset data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidArgument(fmt::format("train fraction must lie in (0, 1), got {}", train_fraction));
  }
  if (data.rows() < 2) throw InvalidArgument("splitting needs at least 2 samples");
  auto idx = data.all_indices();
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(data.rows())));
  data.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  data.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(data.train.begin(), data.train.end());
  std::sort(data.test.begin(), data.test.end());
  data.split_seed = seed;
  data.train_fraction = train_fraction;
  return data;
}

nlohmann::json dataset_metadata(const Dataset& data, const nlohmann::json& source) {
  nlohmann::json cols = nlohmann::json::array();
  auto describe = [&](const Column& c, const MinMax& m, const char* role) {
    cols.push_back({{"name", c.name}, {"unit", c.unit}, {"role", role},
                    {"min", m.min}, {"max", m.max}});
  };
  std::vector<MinMax> ranges = data.ranges;
  if (ranges.size() != data.features.size() + 1) {
    ranges.clear();
    for (const auto& f : data.features) ranges.push_back(range_of(f.values));
    ranges.push_back(range_of(data.target.values));
  }
  for (std::size_t i = 0; i < data.features.size(); ++i) describe(data.features[i], ranges[i], "feature");
  describe(data.target, ranges.back(), "target");
  nlohmann::json meta{{"columns", cols}, {"rows", data.rows()}, {"dropped_rows", data.dropped_rows}};
  if (!data.train.empty() || !data.test.empty()) {
    meta["split"] = {{"seed", data.split_seed},
                     {"train_fraction", data.train_fraction},
                     {"train_rows", data.train.size()},
                     {"test_rows", data.test.size()}};
  }
  if (!source.is_null()) meta["source"] = source;
  return meta;
}

}  // namespace kan
