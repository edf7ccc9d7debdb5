#include "kan/model_io.hpp"

#include <fstream>
#include <set>

#include <fmt/core.h>

#include "kan/errors.hpp"

namespace kan {

using nlohmann::json;

namespace {

json edge_to_json(const EdgeActivation& e) {
  if (const auto* s = e.as_spline()) {
    return json{{"form", "spline"},
                {"w_b", s->w_b},
                {"w_s", s->w_s},
                {"coeffs", s->coeffs},
                {"grid",
                 {{"lo", s->grid.lo()},
                  {"hi", s->grid.hi()},
                  {"intervals", s->grid.intervals()},
                  {"order", s->grid.order()}}}};
  }
  if (const auto* s = e.as_symbolic()) {
    return json{{"form", "symbolic"}, {"basis", std::string(s->basis->id)},
                {"a", s->a}, {"b", s->b}, {"c", s->c}, {"d", s->d}};
  }
  return json{{"form", "zero"}};
}

json affine_to_json(const AffineMap& m) { return json{{"scale", m.scale}, {"offset", m.offset}}; }

// Small cursor that tracks the JSON pointer of the value being read.
class Reader {
 public:
  Reader(const json& v, std::string path) : v_(v), path_(std::move(path)) {}

  const json& value() const { return v_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw SchemaError(path_.empty() ? "/" : path_, what);
  }

  Reader at(const std::string& key) const {
    if (!v_.is_object()) fail("expected an object");
    auto it = v_.find(key);
    if (it == v_.end()) fail(fmt::format("missing field '{}'", key));
    return Reader(*it, path_ + "/" + key);
  }

  Reader at(std::size_t i) const {
    if (!v_.is_array()) fail("expected an array");
    if (i >= v_.size()) fail(fmt::format("index {} out of range", i));
    return Reader(v_[i], path_ + "/" + std::to_string(i));
  }

  void only_keys(std::initializer_list<const char*> keys) const {
    if (!v_.is_object()) fail("expected an object");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (auto it = v_.begin(); it != v_.end(); ++it) {
      if (!allowed.count(it.key())) fail(fmt::format("unknown field '{}'", it.key()));
    }
  }

  double number() const {
    if (!v_.is_number()) fail("expected a number");
    return v_.get<double>();
  }

  long long integer() const {
    if (!v_.is_number_integer()) fail("expected an integer");
    return v_.get<long long>();
  }

  std::string string() const {
    if (!v_.is_string()) fail("expected a string");
    return v_.get<std::string>();
  }

  std::size_t array_size() const {
    if (!v_.is_array()) fail("expected an array");
    return v_.size();
  }

  std::vector<double> numbers() const {
    std::vector<double> out(array_size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i).number();
    return out;
  }

  std::vector<std::string> strings() const {
    std::vector<std::string> out(array_size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i).string();
    return out;
  }

 private:
  const json& v_;
  std::string path_;
};

EdgeActivation edge_from_json(const Reader& r) {
  const std::string form = r.at("form").string();
  if (form == "zero") {
    r.only_keys({"form"});
    return EdgeActivation::zero();
  }
  if (form == "symbolic") {
    r.only_keys({"form", "basis", "a", "b", "c", "d"});
    const Reader basis = r.at("basis");
    const Basis* g = default_library().find(basis.string());
    if (!g) basis.fail(fmt::format("unknown basis '{}'", basis.string()));
    const double a = r.at("a").number();
    if (a == 0.0 && g->id != "constant") r.at("a").fail("a must be nonzero");
    return EdgeActivation::symbolic(*g, a, r.at("b").number(), r.at("c").number(),
                                    r.at("d").number());
  }
  if (form == "spline") {
    r.only_keys({"form", "w_b", "w_s", "coeffs", "grid"});
    const Reader gr = r.at("grid");
    gr.only_keys({"lo", "hi", "intervals", "order"});
    std::optional<SplineGrid> grid;
    try {
      grid.emplace(gr.at("lo").number(), gr.at("hi").number(),
                   static_cast<int>(gr.at("intervals").integer()),
                   static_cast<int>(gr.at("order").integer()));
    } catch (const InvalidArgument& e) {
      gr.fail(e.what());
    }
    const Reader coeffs = r.at("coeffs");
    auto c = coeffs.numbers();
    if (c.size() != grid->basis_count()) {
      coeffs.fail(fmt::format("expected {} coefficients, found {}", grid->basis_count(), c.size()));
    }
    return EdgeActivation::spline(*grid, r.at("w_b").number(), r.at("w_s").number(), std::move(c));
  }
  r.at("form").fail(fmt::format("unknown edge form '{}'", form));
}

AffineMap affine_from_json(const Reader& r, std::size_t expected) {
  r.only_keys({"scale", "offset"});
  AffineMap m{r.at("scale").numbers(), r.at("offset").numbers()};
  if (m.scale.size() != expected) {
    r.at("scale").fail(fmt::format("expected {} entries, found {}", expected, m.scale.size()));
  }
  if (m.offset.size() != expected) {
    r.at("offset").fail(fmt::format("expected {} entries, found {}", expected, m.offset.size()));
  }
  for (std::size_t i = 0; i < expected; ++i) {
    if (m.scale[i] == 0.0) r.at("scale").at(i).fail("scale must be nonzero");
  }
  return m;
}

}  // namespace

json save_model(const KanNetwork& net, const json& metadata) {
  json layers = json::array();
  for (const auto& layer : net.layers()) {
    json edges = json::array();
    for (const auto& e : layer.edges()) edges.push_back(edge_to_json(e));
    layers.push_back(json{{"n_in", layer.n_in()}, {"n_out", layer.n_out()}, {"edges", edges}});
  }
  json doc{{"format", "kan-model"},
           {"version", kModelFormatVersion},
           {"basis_library_version", BasisLibrary::kVersion},
           {"shape", net.shape()},
           {"input_names", net.input_names},
           {"output_names", net.output_names},
           {"input_normalizer", affine_to_json(net.input_normalizer)},
           {"output_denormalizer", affine_to_json(net.output_denormalizer)},
           {"layers", layers}};
  if (!metadata.is_null()) doc["metadata"] = metadata;
  return doc;
}

KanNetwork load_model(const json& doc, json* metadata) {
  const Reader root(doc, "");
  root.only_keys({"format", "version", "basis_library_version", "shape", "input_names",
                  "output_names", "input_normalizer", "output_denormalizer", "layers",
                  "metadata"});
  if (root.at("format").string() != "kan-model") root.at("format").fail("expected 'kan-model'");
  if (root.at("version").integer() != kModelFormatVersion) {
    root.at("version").fail(fmt::format("unsupported version (expected {})", kModelFormatVersion));
  }
  if (root.at("basis_library_version").integer() != BasisLibrary::kVersion) {
    root.at("basis_library_version").fail("unsupported basis library version");
  }
  const Reader shape_r = root.at("shape");
  std::vector<std::size_t> shape;
  for (std::size_t i = 0; i < shape_r.array_size(); ++i) {
    const long long s = shape_r.at(i).integer();
    if (s <= 0) shape_r.at(i).fail("shape entries must be positive");
    shape.push_back(static_cast<std::size_t>(s));
  }
  if (shape.size() < 2) shape_r.fail("shape needs at least 2 entries");

  const Reader layers_r = root.at("layers");
  if (layers_r.array_size() != shape.size() - 1) {
    layers_r.fail(fmt::format("shape implies {} layers, found {}", shape.size() - 1,
                              layers_r.array_size()));
  }
  std::vector<KanLayer> layers;
  for (std::size_t l = 0; l + 1 < shape.size(); ++l) {
    const Reader lr = layers_r.at(l);
    lr.only_keys({"n_in", "n_out", "edges"});
    const auto n_in = static_cast<std::size_t>(lr.at("n_in").integer());
    const auto n_out = static_cast<std::size_t>(lr.at("n_out").integer());
    if (n_in != shape[l] || n_out != shape[l + 1]) {
      lr.fail(fmt::format("dimension mismatch: layer is {}x{} (n_out x n_in) but shape requires "
                          "{}x{}",
                          n_out, n_in, shape[l + 1], shape[l]));
    }
    const Reader er = lr.at("edges");
    if (er.array_size() != n_in * n_out) {
      er.fail(fmt::format("dimension mismatch: expected {} edges, found {}", n_in * n_out,
                          er.array_size()));
    }
    std::vector<EdgeActivation> edges;
    for (std::size_t k = 0; k < n_in * n_out; ++k) edges.push_back(edge_from_json(er.at(k)));
    layers.emplace_back(n_in, n_out, std::move(edges));
  }
  KanNetwork net(std::move(layers));
  net.input_normalizer = affine_from_json(root.at("input_normalizer"), shape.front());
  net.output_denormalizer = affine_from_json(root.at("output_denormalizer"), shape.back());
  const Reader in_names = root.at("input_names");
  net.input_names = in_names.strings();
  if (net.input_names.size() != shape.front()) in_names.fail("one name per input required");
  const Reader out_names = root.at("output_names");
  net.output_names = out_names.strings();
  if (net.output_names.size() != shape.back()) out_names.fail("one name per output required");
  if (metadata) *metadata = doc.contains("metadata") ? doc["metadata"] : json();
  return net;
}

void write_model_file(const std::filesystem::path& path, const KanNetwork& net,
                      const json& metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write model file '{}'", path.string()));
  out << save_model(net, metadata).dump(2) << '\n';
}

KanNetwork read_model_file(const std::filesystem::path& path, json* metadata) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot read model file '{}'", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError("/", fmt::format("invalid JSON in '{}': {}", path.string(), e.what()));
  }
  return load_model(doc, metadata);
}

}  // namespace kan
