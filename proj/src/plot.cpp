#include "kan/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/core.h>

#include "kan/errors.hpp"
#include "kan/regularization.hpp"

namespace kan {

namespace {

constexpr int kSamples = 200;
constexpr double kPanelW = 160.0;
constexpr double kPanelH = 110.0;
constexpr double kPad = 12.0;

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::pair<double, double> domain(const EdgeActivation& e) {
  if (const auto* s = e.as_spline()) return {s->grid.lo(), s->grid.hi()};
  return {-1.0, 1.0};
}

}  // namespace

std::string layer_svg(const KanNetwork& net, std::size_t l, std::span<const double> edge_l1) {
  const KanLayer& layer = net.layers().at(l);
  const std::size_t n_in = layer.n_in(), n_out = layer.n_out();
  double top = 0.0;
  for (const double m : edge_l1) top = std::max(top, m);

  const double width = static_cast<double>(n_in) * (kPanelW + kPad) + kPad;
  const double height = static_cast<double>(n_out) * (kPanelH + kPad) + kPad + 16.0;
  std::string svg = fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{:.0f}\" "
      "height=\"{:.0f}\" viewBox=\"0 0 {:.0f} {:.0f}\">\n"
      "<text x=\"{}\" y=\"14\" font-family=\"sans-serif\" font-size=\"11\">layer {}</text>\n",
      width, height, width, height, kPad, l);

  for (std::size_t j = 0; j < n_out; ++j) {
    for (std::size_t i = 0; i < n_in; ++i) {
      const EdgeActivation& e = layer.edge(j, i);
      const double x0 = kPad + static_cast<double>(i) * (kPanelW + kPad);
      const double y0 = 16.0 + kPad + static_cast<double>(j) * (kPanelH + kPad);
      const double m = j * n_in + i < edge_l1.size() ? edge_l1[j * n_in + i] : 0.0;
      const double opacity = top > 0.0 && e.form() != EdgeForm::kZero ? m / top : 0.0;

      std::vector<double> xs, ys;
      const auto [lo, hi] = domain(e);
      for (int k = 0; k < kSamples; ++k) {
        const double x = lo + (hi - lo) * k / (kSamples - 1);
        double y = NAN;
        try {
          y = e.eval(x);
        } catch (const Error&) {
        }
        xs.push_back(x);
        ys.push_back(y);
      }
      double ymin = INFINITY, ymax = -INFINITY;
      for (const double y : ys) {
        if (std::isfinite(y)) {
          ymin = std::min(ymin, y);
          ymax = std::max(ymax, y);
        }
      }
      if (!(ymax > ymin)) {
        ymin = std::isfinite(ymin) ? ymin - 1.0 : -1.0;
        ymax = ymin + 2.0;
      }

      std::string label = fmt::format("({},{}) {}", j, i, to_string(e.form()));
      if (const auto* s = e.as_symbolic()) label += " " + std::string(s->basis->id);
      svg += fmt::format(
          "<g>\n<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.0f}\" height=\"{:.0f}\" fill=\"none\" "
          "stroke=\"#cccccc\"/>\n<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" "
          "font-size=\"9\">{}</text>\n",
          x0, y0, kPanelW, kPanelH, x0 + 3.0, y0 + 10.0, escape(label));

      std::string path;
      bool pen_down = false;
      for (std::size_t k = 0; k < xs.size(); ++k) {
        if (!std::isfinite(ys[k])) {
          pen_down = false;
          continue;
        }
        const double px = x0 + 4.0 + (kPanelW - 8.0) * (xs[k] - lo) / (hi - lo);
        const double py = y0 + kPanelH - 4.0 - (kPanelH - 18.0) * (ys[k] - ymin) / (ymax - ymin);
        path += fmt::format("{}{:.2f},{:.2f} ", pen_down ? "L" : "M", px, py);
        pen_down = true;
      }
      if (!path.empty()) path.pop_back();
      svg += fmt::format(
          "<path d=\"{}\" fill=\"none\" stroke=\"#000000\" stroke-width=\"1.5\" "
          "stroke-opacity=\"{:.4f}\"/>\n</g>\n",
          path, opacity);
    }
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<std::string> write_layer_plots(const KanNetwork& net, std::span<const double> raw_inputs,
                                           std::size_t rows, const std::filesystem::path& dir) {
  std::vector<std::string> warnings;
  std::vector<LayerTrace> traces;
  try {
    traces = trace_network(net, raw_inputs, rows);
  } catch (const std::exception& e) {
    warnings.push_back(fmt::format("magnitudes unavailable: {}", e.what()));
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    warnings.push_back(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
    return warnings;
  }
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto path = dir / fmt::format("layer_{}.svg", l);
    std::ofstream out(path, std::ios::binary);
    const std::span<const double> l1 =
        l < traces.size() ? std::span<const double>(traces[l].edge_l1) : std::span<const double>();
    out << layer_svg(net, l, l1);
    if (!out) warnings.push_back(fmt::format("failed to write {}", path.string()));
  }
  return warnings;
}

}  // namespace kan
