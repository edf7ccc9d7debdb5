#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kan/network.hpp"

namespace kan {

/// SVG 1.1 document with one panel per edge of layer `l`. Each curve is
/// sampled at 200 points over the grid domain; stroke opacity is the edge's
/// L1 magnitude divided by the largest in the layer.
std::string layer_svg(const KanNetwork& net, std::size_t l, std::span<const double> edge_l1);

/// Writes dir/layer_<l>.svg for every layer, with magnitudes measured on
/// `raw_inputs`. Problems are returned as warnings instead of thrown.
std::vector<std::string> write_layer_plots(const KanNetwork& net, std::span<const double> raw_inputs,
                                           std::size_t rows, const std::filesystem::path& dir);

}  // namespace kan
