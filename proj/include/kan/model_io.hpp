#pragma once

#include <filesystem>
#include <json.hpp>

#include "kan/network.hpp"

namespace kan {

inline constexpr int kModelFormatVersion = 1;

/// Serializes the network. `metadata` is stored verbatim under "metadata".
nlohmann::json save_model(const KanNetwork& net, const nlohmann::json& metadata = nullptr);

/// Parses a model document. Violations raise SchemaError whose path() is a
/// JSON pointer into the document. Unknown basis ids and dimension
/// mismatches are schema violations too.
KanNetwork load_model(const nlohmann::json& doc, nlohmann::json* metadata = nullptr);

void write_model_file(const std::filesystem::path& path, const KanNetwork& net,
                      const nlohmann::json& metadata = nullptr);
KanNetwork read_model_file(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

}  // namespace kan
