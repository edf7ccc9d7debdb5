#pragma once

#include <cstddef>
#include <functional>

namespace kan::detail {

/// Rows per work unit. Fixed so reductions never depend on thread count.
inline constexpr std::size_t kChunkRows = 2048;

inline std::size_t chunk_count(std::size_t rows) { return (rows + kChunkRows - 1) / kChunkRows; }

/// Runs fn(c) for every chunk index c in [0, n). Exceptions are rethrown on
/// the caller's thread, lowest chunk index first.
void for_each_chunk(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace kan::detail
