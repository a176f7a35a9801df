#pragma once

// Internal: JSON parsing with syntax errors pinned to a line and column.

#include <string>
#include <string_view>
#include <utility>

#include <nlohmann/json.hpp>

#include "etloc/error.hpp"

namespace etloc::detail {

// Byte offset -> 1-based (line, column).
inline std::pair<std::size_t, std::size_t> locate(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  std::size_t line = 1, column = 1;
  for (std::size_t i = 0; i < offset; ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

inline nlohmann::json parse_json(std::string_view text, const std::string& source) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    auto [line, column] = locate(text, e.byte == 0 ? 0 : e.byte - 1);
    throw MalformedRow(source, line, column, "invalid JSON");
  }
}

}  // namespace etloc::detail
