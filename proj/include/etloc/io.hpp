#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "etloc/types.hpp"

namespace etloc::io {

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);
// Strict full-string parse; nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);
// Creates parent directories as needed.
void write_text_file(const std::filesystem::path& path, std::string_view content);

// Splits on ',' without trimming.
std::vector<std::string_view> split_csv_line(std::string_view line);
// Splits into lines on '\n'; a trailing '\r' is stripped from each line.
std::vector<std::string_view> split_lines(std::string_view text);

// heatmap.csv: "# width height" then height lines of width values.
std::string heatmap_to_csv(const Heatmap& map);
Heatmap heatmap_from_csv(std::string_view text, const std::string& source);
// 8-bit plain PGM (P2) with values round(255 * v), clamped to [0, 255].
std::string heatmap_to_pgm(const Heatmap& map);

// grid.csv: n rows of n comma separated 0/1 values.
std::string grid_to_csv(const GridAnnotation& grid);
GridAnnotation grid_from_csv(std::string_view text, const std::string& source);

}  // namespace etloc::io
