#include "etloc/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "etloc/error.hpp"

namespace etloc::io {

std::string format_double(double value) {
  char buffer[64];
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  if (ec != std::errc()) throw InvalidArgument("cannot format double");
  return std::string(buffer, end);
}

std::optional<double> parse_double(std::string_view text) {
  if (text.empty()) return std::nullopt;
  // from_chars rejects a leading '+', which some writers emit.
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::optional<long long> parse_int(std::string_view text) {
  if (text.empty()) return std::nullopt;
  long long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    std::size_t stop = nl == std::string_view::npos ? text.size() : nl;
    std::string_view line = text.substr(start, stop - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return lines;
}

std::string heatmap_to_csv(const Heatmap& map) {
  std::string out = "# " + std::to_string(map.cols()) + " " + std::to_string(map.rows()) + "\n";
  for (Eigen::Index y = 0; y < map.rows(); ++y) {
    for (Eigen::Index x = 0; x < map.cols(); ++x) {
      if (x) out += ',';
      out += format_double(map(y, x));
    }
    out += '\n';
  }
  return out;
}

Heatmap heatmap_from_csv(std::string_view text, const std::string& source) {
  auto lines = split_lines(text);
  if (lines.empty() || lines[0].substr(0, 2) != "# ")
    throw MalformedRow(source, 1, 1, "expected '# width height' header");
  std::string_view header = lines[0].substr(2);
  std::size_t space = header.find(' ');
  auto width = space == std::string_view::npos ? std::nullopt : parse_int(header.substr(0, space));
  auto height = space == std::string_view::npos ? std::nullopt : parse_int(header.substr(space + 1));
  if (!width || !height || *width <= 0 || *height <= 0)
    throw MalformedRow(source, 1, 3, "bad dimensions");
  if (static_cast<long long>(lines.size()) < *height + 1)
    throw MalformedRow(source, lines.size() + 1, 1, "missing rows");
  Heatmap map(*height, *width);
  for (long long y = 0; y < *height; ++y) {
    auto fields = split_csv_line(lines[y + 1]);
    if (static_cast<long long>(fields.size()) != *width)
      throw MalformedRow(source, y + 2, 1, "expected " + std::to_string(*width) + " values");
    for (long long x = 0; x < *width; ++x) {
      auto value = parse_double(fields[x]);
      if (!value) throw MalformedRow(source, y + 2, x + 1, "not a number");
      map(y, x) = *value;
    }
  }
  return map;
}

std::string heatmap_to_pgm(const Heatmap& map) {
  std::string out = "P2\n" + std::to_string(map.cols()) + " " + std::to_string(map.rows()) + "\n255\n";
  for (Eigen::Index y = 0; y < map.rows(); ++y) {
    for (Eigen::Index x = 0; x < map.cols(); ++x) {
      if (x) out += ' ';
      double v = std::clamp(std::round(255.0 * map(y, x)), 0.0, 255.0);
      out += std::to_string(static_cast<int>(v));
    }
    out += '\n';
  }
  return out;
}

std::string grid_to_csv(const GridAnnotation& grid) {
  std::string out;
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    for (Eigen::Index c = 0; c < grid.cols(); ++c) {
      if (c) out += ',';
      out += grid(r, c) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

GridAnnotation grid_from_csv(std::string_view text, const std::string& source) {
  auto lines = split_lines(text);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw MalformedRow(source, 1, 1, "empty grid");
  const auto n = static_cast<Eigen::Index>(lines.size());
  GridAnnotation grid(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    auto fields = split_csv_line(lines[r]);
    if (static_cast<Eigen::Index>(fields.size()) != n)
      throw MalformedRow(source, r + 1, 1, "grid must be square");
    for (Eigen::Index c = 0; c < n; ++c) {
      if (fields[c] == "1") {
        grid(r, c) = true;
      } else if (fields[c] == "0") {
        grid(r, c) = false;
      } else {
        throw MalformedRow(source, r + 1, c + 1, "expected 0 or 1");
      }
    }
  }
  return grid;
}

}  // namespace etloc::io
