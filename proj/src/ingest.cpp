#include "etloc/ingest.hpp"

#include <algorithm>
#include <cctype>

#include <nlohmann/json.hpp>

#include "etloc/io.hpp"
#include "json_parse.hpp"

namespace etloc {

namespace {

using nlohmann::json;

std::string lowercase(std::string text) {
  std::transform(text.begin(), text.end(), text.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return text;
}

using detail::parse_json;

// JSON shape errors carry no useful column; they are reported at line 0.
[[noreturn]] void shape_error(const std::string& source, const std::string& what) {
  throw MalformedRow(source, 0, 0, what);
}

double require_number(const json& node, const char* key, const std::string& source,
                      const std::string& where) {
  if (!node.is_object() || !node.contains(key) || !node[key].is_number())
    shape_error(source, where + ": '" + key + "' must be a number");
  return node[key].get<double>();
}

std::size_t field_column(const std::vector<std::string_view>& fields, std::size_t index) {
  std::size_t column = 1;
  for (std::size_t i = 0; i < index; ++i) column += fields[i].size() + 1;
  return column;
}

// Data lines of a CSV after the header; trailing empty lines are ignored.
std::vector<std::string_view> csv_body(std::string_view text, std::string_view header,
                                       const std::string& source) {
  auto lines = io::split_lines(text);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty() || lines.front() != header)
    throw MalformedRow(source, 1, 1, "expected header '" + std::string(header) + "'");
  lines.erase(lines.begin());
  return lines;
}

}  // namespace

FixationParse parse_fixations(std::string_view csv, const SessionMeta& meta,
                              const std::string& source) {
  FixationParse result;
  auto lines = csv_body(csv, "x,y,t_start,t_end", source);
  result.data_rows = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 2;
    auto fields = io::split_csv_line(lines[i]);
    if (fields.size() != 4) {
      result.errors.push_back(std::make_exception_ptr(MalformedRow(source, line_no, 1, "expected 4 fields")));
      continue;
    }
    double values[4];
    bool ok = true;
    for (std::size_t f = 0; f < 4 && ok; ++f) {
      auto v = io::parse_double(fields[f]);
      if (!v || !std::isfinite(*v)) {
        result.errors.push_back(std::make_exception_ptr(
            MalformedRow(source, line_no, field_column(fields, f), "not a finite number")));
        ok = false;
      } else {
        values[f] = *v;
      }
    }
    if (!ok) continue;
    FixationRecord fix{values[0], values[1], values[2], values[3]};
    const std::string where = source + ":" + std::to_string(line_no);
    if (!(fix.t_end > fix.t_start) || fix.t_start < meta.recording_start) {
      result.errors.push_back(
          std::make_exception_ptr(NonMonotonicTime(where + ": fixation times out of order")));
    } else if (fix.x < 0.0 || fix.x >= meta.width || fix.y < 0.0 || fix.y >= meta.height) {
      result.errors.push_back(
          std::make_exception_ptr(OutOfBoundsFixation(where + ": fixation outside image")));
    } else {
      result.records.push_back(fix);
    }
  }
  return result;
}

SessionMeta parse_meta(std::string_view text, const std::string& source) {
  json doc = parse_json(text, source);
  if (!doc.is_object() || !doc.contains("image_id") || !doc["image_id"].is_string())
    shape_error(source, "'image_id' must be a string");
  SessionMeta meta;
  meta.image_id = doc["image_id"].get<std::string>();
  for (const char* key : {"width", "height"}) {
    if (!doc.contains(key) || !doc[key].is_number_integer() || doc[key].get<long long>() <= 0)
      shape_error(source, std::string("'") + key + "' must be a positive integer");
  }
  meta.width = doc["width"].get<int>();
  meta.height = doc["height"].get<int>();
  meta.recording_start = require_number(doc, "recording_start", source, "meta");
  return meta;
}

std::vector<Sentence> parse_transcript(std::string_view text, const std::string& source) {
  json doc = parse_json(text, source);
  if (!doc.is_object() || !doc.contains("sentences") || !doc["sentences"].is_array())
    shape_error(source, "'sentences' must be an array");
  std::vector<Sentence> sentences;
  for (const json& raw_sentence : doc["sentences"]) {
    const std::size_t index = sentences.size();
    if (!raw_sentence.is_array()) shape_error(source, "sentence " + std::to_string(index) + " is not an array");
    Sentence sentence{index, {}};
    for (const json& raw_word : raw_sentence) {
      const std::string where =
          "sentence " + std::to_string(index) + " word " + std::to_string(sentence.words.size());
      if (!raw_word.is_object() || !raw_word.contains("text") || !raw_word["text"].is_string())
        shape_error(source, where + ": 'text' must be a string");
      TimedWord word{lowercase(raw_word["text"].get<std::string>()),
                     require_number(raw_word, "t_start", source, where),
                     require_number(raw_word, "t_end", source, where)};
      if (word.t_end < word.t_start)
        throw NonMonotonicTime(source + ": " + where + ": t_end before t_start");
      if (!sentence.words.empty() && word.t_start < sentence.words.back().t_start)
        throw NonMonotonicTime(source + ": " + where + ": word starts before its predecessor");
      sentence.words.push_back(std::move(word));
    }
    if (!sentence.words.empty()) {
      for (auto it = sentences.rbegin(); it != sentences.rend(); ++it) {
        if (it->words.empty()) continue;
        if (sentence.t_start() < it->t_end())
          throw NonMonotonicTime(source + ": sentence " + std::to_string(index) +
                                 " overlaps an earlier sentence");
        break;
      }
    }
    sentences.push_back(std::move(sentence));
  }
  return sentences;
}

std::vector<EllipseAnnotation> parse_ellipses(std::string_view csv, const std::string& source) {
  auto lines = csv_body(csv, "label,cx,cy,rx,ry", source);
  std::vector<EllipseAnnotation> ellipses;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 2;
    auto fields = io::split_csv_line(lines[i]);
    if (fields.size() != 5) throw MalformedRow(source, line_no, 1, "expected 5 fields");
    auto label = parse_label(fields[0]);
    if (!label) throw MalformedRow(source, line_no, 1, "unknown label '" + std::string(fields[0]) + "'");
    double values[4];
    for (std::size_t f = 0; f < 4; ++f) {
      auto v = io::parse_double(fields[f + 1]);
      if (!v || !std::isfinite(*v))
        throw MalformedRow(source, line_no, field_column(fields, f + 1), "not a finite number");
      values[f] = *v;
    }
    if (!(values[2] > 0.0) || !(values[3] > 0.0))
      throw NonPositiveRadius(source + ":" + std::to_string(line_no) + ": radii must be positive");
    ellipses.push_back({*label, values[0], values[1], values[2], values[3]});
  }
  std::stable_sort(ellipses.begin(), ellipses.end(),
                   [](const auto& a, const auto& b) { return a.label < b.label; });
  return ellipses;
}

Session load_session(const std::filesystem::path& fixations_path,
                     const std::filesystem::path& transcript_path,
                     const std::filesystem::path& meta_path) {
  SessionMeta meta = parse_meta(io::read_text_file(meta_path), meta_path.string());
  std::vector<Sentence> sentences =
      parse_transcript(io::read_text_file(transcript_path), transcript_path.string());
  FixationParse fixations =
      parse_fixations(io::read_text_file(fixations_path), meta, fixations_path.string());
  if (!fixations.errors.empty()) std::rethrow_exception(fixations.errors.front());
  return Session{std::move(meta.image_id), meta.width,  meta.height,
                 std::move(fixations.records), std::move(sentences), meta.recording_start};
}

Session load_session_dir(const std::filesystem::path& dir) {
  return load_session(dir / "fixations.csv", dir / "transcript.json", dir / "meta.json");
}

std::vector<EllipseAnnotation> load_ellipses(const std::filesystem::path& path) {
  return parse_ellipses(io::read_text_file(path), path.string());
}

std::string fixations_to_csv(const std::vector<FixationRecord>& fixations) {
  std::string out = "x,y,t_start,t_end\n";
  for (const auto& f : fixations) {
    out += io::format_double(f.x) + ',' + io::format_double(f.y) + ',' +
           io::format_double(f.t_start) + ',' + io::format_double(f.t_end) + '\n';
  }
  return out;
}

std::string transcript_to_json(const std::vector<Sentence>& sentences) {
  json doc = {{"sentences", json::array()}};
  for (const auto& sentence : sentences) {
    json words = json::array();
    for (const auto& w : sentence.words)
      words.push_back({{"text", w.text}, {"t_start", w.t_start}, {"t_end", w.t_end}});
    doc["sentences"].push_back(std::move(words));
  }
  return doc.dump() + "\n";
}

std::string meta_to_json(const Session& session) {
  json doc = {{"image_id", session.image_id},
              {"width", session.width},
              {"height", session.height},
              {"recording_start", session.recording_start}};
  return doc.dump() + "\n";
}

std::string ellipses_to_csv(const std::vector<EllipseAnnotation>& ellipses) {
  std::string out = "label,cx,cy,rx,ry\n";
  for (const auto& e : ellipses) {
    out += std::string(label_name(e.label)) + ',' + io::format_double(e.cx) + ',' +
           io::format_double(e.cy) + ',' + io::format_double(e.rx) + ',' +
           io::format_double(e.ry) + '\n';
  }
  return out;
}

void save_session_dir(const Session& session, const std::filesystem::path& dir) {
  io::write_text_file(dir / "fixations.csv", fixations_to_csv(session.fixations));
  io::write_text_file(dir / "transcript.json", transcript_to_json(session.sentences));
  io::write_text_file(dir / "meta.json", meta_to_json(session));
}

}  // namespace etloc
