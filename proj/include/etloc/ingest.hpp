#pragma once

#include <exception>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "etloc/error.hpp"
#include "etloc/types.hpp"

namespace etloc {

// A gaze fixation in original-image pixels (origin top-left).
struct FixationRecord {
  double x = 0.0;
  double y = 0.0;
  double t_start = 0.0;
  double t_end = 0.0;

  double duration() const { return t_end - t_start; }
  friend bool operator==(const FixationRecord&, const FixationRecord&) = default;
};

struct TimedWord {
  std::string text;  // lowercased token
  double t_start = 0.0;
  double t_end = 0.0;

  friend bool operator==(const TimedWord&, const TimedWord&) = default;
};

struct Sentence {
  std::size_t index = 0;
  std::vector<TimedWord> words;

  double t_start() const { return words.empty() ? 0.0 : words.front().t_start; }
  double t_end() const { return words.empty() ? 0.0 : words.back().t_end; }
  friend bool operator==(const Sentence&, const Sentence&) = default;
};

// One CXR reading. All times share the clock of `recording_start`.
struct Session {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<FixationRecord> fixations;
  std::vector<Sentence> sentences;
  double recording_start = 0.0;

  friend bool operator==(const Session&, const Session&) = default;
};

struct EllipseAnnotation {
  LabelId label = LabelId::AMC;
  double cx = 0.0;
  double cy = 0.0;
  double rx = 0.0;
  double ry = 0.0;

  friend bool operator==(const EllipseAnnotation&, const EllipseAnnotation&) = default;
};

struct SessionMeta {
  std::string image_id;
  int width = 0;
  int height = 0;
  double recording_start = 0.0;
};

// Lenient fixation parse: every data row ends up either in `records` or in
// `errors`, never dropped.
struct FixationParse {
  std::vector<FixationRecord> records;
  std::vector<std::exception_ptr> errors;
  std::size_t data_rows = 0;
};

FixationParse parse_fixations(std::string_view csv, const SessionMeta& meta,
                              const std::string& source = "fixations.csv");
SessionMeta parse_meta(std::string_view json, const std::string& source = "meta.json");
std::vector<Sentence> parse_transcript(std::string_view json,
                                       const std::string& source = "transcript.json");
std::vector<EllipseAnnotation> parse_ellipses(std::string_view csv,
                                              const std::string& source = "ellipses.csv");

// Throws the first error found (MalformedRow, NonMonotonicTime,
// OutOfBoundsFixation, IoError).
Session load_session(const std::filesystem::path& fixations_path,
                     const std::filesystem::path& transcript_path,
                     const std::filesystem::path& meta_path);
// Loads fixations.csv, transcript.json and meta.json from one directory.
Session load_session_dir(const std::filesystem::path& dir);

// Result is sorted (stably) by label.
std::vector<EllipseAnnotation> load_ellipses(const std::filesystem::path& path);

std::string fixations_to_csv(const std::vector<FixationRecord>& fixations);
std::string transcript_to_json(const std::vector<Sentence>& sentences);
std::string meta_to_json(const Session& session);
std::string ellipses_to_csv(const std::vector<EllipseAnnotation>& ellipses);

// Writes fixations.csv, transcript.json and meta.json into `dir`.
void save_session_dir(const Session& session, const std::filesystem::path& dir);

}  // namespace etloc
