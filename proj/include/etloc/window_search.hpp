#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "etloc/gaze_heatmap.hpp"
#include "etloc/ingest.hpp"
#include "etloc/labeler.hpp"

namespace etloc {

enum class StartRule {
  MentionSentenceMinusTimeClampedPrev,
  FirstMentionMinusTimeClampedPrev,
  EndSentenceMinusTimeClampedPrev,
  FirstReportSentence,
  PrevSentenceStart,
  PrevSentenceEnd,
  MentionSentenceStart,
  RecordingStart,
};

enum class EndRule { MentionSentenceStart, MentionSentenceEnd, FirstMentionEnd, LastMentionEnd };

inline constexpr std::array<StartRule, 8> kAllStartRules = {
    StartRule::MentionSentenceMinusTimeClampedPrev, StartRule::FirstMentionMinusTimeClampedPrev,
    StartRule::EndSentenceMinusTimeClampedPrev,     StartRule::FirstReportSentence,
    StartRule::PrevSentenceStart,                   StartRule::PrevSentenceEnd,
    StartRule::MentionSentenceStart,                StartRule::RecordingStart,
};
inline constexpr std::array<EndRule, 4> kAllEndRules = {
    EndRule::MentionSentenceStart, EndRule::MentionSentenceEnd, EndRule::FirstMentionEnd,
    EndRule::LastMentionEnd};

inline constexpr std::array<double, 3> kStage1Delays = {2.5, 5.0, 7.5};
inline constexpr std::array<double, 13> kStage2Delays = {0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0,
                                                         2.5, 3.0, 3.5, 4.0, 4.5, 5.0};

constexpr bool takes_delay(StartRule rule) {
  return rule == StartRule::MentionSentenceMinusTimeClampedPrev ||
         rule == StartRule::FirstMentionMinusTimeClampedPrev ||
         rule == StartRule::EndSentenceMinusTimeClampedPrev;
}

std::string_view start_rule_name(StartRule rule);
std::string_view end_rule_name(EndRule rule);
std::optional<StartRule> parse_start_rule(std::string_view name);
std::optional<EndRule> parse_end_rule(std::string_view name);

struct WindowSpec {
  StartRule start_rule = StartRule::MentionSentenceMinusTimeClampedPrev;
  double time_delay = 0.0;  // used by the clamped rules only
  EndRule end_rule = EndRule::LastMentionEnd;

  std::string to_string() const;
  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

// Start rules x delays (clamped rules only) x end rules, in enumeration order.
std::vector<WindowSpec> enumerate_candidates(std::span<const double> delays);

// Window of a mention under `spec`; nullopt when its duration is negative.
std::optional<TimeWindow> spec_window(const WindowSpec& spec, const LabelMention& mention,
                                      std::span<const Sentence> sentences,
                                      double recording_start);

// A session with its labeler output and ground-truth ellipses.
struct SearchSession {
  Session session;
  ReportLabels labels;
  std::vector<EllipseAnnotation> ellipses;
  // Rasterized ellipses per label; absent for labels without an ellipse.
  std::array<std::optional<BinaryMask>, kNumLabels> masks;
};

SearchSession make_search_session(Session session, std::vector<EllipseAnnotation> ellipses,
                                  const RuleSet& rules);

struct SearchData {
  // Thresholds are validated on `calibration`; IoU is reported on `evaluation`.
  std::vector<SearchSession> calibration;
  std::vector<SearchSession> evaluation;
};

// Splits sessions alternately (even positions calibrate, odd evaluate).
SearchData split_search_data(std::vector<SearchSession> sessions);

struct SpecScore {
  WindowSpec spec;
  double mean_iou = 0.0;
  std::size_t n_mentions = 0;   // evaluation mentions
  std::size_t n_discarded = 0;  // of which had a negative-duration window
  std::array<std::optional<double>, kNumLabels> thresholds;
};

struct ScoreOptions {
  RenderConfig render;
  std::vector<double> thresholds = {};  // empty: the default 101-point sweep
  // When set, skip validation and binarize every label at this value.
  std::optional<double> fixed_threshold;
  // Threshold for labels without calibration mentions.
  double fallback_threshold = 0.15;
  int jobs = 1;
};

// Mean IoU over every positive mention with a ground-truth ellipse of its
// label, against that label's ellipse mask. Mentions whose window has
// negative duration score 0.
SpecScore score_spec(const WindowSpec& spec, const SearchData& data, const ScoreOptions& options);

struct RankedSpec {
  SpecScore score;
  std::size_t rank = 0;  // 1-based
};

// Descending mean IoU; ties keep enumeration order.
std::vector<RankedSpec> rank_specs(std::span<const WindowSpec> specs, const SearchData& data,
                                   const ScoreOptions& options);

struct SearchResult {
  std::vector<RankedSpec> ranking;
  // Stage 2: the stage-1 ranking its rule shape came from.
  std::vector<RankedSpec> stage1;
};

// Stage 1 ranks the full cross product over the coarse delays. Stage 2 runs
// stage 1, keeps the best-ranked rule shape that takes a delay, and sweeps
// the fine delay grid for it.
SearchResult search(int stage, const SearchData& data, const ScoreOptions& options);

std::string search_report_csv(std::span<const RankedSpec> ranking);

}  // namespace etloc
