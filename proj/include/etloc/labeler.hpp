#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "etloc/ingest.hpp"
#include "etloc/types.hpp"

namespace etloc {

enum class Polarity { Positive, Negative, Uncertain };
std::string_view polarity_name(Polarity polarity);

// A non-empty sequence of lowercase tokens.
using Phrase = std::vector<std::string>;

// Rules for one raw label (a label name as used by the source datasets).
struct LabelRule {
  std::string name;
  std::vector<Phrase> match;
  std::vector<Phrase> unmatch;
  std::vector<Phrase> negation_pre;
  std::vector<Phrase> negation_post;
  std::vector<Phrase> uncertain;
};

// Raw label name (lowercase) -> study labels it contributes to.
using LabelGrouping = std::map<std::string, std::vector<LabelId>>;

struct RuleSet {
  std::vector<LabelRule> labels;
  int negation_window = 6;
  LabelGrouping grouping;
  // Tokens that close a negation or uncertainty scope ("but", "however").
  std::vector<Phrase> scope_terminators;

  // Throws InvalidRules.
  void validate() const;

  // The built-in rule table covering every raw label of the study grouping.
  static RuleSet defaults();
  // rules.json; throws InvalidRules or MalformedRow.
  static RuleSet from_json(std::string_view text, const std::string& source = "rules.json");
  std::string to_json() const;
};

struct Token {
  std::string text;
  double t_start = 0.0;
  double t_end = 0.0;
};

// Lowercases, splits on whitespace and punctuation, drops punctuation. Tokens
// split from one timed word inherit its timestamps.
std::vector<Token> tokenize(const Sentence& sentence);
std::vector<std::string> tokenize_text(std::string_view text);

// Half-open token range [begin, end).
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct LabelMention {
  LabelId label = LabelId::AMC;
  std::size_t sentence_index = 0;
  Polarity polarity = Polarity::Positive;
  // End times of the first and last span of this label in the sentence.
  double t_first_mention_end = 0.0;
  double t_last_mention_end = 0.0;
  TokenSpan matched_span;
  std::string raw_label;

  friend bool operator==(const LabelMention&, const LabelMention&) = default;
};

// One mention per (study label, disjoint span), ordered by span start then
// label.
std::vector<LabelMention> detect_mentions(const Sentence& sentence, const RuleSet& rules);

// Throws UnknownRawLabel.
std::vector<LabelId> group_labels(std::string_view raw_label, const LabelGrouping& grouping);

enum class UncertainPolicy { AsPositive, AsNegative };

struct ImageLabel {
  // Positive or Negative; a label never mentioned is Negative.
  Polarity polarity = Polarity::Negative;
  // Every mention counted as positive under the uncertainty policy.
  std::vector<LabelMention> mentions;
};

using ReportLabels = std::array<ImageLabel, kNumLabels>;

ReportLabels label_report(const Session& session, const RuleSet& rules,
                          UncertainPolicy policy = UncertainPolicy::AsPositive);
LabelSet positive_labels(const ReportLabels& report);

struct DetectionScore {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  // Absent when the denominator is zero.
  std::optional<double> recall;
  std::optional<double> precision;
};

// Image-level evaluation keyed by image id; throws CorpusMismatch when the
// key sets differ.
std::array<DetectionScore, kNumLabels> evaluate_labeler(
    const std::map<std::string, LabelSet>& predictions,
    const std::map<std::string, LabelSet>& gold);

}  // namespace etloc
