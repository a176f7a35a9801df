#include "etloc/labeler.hpp"

#include <algorithm>
#include <cctype>

#include <nlohmann/json.hpp>

#include "json_parse.hpp"

#include "etloc/error.hpp"

namespace etloc {

namespace {

using nlohmann::json;

Phrase P(std::string_view text) { return tokenize_text(text); }

std::vector<Phrase> phrases(std::initializer_list<std::string_view> texts) {
  std::vector<Phrase> out;
  for (auto t : texts) out.push_back(P(t));
  return out;
}

// Occurrences of `phrase` in `tokens`, as spans.
void find_all(const std::vector<Token>& tokens, const Phrase& phrase,
              std::vector<TokenSpan>& out) {
  if (phrase.empty() || phrase.size() > tokens.size()) return;
  for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i) {
    bool hit = true;
    for (std::size_t k = 0; k < phrase.size() && hit; ++k) hit = tokens[i + k].text == phrase[k];
    if (hit) out.push_back({i, i + phrase.size()});
  }
}

std::vector<TokenSpan> find_all(const std::vector<Token>& tokens,
                                const std::vector<Phrase>& list) {
  std::vector<TokenSpan> out;
  for (const auto& phrase : list) find_all(tokens, phrase, out);
  return out;
}

bool overlaps(TokenSpan a, TokenSpan b) { return a.begin < b.end && b.begin < a.end; }

// Leftmost-longest selection of pairwise disjoint spans.
std::vector<TokenSpan> select_disjoint(std::vector<TokenSpan> spans) {
  std::sort(spans.begin(), spans.end(), [](TokenSpan a, TokenSpan b) {
    if (a.begin != b.begin) return a.begin < b.begin;
    return a.end > b.end;
  });
  std::vector<TokenSpan> kept;
  for (TokenSpan s : spans) {
    if (kept.empty() || kept.back().end <= s.begin) kept.push_back(s);
  }
  return kept;
}

bool terminated(const std::vector<TokenSpan>& terminators, std::size_t from, std::size_t to) {
  return std::any_of(terminators.begin(), terminators.end(),
                     [&](TokenSpan t) { return t.begin >= from && t.end <= to; });
}

// True if a cue ends within `window` tokens before `target`, or starts within
// `window` tokens after it, with no scope terminator in between.
bool scoped_before(const std::vector<TokenSpan>& cues, TokenSpan target, int window,
                   const std::vector<TokenSpan>& terminators) {
  for (TokenSpan cue : cues) {
    if (cue.end > target.begin) continue;
    if (target.begin - cue.end >= static_cast<std::size_t>(window)) continue;
    if (!terminated(terminators, cue.end, target.begin)) return true;
  }
  return false;
}

bool scoped_after(const std::vector<TokenSpan>& cues, TokenSpan target, int window,
                  const std::vector<TokenSpan>& terminators) {
  for (TokenSpan cue : cues) {
    if (cue.begin < target.end) continue;
    if (cue.begin - target.end >= static_cast<std::size_t>(window)) continue;
    if (!terminated(terminators, target.end, cue.begin)) return true;
  }
  return false;
}

std::vector<Phrase> parse_phrase_list(const json& node, const std::string& where) {
  if (!node.is_array()) throw InvalidRules(where + " must be an array of token lists");
  std::vector<Phrase> out;
  for (const json& raw : node) {
    if (!raw.is_array()) throw InvalidRules(where + " entries must be token lists");
    Phrase phrase;
    for (const json& tok : raw) {
      if (!tok.is_string()) throw InvalidRules(where + " tokens must be strings");
      phrase.push_back(tok.get<std::string>());
    }
    out.push_back(std::move(phrase));
  }
  return out;
}

std::string lowercase(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string_view polarity_name(Polarity polarity) {
  switch (polarity) {
    case Polarity::Positive:
      return "positive";
    case Polarity::Negative:
      return "negative";
    case Polarity::Uncertain:
      return "uncertain";
  }
  return "?";
}

std::vector<std::string> tokenize_text(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    // Bytes >= 0x80 are kept so UTF-8 words stay intact.
    if (std::isalnum(c) || c >= 0x80) {
      current += static_cast<char>(std::tolower(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<Token> tokenize(const Sentence& sentence) {
  std::vector<Token> tokens;
  for (const auto& word : sentence.words) {
    for (auto& text : tokenize_text(word.text))
      tokens.push_back({std::move(text), word.t_start, word.t_end});
  }
  return tokens;
}

void RuleSet::validate() const {
  if (negation_window < 1) throw InvalidRules("negation_window must be >= 1");
  auto check = [](const std::vector<Phrase>& list, const std::string& where) {
    for (const auto& phrase : list) {
      if (phrase.empty()) throw InvalidRules(where + ": empty phrase");
      for (const auto& token : phrase) {
        if (token.empty() || tokenize_text(token) != std::vector<std::string>{token})
          throw InvalidRules(where + ": '" + token + "' is not a lowercase token");
      }
    }
  };
  for (const auto& rule : labels) {
    if (rule.name.empty()) throw InvalidRules("rule with empty name");
    if (rule.match.empty()) throw InvalidRules(rule.name + ": no match phrases");
    check(rule.match, rule.name + ".match");
    check(rule.unmatch, rule.name + ".unmatch");
    check(rule.negation_pre, rule.name + ".negation_pre");
    check(rule.negation_post, rule.name + ".negation_post");
    check(rule.uncertain, rule.name + ".uncertain");
    auto it = grouping.find(lowercase(rule.name));
    if (it == grouping.end() || it->second.empty())
      throw InvalidRules(rule.name + ": raw label has no grouping entry");
  }
  check(scope_terminators, "scope_terminators");
}

RuleSet RuleSet::defaults() {
  const auto neg_pre = phrases({"no", "without", "no evidence of", "negative for", "free of",
                                "resolution of", "absence of"});
  const auto neg_post = phrases({"not seen", "is absent", "has resolved", "not identified"});
  const auto unc = phrases({"possible", "possibly", "may represent", "questionable",
                            "suspicious for", "cannot be excluded"});
  auto rule = [&](std::string name, std::initializer_list<std::string_view> match,
                  std::initializer_list<std::string_view> unmatch = {}) {
    return LabelRule{std::move(name), phrases(match), phrases(unmatch), neg_pre, neg_post, unc};
  };

  RuleSet rules;
  rules.labels = {
      rule("abnormal mediastinal contour",
           {"abnormal mediastinal contour", "widened mediastinum", "mediastinal widening"}),
      rule("enlarged cardiomediastinum",
           {"enlarged cardiomediastinum", "cardiomediastinal enlargement"}),
      rule("enlarged cardiac silhouette", {"enlarged cardiac silhouette", "enlarged heart"}),
      rule("cardiomegaly", {"cardiomegaly"}),
      rule("atelectasis", {"atelectasis", "atelectatic", "collapse"}, {"vertebral collapse"}),
      rule("consolidation", {"consolidation", "consolidative", "airspace disease"}),
      rule("pulmonary edema", {"pulmonary edema", "pulmonary vascular congestion"}),
      rule("edema", {"edema"}, {"soft tissue edema", "subcutaneous edema"}),
      rule("fracture", {"fracture", "fractures", "fractured"}),
      rule("acute fracture", {"acute fracture"}),
      rule("lung nodule or mass", {"nodule", "nodules", "mass"}, {"mass effect"}),
      rule("lung lesion", {"lung lesion", "lesion"}),
      rule("groundglass opacity", {"groundglass", "ground glass"}),
      rule("interstitial lung disease", {"interstitial lung disease", "interstitial markings"}),
      rule("pneumonia", {"pneumonia"}),
      rule("lung opacity", {"opacity", "opacities", "opacification"}),
      rule("pleural abnormality", {"pleural abnormality"}),
      rule("pleural other", {"pleural thickening", "pleural plaque"}),
      rule("pleural effusion", {"pleural effusion", "effusion", "effusions"},
           {"pericardial effusion"}),
      rule("pneumothorax", {"pneumothorax", "ptx"}),
  };
  using L = LabelId;
  rules.grouping = {
      {"abnormal mediastinal contour", {L::AMC}},
      {"enlarged cardiomediastinum", {L::AMC}},
      {"atelectasis", {L::Atelectasis, L::Opacity}},
      {"enlarged cardiac silhouette", {L::ECS}},
      {"cardiomegaly", {L::ECS}},
      {"consolidation", {L::Consolidation, L::Opacity}},
      {"pulmonary edema", {L::Edema, L::Opacity}},
      {"edema", {L::Edema, L::Opacity}},
      {"fracture", {L::Fracture}},
      {"acute fracture", {L::Fracture}},
      {"lung nodule or mass", {L::LungLesion, L::Opacity}},
      {"lung lesion", {L::LungLesion}},
      {"groundglass opacity", {L::Opacity}},
      {"interstitial lung disease", {L::Opacity}},
      {"pneumonia", {L::Opacity}},
      {"lung opacity", {L::Opacity}},
      {"pleural abnormality", {L::PleuralAbnormality}},
      {"pleural other", {L::PleuralAbnormality}},
      {"pleural effusion", {L::PleuralAbnormality}},
      {"pneumothorax", {L::Pneumothorax}},
  };
  rules.scope_terminators = phrases({"but", "however"});
  return rules;
}

RuleSet RuleSet::from_json(std::string_view text, const std::string& source) {
  json doc = detail::parse_json(text, source);
  if (!doc.is_object() || !doc.contains("labels") || !doc["labels"].is_array())
    throw InvalidRules(source + ": 'labels' must be an array");
  RuleSet rules;
  for (const json& raw : doc["labels"]) {
    if (!raw.is_object() || !raw.contains("name") || !raw["name"].is_string())
      throw InvalidRules(source + ": each label needs a 'name'");
    LabelRule rule;
    rule.name = raw["name"].get<std::string>();
    auto list = [&](const char* key) {
      return raw.contains(key) ? parse_phrase_list(raw[key], rule.name + "." + key)
                               : std::vector<Phrase>{};
    };
    rule.match = list("match");
    rule.unmatch = list("unmatch");
    rule.negation_pre = list("negation_pre");
    rule.negation_post = list("negation_post");
    rule.uncertain = list("uncertain");
    rules.labels.push_back(std::move(rule));
  }
  if (doc.contains("negation_window")) {
    if (!doc["negation_window"].is_number_integer())
      throw InvalidRules(source + ": 'negation_window' must be an integer");
    rules.negation_window = doc["negation_window"].get<int>();
  }
  if (doc.contains("grouping")) {
    if (!doc["grouping"].is_object()) throw InvalidRules(source + ": 'grouping' must be an object");
    for (const auto& [raw, targets] : doc["grouping"].items()) {
      if (!targets.is_array()) throw InvalidRules(source + ": grouping of '" + raw + "'");
      std::vector<LabelId> ids;
      for (const json& t : targets) {
        auto id = t.is_string() ? parse_label(t.get<std::string>()) : std::nullopt;
        if (!id) throw InvalidRules(source + ": grouping of '" + raw + "' names an unknown label");
        ids.push_back(*id);
      }
      rules.grouping[lowercase(raw)] = std::move(ids);
    }
  } else {
    // Rule names that are themselves study labels group to themselves.
    for (const auto& rule : rules.labels) {
      if (auto id = parse_label(rule.name)) rules.grouping[lowercase(rule.name)] = {*id};
    }
  }
  if (doc.contains("scope_terminators"))
    rules.scope_terminators = parse_phrase_list(doc["scope_terminators"], "scope_terminators");
  rules.validate();
  return rules;
}

std::string RuleSet::to_json() const {
  auto dump_list = [](const std::vector<Phrase>& list) {
    json out = json::array();
    for (const auto& p : list) out.push_back(p);
    return out;
  };
  json doc;
  doc["labels"] = json::array();
  for (const auto& rule : labels) {
    doc["labels"].push_back({{"name", rule.name},
                             {"match", dump_list(rule.match)},
                             {"unmatch", dump_list(rule.unmatch)},
                             {"negation_pre", dump_list(rule.negation_pre)},
                             {"negation_post", dump_list(rule.negation_post)},
                             {"uncertain", dump_list(rule.uncertain)}});
  }
  doc["negation_window"] = negation_window;
  json groups = json::object();
  for (const auto& [raw, ids] : grouping) {
    json names = json::array();
    for (LabelId id : ids) names.push_back(std::string(label_name(id)));
    groups[raw] = std::move(names);
  }
  doc["grouping"] = std::move(groups);
  doc["scope_terminators"] = dump_list(scope_terminators);
  return doc.dump(2) + "\n";
}

std::vector<LabelId> group_labels(std::string_view raw_label, const LabelGrouping& grouping) {
  auto it = grouping.find(lowercase(raw_label));
  if (it == grouping.end())
    throw UnknownRawLabel("'" + std::string(raw_label) + "' has no study-label grouping");
  return it->second;
}

std::vector<LabelMention> detect_mentions(const Sentence& sentence, const RuleSet& rules) {
  const std::vector<Token> tokens = tokenize(sentence);
  if (tokens.empty()) return {};
  const std::vector<TokenSpan> terminators = find_all(tokens, rules.scope_terminators);

  struct Candidate {
    TokenSpan span;
    Polarity polarity;
    const LabelRule* rule;
  };
  std::array<std::vector<Candidate>, kNumLabels> per_label;

  for (const LabelRule& rule : rules.labels) {
    const auto unmatched = find_all(tokens, rule.unmatch);
    const auto neg_pre = find_all(tokens, rule.negation_pre);
    const auto neg_post = find_all(tokens, rule.negation_post);
    const auto uncertain = find_all(tokens, rule.uncertain);
    const auto targets = group_labels(rule.name, rules.grouping);
    for (TokenSpan span : select_disjoint(find_all(tokens, rule.match))) {
      if (std::any_of(unmatched.begin(), unmatched.end(),
                      [&](TokenSpan u) { return overlaps(u, span); }))
        continue;
      Polarity polarity = Polarity::Positive;
      const int w = rules.negation_window;
      if (scoped_before(neg_pre, span, w, terminators) ||
          scoped_after(neg_post, span, w, terminators)) {
        polarity = Polarity::Negative;
      } else if (scoped_before(uncertain, span, w, terminators) ||
                 scoped_after(uncertain, span, w, terminators)) {
        polarity = Polarity::Uncertain;
      }
      for (LabelId id : targets) per_label[index_of(id)].push_back({span, polarity, &rule});
    }
  }

  std::vector<LabelMention> mentions;
  for (LabelId label : kAllLabels) {
    auto& candidates = per_label[index_of(label)];
    if (candidates.empty()) continue;
    // Raw labels grouped into the same study label may overlap ("pulmonary
    // edema" / "edema"); keep the leftmost-longest, first rule on ties.
    std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
      if (a.span.begin != b.span.begin) return a.span.begin < b.span.begin;
      return a.span.end > b.span.end;
    });
    std::vector<Candidate> kept;
    for (const auto& c : candidates) {
      if (kept.empty() || kept.back().span.end <= c.span.begin) kept.push_back(c);
    }
    const double first_end = tokens[kept.front().span.end - 1].t_end;
    const double last_end = tokens[kept.back().span.end - 1].t_end;
    for (const auto& c : kept) {
      mentions.push_back({label, sentence.index, c.polarity, first_end, last_end, c.span,
                          c.rule->name});
    }
  }
  std::stable_sort(mentions.begin(), mentions.end(), [](const auto& a, const auto& b) {
    if (a.matched_span.begin != b.matched_span.begin)
      return a.matched_span.begin < b.matched_span.begin;
    return a.label < b.label;
  });
  return mentions;
}

ReportLabels label_report(const Session& session, const RuleSet& rules, UncertainPolicy policy) {
  ReportLabels report;
  for (const auto& sentence : session.sentences) {
    for (auto& mention : detect_mentions(sentence, rules)) {
      const bool positive =
          mention.polarity == Polarity::Positive ||
          (mention.polarity == Polarity::Uncertain && policy == UncertainPolicy::AsPositive);
      if (!positive) continue;
      ImageLabel& entry = report[index_of(mention.label)];
      entry.polarity = Polarity::Positive;
      entry.mentions.push_back(std::move(mention));
    }
  }
  return report;
}

LabelSet positive_labels(const ReportLabels& report) {
  LabelSet set;
  for (LabelId label : kAllLabels)
    set[index_of(label)] = report[index_of(label)].polarity == Polarity::Positive;
  return set;
}

std::array<DetectionScore, kNumLabels> evaluate_labeler(
    const std::map<std::string, LabelSet>& predictions,
    const std::map<std::string, LabelSet>& gold) {
  if (predictions.size() != gold.size() ||
      !std::equal(predictions.begin(), predictions.end(), gold.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; }))
    throw CorpusMismatch("predictions and gold cover different images");
  std::array<DetectionScore, kNumLabels> scores;
  for (auto p = predictions.begin(), g = gold.begin(); p != predictions.end(); ++p, ++g) {
    for (int k = 0; k < kNumLabels; ++k) {
      const bool predicted = p->second[k], truth = g->second[k];
      if (predicted && truth) ++scores[k].true_positives;
      if (predicted && !truth) ++scores[k].false_positives;
      if (!predicted && truth) ++scores[k].false_negatives;
    }
  }
  for (auto& s : scores) {
    const auto tp = static_cast<double>(s.true_positives);
    if (s.true_positives + s.false_negatives > 0)
      s.recall = tp / static_cast<double>(s.true_positives + s.false_negatives);
    if (s.true_positives + s.false_positives > 0)
      s.precision = tp / static_cast<double>(s.true_positives + s.false_positives);
  }
  return scores;
}

}  // namespace etloc
