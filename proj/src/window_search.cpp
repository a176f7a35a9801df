#include "etloc/window_search.hpp"

#include <algorithm>

#include "etloc/error.hpp"
#include "etloc/grid.hpp"
#include "etloc/io.hpp"
#include "etloc/metrics.hpp"
#include "etloc/parallel.hpp"

namespace etloc {

namespace {

constexpr std::array<std::string_view, 8> kStartNames = {
    "MentionSentenceMinusTimeClampedPrev",
    "FirstMentionMinusTimeClampedPrev",
    "EndSentenceMinusTimeClampedPrev",
    "FirstReportSentence",
    "PrevSentenceStart",
    "PrevSentenceEnd",
    "MentionSentenceStart",
    "RecordingStart",
};
constexpr std::array<std::string_view, 4> kEndNames = {
    "MentionSentenceStart", "MentionSentenceEnd", "FirstMentionEnd", "LastMentionEnd"};

// One unit of scoring work: a positive mention with ground truth.
struct MentionRef {
  const SearchSession* session;
  const LabelMention* mention;
};

std::vector<MentionRef> collect_mentions(std::span<const SearchSession> sessions) {
  std::vector<MentionRef> refs;
  for (const auto& s : sessions) {
    for (LabelId label : kAllLabels) {
      if (!s.masks[index_of(label)]) continue;
      for (const auto& m : s.labels[index_of(label)].mentions) refs.push_back({&s, &m});
    }
  }
  return refs;
}

std::optional<Heatmap> mention_heatmap(const WindowSpec& spec, const MentionRef& ref,
                                       const RenderConfig& render) {
  const Session& session = ref.session->session;
  auto window = spec_window(spec, *ref.mention, session.sentences, session.recording_start);
  if (!window) return std::nullopt;
  const auto selected = select_fixations(session.fixations, *window);
  return render_heatmap(selected, session.width, session.height, render);
}

}  // namespace

std::string_view start_rule_name(StartRule rule) { return kStartNames[static_cast<int>(rule)]; }
std::string_view end_rule_name(EndRule rule) { return kEndNames[static_cast<int>(rule)]; }

std::optional<StartRule> parse_start_rule(std::string_view name) {
  for (StartRule r : kAllStartRules)
    if (start_rule_name(r) == name) return r;
  return std::nullopt;
}

std::optional<EndRule> parse_end_rule(std::string_view name) {
  for (EndRule r : kAllEndRules)
    if (end_rule_name(r) == name) return r;
  return std::nullopt;
}

std::string WindowSpec::to_string() const {
  std::string out(start_rule_name(start_rule));
  if (takes_delay(start_rule)) out += "(" + io::format_double(time_delay) + "s)";
  out += "->";
  out += end_rule_name(end_rule);
  return out;
}

std::vector<WindowSpec> enumerate_candidates(std::span<const double> delays) {
  std::vector<WindowSpec> specs;
  for (StartRule start : kAllStartRules) {
    std::vector<double> variants;
    if (takes_delay(start)) {
      variants.assign(delays.begin(), delays.end());
    } else {
      variants.push_back(0.0);
    }
    for (double delay : variants)
      for (EndRule end : kAllEndRules) specs.push_back({start, delay, end});
  }
  return specs;
}

std::optional<TimeWindow> spec_window(const WindowSpec& spec, const LabelMention& mention,
                                      std::span<const Sentence> sentences,
                                      double recording_start) {
  if (mention.sentence_index >= sentences.size())
    throw InvalidArgument("mention refers to a missing sentence");
  const Sentence& sentence = sentences[mention.sentence_index];
  const Sentence* previous =
      mention.sentence_index == 0 ? nullptr : &sentences[mention.sentence_index - 1];
  const double prev_start = previous ? previous->t_start() : recording_start;
  const double prev_end = previous ? previous->t_end() : recording_start;
  const double t = spec.time_delay;

  double start = 0.0;
  switch (spec.start_rule) {
    case StartRule::MentionSentenceMinusTimeClampedPrev:
      start = std::max(sentence.t_start() - t, prev_start);
      break;
    case StartRule::FirstMentionMinusTimeClampedPrev:
      start = std::max(mention.t_first_mention_end - t, prev_start);
      break;
    case StartRule::EndSentenceMinusTimeClampedPrev:
      start = std::max(sentence.t_end() - t, prev_start);
      break;
    case StartRule::FirstReportSentence:
      start = sentences.front().t_start();
      break;
    case StartRule::PrevSentenceStart:
      start = prev_start;
      break;
    case StartRule::PrevSentenceEnd:
      start = prev_end;
      break;
    case StartRule::MentionSentenceStart:
      start = sentence.t_start();
      break;
    case StartRule::RecordingStart:
      start = recording_start;
      break;
  }
  double end = 0.0;
  switch (spec.end_rule) {
    case EndRule::MentionSentenceStart:
      end = sentence.t_start();
      break;
    case EndRule::MentionSentenceEnd:
      end = sentence.t_end();
      break;
    case EndRule::FirstMentionEnd:
      end = mention.t_first_mention_end;
      break;
    case EndRule::LastMentionEnd:
      end = mention.t_last_mention_end;
      break;
  }
  if (end < start) return std::nullopt;
  return TimeWindow{start, end};
}

SearchSession make_search_session(Session session, std::vector<EllipseAnnotation> ellipses,
                                  const RuleSet& rules) {
  SearchSession out{std::move(session), {}, std::move(ellipses), {}};
  out.labels = label_report(out.session, rules);
  for (LabelId label : kAllLabels) {
    const bool has_ellipse = std::any_of(out.ellipses.begin(), out.ellipses.end(),
                                         [&](const auto& e) { return e.label == label; });
    if (has_ellipse)
      out.masks[index_of(label)] =
          label_mask(out.ellipses, label, out.session.width, out.session.height);
  }
  return out;
}

SearchData split_search_data(std::vector<SearchSession> sessions) {
  SearchData data;
  for (std::size_t i = 0; i < sessions.size(); ++i)
    (i % 2 == 0 ? data.calibration : data.evaluation).push_back(std::move(sessions[i]));
  return data;
}

SpecScore score_spec(const WindowSpec& spec, const SearchData& data, const ScoreOptions& options) {
  const std::vector<double> sweep =
      options.thresholds.empty() ? default_threshold_sweep() : options.thresholds;
  SpecScore score{spec, 0.0, 0, 0, {}};

  if (options.fixed_threshold) {
    for (auto& t : score.thresholds) t = *options.fixed_threshold;
  } else {
    const auto refs = collect_mentions(data.calibration);
    // Per mention: IoU at every swept threshold (empty when filtered out).
    auto sweeps = parallel_map(refs.size(), options.jobs, [&](std::size_t i) {
      auto map = mention_heatmap(spec, refs[i], options.render);
      if (!map) return std::vector<double>{};
      const BinaryMask& mask = *refs[i].session->masks[index_of(refs[i].mention->label)];
      return iou_sweep(*map, mask, sweep);
    });
    std::array<std::vector<double>, kNumLabels> totals;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      if (sweeps[i].empty()) continue;
      auto& total = totals[index_of(refs[i].mention->label)];
      if (total.empty()) total.assign(sweep.size(), 0.0);
      for (std::size_t t = 0; t < sweep.size(); ++t) total[t] += sweeps[i][t];
    }
    for (int k = 0; k < kNumLabels; ++k) {
      if (totals[k].empty()) continue;
      // First maximum: ties go to the smaller threshold.
      const auto best = std::max_element(totals[k].begin(), totals[k].end()) - totals[k].begin();
      score.thresholds[k] = sweep[best];
    }
  }

  const auto refs = collect_mentions(data.evaluation);
  auto ious = parallel_map(refs.size(), options.jobs, [&](std::size_t i) -> std::optional<double> {
    auto map = mention_heatmap(spec, refs[i], options.render);
    if (!map) return std::nullopt;
    const int k = index_of(refs[i].mention->label);
    const double threshold = score.thresholds[k].value_or(options.fallback_threshold);
    return iou(binarize(*map, threshold), *refs[i].session->masks[k]);
  });
  // A discarded window contributes no fixations, so its mention scores 0
  // rather than dropping out of the mean.
  double sum = 0.0;
  for (const auto& v : ious) {
    if (v) {
      sum += *v;
    } else {
      ++score.n_discarded;
    }
  }
  score.n_mentions = ious.size();
  score.mean_iou = ious.empty() ? 0.0 : sum / static_cast<double>(ious.size());
  return score;
}

std::vector<RankedSpec> rank_specs(std::span<const WindowSpec> specs, const SearchData& data,
                                   const ScoreOptions& options) {
  std::vector<RankedSpec> ranking;
  for (const auto& spec : specs) ranking.push_back({score_spec(spec, data, options), 0});
  std::stable_sort(ranking.begin(), ranking.end(), [](const auto& a, const auto& b) {
    return a.score.mean_iou > b.score.mean_iou;
  });
  for (std::size_t i = 0; i < ranking.size(); ++i) ranking[i].rank = i + 1;
  return ranking;
}

SearchResult search(int stage, const SearchData& data, const ScoreOptions& options) {
  if (stage != 1 && stage != 2) throw InvalidArgument("stage must be 1 or 2");
  const auto stage1_specs = enumerate_candidates(kStage1Delays);
  SearchResult result;
  result.ranking = rank_specs(stage1_specs, data, options);
  if (stage == 1) return result;

  auto shape = std::find_if(result.ranking.begin(), result.ranking.end(),
                            [](const auto& r) { return takes_delay(r.score.spec.start_rule); });
  const WindowSpec winner = shape->score.spec;
  std::vector<WindowSpec> stage2_specs;
  for (double delay : kStage2Delays)
    stage2_specs.push_back({winner.start_rule, delay, winner.end_rule});
  result.stage1 = std::move(result.ranking);
  result.ranking = rank_specs(stage2_specs, data, options);
  return result;
}

std::string search_report_csv(std::span<const RankedSpec> ranking) {
  std::string out = "rank,spec,start_rule,time_delay,end_rule,mean_iou,n_mentions,n_discarded\n";
  for (const auto& r : ranking) {
    const auto& spec = r.score.spec;
    out += std::to_string(r.rank) + ',' + spec.to_string() + ',' +
           std::string(start_rule_name(spec.start_rule)) + ',' +
           (takes_delay(spec.start_rule) ? io::format_double(spec.time_delay) : std::string()) +
           ',' + std::string(end_rule_name(spec.end_rule)) + ',' +
           io::format_double(r.score.mean_iou) + ',' + std::to_string(r.score.n_mentions) + ',' +
           std::to_string(r.score.n_discarded) + '\n';
  }
  return out;
}

}  // namespace etloc
