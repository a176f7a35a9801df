#include <doctest.h>

#include "etloc/random.hpp"
#include "etloc/synth.hpp"
#include "etloc/window_search.hpp"

using namespace etloc;

namespace {

SearchData synth_data(int n_sessions, std::uint64_t seed, bool drop_fixations = false) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.n_sessions = n_sessions;
  const auto rules = RuleSet::defaults();
  std::vector<SearchSession> sessions;
  for (auto& s : generate(cfg)) {
    if (drop_fixations) s.session.fixations.clear();
    sessions.push_back(make_search_session(s.session, s.ellipses, rules));
  }
  return split_search_data(std::move(sessions));
}

ScoreOptions options() {
  ScoreOptions opt;
  opt.render.pixels_per_degree = 4.0;
  return opt;
}

}  // namespace

TEST_CASE("candidate enumeration counts") {
  CHECK(enumerate_candidates(kStage1Delays).size() == 56);
  CHECK(enumerate_candidates({}).size() == 20);
  const double one[] = {1.5};
  CHECK(enumerate_candidates(one).size() == 32);
  auto all = enumerate_candidates(kStage1Delays);
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j) CHECK_FALSE(all[i] == all[j]);
}

TEST_CASE("rule names round trip") {
  for (auto r : kAllStartRules) CHECK(parse_start_rule(start_rule_name(r)) == r);
  for (auto r : kAllEndRules) CHECK(parse_end_rule(end_rule_name(r)) == r);
  CHECK_FALSE(parse_start_rule("Nope").has_value());
}

TEST_CASE("the default rule reproduces mention_window") {
  SynthConfig cfg;
  cfg.n_sessions = 20;
  const auto rules = RuleSet::defaults();
  RenderConfig render;
  const WindowSpec sentence_rule{StartRule::MentionSentenceMinusTimeClampedPrev, render.window_lead,
                         EndRule::LastMentionEnd};
  std::size_t checked = 0;
  for (const auto& s : generate(cfg)) {
    const auto report = label_report(s.session, rules);
    for (const auto& label : report)
      for (const auto& m : label.mentions) {
        auto w = spec_window(sentence_rule, m, s.session.sentences, s.session.recording_start);
        REQUIRE(w.has_value());
        CHECK(*w == mention_window(m, s.session.sentences, render, s.session.recording_start));
        ++checked;
      }
  }
  CHECK(checked > 10);
}

TEST_CASE("spec windows on a hand layout") {
  std::vector<Sentence> sentences(3);
  sentences[0] = {0, {{"a", 1.0, 1.5}, {"b", 1.6, 2.0}}};
  sentences[1] = {1, {{"c", 3.0, 3.5}, {"d", 3.6, 4.0}}};
  sentences[2] = {2, {{"e", 6.0, 6.5}, {"f", 6.6, 8.0}}};
  LabelMention m;
  m.sentence_index = 2;
  m.t_first_mention_end = 6.5;
  m.t_last_mention_end = 8.0;
  auto w = [&](StartRule s, double d, EndRule e) {
    return spec_window({s, d, e}, m, sentences, 0.5);
  };
  CHECK(w(StartRule::RecordingStart, 0, EndRule::MentionSentenceStart) == TimeWindow{0.5, 6.0});
  CHECK(w(StartRule::FirstReportSentence, 0, EndRule::MentionSentenceEnd) == TimeWindow{1.0, 8.0});
  CHECK(w(StartRule::PrevSentenceStart, 0, EndRule::FirstMentionEnd) == TimeWindow{3.0, 6.5});
  CHECK(w(StartRule::PrevSentenceEnd, 0, EndRule::LastMentionEnd) == TimeWindow{4.0, 8.0});
  CHECK(w(StartRule::MentionSentenceStart, 0, EndRule::LastMentionEnd) == TimeWindow{6.0, 8.0});
  CHECK(w(StartRule::MentionSentenceMinusTimeClampedPrev, 1.5, EndRule::LastMentionEnd) ==
        TimeWindow{4.5, 8.0});
  CHECK(w(StartRule::MentionSentenceMinusTimeClampedPrev, 5.0, EndRule::LastMentionEnd) ==
        TimeWindow{3.0, 8.0});
  CHECK(w(StartRule::FirstMentionMinusTimeClampedPrev, 1.0, EndRule::LastMentionEnd) ==
        TimeWindow{5.5, 8.0});
  CHECK(w(StartRule::EndSentenceMinusTimeClampedPrev, 1.0, EndRule::LastMentionEnd) ==
        TimeWindow{7.0, 8.0});
  CHECK_FALSE(w(StartRule::EndSentenceMinusTimeClampedPrev, 0.5, EndRule::MentionSentenceStart)
                  .has_value());
}

TEST_CASE("scoring") {
  const auto opt = options();
  const WindowSpec sentence_rule{StartRule::MentionSentenceMinusTimeClampedPrev, 1.5,
                         EndRule::LastMentionEnd};
  SUBCASE("no fixations give zero") {
    const auto data = synth_data(12, 3, true);
    const auto score = score_spec(sentence_rule, data, opt);
    CHECK(score.n_mentions > 0);
    CHECK(score.mean_iou == 0.0);
  }
  SUBCASE("determinism and worker count") {
    const auto data = synth_data(12, 4);
    auto serial = score_spec(sentence_rule, data, opt);
    auto parallel_opt = opt;
    parallel_opt.jobs = 4;
    auto parallel = score_spec(sentence_rule, data, parallel_opt);
    CHECK(serial.mean_iou == parallel.mean_iou);
    CHECK(serial.thresholds == parallel.thresholds);
    CHECK(score_spec(sentence_rule, data, opt).mean_iou == serial.mean_iou);
    CHECK(serial.mean_iou > 0.0);
    CHECK(serial.mean_iou <= 1.0);
  }
}

TEST_CASE("the sentence-anchored rule beats whole-recording windows on synthetic data") {
  const auto data = synth_data(100, 5);
  const auto opt = options();
  const WindowSpec sentence_rule{StartRule::MentionSentenceMinusTimeClampedPrev, 1.5,
                         EndRule::LastMentionEnd};
  const WindowSpec wide{StartRule::RecordingStart, 0.0, EndRule::MentionSentenceStart};
  CHECK(score_spec(sentence_rule, data, opt).mean_iou > score_spec(wide, data, opt).mean_iou);
}

TEST_CASE("ranking order") {
  const auto data = synth_data(10, 6);
  const WindowSpec a{StartRule::MentionSentenceMinusTimeClampedPrev, 1.5, EndRule::LastMentionEnd};
  const WindowSpec b{StartRule::RecordingStart, 0.0, EndRule::MentionSentenceEnd};
  std::vector<WindowSpec> specs = {b, a, b};
  auto ranking = rank_specs(specs, data, options());
  REQUIRE(ranking.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(ranking[i].rank == i + 1);
  for (std::size_t i = 1; i < 3; ++i)
    CHECK(ranking[i - 1].score.mean_iou >= ranking[i].score.mean_iou);
  // The duplicated spec keeps its enumeration order among ties.
  std::vector<std::size_t> b_positions;
  for (std::size_t i = 0; i < 3; ++i)
    if (ranking[i].score.spec == b) b_positions.push_back(i);
  REQUIRE(b_positions.size() == 2);
  CHECK(b_positions[1] == b_positions[0] + 1);

  const auto csv = search_report_csv(ranking);
  CHECK(csv.rfind("rank,spec,start_rule,time_delay,end_rule,mean_iou,n_mentions,n_discarded\n", 0) == 0);
}
