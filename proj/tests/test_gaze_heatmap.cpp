#include <doctest.h>

#include <cmath>
#include <vector>

#include "etloc/error.hpp"
#include "etloc/gaze_heatmap.hpp"
#include "etloc/random.hpp"
#include "oracles.hpp"

using namespace etloc;

namespace {

Sentence timed_sentence(std::size_t index, double t_start, double t_end) {
  Sentence s;
  s.index = index;
  s.words = {{"a", t_start, t_start + 0.1}, {"b", t_end - 0.1, t_end}};
  return s;
}

LabelMention mention_in(std::size_t sentence_index, double last_end) {
  LabelMention m;
  m.sentence_index = sentence_index;
  m.t_first_mention_end = last_end;
  m.t_last_mention_end = last_end;
  return m;
}

WeightedFixation at(double x, double y, double overlap) {
  return {{x, y, 0.0, overlap}, overlap};
}

std::vector<WeightedFixation> random_fixations(Rng& rng, int count, double lo, double hi) {
  std::vector<WeightedFixation> out;
  for (int i = 0; i < count; ++i)
    out.push_back(at(rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(0.05, 1.0)));
  return out;
}

}  // namespace

TEST_CASE("mention_window worked cases") {
  RenderConfig cfg;
  std::vector<Sentence> s = {timed_sentence(0, 7.0, 9.5), timed_sentence(1, 10.0, 13.0)};
  CHECK(mention_window(mention_in(1, 12.0), s, cfg, 0.0) == TimeWindow{8.5, 12.0});
  s[0] = timed_sentence(0, 9.2, 9.6);
  CHECK(mention_window(mention_in(1, 12.0), s, cfg, 0.0) == TimeWindow{9.2, 12.0});
  std::vector<Sentence> first = {timed_sentence(0, 0.5, 3.0)};
  CHECK(mention_window(mention_in(0, 2.0), first, cfg, 0.0) == TimeWindow{0.0, 2.0});
}

TEST_CASE("mention_window equals the shorter of the two candidate windows") {
  Rng rng(99);
  RenderConfig cfg;
  for (int trial = 0; trial < 1000; ++trial) {
    const double rec = rng.uniform(-2.0, 2.0);
    double t = rec + rng.uniform(0.0, 3.0);
    std::vector<Sentence> sentences;
    const int n = 1 + static_cast<int>(rng.index(6));
    for (int i = 0; i < n; ++i) {
      const double end = t + rng.uniform(0.3, 4.0);
      sentences.push_back(timed_sentence(static_cast<std::size_t>(i), t, end));
      t = end + rng.uniform(0.0, 2.5);
    }
    const std::size_t k = rng.index(static_cast<std::uint64_t>(n));
    const Sentence& own = sentences[k];
    const double last = rng.uniform(own.t_start() + 0.1, own.t_end());
    CHECK(mention_window(mention_in(k, last), sentences, cfg, rec) ==
          oracle::mention_window(sentences, k, last, cfg.window_lead, rec));
  }
}

TEST_CASE("select_fixations") {
  const TimeWindow w{8.5, 12.0};
  std::vector<FixationRecord> fixations = {{1, 1, 8.0, 9.0}, {2, 2, 12.0, 13.0}, {3, 3, 9.0, 10.0}};
  auto sel = select_fixations(fixations, w);
  REQUIRE(sel.size() == 2);
  CHECK(sel[0].overlap == doctest::Approx(0.5));
  CHECK(sel[1].overlap == doctest::Approx(1.0));
  CHECK(select_fixations({}, w).empty());
}

TEST_CASE("render_heatmap single peak") {
  RenderConfig cfg;
  cfg.pixels_per_degree = 10.0;
  std::vector<WeightedFixation> one = {at(100, 100, 0.37)};
  auto map = render_heatmap(one, 200, 200, cfg);
  CHECK(map(100, 100) == 1.0);
  CHECK(map.maxCoeff() == 1.0);
  CHECK(map(100, 110) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(map(90, 100) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("render_heatmap linear in durations") {
  RenderConfig cfg;
  cfg.pixels_per_degree = 3.0;
  std::vector<WeightedFixation> two = {at(20, 20, 1.0), at(150, 150, 2.0)};
  auto raw = accumulate_gaussians(two, 200, 200, cfg);
  CHECK(raw(150, 150) / raw(20, 20) == doctest::Approx(2.0).epsilon(1e-12));
  auto map = render_heatmap(two, 200, 200, cfg);
  CHECK(map(20, 20) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(map(150, 150) == 1.0);
  CHECK((render_heatmap({}, 10, 10, cfg) == 0.0).all());
}

TEST_CASE("render_heatmap matches brute force") {
  Rng rng(5);
  RenderConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    cfg.pixels_per_degree = rng.uniform(1.0, 8.0);
    auto fixations = random_fixations(rng, 1 + static_cast<int>(rng.index(6)), 0.0, 40.0);
    auto fast = render_heatmap(fixations, 40, 32, cfg);
    auto slow = oracle::render(fixations, 40, 32, cfg.pixels_per_degree);
    CHECK((fast - slow).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("render_heatmap properties") {
  Rng rng(8);
  RenderConfig cfg;
  cfg.pixels_per_degree = 4.0;
  for (int trial = 0; trial < 30; ++trial) {
    auto fixations = random_fixations(rng, 1 + static_cast<int>(rng.index(8)), 20.0, 44.0);
    auto map = render_heatmap(fixations, 64, 64, cfg);
    CHECK(std::abs(map.maxCoeff() - 1.0) < 1e-12);
    CHECK(map.minCoeff() >= 0.0);

    auto scaled = fixations;
    const double c = rng.uniform(0.1, 10.0);
    for (auto& f : scaled) f.overlap *= c;
    CHECK((render_heatmap(scaled, 64, 64, cfg) - map).abs().maxCoeff() < 1e-12);

    // Integer shifts: compare the interior of the shifted maps.
    const int dx = static_cast<int>(rng.index(9)) - 4, dy = static_cast<int>(rng.index(9)) - 4;
    auto moved = fixations;
    for (auto& f : moved) {
      f.fixation.x += dx;
      f.fixation.y += dy;
    }
    // Normalize both on the same unclipped peak: compare raw accumulations.
    auto raw = accumulate_gaussians(fixations, 64, 64, cfg);
    auto raw_moved = accumulate_gaussians(moved, 64, 64, cfg);
    double worst = 0.0;
    for (int y = 8; y < 56; ++y)
      for (int x = 8; x < 56; ++x) worst = std::max(worst, std::abs(raw_moved(y, x) - raw(y - dy, x - dx)));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("truncation stays close") {
  Rng rng(10);
  RenderConfig exact, cut;
  exact.pixels_per_degree = cut.pixels_per_degree = 3.0;
  cut.truncate = true;
  auto fixations = random_fixations(rng, 5, 0.0, 60.0);
  auto a = render_heatmap(fixations, 60, 60, exact);
  auto b = render_heatmap(fixations, 60, 60, cut);
  CHECK((a - b).abs().maxCoeff() < 1e-3);
}

TEST_CASE("aggregate_mentions") {
  RenderConfig cfg;
  cfg.pixels_per_degree = 2.0;
  Rng rng(12);
  const Heatmap h = render_heatmap(random_fixations(rng, 3, 0, 30), 30, 30, cfg);
  const Heatmap g = render_heatmap(random_fixations(rng, 3, 0, 30), 30, 30, cfg);
  const Heatmap f = render_heatmap(random_fixations(rng, 3, 0, 30), 30, 30, cfg);
  const Heatmap zero = Heatmap::Zero(30, 30);
  auto agg = [](std::vector<Heatmap> maps) { return aggregate_mentions(maps); };
  CHECK((agg({h, zero}) == h).all());
  CHECK((agg({h, h}) == h).all());
  CHECK((agg({h, g}) == agg({g, h})).all());
  CHECK((agg({agg({h, g}), f}) == agg({h, agg({g, f})})).all());

  std::vector<WeightedFixation> left = {at(3, 3, 1.0)}, right = {at(26, 26, 0.2)};
  auto both = agg({render_heatmap(left, 30, 30, cfg), render_heatmap(right, 30, 30, cfg)});
  CHECK(both(3, 3) == 1.0);
  CHECK(both(26, 26) == 1.0);

  CHECK_THROWS_AS(agg({}), InvalidArgument);
  CHECK_THROWS_AS(agg({h, Heatmap::Zero(3, 3)}), DimensionMismatch);
}

TEST_CASE("label_heatmap and config validation") {
  Session s;
  s.width = s.height = 40;
  s.sentences = {timed_sentence(0, 2.0, 4.0)};
  s.fixations = {{10, 10, 1.0, 1.5}, {30, 30, 5.0, 6.0}};
  RenderConfig cfg;
  cfg.pixels_per_degree = 2.0;
  std::vector<LabelMention> none;
  CHECK((label_heatmap(s, none, cfg) == 0.0).all());
  std::vector<LabelMention> one = {mention_in(0, 3.5)};
  auto map = label_heatmap(s, one, cfg);
  CHECK(map(10, 10) == 1.0);
  CHECK(map(30, 30) < 1e-12);

  cfg.pixels_per_degree = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
  cfg.pixels_per_degree = 1.0;
  cfg.window_lead = -1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
}
