// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "cli_util.hpp"
#include "etloc/gaze_heatmap.hpp"
#include "etloc/grad_check.hpp"
#include "etloc/labeler.hpp"
#include "etloc/losses.hpp"
#include "etloc/metrics.hpp"
#include "etloc/random.hpp"
#include "etloc/synth.hpp"
#include "etloc/toy_trainer.hpp"
#include "etloc/window_search.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace etloc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), pattern, args...);
  return buf;
}

Outcome range_normalization() {
  const double c = 0.0056738;
  const double v = normalize_factor(0.0, 256, c);
  bool ok = std::abs(v - 0.98) < 1e-6;
  LossConfig cfg;
  double worst = 0.0;
  for (std::size_t n : {1u, 4u, 64u, 1024u})
    worst = std::max(worst, std::abs(std::pow(lower_clamp(n, cfg), static_cast<double>(n)) - c));
  ok = ok && worst < 1e-9;
  return {ok, fmt("normalize_factor(0,256)=%.9f, max |clamp^n - c|=%.2e", v, worst)};
}

Outcome loss_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  double worst = 0.0;
  std::size_t failed = 0, entries = 0, floored = 0, unfloored = 0;
  for (int i = 0; i < 100; ++i) {
    const auto instance = random_loss_instance(rng, 4, 3, 3, i % 2 ? 300.0 : 0.0);
    const auto r = check_gradients(instance, 1e-5, 1e-4);
    worst = std::max(worst, r.max_relative_error);
    entries += r.n_entries;
    floored += r.n_floored;
    unfloored += r.n_unfloored_failures;
    if (!r.passed) ++failed;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {failed == 0 && secs < 10.0,
          fmt("100 instances, %zu failed, max rel err %.2e, %zu/%zu entries below the rounding "
              "floor (%zu of them off by more than 1e-4 relative), %.1fs",
              failed, worst, floored, entries, unfloored, secs)};
}

Sentence timed_sentence(std::size_t index, double t_start, double t_end) {
  Sentence s;
  s.index = index;
  s.words = {{"a", t_start, t_start + 0.1}, {"b", t_end - 0.1, t_end}};
  return s;
}

Outcome window_oracle() {
  Rng rng(31);
  RenderConfig cfg;
  int mismatches = 0;
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
    cfg.window_lead = rng.uniform(0.0, 4.0);
    const std::size_t k = rng.index(static_cast<std::uint64_t>(n));
    LabelMention m;
    m.sentence_index = k;
    m.t_last_mention_end = rng.uniform(sentences[k].t_start() + 0.1, sentences[k].t_end());
    m.t_first_mention_end = m.t_last_mention_end;
    if (!(mention_window(m, sentences, cfg, rec) ==
          oracle::mention_window(sentences, k, m.t_last_mention_end, cfg.window_lead, rec)))
      ++mismatches;
  }
  return {mismatches == 0, fmt("%d mismatches in 1000 layouts", mismatches)};
}

Outcome delay_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  SynthConfig cfg;
  cfg.seed = 1;
  cfg.n_sessions = 200;
  cfg.lead_time = 1.5;
  cfg.dwell_noise = 0.1;
  cfg.distractor_fixation_rate = 0.2;
  const auto rules = RuleSet::defaults();
  std::vector<SearchSession> sessions;
  for (auto& s : generate(cfg))
    sessions.push_back(make_search_session(std::move(s.session), std::move(s.ellipses), rules));
  ScoreOptions options;
  options.render.pixels_per_degree = cfg.pixels_per_degree;
  const auto result = search(2, split_search_data(std::move(sessions)), options);
  const auto& best = result.ranking.front().score;
  const double d = best.spec.time_delay;
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool near = d == 1.25 || d == 1.5 || d == 1.75;
  return {near && secs < 300.0,
          fmt("stage 2 best %s (IoU %.4f), %.0fs", best.spec.to_string().c_str(), best.mean_iou,
              secs)};
}

Outcome arm_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::size_t kArms = kAllSupervision.size();
  std::array<std::vector<double>, kArms> iou, auc_values;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto cases = generate(confounded_config(seed, 200));
    ArmsOptions options;
    options.dataset.render.pixels_per_degree = 4.0;
    options.train.epochs = 200;
    options.train.lr = 0.05;
    const std::vector<std::uint64_t> seeds{seed};
    const auto report = evaluate_arms(cases, kAllSupervision, seeds, options);
    for (const auto& r : report.results) {
      const auto a = static_cast<std::size_t>(r.arm);
      iou[a].push_back(r.mean_iou.value_or(0.0));
      auc_values[a].push_back(r.mean_auc.value_or(0.0));
    }
  }
  auto lo = [&](Supervision s) {
    const auto& v = iou[static_cast<std::size_t>(s)];
    return *std::min_element(v.begin(), v.end());
  };
  auto hi = [&](Supervision s) {
    const auto& v = iou[static_cast<std::size_t>(s)];
    return *std::max_element(v.begin(), v.end());
  };
  auto mean = [](const std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) sum += x;
    return sum / static_cast<double>(v.size());
  };
  const auto E = Supervision::EllipseAnnotated, T = Supervision::ETAnnotated,
             U = Supervision::Unannotated;
  const bool ordered = lo(E) > hi(T) && lo(T) > hi(U);
  double gap = 0.0;
  for (std::size_t a = 0; a < kArms; ++a)
    for (std::size_t b = 0; b < kArms; ++b)
      gap = std::max(gap, std::abs(mean(auc_values[a]) - mean(auc_values[b])));
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {ordered && gap < 0.05 && secs < 900.0,
          fmt("IoU Ellipse [%.3f,%.3f] ET [%.3f,%.3f] Unannotated [%.3f,%.3f], AUC gap %.4f, %.0fs",
              lo(E), hi(E), lo(T), hi(T), lo(U), hi(U), gap, secs)};
}

Outcome rank_auc() {
  Rng rng(606);
  int mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng.index(49);
    std::vector<double> scores(n);
    auto labels = std::make_unique<bool[]>(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng.index(1 + rng.index(10))) / 4.0;
      labels[i] = rng.bernoulli(0.5);
    }
    // At least one of each class.
    const std::size_t p = rng.index(n);
    labels[p] = true;
    labels[(p + 1 + rng.index(n - 1)) % n] = false;
    std::span<const bool> lab(labels.get(), n);
    if (auc(scores, lab) != oracle::auc(scores, lab)) ++mismatches;
  }
  return {mismatches == 0, fmt("%d mismatches in 500 inputs", mismatches)};
}

Outcome heatmap_properties() {
  Rng rng(707);
  double max_err = 0.0, scale_err = 0.0, sigma_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    RenderConfig cfg;
    cfg.pixels_per_degree = static_cast<double>(2 + rng.index(7));
    const int w = 48 + static_cast<int>(rng.index(32)), h = 48 + static_cast<int>(rng.index(32));
    std::vector<WeightedFixation> set;
    const int count = 1 + static_cast<int>(rng.index(10));
    for (int i = 0; i < count; ++i) {
      const double d = rng.uniform(0.05, 2.0);
      set.push_back({{rng.uniform(0.0, w - 1.0), rng.uniform(0.0, h - 1.0), 0.0, d}, d});
    }
    const auto map = render_heatmap(set, w, h, cfg);
    max_err = std::max(max_err, std::abs(map.maxCoeff() - 1.0));

    auto scaled = set;
    const double c = rng.uniform(0.01, 100.0);
    for (auto& f : scaled) f.overlap *= c;
    scale_err = std::max(scale_err, (render_heatmap(scaled, w, h, cfg) - map).abs().maxCoeff());

    // One fixation of the set, moved to an interior pixel, alone.
    const double s = cfg.pixels_per_degree;
    auto one = set.front();
    one.fixation.x = std::round(s + rng.uniform(0.0, w - 2 * s - 1));
    one.fixation.y = std::round(s + rng.uniform(0.0, h - 2 * s - 1));
    const std::vector<WeightedFixation> single{one};
    const auto raw = accumulate_gaussians(single, w, h, cfg);
    const int x = static_cast<int>(one.fixation.x), y = static_cast<int>(one.fixation.y);
    const double peak = raw(y, x);
    for (const auto& [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}})
      sigma_err = std::max(
          sigma_err, std::abs(raw(y + dy * static_cast<int>(s), x + dx * static_cast<int>(s)) -
                              std::exp(-0.5) * peak) / peak);
  }
  return {max_err < 1e-12 && scale_err < 1e-12 && sigma_err < 1e-9,
          fmt("|max-1| %.1e, duration scaling %.1e, sigma falloff %.1e", max_err, scale_err,
              sigma_err)};
}

Outcome labeler_accuracy() {
  SynthConfig cfg;
  cfg.seed = 8;
  cfg.n_sessions = 200;
  cfg.image_size = 32;
  cfg.labels.assign(kAllLabels.begin(), kAllLabels.end());
  cfg.prevalence = 0.3;
  std::map<std::string, LabelSet> predicted, gold;
  const auto rules = RuleSet::defaults();
  for (const auto& s : generate(cfg)) {
    predicted[s.session.image_id] = positive_labels(label_report(s.session, rules));
    gold[s.session.image_id] = s.gold;
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& score : evaluate_labeler(predicted, gold)) {
    tp += score.true_positives;
    fp += score.false_positives;
    fn += score.false_negatives;
  }
  const double precision = tp + fp ? double(tp) / double(tp + fp) : 0.0;
  const double recall = tp + fn ? double(tp) / double(tp + fn) : 0.0;
  return {precision == 1.0 && recall == 1.0,
          fmt("precision %.4f recall %.4f (%zu true positives)", precision, recall, tp)};
}

Outcome cli_determinism() {
  const auto t0 = std::chrono::steady_clock::now();
  TempDir tmp("acceptance-cli");
  const fs::path root = tmp.path();
  const std::string data = cli::quote((root / "data").string());
  const fs::path input = root / "scores.csv";
  const std::string gold = cli::quote((root / "data" / "gold_labels.json").string());

  if (cli::run("--seed 5 --out-dir " + data + " gen-synth --n 24 --dwell-noise 0.1", root / "gen") != 0)
    return {false, "gen-synth failed"};
  // Fixed score input for eval-auc.
  if (cli::run("--out-dir " + cli::quote((root / "seed-scores").string()) + " train-toy --data " +
                   data + " --arms Unannotated --epochs 5",
               root / "seed-train") != 0)
    return {false, "train-toy for score input failed"};
  fs::copy_file(root / "seed-scores" / "scores" / "Unannotated-seed1.csv", input);

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-synth", "gen-synth --n 12 --preset confounded"},
      {"extract", "extract --data " + data + " --pixels-per-degree 4 --pgm"},
      {"label-report", "label-report --data " + data},
      {"search-windows", "search-windows --data " + data + " --stage 2 --pixels-per-degree 4"},
      {"eval-iou", "eval-iou --heatmaps " + cli::quote((root / "seed-extract").string()) +
                       " --data " + data},
      {"eval-auc", "eval-auc --scores " + cli::quote(input.string()) + " --gold " + gold},
      {"train-toy", "train-toy --data " + data + " --seeds 1,2 --epochs 30"},
      {"grad-check", "grad-check --n 20"},
  };
  if (cli::run("--out-dir " + cli::quote((root / "seed-extract").string()) + " " + commands[1].second,
               root / "seed-extract-log") != 0)
    return {false, "extract for eval-iou input failed"};

  std::vector<std::string> differing;
  for (const auto& [name, args] : commands) {
    std::vector<std::string> outputs;
    int run = 0;
    for (const char* jobs : {"1", "1", "8"}) {
      const fs::path dir = root / "runs" / (name + "-" + std::to_string(run++));
      fs::create_directories(dir);
      // Relative out-dir so the printed summary is comparable too.
      const std::string cmd = "--seed 3 --jobs " + std::string(jobs) + " --out-dir out " + args;
      const std::string shell = "cd " + cli::quote(dir.string()) + " && ";
      const int code = std::system((shell + cli::quote(ETLOC_CLI_PATH) + " " + cmd + " >stdout.txt 2>stderr.txt").c_str());
      if (code != 0) return {false, name + " exited abnormally"};
      outputs.push_back(cli::tree_bytes(dir));
    }
    if (outputs[0] != outputs[1] || outputs[0] != outputs[2]) differing.push_back(name);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string detail = fmt("%zu commands x (jobs 1, jobs 1, jobs 8), %.0fs", commands.size(), secs);
  for (const auto& d : differing) detail += "; differs: " + d;
  return {differing.empty() && secs < 300.0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"range normalization", range_normalization},
      {"loss gradients vs finite differences", loss_gradients},
      {"mention window vs two-candidate oracle", window_oracle},
      {"stage-2 search recovers the gaze lead", delay_recovery},
      {"arm ordering by IoU, matched AUC", arm_ordering},
      {"rank AUC vs all-pairs AUC", rank_auc},
      {"heatmap normalization properties", heatmap_properties},
      {"labeler precision and recall", labeler_accuracy},
      {"CLI determinism across reruns and --jobs", cli_determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.passed) ++failures;
    std::printf("%s %d %s: %s\n", o.passed ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
