#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "etloc/error.hpp"
#include "etloc/gaze_heatmap.hpp"
#include "etloc/grad_check.hpp"
#include "etloc/grid.hpp"
#include "etloc/ingest.hpp"
#include "etloc/io.hpp"
#include "etloc/labeler.hpp"
#include "etloc/metrics.hpp"
#include "etloc/parallel.hpp"
#include "etloc/synth.hpp"
#include "etloc/toy_trainer.hpp"
#include "etloc/window_search.hpp"

namespace fs = std::filesystem;
using namespace etloc;

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitBadInput = 2;

struct Globals {
  std::uint64_t seed = 1;
  int jobs = 1;
  fs::path out_dir = "out";
};

// Label names contain spaces; directory names use underscores.
std::string label_slug(LabelId label) {
  std::string name(label_name(label));
  std::replace(name.begin(), name.end(), ' ', '_');
  return name;
}

// A directory holding one session, or a directory of session directories.
std::vector<fs::path> input_sessions(const fs::path& data) {
  if (fs::exists(data / "meta.json")) return {data};
  return session_dirs(data);
}

RuleSet load_rules(const std::string& path) {
  if (path.empty()) return RuleSet::defaults();
  RuleSet rules = RuleSet::from_json(io::read_text_file(path), path);
  rules.validate();
  return rules;
}

struct LoadedCase {
  Session session;
  std::vector<EllipseAnnotation> ellipses;
};

std::vector<LoadedCase> load_cases(const fs::path& data, bool need_ellipses) {
  std::vector<LoadedCase> out;
  for (const auto& dir : input_sessions(data)) {
    LoadedCase c{load_session_dir(dir), {}};
    const auto ellipses = dir / "ellipses.csv";
    if (need_ellipses || fs::exists(ellipses)) c.ellipses = load_ellipses(ellipses);
    out.push_back(std::move(c));
  }
  return out;
}

void add_render_options(CLI::App* cmd, RenderConfig& render) {
  cmd->add_option("--pixels-per-degree", render.pixels_per_degree,
                   "Gaussian sigma in image pixels (one degree of visual angle)")
      ->capture_default_str();
  cmd->add_option("--window-lead", render.window_lead,
                  "Seconds before the mentioning sentence the window may open")
      ->capture_default_str();
  cmd->add_flag("--truncate", render.truncate, "Skip Gaussian tails beyond 4 sigma");
}

// ---------------------------------------------------------------------------

struct ExtractArgs {
  std::string data;
  std::string rules;
  RenderConfig render;
  int grid_size = kDefaultGridSize;
  double threshold = kDefaultEtThreshold;
  bool pgm = false;
};

int cmd_extract(const Globals& g, const ExtractArgs& a) {
  a.render.validate();
  const RuleSet rules = load_rules(a.rules);
  std::vector<Session> sessions;
  for (const auto& dir : input_sessions(a.data)) sessions.push_back(load_session_dir(dir));

  struct Output {
    LabelId label;
    Heatmap heatmap;
    GridAnnotation grid;
    std::size_t mentions;
  };
  const auto per_session = parallel_map(sessions.size(), g.jobs, [&](std::size_t i) {
    const auto report = label_report(sessions[i], rules);
    std::vector<Output> out;
    for (LabelId label : kAllLabels) {
      const auto& entry = report[index_of(label)];
      if (entry.polarity != Polarity::Positive || entry.mentions.empty()) continue;
      Heatmap map = label_heatmap(sessions[i], entry.mentions, a.render);
      GridAnnotation grid = binarize(maxpool_to_grid(map, a.grid_size), a.threshold);
      out.push_back({label, std::move(map), std::move(grid), entry.mentions.size()});
    }
    return out;
  });

  std::string summary = "image_id,label,n_mentions,grid_cells\n";
  std::size_t files = 0;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    for (const auto& o : per_session[i]) {
      const fs::path dir = g.out_dir / sessions[i].image_id / label_slug(o.label);
      io::write_text_file(dir / "heatmap.csv", io::heatmap_to_csv(o.heatmap));
      io::write_text_file(dir / "grid.csv", io::grid_to_csv(o.grid));
      if (a.pgm) io::write_text_file(dir / "heatmap.pgm", io::heatmap_to_pgm(o.heatmap));
      summary += sessions[i].image_id + ',' + std::string(label_name(o.label)) + ',' +
                 std::to_string(o.mentions) + ',' + std::to_string(o.grid.count()) + '\n';
      ++files;
    }
  }
  io::write_text_file(g.out_dir / "extract-summary.csv", summary);
  std::cout << "extracted " << files << " label heatmaps from " << sessions.size()
            << " sessions into " << g.out_dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct LabelReportArgs {
  std::string data;
  std::string rules;
  std::string gold;
  bool uncertain_negative = false;
};

int cmd_label_report(const Globals& g, const LabelReportArgs& a) {
  const RuleSet rules = load_rules(a.rules);
  const auto policy =
      a.uncertain_negative ? UncertainPolicy::AsNegative : UncertainPolicy::AsPositive;
  std::vector<Session> sessions;
  for (const auto& dir : input_sessions(a.data)) sessions.push_back(load_session_dir(dir));

  nlohmann::json doc = nlohmann::json::object();
  std::map<std::string, LabelSet> predictions;
  for (const auto& s : sessions) {
    const auto report = label_report(s, rules, policy);
    const LabelSet positives = positive_labels(report);
    predictions[s.image_id] = positives;
    nlohmann::json positive = nlohmann::json::array();
    for (LabelId label : kAllLabels)
      if (positives.test(index_of(label))) positive.push_back(std::string(label_name(label)));
    nlohmann::json mentions = nlohmann::json::array();
    for (const auto& sentence : s.sentences) {
      for (const auto& m : detect_mentions(sentence, rules)) {
        mentions.push_back({{"label", std::string(label_name(m.label))},
                            {"sentence", m.sentence_index},
                            {"polarity", std::string(polarity_name(m.polarity))},
                            {"raw_label", m.raw_label},
                            {"t_first_mention_end", m.t_first_mention_end},
                            {"t_last_mention_end", m.t_last_mention_end}});
      }
    }
    doc[s.image_id] = {{"positive", positive}, {"mentions", mentions}};
  }
  io::write_text_file(g.out_dir / "labels.json", doc.dump(2) + "\n");

  fs::path gold_path = a.gold;
  if (gold_path.empty() && fs::exists(fs::path(a.data) / "gold_labels.json"))
    gold_path = fs::path(a.data) / "gold_labels.json";
  if (!gold_path.empty()) {
    const auto gold = gold_labels_from_json(io::read_text_file(gold_path), gold_path.string());
    const auto scores = evaluate_labeler(predictions, gold);
    std::string csv = "label,true_positives,false_positives,false_negatives,recall,precision\n";
    for (LabelId label : kAllLabels) {
      const auto& sc = scores[index_of(label)];
      csv += std::string(label_name(label)) + ',' + std::to_string(sc.true_positives) + ',' +
             std::to_string(sc.false_positives) + ',' + std::to_string(sc.false_negatives) + ',' +
             (sc.recall ? io::format_double(*sc.recall) : "") + ',' +
             (sc.precision ? io::format_double(*sc.precision) : "") + '\n';
    }
    io::write_text_file(g.out_dir / "labeler-eval.csv", csv);
    std::cout << "labeled " << sessions.size() << " reports; evaluation against "
              << gold_path.string() << " in labeler-eval.csv\n";
  } else {
    std::cout << "labeled " << sessions.size() << " reports\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct SearchArgs {
  std::string data;
  std::string rules;
  int stage = 1;
  RenderConfig render;
};

int cmd_search_windows(const Globals& g, const SearchArgs& a) {
  a.render.validate();
  const RuleSet rules = load_rules(a.rules);
  std::vector<SearchSession> sessions;
  for (auto& c : load_cases(a.data, true))
    sessions.push_back(make_search_session(std::move(c.session), std::move(c.ellipses), rules));
  const SearchData data = split_search_data(std::move(sessions));
  ScoreOptions options;
  options.render = a.render;
  options.jobs = g.jobs;
  const SearchResult result = search(a.stage, data, options);
  io::write_text_file(g.out_dir / "search-report.csv", search_report_csv(result.ranking));
  if (a.stage == 2)
    io::write_text_file(g.out_dir / "stage1-report.csv", search_report_csv(result.stage1));
  const auto& best = result.ranking.front().score;
  std::cout << "stage " << a.stage << ": best " << best.spec.to_string() << " mean IoU "
            << io::format_double(best.mean_iou) << " over " << best.n_mentions
            << " mentions\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalIouArgs {
  std::string heatmaps;
  std::string data;
  std::optional<double> threshold;
};

int cmd_eval_iou(const Globals& g, const EvalIouArgs& a) {
  const auto cases = load_cases(a.data, true);
  std::array<std::vector<Heatmap>, kNumLabels> maps;
  std::array<std::vector<BinaryMask>, kNumLabels> masks;
  for (const auto& c : cases) {
    for (LabelId label : kAllLabels) {
      BinaryMask mask = label_mask(c.ellipses, label, c.session.width, c.session.height);
      if (!mask.any()) continue;
      const fs::path file =
          fs::path(a.heatmaps) / c.session.image_id / label_slug(label) / "heatmap.csv";
      // A finding the labeler missed has no heatmap: it localizes nothing.
      Heatmap map = fs::exists(file) ? io::heatmap_from_csv(io::read_text_file(file), file.string())
                                     : Heatmap::Zero(c.session.height, c.session.width);
      if (map.rows() != mask.rows() || map.cols() != mask.cols())
        throw DimensionMismatch(file.string() + ": heatmap size differs from the image");
      maps[index_of(label)].push_back(std::move(map));
      masks[index_of(label)].push_back(std::move(mask));
    }
  }
  const auto sweep = default_threshold_sweep();
  IoUReport report{};
  for (LabelId label : kAllLabels) {
    const auto& m = maps[index_of(label)];
    if (m.empty()) continue;
    const auto& gt = masks[index_of(label)];
    double threshold = 0.0, value = 0.0;
    if (a.threshold) {
      threshold = *a.threshold;
      for (std::size_t i = 0; i < m.size(); ++i) value += iou(binarize(m[i], threshold), gt[i]);
      value /= static_cast<double>(m.size());
    } else {
      const auto choice = validate_threshold(m, gt, sweep);
      threshold = choice.threshold;
      value = choice.mean_iou;
    }
    report[index_of(label)] = IoUEntry{threshold, value, m.size()};
  }
  io::write_text_file(g.out_dir / "metrics.json", metrics_json(&report, nullptr));
  io::write_text_file(g.out_dir / "metrics.csv", metrics_csv(&report, nullptr));
  const auto macro = summarize(report);
  std::cout << "mean IoU " << (macro.mean ? io::format_double(*macro.mean) : "n/a") << " over "
            << macro.included.size() << " labels\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalAucArgs {
  std::string scores;
  std::string gold;
};

int cmd_eval_auc(const Globals& g, const EvalAucArgs& a) {
  const auto gold = gold_labels_from_json(io::read_text_file(a.gold), a.gold);
  const std::string text = io::read_text_file(a.scores);
  auto lines = io::split_lines(text);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty() || lines.front() != "image_id,label,score")
    throw MalformedRow(a.scores, 1, 1, "expected header 'image_id,label,score'");
  std::array<std::vector<double>, kNumLabels> scores;
  std::array<std::vector<char>, kNumLabels> truth;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = io::split_csv_line(lines[i]);
    if (fields.size() != 3) throw MalformedRow(a.scores, i + 1, 1, "expected 3 fields");
    const auto it = gold.find(std::string(fields[0]));
    if (it == gold.end())
      throw CorpusMismatch(a.scores + ":" + std::to_string(i + 1) + ": image '" +
                           std::string(fields[0]) + "' has no gold labels");
    const auto label = parse_label(fields[1]);
    if (!label) throw MalformedRow(a.scores, i + 1, fields[0].size() + 2, "unknown label");
    const auto value = io::parse_double(fields[2]);
    if (!value)
      throw MalformedRow(a.scores, i + 1, fields[0].size() + fields[1].size() + 3,
                         "not a number");
    scores[index_of(*label)].push_back(*value);
    truth[index_of(*label)].push_back(it->second.test(index_of(*label)));
  }
  AUCReport report{};
  for (LabelId label : kAllLabels) {
    const auto& t = truth[index_of(label)];
    const auto n_pos = static_cast<std::size_t>(std::count(t.begin(), t.end(), 1));
    if (n_pos == 0 || n_pos == t.size()) continue;
    auto flags = std::make_unique<bool[]>(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) flags[i] = t[i] != 0;
    report[index_of(label)] = AUCEntry{
        auc(scores[index_of(label)], std::span<const bool>(flags.get(), t.size())), n_pos,
        t.size() - n_pos};
  }
  io::write_text_file(g.out_dir / "metrics.json", metrics_json(nullptr, &report));
  io::write_text_file(g.out_dir / "metrics.csv", metrics_csv(nullptr, &report));
  const auto macro = summarize(report);
  std::cout << "mean AUC " << (macro.mean ? io::format_double(*macro.mean) : "n/a") << " over "
            << macro.included.size() << " labels\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string rules;
  std::string arms = "all";
  std::vector<std::uint64_t> seeds;
  ArmsOptions options;
};

std::vector<Supervision> parse_arms(const std::string& text) {
  if (text == "all") return {kAllSupervision.begin(), kAllSupervision.end()};
  std::vector<Supervision> arms;
  std::stringstream in(text);
  std::string name;
  while (std::getline(in, name, ',')) {
    const auto arm = parse_supervision(name);
    if (!arm) throw InvalidArgument("unknown arm '" + name + "'");
    arms.push_back(*arm);
  }
  return arms;
}

int cmd_train_toy(const Globals& g, TrainArgs a) {
  const auto arms = parse_arms(a.arms);
  if (a.seeds.empty()) a.seeds = {g.seed};
  a.options.rules = load_rules(a.rules);
  a.options.jobs = g.jobs;
  a.options.dataset.render.validate();
  const auto cases = load_synth_dataset(a.data);
  const ArmsReport report = evaluate_arms(cases, arms, a.seeds, a.options);
  io::write_text_file(g.out_dir / "arms-report.json", arms_report_json(report));
  for (const auto& r : report.results) {
    std::string csv = "image_id,label,score\n";
    for (std::size_t i = 0; i < report.test_ids.size(); ++i)
      for (std::size_t k = 0; k < report.labels.size(); ++k)
        csv += report.test_ids[i] + ',' + std::string(label_name(report.labels[k])) + ',' +
               io::format_double(r.test_scores(static_cast<Eigen::Index>(i),
                                               static_cast<Eigen::Index>(k))) +
               '\n';
    io::write_text_file(g.out_dir / "scores" /
                            (std::string(supervision_name(r.arm)) + "-seed" +
                             std::to_string(r.seed) + ".csv"),
                        csv);
  }
  std::cout << "arm               seed  mean_iou  mean_auc\n";
  for (const auto& r : report.results) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-16s  %4llu  %8s  %8s\n",
                  std::string(supervision_name(r.arm)).c_str(),
                  static_cast<unsigned long long>(r.seed),
                  r.mean_iou ? std::to_string(*r.mean_iou).substr(0, 6).c_str() : "n/a",
                  r.mean_auc ? std::to_string(*r.mean_auc).substr(0, 6).c_str() : "n/a");
    std::cout << line;
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  int n = 50;
  std::string preset = "default";
  std::optional<double> lead_time, dwell_noise, distractor_rate, confounder_rate, prevalence,
      pixels_per_degree;
  std::optional<int> image_size;
};

int cmd_gen_synth(const Globals& g, const GenArgs& a) {
  SynthConfig cfg;
  if (a.preset == "confounded") cfg = confounded_config(g.seed, a.n);
  else if (a.preset != "default") throw InvalidArgument("unknown preset '" + a.preset + "'");
  cfg.seed = g.seed;
  cfg.n_sessions = a.n;
  if (a.lead_time) cfg.lead_time = *a.lead_time;
  if (a.dwell_noise) cfg.dwell_noise = *a.dwell_noise;
  if (a.distractor_rate) cfg.distractor_fixation_rate = *a.distractor_rate;
  if (a.confounder_rate) cfg.confounder_rate = *a.confounder_rate;
  if (a.prevalence) cfg.prevalence = *a.prevalence;
  if (a.pixels_per_degree) cfg.pixels_per_degree = *a.pixels_per_degree;
  if (a.image_size) cfg.image_size = *a.image_size;
  cfg.validate();
  write_synth_dataset(generate(cfg), g.out_dir);
  std::cout << "wrote " << cfg.n_sessions << " synthetic sessions to " << g.out_dir.string()
            << " (render them with --pixels-per-degree " << io::format_double(cfg.pixels_per_degree)
            << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct GradCheckArgs {
  int n = 100;
  int grid = 4;
  int labels = 3;
  int images = 3;
  double step = 1e-5;
  double tolerance = 1e-4;
  double fault = 1.0;
};

int cmd_grad_check(const Globals& g, const GradCheckArgs& a) {
  if (a.n < 0 || a.grid < 1 || a.labels < 1 || a.images < 1)
    throw InvalidArgument("--n must be non-negative and sizes positive");
  Rng rng(g.seed);
  std::string csv = "instance,lambda_multitask,normalize,max_relative_error,n_entries,n_floored,passed\n";
  int failed = 0;
  double worst = 0.0;
  for (int i = 0; i < a.n; ++i) {
    auto instance = random_loss_instance(rng, a.grid, a.labels, a.images, i % 2 ? 300.0 : 0.0);
    instance.config.normalize = i % 4 < 2;
    const auto r = check_gradients(instance, a.step, a.tolerance, a.fault);
    worst = std::max(worst, r.max_relative_error);
    if (!r.passed) ++failed;
    csv += std::to_string(i) + ',' + io::format_double(instance.config.lambda_multitask) + ',' +
           (instance.config.normalize ? "1" : "0") + ',' + io::format_double(r.max_relative_error) +
           ',' + std::to_string(r.n_entries) + ',' + std::to_string(r.n_floored) + ',' +
           (r.passed ? "1" : "0") + '\n';
  }
  io::write_text_file(g.out_dir / "grad-check.csv", csv);
  std::cout << a.n << " gradient checks, " << failed << " failed, max relative error "
            << io::format_double(worst) << "\n";
  return failed == 0 ? 0 : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eye-tracking label localization toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::string out_dir = g.out_dir.string();
  app.add_option("--seed", g.seed, "Seed for every random draw")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Worker threads; never changes output bytes")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--out-dir", out_dir, "Directory for output files")->capture_default_str();

  std::function<int()> run;

  ExtractArgs extract;
  auto* c_extract = app.add_subcommand("extract", "Label-specific heatmaps and grid annotations");
  c_extract->add_option("--data", extract.data, "Session directory or directory of sessions")
      ->required();
  c_extract->add_option("--rules", extract.rules, "rules.json (default: built-in rules)");
  add_render_options(c_extract, extract.render);
  c_extract->add_option("--grid-size", extract.grid_size)->capture_default_str();
  c_extract->add_option("--threshold", extract.threshold, "Grid threshold (strict >)")
      ->capture_default_str();
  c_extract->add_flag("--pgm", extract.pgm, "Also write heatmap.pgm");
  c_extract->callback([&] { run = [&] { return cmd_extract(g, extract); }; });

  LabelReportArgs label;
  auto* c_label = app.add_subcommand("label-report", "Run the labeler over report transcripts");
  c_label->add_option("--data", label.data, "Session directory or directory of sessions")
      ->required();
  c_label->add_option("--rules", label.rules, "rules.json (default: built-in rules)");
  c_label->add_option("--gold", label.gold,
                      "gold_labels.json to evaluate against (default: <data>/gold_labels.json if present)");
  c_label->add_flag("--uncertain-negative", label.uncertain_negative,
                    "Count uncertain mentions as negative");
  c_label->callback([&] { run = [&] { return cmd_label_report(g, label); }; });

  SearchArgs searchargs;
  auto* c_search = app.add_subcommand("search-windows", "Rank temporal window rules by IoU");
  c_search->add_option("--data", searchargs.data, "Directory of sessions with ellipses.csv")
      ->required();
  c_search->add_option("--rules", searchargs.rules, "rules.json (default: built-in rules)");
  c_search->add_option("--stage", searchargs.stage, "1: coarse cross product, 2: fine delays")
      ->check(CLI::IsMember({1, 2}))
      ->capture_default_str();
  add_render_options(c_search, searchargs.render);
  c_search->callback([&] { run = [&] { return cmd_search_windows(g, searchargs); }; });

  EvalIouArgs eval_iou;
  auto* c_iou = app.add_subcommand("eval-iou", "IoU of extracted heatmaps against ellipses");
  c_iou->add_option("--heatmaps", eval_iou.heatmaps, "Output directory of extract")->required();
  c_iou->add_option("--data", eval_iou.data, "Sessions with ellipses.csv")->required();
  c_iou->add_option("--threshold", eval_iou.threshold,
                    "Fixed threshold (default: best of the 101-point sweep per label)");
  c_iou->callback([&] { run = [&] { return cmd_eval_iou(g, eval_iou); }; });

  EvalAucArgs eval_auc;
  auto* c_auc = app.add_subcommand("eval-auc", "AUC of image-level scores");
  c_auc->add_option("--scores", eval_auc.scores, "CSV with image_id,label,score")->required();
  c_auc->add_option("--gold", eval_auc.gold, "gold_labels.json")->required();
  c_auc->callback([&] { run = [&] { return cmd_eval_auc(g, eval_auc); }; });

  TrainArgs train_args;
  train_args.options.dataset.render.pixels_per_degree = 4.0;
  auto* c_train = app.add_subcommand("train-toy", "Train and compare the supervision arms");
  c_train->add_option("--data", train_args.data, "Synthetic dataset from gen-synth")->required();
  c_train->add_option("--rules", train_args.rules, "rules.json (default: built-in rules)");
  c_train->add_option("--arms", train_args.arms,
                      "all, or a comma list of Unannotated,ETAnnotated,EllipseAnnotated")
      ->capture_default_str();
  c_train->add_option("--seeds", train_args.seeds, "Training seeds (default: --seed)")
      ->delimiter(',');
  c_train->add_option("--epochs", train_args.options.train.epochs)->capture_default_str();
  c_train->add_option("--lr", train_args.options.train.lr)->capture_default_str();
  c_train->add_option("--grid-size", train_args.options.dataset.grid_size)->capture_default_str();
  c_train->add_option("--et-threshold", train_args.options.dataset.et_threshold)
      ->capture_default_str();
  c_train->add_option("--lambda-annotated", train_args.options.train.loss_config.lambda_annotated)
      ->capture_default_str();
  c_train->add_option("--lambda-multitask", train_args.options.train.loss_config.lambda_multitask)
      ->capture_default_str();
  add_render_options(c_train, train_args.options.dataset.render);
  c_train->callback([&] { run = [&] { return cmd_train_toy(g, train_args); }; });

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen-synth", "Write a synthetic dataset");
  c_gen->add_option("--n", gen.n, "Number of sessions")->capture_default_str();
  c_gen->add_option("--preset", gen.preset, "default or confounded")
      ->check(CLI::IsMember({"default", "confounded"}))
      ->capture_default_str();
  c_gen->add_option("--lead-time", gen.lead_time, "Seconds gaze precedes the sentence");
  c_gen->add_option("--dwell-noise", gen.dwell_noise, "Fixation jitter, fraction of radii");
  c_gen->add_option("--distractor-rate", gen.distractor_rate, "Chance of an unrelated fixation");
  c_gen->add_option("--confounder-rate", gen.confounder_rate, "Chance of a confounder marker");
  c_gen->add_option("--prevalence", gen.prevalence, "Chance of each finding");
  c_gen->add_option("--pixels-per-degree", gen.pixels_per_degree, "Simulated foveal scale");
  c_gen->add_option("--image-size", gen.image_size, "Image side in pixels");
  c_gen->callback([&] { run = [&] { return cmd_gen_synth(g, gen); }; });

  GradCheckArgs grad;
  auto* c_grad = app.add_subcommand("grad-check", "Check loss gradients by finite differences");
  c_grad->add_option("--n", grad.n, "Number of random instances")->capture_default_str();
  c_grad->add_option("--grid", grad.grid, "Grid side")->capture_default_str();
  c_grad->add_option("--labels", grad.labels)->capture_default_str();
  c_grad->add_option("--images", grad.images, "Images per batch")->capture_default_str();
  c_grad->add_option("--step", grad.step)->capture_default_str();
  c_grad->add_option("--tolerance", grad.tolerance)->capture_default_str();
  // Negative control for tests: scales the largest analytic derivative.
  c_grad->add_option("--inject-fault", grad.fault)->group("");
  c_grad->callback([&] { run = [&] { return cmd_grad_check(g, grad); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitBadInput;
  }
  g.out_dir = out_dir;
  try {
    return run();
  } catch (const Error& e) {
    std::cerr << "etloc: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::cerr << "etloc: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}
