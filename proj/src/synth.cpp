#include "etloc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <nlohmann/json.hpp>

#include "etloc/error.hpp"
#include "etloc/grid.hpp"
#include "etloc/io.hpp"
#include "etloc/labeler.hpp"
#include "etloc/random.hpp"
#include "json_parse.hpp"

namespace etloc {

namespace {

struct Phrase {
  std::string_view text;
  std::string_view raw_label;  // rule of the default rule set it triggers
};

constexpr std::array<Phrase, kNumLabels> kPhrases = {{
    {"widened mediastinum", "abnormal mediastinal contour"},
    {"atelectasis", "atelectasis"},
    {"cardiomegaly", "cardiomegaly"},
    {"consolidation", "consolidation"},
    {"pulmonary edema", "pulmonary edema"},
    {"fracture", "fracture"},
    {"lung lesion", "lung lesion"},
    {"opacity", "lung opacity"},
    {"pleural effusion", "pleural effusion"},
    {"pneumothorax", "pneumothorax"},
}};

// "{}" marks the phrase. The phrase sits at varying depths so that the
// mention time within a sentence is not predictable from its start.
constexpr std::array<std::string_view, 8> kPositiveTemplates = {
    "there is {}",
    "{} is present and has increased in size since the prior radiograph",
    "{} noted on this study",
    "findings are consistent with {} in the left hemithorax",
    "in the right lower zone there is a small {}",
    "when compared with the prior study there is interval development of {}",
    "the study shows {} which is new since the prior exam",
    "{} is again seen and is unchanged in appearance from the previous film",
};
constexpr std::array<std::string_view, 4> kNegatedTemplates = {
    "no {}",
    "there is no {}",
    "no evidence of {}",
    "{} is absent",
};
constexpr std::array<std::string_view, 3> kFillerTemplates = {
    "the lungs are otherwise clear",
    "support lines are unchanged in position",
    "the osseous structures are intact",
};

template <std::size_t N>
std::string_view pick(Rng& rng, const std::array<std::string_view, N>& options) {
  return options[rng.index(N)];
}

std::vector<std::string> words_of(std::string_view text) {
  std::vector<std::string> words;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t space = text.find(' ', start);
    if (space == std::string_view::npos) space = text.size();
    if (space > start) words.emplace_back(text.substr(start, space - start));
    start = space + 1;
  }
  return words;
}

// Template words with the phrase spliced in; `phrase_end` gets the index of
// the phrase's last word.
std::vector<std::string> fill(std::string_view tmpl, std::string_view phrase,
                              std::size_t* phrase_end) {
  std::vector<std::string> out;
  for (auto& word : words_of(tmpl)) {
    if (word == "{}") {
      for (auto& p : words_of(phrase)) out.push_back(std::move(p));
      if (phrase_end) *phrase_end = out.size() - 1;
    } else {
      out.push_back(std::move(word));
    }
  }
  return out;
}

enum class SentenceKind { Finding, Negated, Filler };

struct PlannedSentence {
  SentenceKind kind;
  LabelId label;  // unused for fillers
};

struct GazeSegment {
  double t0;
  double t1;
  int target;  // index into the finding ellipses, -1 for free viewing
};

struct Finding {
  LabelId label;
  EllipseAnnotation geometry;
};

double clamp_coord(double v, int extent) {
  return std::clamp(v, 0.0, std::nextafter(static_cast<double>(extent), 0.0));
}

std::pair<double, double> uniform_in_ellipse(Rng& rng, double cx, double cy, double rx, double ry) {
  const double r = std::sqrt(rng.uniform());
  const double theta = 2.0 * std::numbers::pi * rng.uniform();
  return {cx + rx * r * std::cos(theta), cy + ry * r * std::sin(theta)};
}

SynthSession generate_one(const SynthConfig& cfg, Rng& rng, std::size_t index,
                          const LabelGrouping& grouping) {
  const int size = cfg.image_size;
  const double extent = static_cast<double>(size);
  SynthSession out;
  char id[32];
  std::snprintf(id, sizeof(id), "synth%05zu", index);
  out.session.image_id = id;
  out.session.width = size;
  out.session.height = size;
  out.session.recording_start = 0.0;

  // Findings and their ellipses.
  std::vector<Finding> findings;
  for (LabelId label : cfg.labels) {
    if (!rng.bernoulli(cfg.prevalence)) continue;
    EllipseAnnotation e;
    e.label = label;
    e.cx = rng.uniform(0.25, 0.75) * extent;
    e.cy = rng.uniform(0.25, 0.75) * extent;
    e.rx = rng.uniform(0.08, 0.18) * extent;
    e.ry = rng.uniform(0.08, 0.18) * extent;
    findings.push_back({label, e});
  }
  for (const auto& f : findings) {
    for (LabelId grouped : grouping.at(std::string(kPhrases[index_of(f.label)].raw_label))) {
      out.gold.set(index_of(grouped));
      EllipseAnnotation e = f.geometry;
      e.label = grouped;
      out.ellipses.push_back(e);
    }
  }
  std::stable_sort(out.ellipses.begin(), out.ellipses.end(),
                   [](const auto& a, const auto& b) { return a.label < b.label; });

  for (const auto& f : findings) {
    if (!rng.bernoulli(cfg.confounder_rate)) continue;
    const double r = 0.06 * extent;
    EllipseAnnotation c{f.label, rng.uniform(0.15, 0.85) * extent,
                        rng.uniform(0.15, 0.85) * extent, r, r};
    out.confounders.push_back(c);
  }

  // Report plan: findings plus negated mentions of labels that are absent
  // under every grouping, in random order.
  std::vector<PlannedSentence> plan;
  for (const auto& f : findings) plan.push_back({SentenceKind::Finding, f.label});
  for (LabelId label : cfg.labels) {
    bool clashes = false;
    for (LabelId grouped : grouping.at(std::string(kPhrases[index_of(label)].raw_label)))
      clashes = clashes || out.gold.test(index_of(grouped));
    if (clashes) continue;
    if (rng.bernoulli(cfg.negated_mention_rate)) plan.push_back({SentenceKind::Negated, label});
  }
  rng.shuffle(plan.begin(), plan.end());
  if (plan.empty() || rng.bernoulli(0.3)) plan.push_back({SentenceKind::Filler, LabelId::AMC});

  // Dictation timing and gaze segments.
  std::vector<GazeSegment> targets;
  double t = cfg.lead_time + rng.uniform(3.0, 5.0);  // free viewing before the first sentence
  for (std::size_t s = 0; s < plan.size(); ++s) {
    const auto& item = plan[s];
    std::size_t phrase_end = 0;
    std::vector<std::string> words;
    if (item.kind == SentenceKind::Filler) {
      words = words_of(pick(rng, kFillerTemplates));
    } else {
      const auto& tmpl = item.kind == SentenceKind::Finding ? pick(rng, kPositiveTemplates)
                                                            : pick(rng, kNegatedTemplates);
      words = fill(tmpl, kPhrases[index_of(item.label)].text, &phrase_end);
    }
    Sentence sentence;
    sentence.index = s;
    const double sentence_start = t;
    double mention_end = t;
    for (std::size_t w = 0; w < words.size(); ++w) {
      const double start = t;
      const double end = start + rng.uniform(0.25, 0.45);
      sentence.words.push_back({words[w], start, end});
      if (w == phrase_end) mention_end = end;
      t = end + rng.uniform(0.02, 0.1);
    }
    const double sentence_end = sentence.words.back().t_end;
    out.session.sentences.push_back(std::move(sentence));

    double next_start = sentence_end + rng.uniform(0.3, 1.5);
    if (item.kind == SentenceKind::Finding) {
      // The eyes reach the finding `lead_time` before the sentence and move
      // on shortly after naming it.
      const auto it = std::find_if(findings.begin(), findings.end(),
                                   [&](const auto& f) { return f.label == item.label; });
      const double release = mention_end + rng.uniform(0.0, 0.3);
      targets.push_back({sentence_start - cfg.lead_time, release,
                         static_cast<int>(it - findings.begin())});
      next_start = std::max(next_start, release + cfg.lead_time + rng.uniform(0.5, 1.5));
    }
    t = next_start;
  }
  const double recording_end = out.session.sentences.back().t_end() + rng.uniform(0.5, 1.5);

  std::vector<GazeSegment> segments;
  double cursor = out.session.recording_start;
  for (const auto& target : targets) {
    if (target.t0 > cursor) segments.push_back({cursor, target.t0, -1});
    segments.push_back(target);
    cursor = target.t1;
  }
  if (recording_end > cursor) segments.push_back({cursor, recording_end, -1});

  // Fixations never straddle a segment boundary.
  for (const auto& seg : segments) {
    double ft = seg.t0;
    while (ft < seg.t1) {
      const double end = std::min(ft + rng.uniform(0.1, 0.6), seg.t1);
      const double saccade = rng.uniform(0.02, 0.05);
      double x = 0.0, y = 0.0;
      if (rng.bernoulli(cfg.distractor_fixation_rate)) {
        if (!out.confounders.empty() && rng.bernoulli(0.5)) {
          const auto& c = out.confounders[rng.index(out.confounders.size())];
          std::tie(x, y) = uniform_in_ellipse(rng, c.cx, c.cy, c.rx, c.ry);
        } else {
          x = rng.uniform(0.0, extent);
          y = rng.uniform(0.0, extent);
        }
      } else if (seg.target >= 0) {
        // Fixation centers stay about one foveal radius inside the border,
        // so the foveated area matches the finding.
        const auto& e = findings[seg.target].geometry;
        const double sx = std::max(0.3, 1.0 - cfg.pixels_per_degree / e.rx);
        const double sy = std::max(0.3, 1.0 - cfg.pixels_per_degree / e.ry);
        std::tie(x, y) = uniform_in_ellipse(rng, e.cx, e.cy, sx * e.rx, sy * e.ry);
        x += rng.normal(0.0, cfg.dwell_noise * e.rx);
        y += rng.normal(0.0, cfg.dwell_noise * e.ry);
      } else {
        x = rng.uniform(0.0, extent);
        y = rng.uniform(0.0, extent);
      }
      if (end - ft > 1e-3)
        out.session.fixations.push_back({clamp_coord(x, size), clamp_coord(y, size), ft, end});
      ft = end + saccade;
    }
  }

  // Feature image: noise, bright findings, checkered confounders.
  out.features.labels = cfg.labels;
  for (LabelId label : cfg.labels) {
    const BinaryMask blob = label_mask(out.ellipses, label, size, size);
    Heatmap channel(size, size);
    for (int py = 0; py < size; ++py) {
      for (int px = 0; px < size; ++px) {
        double v = rng.normal(0.0, cfg.background_noise);
        if (blob(py, px)) v += cfg.blob_intensity;
        for (const auto& c : out.confounders) {
          if (c.label != label) continue;
          const double dx = (px - c.cx) / c.rx, dy = (py - c.cy) / c.ry;
          if (dx * dx + dy * dy <= 1.0)
            v += ((px + py) % 2 == 0 ? 1.0 : -1.0) * cfg.confounder_intensity;
        }
        channel(py, px) = v;
      }
    }
    out.features.channels.push_back(std::move(channel));
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  auto rate = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidConfig(std::string(name) + " must lie in [0, 1]");
  };
  if (n_sessions < 0) throw InvalidConfig("n_sessions must be non-negative");
  if (image_size < 16) throw InvalidConfig("image_size must be at least 16");
  if (labels.empty()) throw InvalidConfig("no labels to synthesize");
  LabelSet seen;
  for (LabelId label : labels) {
    if (seen.test(index_of(label))) throw InvalidConfig("duplicate synth label");
    seen.set(index_of(label));
  }
  if (!(lead_time >= 0.0) || !std::isfinite(lead_time))
    throw InvalidConfig("lead_time must be non-negative");
  rate(dwell_noise, "dwell_noise");
  rate(distractor_fixation_rate, "distractor_fixation_rate");
  rate(prevalence, "prevalence");
  rate(negated_mention_rate, "negated_mention_rate");
  rate(confounder_rate, "confounder_rate");
  if (!std::isfinite(blob_intensity) || !std::isfinite(confounder_intensity))
    throw InvalidConfig("intensities must be finite");
  if (!(background_noise >= 0.0) || !std::isfinite(background_noise))
    throw InvalidConfig("background_noise must be non-negative");
  if (!(pixels_per_degree > 0.0) || !std::isfinite(pixels_per_degree))
    throw InvalidConfig("pixels_per_degree must be positive");
}

std::string_view synth_phrase(LabelId label) { return kPhrases[index_of(label)].text; }

std::vector<SynthSession> generate(const SynthConfig& config) {
  config.validate();
  const RuleSet rules = RuleSet::defaults();
  Rng rng(config.seed);
  std::vector<SynthSession> sessions;
  sessions.reserve(static_cast<std::size_t>(config.n_sessions));
  for (int i = 0; i < config.n_sessions; ++i)
    sessions.push_back(generate_one(config, rng, static_cast<std::size_t>(i), rules.grouping));
  return sessions;
}

std::string features_to_csv(const FeatureImage& image) {
  if (image.labels.size() != image.channels.size())
    throw DimensionMismatch("one label per feature channel is required");
  const Eigen::Index w = image.channels.empty() ? 0 : image.channels.front().cols();
  const Eigen::Index h = image.channels.empty() ? 0 : image.channels.front().rows();
  std::string out = "# " + std::to_string(w) + " " + std::to_string(h) + " " +
                    std::to_string(image.channels.size()) + "\n";
  for (std::size_t c = 0; c < image.channels.size(); ++c) {
    const Heatmap& channel = image.channels[c];
    if (channel.cols() != w || channel.rows() != h)
      throw DimensionMismatch("feature channels differ in size");
    out += "# " + std::string(label_name(image.labels[c])) + "\n";
    for (Eigen::Index y = 0; y < h; ++y) {
      for (Eigen::Index x = 0; x < w; ++x) {
        if (x) out += ',';
        out += io::format_double(channel(y, x));
      }
      out += '\n';
    }
  }
  return out;
}

FeatureImage features_from_csv(std::string_view text, const std::string& source) {
  const auto lines = io::split_lines(text);
  if (lines.empty() || lines[0].substr(0, 2) != "# ")
    throw MalformedRow(source, 1, 1, "expected '# width height channels' header");
  std::vector<long long> dims;
  {
    std::string_view rest = lines[0].substr(2);
    std::size_t start = 0;
    while (start <= rest.size()) {
      std::size_t space = rest.find(' ', start);
      if (space == std::string_view::npos) space = rest.size();
      auto v = io::parse_int(rest.substr(start, space - start));
      if (!v) throw MalformedRow(source, 1, start + 3, "bad header field");
      dims.push_back(*v);
      start = space + 1;
    }
  }
  if (dims.size() != 3 || dims[0] <= 0 || dims[1] <= 0 || dims[2] < 0)
    throw MalformedRow(source, 1, 3, "bad dimensions");
  const long long w = dims[0], h = dims[1], n = dims[2];
  FeatureImage image;
  std::size_t line = 1;
  for (long long c = 0; c < n; ++c) {
    if (line >= lines.size() || lines[line].substr(0, 2) != "# ")
      throw MalformedRow(source, line + 1, 1, "expected '# <label>' channel header");
    auto label = parse_label(lines[line].substr(2));
    if (!label) throw MalformedRow(source, line + 1, 3, "unknown label");
    image.labels.push_back(*label);
    ++line;
    Heatmap channel(h, w);
    for (long long y = 0; y < h; ++y, ++line) {
      if (line >= lines.size()) throw MalformedRow(source, line + 1, 1, "missing rows");
      auto fields = io::split_csv_line(lines[line]);
      if (static_cast<long long>(fields.size()) != w)
        throw MalformedRow(source, line + 1, 1, "expected " + std::to_string(w) + " values");
      for (long long x = 0; x < w; ++x) {
        auto v = io::parse_double(fields[x]);
        if (!v) throw MalformedRow(source, line + 1, x + 1, "not a number");
        channel(y, x) = *v;
      }
    }
    image.channels.push_back(std::move(channel));
  }
  return image;
}

std::string gold_labels_to_json(const std::map<std::string, LabelSet>& gold) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [id, labels] : gold) {
    nlohmann::json list = nlohmann::json::array();
    for (LabelId label : kAllLabels)
      if (labels.test(index_of(label))) list.push_back(std::string(label_name(label)));
    doc[id] = std::move(list);
  }
  return doc.dump(2) + "\n";
}

std::map<std::string, LabelSet> gold_labels_from_json(std::string_view json,
                                                      const std::string& source) {
  nlohmann::json doc = detail::parse_json(json, source);
  if (!doc.is_object()) throw MalformedRow(source, 0, 0, "expected an object of label lists");
  std::map<std::string, LabelSet> gold;
  for (const auto& [id, list] : doc.items()) {
    if (!list.is_array()) throw MalformedRow(source, 0, 0, id + ": expected a list");
    LabelSet set;
    for (const auto& name : list) {
      if (!name.is_string()) throw MalformedRow(source, 0, 0, id + ": label must be a string");
      set.set(index_of(label_from_name(name.get<std::string>())));
    }
    gold[id] = set;
  }
  return gold;
}

void write_synth_dataset(const std::vector<SynthSession>& sessions,
                         const std::filesystem::path& dir) {
  std::map<std::string, LabelSet> gold;
  for (const auto& s : sessions) {
    const auto session_dir = dir / s.session.image_id;
    save_session_dir(s.session, session_dir);
    io::write_text_file(session_dir / "ellipses.csv", ellipses_to_csv(s.ellipses));
    io::write_text_file(session_dir / "features.csv", features_to_csv(s.features));
    gold[s.session.image_id] = s.gold;
  }
  io::write_text_file(dir / "gold_labels.json", gold_labels_to_json(gold));
}

std::vector<std::filesystem::path> session_dirs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "meta.json"))
      out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<SynthSession> load_synth_dataset(const std::filesystem::path& dir) {
  std::map<std::string, LabelSet> gold;
  const auto gold_path = dir / "gold_labels.json";
  if (std::filesystem::exists(gold_path))
    gold = gold_labels_from_json(io::read_text_file(gold_path), gold_path.string());
  std::vector<SynthSession> out;
  for (const auto& session_dir : session_dirs(dir)) {
    SynthSession s;
    s.session = load_session_dir(session_dir);
    const auto ellipses_path = session_dir / "ellipses.csv";
    if (std::filesystem::exists(ellipses_path)) s.ellipses = load_ellipses(ellipses_path);
    const auto features_path = session_dir / "features.csv";
    s.features = features_from_csv(io::read_text_file(features_path), features_path.string());
    if (auto it = gold.find(s.session.image_id); it != gold.end()) s.gold = it->second;
    out.push_back(std::move(s));
  }
  return out;
}

SynthConfig confounded_config(std::uint64_t seed, int n_sessions) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.n_sessions = n_sessions;
  cfg.dwell_noise = 0.1;
  cfg.distractor_fixation_rate = 0.2;
  cfg.background_noise = 0.5;
  cfg.blob_intensity = 0.5;
  cfg.confounder_rate = 1.0;
  cfg.confounder_intensity = 1.0;
  return cfg;
}

}  // namespace etloc
