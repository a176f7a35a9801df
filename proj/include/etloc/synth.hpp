#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "etloc/ingest.hpp"
#include "etloc/types.hpp"

namespace etloc {

// Synthetic reading sessions with planted findings.
//
// Per session the generator draws, in this order from one seeded stream:
// image-level findings, their ellipses, confounder markers, the sentence
// order and text, word timings, then the gaze sequence, then the feature
// image pixels. Changing any config field can shift every later draw.

struct SynthConfig {
  std::uint64_t seed = 1;
  int n_sessions = 10;
  int image_size = 128;
  // Labels that can be planted; one feature channel each.
  std::vector<LabelId> labels = {LabelId::Pneumothorax, LabelId::PleuralAbnormality,
                                 LabelId::ECS};
  // Gaze reaches a finding this long before its sentence starts.
  double lead_time = 1.5;
  // Fixation position jitter, as a fraction of the ellipse radii.
  double dwell_noise = 0.0;
  // Probability that any fixation lands somewhere unrelated instead.
  double distractor_fixation_rate = 0.0;
  double blob_intensity = 1.0;

  // Foveal scale of the simulated display, pixels per degree.
  double pixels_per_degree = 4.0;
  double prevalence = 0.5;
  double background_noise = 0.1;
  // Chance that a finding-free label gets a negated sentence.
  double negated_mention_rate = 0.3;
  // Chance that a positive label also shows a salient but irrelevant marker
  // in its channel. Distractor fixations favor markers when present.
  double confounder_rate = 0.0;
  double confounder_intensity = 1.0;

  void validate() const;  // throws InvalidConfig
};

// One channel per synthesized label, image-sized.
struct FeatureImage {
  std::vector<LabelId> labels;
  std::vector<Heatmap> channels;

  // Exact, element by element.
  friend bool operator==(const FeatureImage& a, const FeatureImage& b) {
    if (a.labels != b.labels || a.channels.size() != b.channels.size()) return false;
    for (std::size_t i = 0; i < a.channels.size(); ++i) {
      const auto& x = a.channels[i];
      const auto& y = b.channels[i];
      if (x.rows() != y.rows() || x.cols() != y.cols() || !(x == y).all()) return false;
    }
    return true;
  }
};

struct SynthSession {
  Session session;
  std::vector<EllipseAnnotation> ellipses;
  LabelSet gold;
  FeatureImage features;
  // Confounder marker centers and radius per channel, for tests.
  std::vector<EllipseAnnotation> confounders;
};

std::vector<SynthSession> generate(const SynthConfig& config);

// A regime where image-level supervision can latch onto a shortcut: every
// finding comes with a confounder marker in its channel, the finding itself
// is faint, and some fixations wander onto the markers.
SynthConfig confounded_config(std::uint64_t seed, int n_sessions);

// Raw phrase dictated for a finding of `label`.
std::string_view synth_phrase(LabelId label);

std::string features_to_csv(const FeatureImage& image);
FeatureImage features_from_csv(std::string_view text, const std::string& source = "features.csv");

std::string gold_labels_to_json(const std::map<std::string, LabelSet>& gold);
std::map<std::string, LabelSet> gold_labels_from_json(std::string_view json,
                                                      const std::string& source = "gold_labels.json");

// <dir>/<image_id>/{fixations.csv, transcript.json, meta.json, ellipses.csv,
// features.csv} plus <dir>/gold_labels.json.
void write_synth_dataset(const std::vector<SynthSession>& sessions,
                         const std::filesystem::path& dir);

// Session directories below `dir` in name order (those with a meta.json).
std::vector<std::filesystem::path> session_dirs(const std::filesystem::path& dir);

// Reads back a directory written by write_synth_dataset, in session_dirs
// order. Confounder markers are not stored and come back empty.
std::vector<SynthSession> load_synth_dataset(const std::filesystem::path& dir);

}  // namespace etloc
