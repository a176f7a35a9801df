#pragma once

#include <span>
#include <vector>

#include "etloc/ingest.hpp"
#include "etloc/labeler.hpp"
#include "etloc/types.hpp"

namespace etloc {

struct TimeWindow {
  double t_start = 0.0;
  double t_end = 0.0;

  double duration() const { return t_end - t_start; }
  friend bool operator==(const TimeWindow&, const TimeWindow&) = default;
};

struct RenderConfig {
  // One degree of visual angle in image pixels; the Gaussian sigma.
  double pixels_per_degree = 50.0;
  // How far before the mentioning sentence the window may open, seconds.
  double window_lead = 1.5;
  // Skip Gaussian tails beyond 4 sigma. Off by default: exact full-image sums.
  bool truncate = false;

  void validate() const;  // throws InvalidConfig
};

struct WeightedFixation {
  FixationRecord fixation;
  double overlap = 0.0;  // seconds of the fixation inside the window
};

// Accumulation window of one mention: from the later of (sentence start -
// lead) and the previous sentence's start (recording start for the first
// sentence) up to the end of the label's last mention in the sentence.
TimeWindow mention_window(const LabelMention& mention, std::span<const Sentence> sentences,
                          const RenderConfig& config, double recording_start);

// Fixations with positive temporal overlap against `window`.
std::vector<WeightedFixation> select_fixations(std::span<const FixationRecord> fixations,
                                               const TimeWindow& window);

// Sum of overlap-weighted isotropic Gaussians evaluated at integer pixel
// coordinates, divided by its maximum. Empty input gives the zero map.
Heatmap render_heatmap(std::span<const WeightedFixation> selected, int width, int height,
                       const RenderConfig& config);

// Unnormalized accumulation, exposed for tests and tools.
Heatmap accumulate_gaussians(std::span<const WeightedFixation> selected, int width, int height,
                             const RenderConfig& config);

// Element-wise maximum; throws DimensionMismatch, InvalidArgument when empty.
Heatmap aggregate_mentions(std::span<const Heatmap> heatmaps);

// Label-specific heatmap of one label: every positive mention rendered and
// max-aggregated. Zero map when there are no mentions.
Heatmap label_heatmap(const Session& session, std::span<const LabelMention> mentions,
                      const RenderConfig& config);

}  // namespace etloc
