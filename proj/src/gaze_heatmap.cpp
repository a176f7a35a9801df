#include "etloc/gaze_heatmap.hpp"

#include <algorithm>
#include <cmath>

#include "etloc/error.hpp"

namespace etloc {

void RenderConfig::validate() const {
  if (!(pixels_per_degree > 0.0) || !std::isfinite(pixels_per_degree))
    throw InvalidConfig("pixels_per_degree must be positive");
  if (!(window_lead >= 0.0) || !std::isfinite(window_lead))
    throw InvalidConfig("window_lead must be >= 0");
}

TimeWindow mention_window(const LabelMention& mention, std::span<const Sentence> sentences,
                          const RenderConfig& config, double recording_start) {
  if (mention.sentence_index >= sentences.size())
    throw InvalidArgument("mention refers to a missing sentence");
  const double sentence_start = sentences[mention.sentence_index].t_start();
  const double floor = mention.sentence_index == 0
                           ? recording_start
                           : sentences[mention.sentence_index - 1].t_start();
  return {std::max(sentence_start - config.window_lead, floor), mention.t_last_mention_end};
}

std::vector<WeightedFixation> select_fixations(std::span<const FixationRecord> fixations,
                                               const TimeWindow& window) {
  std::vector<WeightedFixation> selected;
  for (const auto& f : fixations) {
    const double overlap = std::min(f.t_end, window.t_end) - std::max(f.t_start, window.t_start);
    if (overlap > 0.0) selected.push_back({f, overlap});
  }
  return selected;
}

namespace {

// Rows: pixel coordinate 0..extent-1; columns: one Gaussian factor per fixation.
Eigen::MatrixXd axis_factors(std::span<const WeightedFixation> selected, int extent,
                             bool along_x, double sigma, bool truncate) {
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  const double cutoff = 4.0 * sigma;
  Eigen::MatrixXd factors(extent, static_cast<Eigen::Index>(selected.size()));
  for (Eigen::Index f = 0; f < factors.cols(); ++f) {
    const double center = along_x ? selected[f].fixation.x : selected[f].fixation.y;
    for (int p = 0; p < extent; ++p) {
      const double d = p - center;
      factors(p, f) = truncate && std::abs(d) > cutoff ? 0.0 : std::exp(-d * d * inv_two_var);
    }
  }
  return factors;
}

}  // namespace

Heatmap accumulate_gaussians(std::span<const WeightedFixation> selected, int width, int height,
                             const RenderConfig& config) {
  config.validate();
  if (width <= 0 || height <= 0) throw InvalidArgument("heatmap dimensions must be positive");
  if (selected.empty()) return Heatmap::Zero(height, width);
  const double sigma = config.pixels_per_degree;
  // exp(-|p - c|^2 / 2s^2) factors into a row term and a column term, so the
  // whole map is Gy * diag(w) * Gx^T.
  const Eigen::MatrixXd gy = axis_factors(selected, height, false, sigma, config.truncate);
  const Eigen::MatrixXd gx = axis_factors(selected, width, true, sigma, config.truncate);
  Eigen::VectorXd weights(static_cast<Eigen::Index>(selected.size()));
  for (Eigen::Index f = 0; f < weights.size(); ++f) weights[f] = selected[f].overlap;
  const Eigen::MatrixXd dense = gy * weights.asDiagonal() * gx.transpose();
  return Heatmap(dense);
}

Heatmap render_heatmap(std::span<const WeightedFixation> selected, int width, int height,
                       const RenderConfig& config) {
  Heatmap map = accumulate_gaussians(selected, width, height, config);
  const double peak = map.maxCoeff();
  if (peak > 0.0) map /= peak;
  return map;
}

Heatmap aggregate_mentions(std::span<const Heatmap> heatmaps) {
  if (heatmaps.empty()) throw InvalidArgument("nothing to aggregate");
  Heatmap result = heatmaps.front();
  for (const auto& h : heatmaps.subspan(1)) {
    if (h.rows() != result.rows() || h.cols() != result.cols())
      throw DimensionMismatch("heatmaps must share dimensions");
    result = result.max(h);
  }
  return result;
}

Heatmap label_heatmap(const Session& session, std::span<const LabelMention> mentions,
                      const RenderConfig& config) {
  std::vector<Heatmap> maps;
  maps.reserve(mentions.size());
  for (const auto& mention : mentions) {
    const TimeWindow window =
        mention_window(mention, session.sentences, config, session.recording_start);
    const auto selected = select_fixations(session.fixations, window);
    maps.push_back(render_heatmap(selected, session.width, session.height, config));
  }
  if (maps.empty()) return Heatmap::Zero(session.height, session.width);
  return aggregate_mentions(maps);
}

}  // namespace etloc
