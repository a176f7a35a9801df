#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "etloc/types.hpp"

namespace etloc {

// |pred & gt| / |pred | gt|; 1 when both masks are empty.
double iou(const BinaryMask& pred, const BinaryMask& gt);

// 101 evenly spaced thresholds 0, 0.01, ..., 1.
std::vector<double> default_threshold_sweep();

// IoU of (heatmap > t) against `gt` for every threshold of an ascending
// sweep, in one pass over the pixels.
std::vector<double> iou_sweep(const Heatmap& heatmap, const BinaryMask& gt,
                              std::span<const double> thresholds);

struct ThresholdChoice {
  double threshold = 0.0;
  double mean_iou = 0.0;
  std::vector<double> mean_iou_per_threshold;
};

// Threshold with the highest mean IoU over the (heatmap, gt) pairs; ties go
// to the smaller threshold. Throws NoPositiveExamples, DimensionMismatch.
ThresholdChoice validate_threshold(std::span<const Heatmap> heatmaps,
                                   std::span<const BinaryMask> gts,
                                   std::span<const double> thresholds);

// Mann-Whitney AUC with ties counted as one half. Throws DegenerateLabels.
double auc(std::span<const double> scores, std::span<const bool> labels);

struct IoUEntry {
  double best_threshold = 0.0;
  double iou = 0.0;
  std::size_t n_positives = 0;
};

struct AUCEntry {
  double auc = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

using IoUReport = std::array<std::optional<IoUEntry>, kNumLabels>;
using AUCReport = std::array<std::optional<AUCEntry>, kNumLabels>;

struct MacroSummary {
  std::optional<double> mean;
  std::vector<LabelId> included;
  std::vector<LabelId> absent;
};

// Unweighted mean over the labels that have a value.
MacroSummary summarize(const std::array<std::optional<double>, kNumLabels>& per_label);
MacroSummary summarize(const IoUReport& report);
MacroSummary summarize(const AUCReport& report);

struct SeedInterval {
  double mean = 0.0;
  // Normal-approximation 95% interval; absent with fewer than two seeds.
  std::optional<double> lower;
  std::optional<double> upper;
};

SeedInterval seed_interval(std::span<const double> per_seed);

// metrics.json / metrics.csv renderings of a report.
std::string metrics_json(const IoUReport* iou_report, const AUCReport* auc_report);
std::string metrics_csv(const IoUReport* iou_report, const AUCReport* auc_report);

}  // namespace etloc
