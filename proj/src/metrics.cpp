#include "etloc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "etloc/error.hpp"
#include "etloc/io.hpp"

namespace etloc {

double iou(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    throw DimensionMismatch("IoU of masks with different dimensions");
  const auto intersection = (pred && gt).count();
  const auto union_size = (pred || gt).count();
  if (union_size == 0) return 1.0;
  return static_cast<double>(intersection) / static_cast<double>(union_size);
}

std::vector<double> default_threshold_sweep() {
  std::vector<double> sweep(101);
  for (int i = 0; i <= 100; ++i) sweep[i] = i / 100.0;
  return sweep;
}

std::vector<double> iou_sweep(const Heatmap& heatmap, const BinaryMask& gt,
                              std::span<const double> thresholds) {
  if (heatmap.rows() != gt.rows() || heatmap.cols() != gt.cols())
    throw DimensionMismatch("heatmap and mask differ in size");
  if (!std::is_sorted(thresholds.begin(), thresholds.end()))
    throw InvalidArgument("thresholds must be ascending");
  const std::size_t t = thresholds.size();
  // A pixel of value v is predicted at thresholds[0 .. c) where c counts the
  // thresholds strictly below v. Histogram c separately for gt in/out.
  std::vector<long long> inside(t + 1, 0), outside(t + 1, 0);
  long long gt_total = 0;
  for (Eigen::Index y = 0; y < heatmap.rows(); ++y) {
    for (Eigen::Index x = 0; x < heatmap.cols(); ++x) {
      const double v = heatmap(y, x);
      const auto c = static_cast<std::size_t>(
          std::lower_bound(thresholds.begin(), thresholds.end(), v) - thresholds.begin());
      if (gt(y, x)) {
        ++inside[c];
        ++gt_total;
      } else {
        ++outside[c];
      }
    }
  }
  // Pixels predicted at threshold i: those with c > i.
  std::vector<double> result(t);
  long long tp = 0, fp = 0;
  for (std::size_t i = t; i-- > 0;) {
    tp += inside[i + 1];
    fp += outside[i + 1];
    const long long union_size = gt_total + fp;
    result[i] = union_size == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(union_size);
  }
  return result;
}

ThresholdChoice validate_threshold(std::span<const Heatmap> heatmaps,
                                   std::span<const BinaryMask> gts,
                                   std::span<const double> thresholds) {
  if (heatmaps.size() != gts.size()) throw DimensionMismatch("one mask per heatmap is required");
  if (heatmaps.empty()) throw NoPositiveExamples("no validation pairs");
  if (thresholds.empty()) throw InvalidArgument("empty threshold sweep");
  std::vector<double> totals(thresholds.size(), 0.0);
  for (std::size_t i = 0; i < heatmaps.size(); ++i) {
    const auto ious = iou_sweep(heatmaps[i], gts[i], thresholds);
    for (std::size_t t = 0; t < totals.size(); ++t) totals[t] += ious[t];
  }
  ThresholdChoice choice;
  choice.mean_iou_per_threshold.resize(totals.size());
  std::size_t best = 0;
  for (std::size_t t = 0; t < totals.size(); ++t) {
    choice.mean_iou_per_threshold[t] = totals[t] / static_cast<double>(heatmaps.size());
    if (choice.mean_iou_per_threshold[t] > choice.mean_iou_per_threshold[best]) best = t;
  }
  choice.threshold = thresholds[best];
  choice.mean_iou = choice.mean_iou_per_threshold[best];
  return choice;
}

double auc(std::span<const double> scores, std::span<const bool> labels) {
  if (scores.size() != labels.size()) throw DimensionMismatch("one label per score is required");
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DegenerateLabels("AUC needs positives and negatives");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the rank sum of the positives, using midranks for ties; stays an
  // exact integer in double arithmetic.
  double twice_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double twice_midrank = static_cast<double>(i + 1 + j);  // ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) twice_rank_sum += twice_midrank;
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  // U = R - n_pos (n_pos + 1) / 2; kept doubled so every step is exact.
  const double twice_u = twice_rank_sum - np * (np + 1.0);
  return (twice_u / 2.0) / (np * nn);
}

MacroSummary summarize(const std::array<std::optional<double>, kNumLabels>& per_label) {
  MacroSummary summary;
  double sum = 0.0;
  for (LabelId label : kAllLabels) {
    const auto& value = per_label[index_of(label)];
    if (value) {
      sum += *value;
      summary.included.push_back(label);
    } else {
      summary.absent.push_back(label);
    }
  }
  if (!summary.included.empty()) summary.mean = sum / static_cast<double>(summary.included.size());
  return summary;
}

MacroSummary summarize(const IoUReport& report) {
  std::array<std::optional<double>, kNumLabels> values;
  for (int k = 0; k < kNumLabels; ++k)
    if (report[k]) values[k] = report[k]->iou;
  return summarize(values);
}

MacroSummary summarize(const AUCReport& report) {
  std::array<std::optional<double>, kNumLabels> values;
  for (int k = 0; k < kNumLabels; ++k)
    if (report[k]) values[k] = report[k]->auc;
  return summarize(values);
}

SeedInterval seed_interval(std::span<const double> per_seed) {
  if (per_seed.empty()) throw InvalidArgument("no seeds");
  SeedInterval out;
  const double n = static_cast<double>(per_seed.size());
  out.mean = std::accumulate(per_seed.begin(), per_seed.end(), 0.0) / n;
  if (per_seed.size() >= 2) {
    double ss = 0.0;
    for (double v : per_seed) ss += (v - out.mean) * (v - out.mean);
    const double half = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    out.lower = out.mean - half;
    out.upper = out.mean + half;
  }
  return out;
}

namespace {

nlohmann::json macro_json(const MacroSummary& summary) {
  nlohmann::json out;
  out["mean"] = summary.mean ? nlohmann::json(*summary.mean) : nlohmann::json(nullptr);
  out["absent"] = nlohmann::json::array();
  for (LabelId label : summary.absent) out["absent"].push_back(std::string(label_name(label)));
  return out;
}

}  // namespace

std::string metrics_json(const IoUReport* iou_report, const AUCReport* auc_report) {
  nlohmann::json doc = nlohmann::json::object();
  if (iou_report) {
    nlohmann::json labels = nlohmann::json::object();
    for (LabelId label : kAllLabels) {
      if (const auto& e = (*iou_report)[index_of(label)]) {
        labels[std::string(label_name(label))] = {
            {"best_threshold", e->best_threshold}, {"iou", e->iou}, {"n_positives", e->n_positives}};
      }
    }
    doc["iou"] = {{"per_label", labels}, {"macro", macro_json(summarize(*iou_report))}};
  }
  if (auc_report) {
    nlohmann::json labels = nlohmann::json::object();
    for (LabelId label : kAllLabels) {
      if (const auto& e = (*auc_report)[index_of(label)]) {
        labels[std::string(label_name(label))] = {
            {"auc", e->auc}, {"n_pos", e->n_pos}, {"n_neg", e->n_neg}};
      }
    }
    doc["auc"] = {{"per_label", labels}, {"macro", macro_json(summarize(*auc_report))}};
  }
  return doc.dump(2) + "\n";
}

std::string metrics_csv(const IoUReport* iou_report, const AUCReport* auc_report) {
  std::string out = "metric,label,value,threshold,n_pos,n_neg\n";
  if (iou_report) {
    for (LabelId label : kAllLabels) {
      if (const auto& e = (*iou_report)[index_of(label)]) {
        out += "iou," + std::string(label_name(label)) + ',' + io::format_double(e->iou) + ',' +
               io::format_double(e->best_threshold) + ',' + std::to_string(e->n_positives) + ",\n";
      }
    }
    const auto macro = summarize(*iou_report);
    out += "iou,macro," + (macro.mean ? io::format_double(*macro.mean) : std::string()) + ",,,\n";
  }
  if (auc_report) {
    for (LabelId label : kAllLabels) {
      if (const auto& e = (*auc_report)[index_of(label)]) {
        out += "auc," + std::string(label_name(label)) + ',' + io::format_double(e->auc) + ",," +
               std::to_string(e->n_pos) + ',' + std::to_string(e->n_neg) + '\n';
      }
    }
    const auto macro = summarize(*auc_report);
    out += "auc,macro," + (macro.mean ? io::format_double(*macro.mean) : std::string()) + ",,,\n";
  }
  return out;
}

}  // namespace etloc
