#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "etloc/gaze_heatmap.hpp"
#include "etloc/grid.hpp"
#include "etloc/labeler.hpp"
#include "etloc/losses.hpp"
#include "etloc/metrics.hpp"
#include "etloc/synth.hpp"

namespace etloc {

// A per-cell linear scorer over patch statistics of the feature image,
// trained by full-batch gradient descent on loss_total.

inline constexpr int kPatchFeatures = 3;  // mean, max, variance

enum class Supervision { Unannotated, ETAnnotated, EllipseAnnotated };

inline constexpr std::array<Supervision, 3> kAllSupervision = {
    Supervision::Unannotated, Supervision::ETAnnotated, Supervision::EllipseAnnotated};

std::string_view supervision_name(Supervision s);
std::optional<Supervision> parse_supervision(std::string_view name);

// Raw patch statistics of every label channel: one (n*n) x 3 matrix per
// channel, rows in row-major cell order.
struct PatchFeatures {
  int grid_size = 0;
  std::vector<Eigen::MatrixXd> channels;
};

// Patches follow the grid's bucket map. Throws GridLargerThanImage.
PatchFeatures patch_features(const FeatureImage& image, int grid_size);

struct ToyExample {
  PatchFeatures features;
  std::vector<LabelStatus> statuses;
  // Multi-task targets at grid resolution; empty for the unannotated arm.
  std::vector<BinaryMask> map_targets;
};

struct ToyDataset {
  std::vector<LabelId> labels;
  int grid_size = kDefaultGridSize;
  std::vector<ToyExample> examples;
};

struct DatasetOptions {
  int grid_size = kDefaultGridSize;
  RenderConfig render;
  double et_threshold = kDefaultEtThreshold;
  UncertainPolicy policy = UncertainPolicy::AsPositive;
};

// Image-level labels come from the labeler run on each transcript. Annotated
// arms mark negative labels as annotated with no cells; a positive label
// whose annotation comes out empty stays unannotated.
ToyDataset build_dataset(std::span<const SynthSession> cases, Supervision supervision,
                         const RuleSet& rules, const DatasetOptions& options);

struct ToyModel {
  std::vector<LabelId> labels;
  int grid_size = 0;
  // Per-channel feature standardization, kPatchFeatures x K.
  Eigen::MatrixXd feature_mean;
  Eigen::MatrixXd feature_scale;
  // Grid head and multi-task map head, kPatchFeatures x K weights.
  Eigen::MatrixXd grid_weights;
  Eigen::RowVectorXd grid_bias;
  Eigen::MatrixXd map_weights;
  Eigen::RowVectorXd map_bias;

  Eigen::MatrixXd grid_logits(const PatchFeatures& features) const;
  Eigen::MatrixXd map_logits(const PatchFeatures& features) const;
  // Flattened parameters: grid weights, grid bias, map weights, map bias.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& theta);
};

struct TrainConfig {
  double lr = 0.05;
  int epochs = 200;
  Supervision supervision = Supervision::Unannotated;
  LossConfig loss_config;
  std::uint64_t seed = 1;

  void validate() const;  // throws InvalidConfig
};

struct TrainResult {
  ToyModel model;
  // Loss before training, then after every epoch.
  std::vector<double> loss_trace;
};

// Standardization fitted on `dataset`, small seeded initial weights.
ToyModel init_model(const ToyDataset& dataset, std::uint64_t seed);

// loss_total of the model on the dataset, and its gradient w.r.t. the
// flattened parameters.
double objective(const ToyModel& model, const ToyDataset& dataset, const LossConfig& cfg,
                 Eigen::VectorXd* gradient = nullptr);

// Full-batch gradient descent. A step that would raise the loss is halved
// until it does not; the next epoch starts from twice the accepted step,
// capped at lr. Throws DivergedLoss on a non-finite loss.
TrainResult train(const ToyDataset& dataset, const TrainConfig& cfg);

// Model heatmap of label column k: sigmoid of the grid logits, upscaled.
Heatmap model_heatmap(const ToyModel& model, const PatchFeatures& features, std::size_t k,
                      int width, int height);

struct ArmsOptions {
  TrainConfig train;
  DatasetOptions dataset;
  RuleSet rules = RuleSet::defaults();
  // Fractions of the cases used to train and to validate thresholds; the
  // rest is the test split. Splits are contiguous in case order.
  double train_fraction = 0.5;
  double validation_fraction = 0.25;
  int jobs = 1;
};

struct ArmResult {
  Supervision arm = Supervision::Unannotated;
  std::uint64_t seed = 0;
  IoUReport iou;
  AUCReport auc;
  std::optional<double> mean_iou;
  std::optional<double> mean_auc;
  double final_loss = 0.0;
  // Image-level probability of every test case (rows) and label (columns).
  Eigen::MatrixXd test_scores;
};

struct ArmsReport {
  std::vector<LabelId> labels;
  std::vector<std::string> test_ids;
  std::vector<ArmResult> results;  // arm-major, then seed
};

// Trains every arm for every seed and evaluates on the held-out split.
ArmsReport evaluate_arms(std::span<const SynthSession> cases, std::span<const Supervision> arms,
                         std::span<const std::uint64_t> seeds, const ArmsOptions& options);

std::string arms_report_json(const ArmsReport& report);

}  // namespace etloc
