#include "etloc/losses.hpp"

namespace etloc {

void LossConfig::validate() const {
  if (!(lambda_annotated >= 0.0) || !(lambda_multitask >= 0.0))
    throw InvalidConfig("loss weights must be non-negative");
  if (!(range_constant > 0.0 && range_constant < 1.0))
    throw InvalidConfig("range constant must lie in (0, 1)");
}

double lower_clamp(std::size_t factor_count, const LossConfig& cfg) {
  if (!cfg.normalize || factor_count == 0) return 0.0;
  return std::pow(cfg.range_constant, 1.0 / static_cast<double>(factor_count));
}

double normalize_factor(double p, std::size_t factor_count, double range_constant) {
  if (factor_count == 0) throw InvalidArgument("factor count must be positive");
  const double lower = std::pow(range_constant, 1.0 / static_cast<double>(factor_count));
  return lower + (1.0 - lower) * p;
}

namespace {

void check_example(const LossExample& example) {
  if (static_cast<Eigen::Index>(example.statuses.size()) != example.labels())
    throw DimensionMismatch("one status per label is required");
  if (example.has_map()) {
    if (example.map_logits.cols() != example.labels() ||
        static_cast<Eigen::Index>(example.map_targets.size()) != example.labels())
      throw DimensionMismatch("map logits and targets need one channel per label");
  }
}

double label_loss(const LossExample& example, Eigen::Index k, const LossConfig& cfg) {
  const auto logits = example.grid_logits.col(k);
  const LabelStatus& status = example.statuses[k];
  switch (status.kind) {
    case LabelStatus::Kind::Annotated:
      return cfg.lambda_annotated * loss_annotated(logits, status.cells, cfg);
    case LabelStatus::Kind::UnannotatedPositive:
      return loss_unannotated_pos(logits, cfg);
    case LabelStatus::Kind::UnannotatedNegative:
      return loss_unannotated_neg(logits, cfg);
  }
  return 0.0;
}

Eigen::VectorXd label_loss_grad(const LossExample& example, Eigen::Index k,
                                const LossConfig& cfg) {
  const auto logits = example.grid_logits.col(k);
  const LabelStatus& status = example.statuses[k];
  switch (status.kind) {
    case LabelStatus::Kind::Annotated:
      return cfg.lambda_annotated * loss_annotated_grad(logits, status.cells, cfg);
    case LabelStatus::Kind::UnannotatedPositive:
      return loss_unannotated_pos_grad(logits, cfg);
    case LabelStatus::Kind::UnannotatedNegative:
      return loss_unannotated_neg_grad(logits, cfg);
  }
  return Eigen::VectorXd::Zero(logits.size());
}

Eigen::Array<bool, Eigen::Dynamic, 1> gates(const LossExample& example) {
  Eigen::Array<bool, Eigen::Dynamic, 1> out(example.labels());
  for (Eigen::Index k = 0; k < out.size(); ++k) out(k) = example.statuses[k].annotated_positive();
  return out;
}

}  // namespace

double loss_mil(std::span<const LossExample> batch, const LossConfig& cfg) {
  double sum = 0.0;
  std::size_t pairs = 0;
  for (const auto& example : batch) {
    check_example(example);
    for (Eigen::Index k = 0; k < example.labels(); ++k) sum += label_loss(example, k, cfg);
    pairs += static_cast<std::size_t>(example.labels());
  }
  return pairs == 0 ? 0.0 : sum / static_cast<double>(pairs);
}

double loss_multitask(const Eigen::MatrixXd& map_logits, std::span<const BinaryMask> targets,
                      std::span<const bool> positives) {
  if (static_cast<Eigen::Index>(targets.size()) != map_logits.cols() ||
      static_cast<Eigen::Index>(positives.size()) != map_logits.cols())
    throw DimensionMismatch("one target and one gate per label are required");
  if (map_logits.cols() == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index k = 0; k < map_logits.cols(); ++k) {
    if (positives[k]) sum += pixel_cross_entropy(map_logits.col(k), targets[k]);
  }
  return sum / static_cast<double>(map_logits.cols());
}

double loss_multitask(std::span<const LossExample> batch) {
  if (batch.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& example : batch) {
    check_example(example);
    if (!example.has_map()) continue;
    const auto gate = gates(example);
    sum += loss_multitask(example.map_logits, example.map_targets,
                          std::span<const bool>(gate.data(), static_cast<std::size_t>(gate.size())));
  }
  return sum / static_cast<double>(batch.size());
}

double loss_total(std::span<const LossExample> batch, const LossConfig& cfg) {
  return loss_mil(batch, cfg) + cfg.lambda_multitask * loss_multitask(batch);
}

LossGradient grad_logits(std::span<const LossExample> batch, const LossConfig& cfg) {
  const double total = loss_total(batch, cfg);
  if (!std::isfinite(total)) throw NonFiniteLoss("loss is not finite; gradient undefined");

  std::size_t pairs = 0;
  for (const auto& example : batch) pairs += static_cast<std::size_t>(example.labels());
  const double pair_scale = pairs == 0 ? 0.0 : 1.0 / static_cast<double>(pairs);

  LossGradient grad;
  for (const auto& example : batch) {
    Eigen::MatrixXd g(example.grid_logits.rows(), example.grid_logits.cols());
    for (Eigen::Index k = 0; k < example.labels(); ++k)
      g.col(k) = pair_scale * label_loss_grad(example, k, cfg);
    grad.grid.push_back(std::move(g));

    Eigen::MatrixXd gm = Eigen::MatrixXd::Zero(example.map_logits.rows(), example.map_logits.cols());
    if (example.has_map() && example.labels() > 0) {
      const double map_scale = cfg.lambda_multitask /
                               (static_cast<double>(batch.size()) *
                                static_cast<double>(example.labels()));
      for (Eigen::Index k = 0; k < example.labels(); ++k) {
        if (example.statuses[k].annotated_positive())
          gm.col(k) = map_scale * pixel_cross_entropy_grad(example.map_logits.col(k),
                                                           example.map_targets[k]);
      }
    }
    grad.map.push_back(std::move(gm));
  }
  return grad;
}

}  // namespace etloc
