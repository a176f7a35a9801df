#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "etloc/error.hpp"
#include "etloc/types.hpp"

namespace etloc {

// Multiple-instance-learning losses over a grid of per-cell logits, with the
// balanced range normalization of product factors, plus the pixel-level
// multi-task cross-entropy and their analytic gradients.
//
// Cell logits of one label are a column vector of n*n entries in row-major
// cell order (j = row * n + col). A whole image is a (n*n) x K matrix, one
// column per label.

struct LossConfig {
  double lambda_annotated = 3.0;
  double lambda_multitask = 300.0;
  // Minimum value of any normalized product.
  double range_constant = 0.0056738;
  bool normalize = true;

  void validate() const;  // throws InvalidConfig
};

// Lower end of the normalized factor range for a product of `factor_count`
// factors: c^(1 / n_t), or 0 when normalization is off.
double lower_clamp(std::size_t factor_count, const LossConfig& cfg);

// Maps a probability p into [c^(1/n_t), 1].
double normalize_factor(double p, std::size_t factor_count, double range_constant);

namespace detail {

template <typename Scalar>
Scalar log_sigmoid(Scalar z) {
  // -softplus(-z)
  return -(std::max(-z, Scalar(0)) + std::log1p(std::exp(-std::abs(z))));
}

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  if (z >= 0) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

// log(L + (1 - L) * sigmoid(z)), accurate in both tails.
template <typename Scalar>
Scalar log_norm_sigmoid(Scalar z, Scalar lower) {
  if (lower == Scalar(0)) return log_sigmoid(z);
  if (z >= 0) return std::log1p(-(Scalar(1) - lower) * sigmoid(-z));
  return std::log(lower + (Scalar(1) - lower) * sigmoid(z));
}

// d/dz log(L + (1 - L) * sigmoid(z)).
template <typename Scalar>
Scalar log_norm_sigmoid_grad(Scalar z, Scalar lower) {
  if (lower == Scalar(0)) return sigmoid(-z);
  return std::exp(std::log1p(-lower) + log_sigmoid(z) + log_sigmoid(-z) -
                  log_norm_sigmoid(z, lower));
}

template <typename Derived>
using ScalarOf = typename Derived::Scalar;

template <typename Derived>
using ColumnOf = Eigen::Matrix<ScalarOf<Derived>, Eigen::Dynamic, 1>;

template <typename Mask>
Eigen::Map<const Eigen::Array<bool, Eigen::Dynamic, 1>> flatten(const Mask& mask) {
  return {mask.data(), mask.size()};
}

// log C and log P of the soft-OR, where P = prod_j norm(1 - sigmoid(z_j)) and
// C = 1 - P. Finite whenever any logit is finite.
template <typename Derived>
std::pair<ScalarOf<Derived>, ScalarOf<Derived>> soft_or_logs(
    const Eigen::MatrixBase<Derived>& logits, ScalarOf<Derived> lower) {
  using Scalar = ScalarOf<Derived>;
  Scalar u = 0;  // -log P
  for (Eigen::Index j = 0; j < logits.size(); ++j) u -= log_norm_sigmoid(-logits(j), lower);
  Scalar log_c;
  if (u > std::numeric_limits<Scalar>::min()) {
    log_c = std::log(-std::expm1(-u));
  } else {
    // Every factor rounds to 1; C ~ (1 - L) * sum_j sigmoid(z_j).
    Scalar peak = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index j = 0; j < logits.size(); ++j) peak = std::max(peak, log_sigmoid(logits(j)));
    Scalar sum = 0;
    for (Eigen::Index j = 0; j < logits.size(); ++j) sum += std::exp(log_sigmoid(logits(j)) - peak);
    log_c = std::log1p(-lower) + peak + std::log(sum);
  }
  return {log_c, -u};
}

}  // namespace detail

// C_k = 1 - prod_j norm(1 - sigmoid(z_j)).
template <typename Derived>
detail::ScalarOf<Derived> predict_image(const Eigen::MatrixBase<Derived>& logits,
                                        const LossConfig& cfg) {
  using Scalar = detail::ScalarOf<Derived>;
  const auto lower = static_cast<Scalar>(lower_clamp(logits.size(), cfg));
  Scalar log_p = 0;
  for (Eigen::Index j = 0; j < logits.size(); ++j)
    log_p += detail::log_norm_sigmoid(-logits(j), lower);
  return -std::expm1(log_p);
}

// -[sum_{j in B} log norm(sigmoid(z_j)) + sum_{j not in B} log norm(1 - sigmoid(z_j))],
// each product normalized with its own factor count.
template <typename Derived, typename Mask>
detail::ScalarOf<Derived> loss_annotated(const Eigen::MatrixBase<Derived>& logits,
                                         const Mask& annotation, const LossConfig& cfg) {
  using Scalar = detail::ScalarOf<Derived>;
  if (annotation.size() != logits.size())
    throw DimensionMismatch("annotation does not match the logit grid");
  const auto cells = detail::flatten(annotation);
  const auto positives = static_cast<std::size_t>(cells.count());
  const auto negatives = static_cast<std::size_t>(logits.size()) - positives;
  const auto lower_pos = static_cast<Scalar>(lower_clamp(positives, cfg));
  const auto lower_neg = static_cast<Scalar>(lower_clamp(negatives, cfg));
  Scalar loss = 0;
  for (Eigen::Index j = 0; j < logits.size(); ++j) {
    loss -= cells(j) ? detail::log_norm_sigmoid(logits(j), lower_pos)
                     : detail::log_norm_sigmoid(-logits(j), lower_neg);
  }
  return loss;
}

template <typename Derived, typename Mask>
detail::ColumnOf<Derived> loss_annotated_grad(const Eigen::MatrixBase<Derived>& logits,
                                              const Mask& annotation, const LossConfig& cfg) {
  using Scalar = detail::ScalarOf<Derived>;
  if (annotation.size() != logits.size())
    throw DimensionMismatch("annotation does not match the logit grid");
  const auto cells = detail::flatten(annotation);
  const auto positives = static_cast<std::size_t>(cells.count());
  const auto lower_pos = static_cast<Scalar>(lower_clamp(positives, cfg));
  const auto lower_neg =
      static_cast<Scalar>(lower_clamp(static_cast<std::size_t>(logits.size()) - positives, cfg));
  detail::ColumnOf<Derived> grad(logits.size());
  for (Eigen::Index j = 0; j < logits.size(); ++j) {
    grad(j) = cells(j) ? -detail::log_norm_sigmoid_grad(logits(j), lower_pos)
                       : detail::log_norm_sigmoid_grad(-logits(j), lower_neg);
  }
  return grad;
}

// -log C_k.
template <typename Derived>
detail::ScalarOf<Derived> loss_unannotated_pos(const Eigen::MatrixBase<Derived>& logits,
                                               const LossConfig& cfg) {
  using Scalar = detail::ScalarOf<Derived>;
  const auto lower = static_cast<Scalar>(lower_clamp(logits.size(), cfg));
  return -detail::soft_or_logs(logits, lower).first;
}

template <typename Derived>
detail::ColumnOf<Derived> loss_unannotated_pos_grad(const Eigen::MatrixBase<Derived>& logits,
                                                    const LossConfig& cfg) {
  using Scalar = detail::ScalarOf<Derived>;
  const auto lower = static_cast<Scalar>(lower_clamp(logits.size(), cfg));
  const auto [log_c, log_p] = detail::soft_or_logs(logits, lower);
  detail::ColumnOf<Derived> grad(logits.size());
  // dL/dz_j = -(P / C) * (1 - L) s_j (1 - s_j) / f_j, with f_j = L + (1 - L)(1 - s_j).
  for (Eigen::Index j = 0; j < logits.size(); ++j) {
    const Scalar z = logits(j);
    Scalar log_mag = log_p - log_c + detail::log_sigmoid(z);
    if (lower != Scalar(0)) {
      log_mag += std::log1p(-lower) + detail::log_sigmoid(-z) -
                 detail::log_norm_sigmoid(-z, lower);
    }
    grad(j) = -std::exp(log_mag);
  }
  return grad;
}

// -sum_j log norm(1 - sigmoid(z_j)).
template <typename Derived>
detail::ScalarOf<Derived> loss_unannotated_neg(const Eigen::MatrixBase<Derived>& logits,
                                               const LossConfig& cfg) {
  using Scalar = detail::ScalarOf<Derived>;
  const auto lower = static_cast<Scalar>(lower_clamp(logits.size(), cfg));
  Scalar loss = 0;
  for (Eigen::Index j = 0; j < logits.size(); ++j)
    loss -= detail::log_norm_sigmoid(-logits(j), lower);
  return loss;
}

template <typename Derived>
detail::ColumnOf<Derived> loss_unannotated_neg_grad(const Eigen::MatrixBase<Derived>& logits,
                                                    const LossConfig& cfg) {
  using Scalar = detail::ScalarOf<Derived>;
  const auto lower = static_cast<Scalar>(lower_clamp(logits.size(), cfg));
  detail::ColumnOf<Derived> grad(logits.size());
  for (Eigen::Index j = 0; j < logits.size(); ++j)
    grad(j) = detail::log_norm_sigmoid_grad(-logits(j), lower);
  return grad;
}

// Mean binary cross-entropy of one map channel against binary targets.
template <typename Derived, typename Mask>
detail::ScalarOf<Derived> pixel_cross_entropy(const Eigen::MatrixBase<Derived>& logits,
                                              const Mask& targets) {
  using Scalar = detail::ScalarOf<Derived>;
  if (targets.size() != logits.size())
    throw DimensionMismatch("map targets do not match the map logits");
  const auto t = detail::flatten(targets);
  Scalar sum = 0;
  for (Eigen::Index j = 0; j < logits.size(); ++j)
    sum -= t(j) ? detail::log_sigmoid(logits(j)) : detail::log_sigmoid(-logits(j));
  return sum / static_cast<Scalar>(logits.size());
}

template <typename Derived, typename Mask>
detail::ColumnOf<Derived> pixel_cross_entropy_grad(const Eigen::MatrixBase<Derived>& logits,
                                                   const Mask& targets) {
  using Scalar = detail::ScalarOf<Derived>;
  if (targets.size() != logits.size())
    throw DimensionMismatch("map targets do not match the map logits");
  const auto t = detail::flatten(targets);
  detail::ColumnOf<Derived> grad(logits.size());
  const auto scale = Scalar(1) / static_cast<Scalar>(logits.size());
  for (Eigen::Index j = 0; j < logits.size(); ++j)
    grad(j) = (detail::sigmoid(logits(j)) - (t(j) ? Scalar(1) : Scalar(0))) * scale;
  return grad;
}

// ---------------------------------------------------------------------------
// Batch-level losses.

// Per (image, label) supervision, the indicator functions of the MIL loss.
struct LabelStatus {
  enum class Kind { Annotated, UnannotatedPositive, UnannotatedNegative };
  Kind kind = Kind::UnannotatedNegative;
  // Annotated only: positive cells of the grid, and the image-level label.
  GridAnnotation cells;
  bool positive = false;

  static LabelStatus annotated(GridAnnotation cells, bool positive) {
    return {Kind::Annotated, std::move(cells), positive};
  }
  static LabelStatus unannotated(bool positive) {
    return {positive ? Kind::UnannotatedPositive : Kind::UnannotatedNegative, {}, positive};
  }
  bool annotated_positive() const { return kind == Kind::Annotated && positive; }
};

// One image of a batch: grid logits ((n*n) x K), the status of every label,
// and optionally the multi-task map logits ((m*m) x K) with per-label targets.
struct LossExample {
  Eigen::MatrixXd grid_logits;
  std::vector<LabelStatus> statuses;
  Eigen::MatrixXd map_logits;
  std::vector<BinaryMask> map_targets;

  Eigen::Index labels() const { return grid_logits.cols(); }
  bool has_map() const { return map_logits.size() > 0; }
};

struct LossGradient {
  std::vector<Eigen::MatrixXd> grid;
  std::vector<Eigen::MatrixXd> map;
};

// Mean over (image, label) pairs of lambda_A * L_A, L_U+ or L_U-.
double loss_mil(std::span<const LossExample> batch, const LossConfig& cfg);
// Single image multi-task term: (1/K) sum over annotated-positive labels of
// the mean pixel cross-entropy.
double loss_multitask(const Eigen::MatrixXd& map_logits, std::span<const BinaryMask> targets,
                      std::span<const bool> positives);
// Batch mean of the single-image multi-task term.
double loss_multitask(std::span<const LossExample> batch);
double loss_total(std::span<const LossExample> batch, const LossConfig& cfg);

// Analytic d loss_total / d logits for every example. Throws NonFiniteLoss.
LossGradient grad_logits(std::span<const LossExample> batch, const LossConfig& cfg);

}  // namespace etloc
