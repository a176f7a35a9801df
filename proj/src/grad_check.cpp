#include "etloc/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace etloc {

LossInstance random_loss_instance(Rng& rng, int n, int labels, int images,
                                  double lambda_multitask) {
  LossInstance instance;
  instance.config.lambda_multitask = lambda_multitask;
  const Eigen::Index cells = static_cast<Eigen::Index>(n) * n;
  for (int i = 0; i < images; ++i) {
    LossExample ex;
    ex.grid_logits.resize(cells, labels);
    ex.map_logits.resize(cells, labels);
    for (Eigen::Index j = 0; j < ex.grid_logits.size(); ++j) {
      ex.grid_logits.data()[j] = rng.normal(0.0, 2.0);
      ex.map_logits.data()[j] = rng.normal(0.0, 2.0);
    }
    for (int k = 0; k < labels; ++k) {
      // Image 0 cycles through annotated, unannotated-positive, unannotated-negative.
      const std::uint64_t kind = i == 0 ? static_cast<std::uint64_t>(k % 3) : rng.index(3);
      BinaryMask target(n, n);
      for (Eigen::Index j = 0; j < target.size(); ++j) target.data()[j] = rng.bernoulli(0.3);
      if (kind == 0) {
        const bool positive = i == 0 || rng.bernoulli(0.7);
        GridAnnotation cells_mask = BinaryMask::Constant(n, n, false);
        if (positive) {
          for (Eigen::Index j = 0; j < cells_mask.size(); ++j)
            cells_mask.data()[j] = rng.bernoulli(0.3);
          if (!cells_mask.any()) cells_mask.data()[rng.index(cells_mask.size())] = true;
        }
        ex.statuses.push_back(LabelStatus::annotated(std::move(cells_mask), positive));
      } else {
        ex.statuses.push_back(LabelStatus::unannotated(kind == 1));
      }
      ex.map_targets.push_back(std::move(target));
    }
    instance.batch.push_back(std::move(ex));
  }
  return instance;
}

double fd_relative_error(double a, double f, double loss, double h, double tolerance) {
  const double noise = 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(loss)) / h;
  return std::abs(a - f) / std::max({std::abs(a), std::abs(f), noise / tolerance});
}

GradCheckResult check_gradients(const LossInstance& instance, double h, double tolerance,
                                double fault) {
  GradCheckResult result;
  LossGradient analytic = grad_logits(instance.batch, instance.config);
  if (fault != 1.0) {
    double* largest = nullptr;
    for (auto* group : {&analytic.grid, &analytic.map})
      for (auto& g : *group)
        for (Eigen::Index j = 0; j < g.size(); ++j)
          if (!largest || std::abs(g.data()[j]) > std::abs(*largest)) largest = g.data() + j;
    if (largest) *largest *= fault;
  }
  const double loss = loss_total(instance.batch, instance.config);
  const double noise_floor =
      4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(loss)) / h / tolerance;
  std::vector<LossExample> probe = instance.batch;
  auto compare = [&](double a, double f) {
    const double err = fd_relative_error(a, f, loss, h, tolerance);
    result.max_relative_error = std::max(result.max_relative_error, err);
    if (!(err < tolerance)) result.passed = false;
    if (std::max(std::abs(a), std::abs(f)) < noise_floor) ++result.n_floored;
    const double scale = std::max(std::abs(a), std::abs(f));
    if (scale > 0.0 && !(std::abs(a - f) / scale < tolerance)) ++result.n_unfloored_failures;
    ++result.n_entries;
  };
  auto central = [&](double& slot) {
    const double saved = slot;
    slot = saved + h;
    const double up = loss_total(probe, instance.config);
    slot = saved - h;
    const double down = loss_total(probe, instance.config);
    slot = saved;
    return (up - down) / (2.0 * h);
  };
  for (std::size_t e = 0; e < probe.size(); ++e) {
    for (Eigen::Index j = 0; j < probe[e].grid_logits.size(); ++j)
      compare(analytic.grid[e].data()[j], central(probe[e].grid_logits.data()[j]));
    for (Eigen::Index j = 0; j < probe[e].map_logits.size(); ++j)
      compare(analytic.map[e].data()[j], central(probe[e].map_logits.data()[j]));
  }
  return result;
}

}  // namespace etloc
