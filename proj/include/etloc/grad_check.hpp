#pragma once

#include <cstdint>
#include <vector>

#include "etloc/losses.hpp"
#include "etloc/random.hpp"

namespace etloc {

// A random batch for checking grad_logits against finite differences.
struct LossInstance {
  std::vector<LossExample> batch;
  LossConfig config;
};

// `images` examples with n x n grids, K labels and n x n map logits. Every
// status kind appears in the first image; the rest are drawn at random.
// Annotated-positive labels get at least one cell.
LossInstance random_loss_instance(Rng& rng, int n, int labels, int images, double lambda_multitask);

// Relative error of an analytic derivative `a` against a central difference
// `f` of a function with value `loss`, step h. The denominator is floored at
// the rounding noise of the difference quotient over the tolerance, so
// entries below what the difference can resolve are judged by that noise.
double fd_relative_error(double a, double f, double loss, double h, double tolerance);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t n_entries = 0;
  // Entries whose error was measured against the noise floor.
  std::size_t n_floored = 0;
  // Entries that would fail a plain relative error with no floor.
  std::size_t n_unfloored_failures = 0;
  bool passed = true;
};

// Central differences of loss_total with step h against grad_logits, over
// every grid and map logit. `fault` scales the largest analytic entry, for
// negative controls.
GradCheckResult check_gradients(const LossInstance& instance, double h = 1e-5,
                                double tolerance = 1e-4, double fault = 1.0);

}  // namespace etloc
