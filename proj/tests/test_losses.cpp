#include <doctest.h>

#include <cmath>
#include <limits>

#include "etloc/error.hpp"
#include "etloc/grad_check.hpp"
#include "etloc/losses.hpp"
#include "etloc/random.hpp"

using namespace etloc;

namespace {

constexpr double kC = 0.0056738;

LossConfig plain() {
  LossConfig cfg;
  cfg.normalize = false;
  return cfg;
}

Eigen::VectorXd logits(std::initializer_list<double> values) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

BinaryMask cells(std::initializer_list<bool> values) {
  BinaryMask m(1, static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (bool b : values) m(0, i++) = b;
  return m;
}

// Scalar function of one label column, for finite differences.
template <typename Loss>
Eigen::VectorXd numeric_grad(Loss loss, Eigen::VectorXd z, double h = 1e-5) {
  Eigen::VectorXd g(z.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    const double saved = z(j);
    z(j) = saved + h;
    const double up = loss(z);
    z(j) = saved - h;
    const double down = loss(z);
    z(j) = saved;
    g(j) = (up - down) / (2 * h);
  }
  return g;
}

template <typename Loss>
double grad_error(const Eigen::VectorXd& analytic, Loss loss, const Eigen::VectorXd& z) {
  const Eigen::VectorXd numeric = numeric_grad(loss, z);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < z.size(); ++j)
    worst = std::max(worst, fd_relative_error(analytic(j), numeric(j), loss(z), 1e-5, 1e-4));
  return worst;
}

}  // namespace

TEST_CASE("range normalization") {
  CHECK(normalize_factor(0.0, 256, kC) == doctest::Approx(0.98).epsilon(1e-6));
  CHECK(normalize_factor(0.0, 1, kC) == doctest::Approx(kC).epsilon(1e-12));
  for (std::size_t n : {1u, 3u, 17u, 256u}) CHECK(normalize_factor(1.0, n, kC) == 1.0);
  LossConfig cfg;
  for (std::size_t n : {1u, 4u, 64u, 256u, 1024u})
    CHECK(std::abs(std::pow(lower_clamp(n, cfg), static_cast<double>(n)) - kC) < 1e-9);
  CHECK(lower_clamp(10, plain()) == 0.0);
}

TEST_CASE("predict_image") {
  const auto cfg = plain();
  CHECK(predict_image(logits({-1e9, -1e9, -1e9}), cfg) == 0.0);
  CHECK(predict_image(logits({0.0}), cfg) == doctest::Approx(0.5));
  CHECK(predict_image(logits({0.0, 0.0}), cfg) == doctest::Approx(0.75));

  Rng rng(1);
  LossConfig norm;
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd z(16);
    for (auto& v : z) v = rng.normal(0, 3);
    const Eigen::Index j = static_cast<Eigen::Index>(rng.index(16));
    Eigen::VectorXd bumped = z;
    bumped(j) += 0.5;
    CHECK(predict_image(bumped, norm) > predict_image(z, norm));
    CHECK(predict_image(bumped, cfg) >= predict_image(z, cfg));
  }
}

TEST_CASE("loss_annotated") {
  const auto cfg = plain();
  CHECK(loss_annotated(logits({40.0, 40.0}), cells({true, true}), cfg) < 1e-15);
  CHECK(loss_annotated(logits({0.0}), cells({true}), cfg) == doctest::Approx(std::log(2.0)));
  CHECK(loss_annotated(logits({-40.0, -40.0}), cells({false, false}), cfg) < 1e-15);
  CHECK_THROWS_AS(loss_annotated(logits({0.0}), cells({true, false}), cfg), DimensionMismatch);

  Rng rng(2);
  LossConfig norm;
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd z(9);
    for (auto& v : z) v = rng.normal(0, 20);
    BinaryMask all = BinaryMask::Constant(1, 9, true), none = BinaryMask::Constant(1, 9, false);
    CHECK(loss_annotated(z, none, cfg) == doctest::Approx(loss_unannotated_neg(z, cfg)));
    double all_pos = 0;
    for (double v : z) all_pos -= detail::log_sigmoid(v);
    CHECK(loss_annotated(z, all, cfg) == doctest::Approx(all_pos));
    BinaryMask mixed(1, 9);
    for (auto& b : mixed.reshaped()) b = rng.bernoulli(0.5);
    const double bounded = loss_annotated(z, mixed, norm);
    CHECK(std::isfinite(bounded));
    CHECK(bounded <= -2.0 * std::log(kC) + 1e-9);
  }
}

TEST_CASE("loss_unannotated_pos") {
  const auto cfg = plain();
  CHECK(loss_unannotated_pos(logits({40.0}), cfg) < 1e-15);
  CHECK(loss_unannotated_pos(logits({0.0, 0.0}), cfg) == doctest::Approx(-std::log(0.75)));
  LossConfig norm;
  // Every sigmoid at 1 drives C to 1 - c.
  CHECK(loss_unannotated_pos(Eigen::VectorXd::Constant(16, 60.0), norm) ==
        doctest::Approx(-std::log(1.0 - kC)));
  const double empty = loss_unannotated_pos(Eigen::VectorXd::Constant(16, -60.0), norm);
  CHECK(std::isfinite(empty));
  CHECK(empty > 20.0);
  CHECK(std::isfinite(loss_unannotated_pos(Eigen::VectorXd::Constant(16, -800.0), plain())));
}

TEST_CASE("loss_unannotated_neg") {
  const auto cfg = plain();
  CHECK(loss_unannotated_neg(Eigen::VectorXd::Constant(4, -60.0), cfg) < 1e-20);
  CHECK(loss_unannotated_neg(logits({0.0}), cfg) == doctest::Approx(std::log(2.0)));
  LossConfig norm;
  CHECK(loss_unannotated_neg(Eigen::VectorXd::Constant(16, 60.0), norm) ==
        doctest::Approx(-std::log(kC)).epsilon(1e-9));
}

TEST_CASE("pixel cross entropy and multitask") {
  BinaryMask t = cells({true, false});
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(pixel_cross_entropy(logits({inf, -inf}), t) == 0.0);
  CHECK(pixel_cross_entropy(logits({0.0}), cells({true})) == doctest::Approx(std::log(2.0)));

  Eigen::MatrixXd map = Eigen::MatrixXd::Zero(2, 2);
  std::vector<BinaryMask> targets = {t, t};
  bool none[2] = {false, false};
  CHECK(loss_multitask(map, targets, none) == 0.0);
  bool first[2] = {true, false};
  CHECK(loss_multitask(map, targets, first) == doctest::Approx(std::log(2.0) / 2));
}

TEST_CASE("batch losses") {
  LossConfig cfg = plain();
  cfg.lambda_multitask = 0.0;
  LossExample quiet;
  quiet.grid_logits = Eigen::MatrixXd::Constant(4, 2, -80.0);
  quiet.statuses = {LabelStatus::unannotated(false), LabelStatus::unannotated(false)};
  CHECK(loss_mil(std::span(&quiet, 1), cfg) < 1e-30);

  LossExample one;
  one.grid_logits = Eigen::MatrixXd::Zero(4, 2);
  GridAnnotation b = GridAnnotation::Constant(2, 2, false);
  b(0, 0) = true;
  one.statuses = {LabelStatus::annotated(b, true), LabelStatus::unannotated(false)};
  const double la = loss_annotated(one.grid_logits.col(0), b, cfg);
  const double lneg = loss_unannotated_neg(one.grid_logits.col(1), cfg);
  CHECK(loss_mil(std::span(&one, 1), cfg) == doctest::Approx((3.0 * la + lneg) / 2));
  cfg.lambda_annotated = 0.0;
  CHECK(loss_mil(std::span(&one, 1), cfg) == doctest::Approx(lneg / 2));

  // loss_total = loss_mil + lambda_T * loss_multitask.
  Rng rng(3);
  auto instance = random_loss_instance(rng, 4, 3, 3, 300.0);
  const double mil = loss_mil(instance.batch, instance.config);
  const double mt = loss_multitask(instance.batch);
  CHECK(loss_total(instance.batch, instance.config) == doctest::Approx(mil + 300.0 * mt));
  instance.config.lambda_multitask = 0.0;
  CHECK(loss_total(instance.batch, instance.config) == doctest::Approx(mil));
}

TEST_CASE("per-term gradients match finite differences") {
  Rng rng(4);
  for (bool normalize : {false, true}) {
    LossConfig cfg;
    cfg.normalize = normalize;
    for (int trial = 0; trial < 30; ++trial) {
      Eigen::VectorXd z(16);
      for (auto& v : z) v = rng.normal(0, 3);
      BinaryMask mask(4, 4);
      for (auto& v : mask.reshaped()) v = rng.bernoulli(0.4);
      using V = Eigen::VectorXd;
      CHECK(grad_error(loss_annotated_grad(z, mask, cfg),
                       [&](const V& x) { return loss_annotated(x, mask, cfg); }, z) < 1e-4);
      CHECK(grad_error(loss_unannotated_pos_grad(z, cfg),
                       [&](const V& x) { return loss_unannotated_pos(x, cfg); }, z) < 1e-4);
      CHECK(grad_error(loss_unannotated_neg_grad(z, cfg),
                       [&](const V& x) { return loss_unannotated_neg(x, cfg); }, z) < 1e-4);
      CHECK(grad_error(pixel_cross_entropy_grad(z, mask),
                       [&](const V& x) { return pixel_cross_entropy(x, mask); }, z) < 1e-4);
    }
  }
}

TEST_CASE("gradient worked cases") {
  const auto cfg = plain();
  CHECK(loss_unannotated_pos_grad(logits({0.0}), cfg)(0) == doctest::Approx(-0.5));
  CHECK(loss_annotated_grad(logits({60.0, -60.0}), cells({true, false}), cfg).norm() < 1e-20);
  // Extreme logits keep gradients finite.
  LossConfig norm;
  for (double z : {-700.0, -40.0, 40.0, 700.0}) {
    auto g = loss_unannotated_pos_grad(Eigen::VectorXd::Constant(4, z), norm);
    CHECK(g.allFinite());
    g = loss_unannotated_pos_grad(Eigen::VectorXd::Constant(4, z), cfg);
    CHECK(g.allFinite());
  }
}

TEST_CASE("grad_logits matches finite differences on random batches") {
  Rng rng(5);
  for (int i = 0; i < 40; ++i) {
    auto instance = random_loss_instance(rng, 4, 3, 3, i % 2 ? 300.0 : 0.0);
    instance.config.normalize = i % 4 < 2;
    const auto result = check_gradients(instance);
    CAPTURE(result.max_relative_error);
    CHECK(result.passed);
    CHECK(result.n_entries == 3u * 2u * 16u * 3u);
  }
  Rng again(5);
  auto instance = random_loss_instance(again, 4, 3, 3, 300.0);
  CHECK_FALSE(check_gradients(instance, 1e-5, 1e-4, 1.01).passed);
}

TEST_CASE("config validation and non-finite input") {
  LossConfig cfg;
  cfg.range_constant = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
  cfg = LossConfig{};
  cfg.lambda_annotated = -1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);

  LossExample bad;
  bad.grid_logits = Eigen::MatrixXd::Constant(4, 1, std::numeric_limits<double>::quiet_NaN());
  bad.statuses = {LabelStatus::unannotated(true)};
  CHECK_THROWS_AS(grad_logits(std::span(&bad, 1), LossConfig{}), NonFiniteLoss);
}
