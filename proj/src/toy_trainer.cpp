#include "etloc/toy_trainer.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "etloc/error.hpp"
#include "etloc/grid.hpp"
#include "etloc/parallel.hpp"
#include "etloc/random.hpp"

namespace etloc {

namespace {

constexpr std::array<std::string_view, 3> kSupervisionNames = {"Unannotated", "ETAnnotated",
                                                               "EllipseAnnotated"};

Eigen::MatrixXd standardized(const ToyModel& model, const PatchFeatures& features,
                             std::size_t k) {
  const Eigen::MatrixXd& raw = features.channels[k];
  Eigen::MatrixXd out = raw.rowwise() - model.feature_mean.col(k).transpose();
  return out.array().rowwise() / model.feature_scale.col(k).transpose().array();
}

Eigen::MatrixXd head_logits(const ToyModel& model, const PatchFeatures& features,
                            const Eigen::MatrixXd& weights, const Eigen::RowVectorXd& bias) {
  const auto K = static_cast<Eigen::Index>(model.labels.size());
  if (static_cast<Eigen::Index>(features.channels.size()) != K)
    throw DimensionMismatch("feature channels do not match the model labels");
  if (features.grid_size != model.grid_size)
    throw DimensionMismatch("feature grid does not match the model grid");
  const Eigen::Index cells = Eigen::Index(model.grid_size) * model.grid_size;
  Eigen::MatrixXd logits(cells, K);
  for (Eigen::Index k = 0; k < K; ++k)
    logits.col(k) = (standardized(model, features, k) * weights.col(k)).array() + bias(k);
  return logits;
}

GridAnnotation annotation_of(const BinaryMask& pixels, int n, double threshold) {
  return binarize(maxpool_to_grid(pixels.cast<double>(), n), threshold);
}

}  // namespace

std::string_view supervision_name(Supervision s) { return kSupervisionNames[static_cast<int>(s)]; }

std::optional<Supervision> parse_supervision(std::string_view name) {
  for (Supervision s : kAllSupervision)
    if (supervision_name(s) == name) return s;
  return std::nullopt;
}

PatchFeatures patch_features(const FeatureImage& image, int grid_size) {
  PatchFeatures out;
  out.grid_size = grid_size;
  for (const Heatmap& channel : image.channels) {
    const Eigen::Index rows = channel.rows(), cols = channel.cols();
    if (grid_size <= 0 || rows < grid_size || cols < grid_size)
      throw GridLargerThanImage("grid of " + std::to_string(grid_size) +
                                " cells does not fit the feature image");
    const Eigen::Index n = grid_size;
    Eigen::ArrayXd sum = Eigen::ArrayXd::Zero(n * n), sum_sq = Eigen::ArrayXd::Zero(n * n),
                   count = Eigen::ArrayXd::Zero(n * n);
    Eigen::ArrayXd max = Eigen::ArrayXd::Constant(n * n, -std::numeric_limits<double>::infinity());
    for (Eigen::Index y = 0; y < rows; ++y) {
      const Eigen::Index gy = bucket_of(y, n, rows);
      for (Eigen::Index x = 0; x < cols; ++x) {
        const Eigen::Index j = gy * n + bucket_of(x, n, cols);
        const double v = channel(y, x);
        sum(j) += v;
        sum_sq(j) += v * v;
        count(j) += 1.0;
        max(j) = std::max(max(j), v);
      }
    }
    Eigen::MatrixXd f(n * n, kPatchFeatures);
    f.col(0) = sum / count;
    f.col(1) = max;
    f.col(2) = (sum_sq / count - (sum / count).square()).max(0.0);
    out.channels.push_back(std::move(f));
  }
  return out;
}

ToyDataset build_dataset(std::span<const SynthSession> cases, Supervision supervision,
                         const RuleSet& rules, const DatasetOptions& options) {
  ToyDataset dataset;
  dataset.grid_size = options.grid_size;
  if (cases.empty()) throw InvalidArgument("empty dataset");
  dataset.labels = cases.front().features.labels;
  for (const auto& c : cases) {
    if (c.features.labels != dataset.labels)
      throw DimensionMismatch(c.session.image_id + ": feature channels differ across cases");
    const ReportLabels report = label_report(c.session, rules, options.policy);
    ToyExample example;
    example.features = patch_features(c.features, options.grid_size);
    for (LabelId label : dataset.labels) {
      const ImageLabel& image_label = report[index_of(label)];
      const bool positive = image_label.polarity == Polarity::Positive;
      if (supervision == Supervision::Unannotated) {
        example.statuses.push_back(LabelStatus::unannotated(positive));
        continue;
      }
      GridAnnotation cells = GridAnnotation::Zero(options.grid_size, options.grid_size);
      if (positive) {
        if (supervision == Supervision::ETAnnotated) {
          const Heatmap map = label_heatmap(c.session, image_label.mentions, options.render);
          cells = binarize(maxpool_to_grid(map, options.grid_size), options.et_threshold);
        } else {
          const BinaryMask mask =
              label_mask(c.ellipses, label, c.session.width, c.session.height);
          cells = annotation_of(mask, options.grid_size, options.et_threshold);
        }
      }
      example.map_targets.push_back(cells);
      if (positive && !cells.any()) {
        example.statuses.push_back(LabelStatus::unannotated(true));
      } else {
        example.statuses.push_back(LabelStatus::annotated(std::move(cells), positive));
      }
    }
    dataset.examples.push_back(std::move(example));
  }
  return dataset;
}

Eigen::MatrixXd ToyModel::grid_logits(const PatchFeatures& features) const {
  return head_logits(*this, features, grid_weights, grid_bias);
}

Eigen::MatrixXd ToyModel::map_logits(const PatchFeatures& features) const {
  return head_logits(*this, features, map_weights, map_bias);
}

Eigen::VectorXd ToyModel::parameters() const {
  const Eigen::Index w = grid_weights.size(), b = grid_bias.size();
  Eigen::VectorXd theta(2 * (w + b));
  theta.segment(0, w) = grid_weights.reshaped();
  theta.segment(w, b) = grid_bias.transpose();
  theta.segment(w + b, w) = map_weights.reshaped();
  theta.segment(2 * w + b, b) = map_bias.transpose();
  return theta;
}

void ToyModel::set_parameters(const Eigen::VectorXd& theta) {
  const Eigen::Index w = grid_weights.size(), b = grid_bias.size();
  if (theta.size() != 2 * (w + b)) throw DimensionMismatch("parameter vector size");
  grid_weights.reshaped() = theta.segment(0, w);
  grid_bias = theta.segment(w, b).transpose();
  map_weights.reshaped() = theta.segment(w + b, w);
  map_bias = theta.segment(2 * w + b, b).transpose();
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidConfig("lr must be positive");
  if (epochs < 1) throw InvalidConfig("epochs must be at least 1");
  loss_config.validate();
}

ToyModel init_model(const ToyDataset& dataset, std::uint64_t seed) {
  if (dataset.examples.empty()) throw InvalidArgument("empty dataset");
  const auto K = static_cast<Eigen::Index>(dataset.labels.size());
  ToyModel model;
  model.labels = dataset.labels;
  model.grid_size = dataset.grid_size;
  model.feature_mean = Eigen::MatrixXd::Zero(kPatchFeatures, K);
  model.feature_scale = Eigen::MatrixXd::Ones(kPatchFeatures, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(kPatchFeatures);
    Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(kPatchFeatures);
    double count = 0.0;
    for (const auto& ex : dataset.examples) {
      const Eigen::MatrixXd& f = ex.features.channels[k];
      sum += f.colwise().sum().transpose();
      sum_sq += f.array().square().matrix().colwise().sum().transpose();
      count += static_cast<double>(f.rows());
    }
    const Eigen::VectorXd mean = sum / count;
    const Eigen::VectorXd var = (sum_sq / count).array() - mean.array().square();
    model.feature_mean.col(k) = mean;
    // Constant features keep unit scale rather than dividing by zero.
    for (int f = 0; f < kPatchFeatures; ++f)
      model.feature_scale(f, k) = var(f) > 1e-24 ? std::sqrt(var(f)) : 1.0;
  }
  Rng rng(seed);
  model.grid_weights.resize(kPatchFeatures, K);
  model.map_weights.resize(kPatchFeatures, K);
  for (Eigen::Index i = 0; i < model.grid_weights.size(); ++i)
    model.grid_weights.reshaped()(i) = rng.normal(0.0, 0.01);
  for (Eigen::Index i = 0; i < model.map_weights.size(); ++i)
    model.map_weights.reshaped()(i) = rng.normal(0.0, 0.01);
  model.grid_bias = Eigen::RowVectorXd::Zero(K);
  model.map_bias = Eigen::RowVectorXd::Zero(K);
  return model;
}

namespace {

// Standardized features of every example and label, fixed during training.
using Standardized = std::vector<std::vector<Eigen::MatrixXd>>;

Standardized standardize_all(const ToyModel& model, const ToyDataset& dataset) {
  Standardized out;
  for (const auto& ex : dataset.examples) {
    std::vector<Eigen::MatrixXd> per_label;
    for (std::size_t k = 0; k < model.labels.size(); ++k)
      per_label.push_back(standardized(model, ex.features, k));
    out.push_back(std::move(per_label));
  }
  return out;
}

double objective_on(const ToyModel& model, const ToyDataset& dataset, const Standardized& phi,
                    const LossConfig& cfg, Eigen::VectorXd* gradient) {
  const auto K = static_cast<Eigen::Index>(model.labels.size());
  std::vector<LossExample> batch;
  batch.reserve(dataset.examples.size());
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    const auto& ex = dataset.examples[i];
    const Eigen::Index cells = phi[i].front().rows();
    LossExample le;
    le.grid_logits.resize(cells, K);
    for (Eigen::Index k = 0; k < K; ++k)
      le.grid_logits.col(k) = (phi[i][k] * model.grid_weights.col(k)).array() + model.grid_bias(k);
    le.statuses = ex.statuses;
    if (!ex.map_targets.empty()) {
      le.map_logits.resize(cells, K);
      for (Eigen::Index k = 0; k < K; ++k)
        le.map_logits.col(k) = (phi[i][k] * model.map_weights.col(k)).array() + model.map_bias(k);
      le.map_targets = ex.map_targets;
    }
    batch.push_back(std::move(le));
  }
  const double loss = loss_total(batch, cfg);
  if (!std::isfinite(loss)) throw DivergedLoss("non-finite training loss");
  if (!gradient) return loss;

  const LossGradient g = grad_logits(batch, cfg);
  ToyModel shaped = model;
  shaped.grid_weights.setZero();
  shaped.grid_bias.setZero();
  shaped.map_weights.setZero();
  shaped.map_bias.setZero();
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    for (Eigen::Index k = 0; k < K; ++k) {
      shaped.grid_weights.col(k) += phi[i][k].transpose() * g.grid[i].col(k);
      shaped.grid_bias(k) += g.grid[i].col(k).sum();
      if (batch[i].has_map()) {
        shaped.map_weights.col(k) += phi[i][k].transpose() * g.map[i].col(k);
        shaped.map_bias(k) += g.map[i].col(k).sum();
      }
    }
  }
  *gradient = shaped.parameters();
  return loss;
}

}  // namespace

double objective(const ToyModel& model, const ToyDataset& dataset, const LossConfig& cfg,
                 Eigen::VectorXd* gradient) {
  return objective_on(model, dataset, standardize_all(model, dataset), cfg, gradient);
}

TrainResult train(const ToyDataset& dataset, const TrainConfig& cfg) {
  cfg.validate();
  TrainResult result{init_model(dataset, cfg.seed), {}};
  const Standardized phi = standardize_all(result.model, dataset);
  Eigen::VectorXd theta = result.model.parameters();
  Eigen::VectorXd gradient;
  double loss = objective_on(result.model, dataset, phi, cfg.loss_config, &gradient);
  result.loss_trace.push_back(loss);
  double step = cfg.lr;
  ToyModel candidate = result.model;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    bool accepted = false;
    for (int halvings = 0; halvings < 40; ++halvings) {
      candidate.set_parameters(theta - step * gradient);
      double trial = std::numeric_limits<double>::infinity();
      try {
        trial = objective_on(candidate, dataset, phi, cfg.loss_config, nullptr);
      } catch (const DivergedLoss&) {
        // An overflowing step is just a step that is too long.
      }
      if (trial <= loss) {
        theta = candidate.parameters();
        result.model = candidate;
        loss = objective_on(result.model, dataset, phi, cfg.loss_config, &gradient);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No descent left at this precision; the loss stays flat.
      result.loss_trace.resize(static_cast<std::size_t>(cfg.epochs) + 1, loss);
      break;
    }
    result.loss_trace.push_back(loss);
    step = std::min(cfg.lr, 2.0 * step);
  }
  return result;
}

Heatmap model_heatmap(const ToyModel& model, const PatchFeatures& features, std::size_t k,
                      int width, int height) {
  const Eigen::VectorXd logits = model.grid_logits(features).col(static_cast<Eigen::Index>(k));
  const int n = model.grid_size;
  Heatmap grid(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) grid(r, c) = detail::sigmoid(logits(r * n + c));
  return upscale_nearest(grid, width, height);
}

namespace {

struct EvalCase {
  const SynthSession* source;
  PatchFeatures features;
  LabelSet positives;
};

std::vector<EvalCase> eval_cases(std::span<const SynthSession> cases, const ArmsOptions& options) {
  std::vector<EvalCase> out;
  for (const auto& c : cases) {
    const auto report = label_report(c.session, options.rules, options.dataset.policy);
    out.push_back({&c, patch_features(c.features, options.dataset.grid_size),
                   positive_labels(report)});
  }
  return out;
}

ArmResult run_arm(Supervision arm, std::uint64_t seed, std::span<const SynthSession> train_cases,
                  const std::vector<EvalCase>& validation, const std::vector<EvalCase>& test,
                  const ArmsOptions& options) {
  TrainConfig cfg = options.train;
  cfg.supervision = arm;
  cfg.seed = seed;
  const ToyDataset dataset = build_dataset(train_cases, arm, options.rules, options.dataset);
  const TrainResult trained = train(dataset, cfg);
  const ToyModel& model = trained.model;

  ArmResult result;
  result.arm = arm;
  result.seed = seed;
  result.final_loss = trained.loss_trace.back();
  const auto sweep = default_threshold_sweep();
  result.test_scores.resize(static_cast<Eigen::Index>(test.size()),
                            static_cast<Eigen::Index>(model.labels.size()));
  for (std::size_t k = 0; k < model.labels.size(); ++k) {
    const LabelId label = model.labels[k];
    auto positives_of = [&](const std::vector<EvalCase>& split) {
      std::vector<Heatmap> maps;
      std::vector<BinaryMask> masks;
      for (const auto& c : split) {
        if (!c.positives.test(index_of(label))) continue;
        BinaryMask mask = label_mask(c.source->ellipses, label, c.source->session.width,
                                     c.source->session.height);
        if (!mask.any()) continue;
        maps.push_back(model_heatmap(model, c.features, k, c.source->session.width,
                                     c.source->session.height));
        masks.push_back(std::move(mask));
      }
      return std::pair{std::move(maps), std::move(masks)};
    };
    const auto [val_maps, val_masks] = positives_of(validation);
    const auto [test_maps, test_masks] = positives_of(test);
    if (!val_maps.empty() && !test_maps.empty()) {
      const double threshold = validate_threshold(val_maps, val_masks, sweep).threshold;
      double sum = 0.0;
      for (std::size_t i = 0; i < test_maps.size(); ++i)
        sum += iou(binarize(test_maps[i], threshold), test_masks[i]);
      result.iou[index_of(label)] =
          IoUEntry{threshold, sum / static_cast<double>(test_maps.size()), test_maps.size()};
    }
    std::vector<double> scores;
    Eigen::Array<bool, Eigen::Dynamic, 1> truth(static_cast<Eigen::Index>(test.size()));
    for (std::size_t i = 0; i < test.size(); ++i) {
      scores.push_back(
          predict_image(model.grid_logits(test[i].features).col(static_cast<Eigen::Index>(k)),
                        options.train.loss_config));
      truth(static_cast<Eigen::Index>(i)) = test[i].positives.test(index_of(label));
      result.test_scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = scores.back();
    }
    const auto n_pos = static_cast<std::size_t>(truth.count());
    if (n_pos > 0 && n_pos < test.size()) {
      result.auc[index_of(label)] =
          AUCEntry{auc(scores, std::span<const bool>(truth.data(), test.size())), n_pos,
                   test.size() - n_pos};
    }
  }
  result.mean_iou = summarize(result.iou).mean;
  result.mean_auc = summarize(result.auc).mean;
  return result;
}

}  // namespace

ArmsReport evaluate_arms(std::span<const SynthSession> cases, std::span<const Supervision> arms,
                         std::span<const std::uint64_t> seeds, const ArmsOptions& options) {
  if (!(options.train_fraction > 0.0) || !(options.validation_fraction > 0.0) ||
      options.train_fraction + options.validation_fraction >= 1.0)
    throw InvalidConfig("train and validation fractions must leave a test split");
  const auto n = cases.size();
  const auto n_train = static_cast<std::size_t>(std::floor(options.train_fraction * n));
  const auto n_val = static_cast<std::size_t>(std::floor(options.validation_fraction * n));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
    throw InvalidArgument("too few cases for a train/validation/test split");
  const auto train_cases = cases.subspan(0, n_train);
  const auto validation = eval_cases(cases.subspan(n_train, n_val), options);
  const auto test = eval_cases(cases.subspan(n_train + n_val), options);

  std::vector<std::pair<Supervision, std::uint64_t>> jobs;
  for (Supervision arm : arms)
    for (std::uint64_t seed : seeds) jobs.emplace_back(arm, seed);
  ArmsReport report;
  report.labels = cases.front().features.labels;
  for (const auto& c : test) report.test_ids.push_back(c.source->session.image_id);
  report.results = parallel_map(jobs.size(), options.jobs, [&](std::size_t i) {
    return run_arm(jobs[i].first, jobs[i].second, train_cases, validation, test, options);
  });
  return report;
}

std::string arms_report_json(const ArmsReport& report) {
  using nlohmann::json;
  json runs = json::array();
  for (const auto& r : report.results) {
    json iou_labels = json::object(), auc_labels = json::object();
    for (LabelId label : kAllLabels) {
      if (const auto& e = r.iou[index_of(label)])
        iou_labels[std::string(label_name(label))] = {{"iou", e->iou},
                                                      {"threshold", e->best_threshold},
                                                      {"n_positives", e->n_positives}};
      if (const auto& e = r.auc[index_of(label)])
        auc_labels[std::string(label_name(label))] = {
            {"auc", e->auc}, {"n_pos", e->n_pos}, {"n_neg", e->n_neg}};
    }
    runs.push_back({{"arm", std::string(supervision_name(r.arm))},
                    {"seed", r.seed},
                    {"mean_iou", r.mean_iou ? json(*r.mean_iou) : json(nullptr)},
                    {"mean_auc", r.mean_auc ? json(*r.mean_auc) : json(nullptr)},
                    {"final_loss", r.final_loss},
                    {"iou", iou_labels},
                    {"auc", auc_labels}});
  }
  // Per-arm summary over seeds.
  json summary = json::array();
  std::vector<Supervision> order;
  for (const auto& r : report.results)
    if (std::find(order.begin(), order.end(), r.arm) == order.end()) order.push_back(r.arm);
  for (Supervision arm : order) {
    std::vector<double> ious, aucs;
    for (const auto& r : report.results) {
      if (r.arm != arm) continue;
      if (r.mean_iou) ious.push_back(*r.mean_iou);
      if (r.mean_auc) aucs.push_back(*r.mean_auc);
    }
    auto describe = [](const std::vector<double>& values) {
      if (values.empty()) return json(nullptr);
      const SeedInterval ci = seed_interval(values);
      json out = {{"mean", ci.mean},
                  {"min", *std::min_element(values.begin(), values.end())},
                  {"max", *std::max_element(values.begin(), values.end())},
                  {"n_seeds", values.size()}};
      if (ci.lower) {
        out["ci95_normal_approx"] = {*ci.lower, *ci.upper};
      }
      return out;
    };
    summary.push_back(
        {{"arm", std::string(supervision_name(arm))}, {"iou", describe(ious)}, {"auc", describe(aucs)}});
  }
  json doc = {{"runs", runs}, {"summary", summary}};
  return doc.dump(2) + "\n";
}

}  // namespace etloc
