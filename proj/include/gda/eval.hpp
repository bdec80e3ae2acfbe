#pragma once

// Metrics, validation-set alpha search and the seeded few-shot protocol.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gda/classifier.hpp"
#include "gda/dataset.hpp"

namespace gda {

inline const std::vector<double>& default_alpha_grid() {
  static const std::vector<double> grid{0.001, 0.01, 0.1, 1.0, 10.0, 100.0};
  return grid;
}

struct GroupAccuracy {
  // nullopt when no test row belongs to the group
  std::optional<double> many, medium, few;
};

struct EvalReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::optional<GroupAccuracy> group_accuracy;
  std::vector<Index> per_class_correct;
  Index n_test = 0;
};

namespace detail {

inline nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace detail

inline nlohmann::json to_json(const GroupAccuracy& g) {
  return {{"many", detail::optional_json(g.many)}, {"medium", detail::optional_json(g.medium)}, {"few", detail::optional_json(g.few)}};
}

inline nlohmann::json to_json(const EvalReport& r) {
  return {
      {"accuracy", r.accuracy},
      {"macro_f1", r.macro_f1},
      {"group_accuracy", r.group_accuracy ? to_json(*r.group_accuracy) : nlohmann::json(nullptr)},
      {"per_class_correct", r.per_class_correct},
      {"n_test", r.n_test},
  };
}

/// Accuracy, macro F1 over classes [0, K) and optional long-tail group
/// accuracies. A class with no predictions and no truth rows scores F1 = 0.
inline EvalReport evaluate(const LabelVector& predictions, const LabelVector& truth, const std::optional<LongTailGroups>& groups = {},
                           Index num_classes = -1) {
  if (predictions.size() != truth.size()) {
    fail(ErrorKind::LengthMismatch, std::to_string(predictions.size()) + " predictions for " + std::to_string(truth.size()) + " labels");
  }
  if (truth.empty()) fail(ErrorKind::InvalidArgument, "cannot evaluate an empty test set");
  if (num_classes < 0) num_classes = std::max(infer_num_classes(predictions), infer_num_classes(truth));
  validate_labels(predictions, static_cast<Index>(predictions.size()), num_classes);
  validate_labels(truth, static_cast<Index>(truth.size()), num_classes);

  const auto k = static_cast<std::size_t>(num_classes);
  std::vector<Index> tp(k, 0), predicted(k, 0), actual(k, 0);
  Index correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto p = static_cast<std::size_t>(predictions[i]);
    const auto t = static_cast<std::size_t>(truth[i]);
    ++predicted[p];
    ++actual[t];
    if (p == t) {
      ++tp[t];
      ++correct;
    }
  }

  EvalReport r;
  r.n_test = static_cast<Index>(truth.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n_test);
  r.per_class_correct = tp;
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    // 2PR / (P + R) == 2 TP / (2 TP + FP + FN)
    const Index denom = predicted[c] + actual[c];
    f1_sum += denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
  }
  r.macro_f1 = k == 0 ? 0.0 : f1_sum / static_cast<double>(k);

  if (groups) {
    auto group_acc = [&](const std::set<Label>& members) -> std::optional<double> {
      Index hit = 0, total = 0;
      for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!members.contains(truth[i])) continue;
        ++total;
        if (predictions[i] == truth[i]) ++hit;
      }
      if (total == 0) return std::nullopt;
      return static_cast<double>(hit) / static_cast<double>(total);
    };
    r.group_accuracy = GroupAccuracy{group_acc(groups->many), group_acc(groups->medium), group_acc(groups->few)};
  }
  return r;
}

inline double accuracy(const LabelVector& predictions, const LabelVector& truth) {
  return evaluate(predictions, truth).accuracy;
}

struct AlphaSearchResult {
  double best_alpha = 0.0;
  std::vector<double> grid;
  std::vector<double> val_accuracy_per_alpha;
};

inline void validate_grid(const std::vector<double>& grid) {
  if (grid.empty()) fail(ErrorKind::InvalidArgument, "alpha grid is empty");
  for (double a : grid)
    if (!(a >= 0.0) || !std::isfinite(a)) fail(ErrorKind::InvalidArgument, "alpha grid values must be finite and >= 0");
}

/// Scores each alpha on the validation split with a classifier fitted once.
/// Ties go to the smaller alpha.
inline AlphaSearchResult search_alpha(const LinearClassifier& clf, const LabeledSet& val, const ZeroShotHead& zeroshot,
                                      const std::vector<double>& grid) {
  validate_grid(grid);
  const Matrix zs = zeroshot_logits(val.x.values(), zeroshot);
  const Matrix gd = gda_logits(val.x.values(), clf);
  AlphaSearchResult r{grid.front(), grid, {}};
  double best = -1.0;
  for (double alpha : grid) {
    const double acc = evaluate(predict(zs + alpha * gd), val.y, {}, zeroshot.k()).accuracy;
    r.val_accuracy_per_alpha.push_back(acc);
    if (acc > best || (acc == best && alpha < r.best_alpha)) {
      best = acc;
      r.best_alpha = alpha;
    }
  }
  return r;
}

inline AlphaSearchResult search_alpha(const LabeledSet& train, const LabeledSet& val, const ZeroShotHead& zeroshot,
                                      const std::vector<double>& grid = default_alpha_grid(), Estimator estimator = Estimator::ks) {
  validate_grid(grid);
  return search_alpha(fit_classifier(train.x.values(), train.y, zeroshot.k(), estimator), val, zeroshot, grid);
}

// ---------------------------------------------------------------------------
// Few-shot protocol

struct ProtocolOptions {
  std::vector<int> shots{1, 2, 4, 8, 16};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<double> grid = default_alpha_grid();
  Estimator estimator = Estimator::ks;
  bool longtail_groups = false;
};

struct ProtocolCell {
  int shots = 0;
  std::uint64_t seed = 0;
  double alpha = 0.0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::optional<GroupAccuracy> groups;
};

struct ProtocolSummary {
  int shots = 0;
  double mean = 0.0;
  double stdev = 0.0;  // sample (n - 1) standard deviation over seeds
};

struct ProtocolReport {
  std::string dataset;
  Estimator estimator = Estimator::ks;
  std::vector<ProtocolCell> cells;
  std::vector<ProtocolSummary> summary;
};

inline nlohmann::json to_json(const ProtocolReport& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"shots", c.shots},
                     {"seed", c.seed},
                     {"alpha", c.alpha},
                     {"accuracy", c.accuracy},
                     {"macro_f1", c.macro_f1},
                     {"groups", c.groups ? to_json(*c.groups) : nlohmann::json(nullptr)}});
  }
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& s : r.summary) summary.push_back({{"shots", s.shots}, {"mean", s.mean}, {"stdev", s.stdev}});
  return {{"dataset", r.dataset}, {"estimator", std::string(to_string(r.estimator))}, {"cells", cells}, {"summary", summary}};
}

/// One cell: sample, search alpha on val, refit, score on test. When the
/// few-shot statistics are degenerate (e.g. one shot per class gives a zero
/// covariance) the cell falls back to the zero-shot head, reported as alpha 0.
inline ProtocolCell run_protocol_cell(const DatasetBundle& bundle, int shots, std::uint64_t seed, const ProtocolOptions& options,
                                      const std::optional<LongTailGroups>& groups) {
  FewShotSplit split = sample_fewshot(bundle.train.y, shots, seed);
  LabeledSet train = select_rows(bundle.train, split.indices);
  ProtocolCell cell{shots, seed, 0.0, 0.0, 0.0, std::nullopt};

  Matrix logits;
  try {
    LinearClassifier clf = fit_classifier(train.x.values(), train.y, bundle.k(), options.estimator);
    AlphaSearchResult search = search_alpha(clf, bundle.val, bundle.zeroshot, options.grid);
    cell.alpha = search.best_alpha;
    logits = ensemble_logits(bundle.test.x.values(), EnsembleModel(bundle.zeroshot, clf, cell.alpha, options.estimator));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::DegenerateCovariance) throw;
    cell.alpha = 0.0;
    logits = zeroshot_logits(bundle.test.x.values(), bundle.zeroshot);
  }
  EvalReport report = evaluate(predict(logits), bundle.test.y, groups, bundle.k());
  cell.accuracy = report.accuracy;
  cell.macro_f1 = report.macro_f1;
  cell.groups = report.group_accuracy;
  return cell;
}

inline ProtocolReport run_fewshot_protocol(const DatasetBundle& bundle, const ProtocolOptions& options) {
  if (options.shots.empty()) fail(ErrorKind::InvalidArgument, "shots list is empty");
  if (options.seeds.empty()) fail(ErrorKind::InvalidArgument, "seeds list is empty");
  validate_grid(options.grid);

  std::optional<LongTailGroups> groups;
  if (options.longtail_groups) groups = partition_longtail(bundle.train.y, bundle.k());

  ProtocolReport report{bundle.name, options.estimator, {}, {}};
  for (int shots : options.shots) {
    std::vector<double> accs;
    for (std::uint64_t seed : options.seeds) {
      report.cells.push_back(run_protocol_cell(bundle, shots, seed, options, groups));
      accs.push_back(report.cells.back().accuracy);
    }
    double mean = 0.0;
    for (double a : accs) mean += a;
    mean /= static_cast<double>(accs.size());
    double var = 0.0;
    for (double a : accs) var += (a - mean) * (a - mean);
    const double stdev = accs.size() > 1 ? std::sqrt(var / static_cast<double>(accs.size() - 1)) : 0.0;
    report.summary.push_back({shots, mean, stdev});
  }
  return report;
}

}  // namespace gda
