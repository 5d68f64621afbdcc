#pragma once

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "zsl/common.hpp"
#include "zsl/dataio.hpp"
#include "zsl/inference.hpp"
#include "zsl/regression.hpp"
#include "zsl/wordvec.hpp"

namespace zsl {

// ---------------------------------------------------------------------------
// Metrics.
// ---------------------------------------------------------------------------

inline double accuracy(const IntVector& predicted, const IntVector& truth) {
  if (predicted.size() != truth.size())
    throw DataError("accuracy: prediction/truth length mismatch");
  if (predicted.size() == 0) throw DataError("accuracy of an empty set");
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < predicted.size(); ++i)
    if (predicted[i] == truth[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

/// Average precision for one class: instances sorted by descending score
/// (ties by ascending index), AP = (1/P) sum_k Prec(k) rel(k).
inline double average_precision(const Vector& scores, const std::vector<char>& relevance) {
  if (static_cast<Eigen::Index>(relevance.size()) != scores.size())
    throw DataError("average_precision: score/relevance length mismatch");
  const Eigen::Index n = scores.size();
  Eigen::Index positives = 0;
  for (char r : relevance) positives += r ? 1 : 0;
  if (positives == 0) throw DataError("average_precision requires at least one relevant instance");

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  });

  double hits = 0.0, sum = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (relevance[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])]) {
      hits += 1.0;
      sum += hits / static_cast<double>(k + 1);
    }
  }
  return sum / static_cast<double>(positives);
}

/// Mean AP over classes; classes without positives are skipped with a warning.
inline double mean_average_precision(const Matrix& scores, const IntVector& truth) {
  if (scores.rows() != truth.size())
    throw DataError("mean_average_precision: score rows != truth length");
  double sum = 0.0;
  int counted = 0;
  std::vector<char> relevance(static_cast<std::size_t>(truth.size()));
  for (Eigen::Index j = 0; j < scores.cols(); ++j) {
    bool any = false;
    for (Eigen::Index i = 0; i < truth.size(); ++i) {
      relevance[static_cast<std::size_t>(i)] = truth[i] == static_cast<int>(j) ? 1 : 0;
      any = any || relevance[static_cast<std::size_t>(i)];
    }
    if (!any) {
      warn("mAP: class " + std::to_string(j) + " has no positives, skipped");
      continue;
    }
    sum += average_precision(scores.col(j), relevance);
    ++counted;
  }
  if (counted == 0) throw DataError("mAP: no class has positive instances");
  return sum / static_cast<double>(counted);
}

/// Rank-based AUC: probability that a random positive outscores a random
/// negative, ties counted one half.
inline double rank_auc(const std::vector<double>& positive_scores,
                       const std::vector<double>& negative_scores) {
  if (positive_scores.empty() || negative_scores.empty())
    throw DataError("AUC requires both positive and negative scores");
  struct Entry {
    double score;
    bool positive;
  };
  std::vector<Entry> entries;
  entries.reserve(positive_scores.size() + negative_scores.size());
  for (double s : positive_scores) entries.push_back({s, true});
  for (double s : negative_scores) entries.push_back({s, false});
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.score < b.score; });

  // Average ranks over tie groups, then Mann-Whitney U.
  double rank_sum_positive = 0.0;
  std::size_t i = 0;
  while (i < entries.size()) {
    std::size_t j = i;
    while (j < entries.size() && entries[j].score == entries[i].score) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k)
      if (entries[k].positive) rank_sum_positive += avg_rank;
    i = j;
  }
  const double p = static_cast<double>(positive_scores.size());
  const double n = static_cast<double>(negative_scores.size());
  const double u = rank_sum_positive - p * (p + 1.0) / 2.0;
  return u / (p * n);
}

/// AUC for one test class where held-out known-class instances act as extra
/// negatives alongside the other test instances.
inline double auc_with_distractors(const Vector& test_scores,
                                   const std::vector<char>& test_relevance,
                                   const Vector& distractor_scores) {
  if (static_cast<Eigen::Index>(test_relevance.size()) != test_scores.size())
    throw DataError("auc_with_distractors: score/relevance length mismatch");
  std::vector<double> positives, negatives;
  for (Eigen::Index i = 0; i < test_scores.size(); ++i) {
    if (test_relevance[static_cast<std::size_t>(i)])
      positives.push_back(test_scores[i]);
    else
      negatives.push_back(test_scores[i]);
  }
  for (Eigen::Index i = 0; i < distractor_scores.size(); ++i)
    negatives.push_back(distractor_scores[i]);
  return rank_auc(positives, negatives);
}

// ---------------------------------------------------------------------------
// Experiment configuration and report.
// ---------------------------------------------------------------------------

enum class FitKind { kRidge, kManifold };
enum class MetricKind { kAccuracy, kMeanAveragePrecision, kAuc };

inline const char* fit_kind_name(FitKind v) {
  return v == FitKind::kRidge ? "ridge" : "manifold";
}

inline const char* metric_name(MetricKind m) {
  switch (m) {
    case MetricKind::kAccuracy: return "accuracy";
    case MetricKind::kMeanAveragePrecision: return "map";
    case MetricKind::kAuc: return "auc";
  }
  return "unknown";
}

struct ExperimentConfig {
  FitKind variant = FitKind::kRidge;
  Matcher matcher = Matcher::kNearest;
  bool self_train = false;
  bool self_train_renormalize = true;
  bool augment = false;
  MetricKind metric = MetricKind::kAccuracy;
  HyperParams params;
  int n_splits = 50;
  std::uint64_t base_seed = 0;
  std::map<int, double> subsample_percent;        // class id -> P
  std::optional<std::pair<int, double>> subsample_first;  // first k test classes -> P
  int distractors_per_class = 0;                  // held-out known-class negatives (AUC)
  bool retain_predictions = false;
  int workers = 1;

  void validate() const {
    params.validate();
    if (n_splits < 1) throw ConfigError("n_splits must be at least 1");
    if (distractors_per_class < 0)
      throw ConfigError("distractors_per_class must be non-negative");
    if (distractors_per_class > 0 && metric != MetricKind::kAuc)
      throw ConfigError("distractor injection requires the auc metric");
    if (subsample_first && (subsample_first->first < 1 ||
                            subsample_first->second <= 0.0 ||
                            subsample_first->second > 100.0))
      throw ConfigError("subsample_first requires a positive class count and P in (0, 100]");
  }
};

struct SplitEvaluation {
  int split_id = 0;
  double metric_value = 0.0;
  ZeroShotSplit split;
  std::vector<int> test_instances;  // dataset row ids, ascending
  IntVector truth;                  // global class ids
  IntVector predicted;              // global class ids
  Vector scores;                    // matcher score of the predicted class
  Vector per_class_accuracy;        // size C; NaN for non-test classes
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<double> per_split;
  double mean = 0.0;
  double stddev = 0.0;
  double runtime_seconds = 0.0;
  std::vector<SplitEvaluation> evaluations;  // populated when retain_predictions
};

// ---------------------------------------------------------------------------
// Runner.
// ---------------------------------------------------------------------------

namespace detail {

struct SplitWorkspace {
  const Dataset& dataset;
  const EmbeddingSource& source;
  const std::vector<Dataset>& aux;
  const ExperimentConfig& config;
};

inline std::vector<std::string> names_of(const Dataset& ds, const std::vector<int>& ids) {
  std::vector<std::string> names;
  names.reserve(ids.size());
  for (int c : ids) names.push_back(ds.class_names.at(static_cast<std::size_t>(c)));
  return names;
}

inline Matrix select_rows(const Matrix& x, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

inline SplitEvaluation evaluate_split(const SplitWorkspace& w, const ZeroShotSplit& split) {
  const Dataset& ds = w.dataset;
  const ExperimentConfig& cfg = w.config;
  const std::uint64_t sub_seed = mix_seed(cfg.base_seed, static_cast<std::uint64_t>(split.split_id));

  // Training rows, optionally minus held-out distractor rows.
  std::unordered_set<int> held_out;
  std::vector<int> distractor_rows;
  if (cfg.distractors_per_class > 0) {
    for (int c : split.train_classes) {
      std::vector<int> rows = ds.instances_of(c);
      const int hold = std::min<int>(cfg.distractors_per_class,
                                     static_cast<int>(rows.size()) - 1);
      if (hold < cfg.distractors_per_class)
        warn("split " + std::to_string(split.split_id) + ": class " + std::to_string(c) +
             " can spare only " + std::to_string(hold) + " distractors");
      Rng rng(mix_seed(sub_seed, 0xd157000ULL + static_cast<std::uint64_t>(c)));
      rng.shuffle(rows);
      for (int t = 0; t < hold; ++t) {
        held_out.insert(rows[static_cast<std::size_t>(t)]);
        distractor_rows.push_back(rows[static_cast<std::size_t>(t)]);
      }
    }
    std::sort(distractor_rows.begin(), distractor_rows.end());
  }

  std::vector<int> train_rows;
  {
    std::unordered_set<int> train_set(split.train_classes.begin(), split.train_classes.end());
    for (Eigen::Index i = 0; i < ds.n(); ++i)
      if (train_set.count(ds.y[i]) && !held_out.count(static_cast<int>(i)))
        train_rows.push_back(static_cast<int>(i));
  }
  if (train_rows.empty())
    throw DataError("split " + std::to_string(split.split_id) + " has no training instances");

  // Test rows with optional per-class subsampling.
  std::vector<int> test_rows;
  {
    std::map<int, double> fractions = cfg.subsample_percent;
    if (cfg.subsample_first) {
      const int k = std::min<int>(cfg.subsample_first->first,
                                  static_cast<int>(split.test_classes.size()));
      for (int t = 0; t < k; ++t)
        fractions[split.test_classes[static_cast<std::size_t>(t)]] = cfg.subsample_first->second;
    }
    if (fractions.empty()) {
      std::unordered_set<int> test_set(split.test_classes.begin(), split.test_classes.end());
      for (Eigen::Index i = 0; i < ds.n(); ++i)
        if (test_set.count(ds.y[i])) test_rows.push_back(static_cast<int>(i));
    } else {
      test_rows = subsample_test(ds, split, fractions, sub_seed);
    }
  }
  if (test_rows.empty())
    throw DataError("split " + std::to_string(split.split_id) + " has no test instances");

  // Embeddings: per-class prototypes and per-instance regression targets.
  const auto embedder = [&](const std::string& name) { return w.source.embed(name); };
  const std::vector<std::string> test_names = names_of(ds, split.test_classes);
  Matrix prototypes = build_class_matrix(w.source, test_names);

  const Matrix x_test = select_rows(ds.x, test_rows);

  // Per-instance regression targets for the (possibly reduced) training rows.
  Matrix z_train(prototypes.rows(), static_cast<Eigen::Index>(train_rows.size()));
  {
    std::map<int, Vector> class_vec;
    for (int c : split.train_classes)
      class_vec[c] = w.source.embed(ds.class_names[static_cast<std::size_t>(c)]);
    for (std::size_t i = 0; i < train_rows.size(); ++i)
      z_train.col(static_cast<Eigen::Index>(i)) = class_vec[ds.y[train_rows[i]]];
  }
  const Matrix x_train = select_rows(ds.x, train_rows);

  EmbeddingModel model;
  HyperParams hp = cfg.params;
  if (cfg.variant == FitKind::kRidge) hp.gamma_i = 0.0;

  if (cfg.augment) {
    // The target block is rebuilt from train_rows (held-out distractor rows
    // stay excluded); the auxiliary block comes from the exclusion-filtered
    // augmentation.
    const AugmentedTrainSet augmented = build_augmented(ds, split, w.aux, embedder);
    AugmentedTrainSet stacked;
    stacked.n_target = static_cast<Eigen::Index>(train_rows.size());
    stacked.n_aux = augmented.n_aux;
    stacked.x.resize(stacked.n_target + stacked.n_aux, ds.x.cols());
    stacked.x.topRows(stacked.n_target) = x_train;
    stacked.z.resize(prototypes.rows(), stacked.n_target + stacked.n_aux);
    stacked.z.leftCols(stacked.n_target) = z_train;
    if (stacked.n_aux > 0) {
      stacked.x.bottomRows(stacked.n_aux) = augmented.x.bottomRows(stacked.n_aux);
      stacked.z.rightCols(stacked.n_aux) = augmented.z.rightCols(stacked.n_aux);
    }
    model = fit_augmented(stacked, x_test, hp);
  } else if (cfg.variant == FitKind::kRidge) {
    model = fit_ridge(x_train, z_train, hp.gamma_a);
  } else {
    model = fit_manifold(x_train, z_train, x_test, hp);
  }

  const Matrix projections = model.project(x_test);
  const Matrix effective_prototypes =
      cfg.self_train
          ? self_train(prototypes, projections, hp.self_train_k, cfg.self_train_renormalize)
          : prototypes;
  const DistanceMatrix distances = compute_distances(projections, effective_prototypes);
  const Prediction prediction = predict(distances, cfg.matcher);

  SplitEvaluation eval;
  eval.split_id = split.split_id;
  eval.split = split;
  eval.test_instances = test_rows;
  eval.truth.resize(static_cast<Eigen::Index>(test_rows.size()));
  for (std::size_t i = 0; i < test_rows.size(); ++i)
    eval.truth[static_cast<Eigen::Index>(i)] = ds.y[test_rows[i]];
  eval.predicted.resize(prediction.labels.size());
  eval.scores.resize(prediction.labels.size());
  for (Eigen::Index i = 0; i < prediction.labels.size(); ++i) {
    eval.predicted[i] = split.test_classes[static_cast<std::size_t>(prediction.labels[i])];
    eval.scores[i] = prediction.scores(i, prediction.labels[i]);
  }

  // Per-class accuracy over the split's test classes (used by the analysis
  // module regardless of the headline metric).
  eval.per_class_accuracy =
      Vector::Constant(ds.class_count(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t t = 0; t < split.test_classes.size(); ++t) {
    const int c = split.test_classes[t];
    int total = 0, hits = 0;
    for (Eigen::Index i = 0; i < eval.truth.size(); ++i) {
      if (eval.truth[i] == c) {
        ++total;
        if (eval.predicted[i] == c) ++hits;
      }
    }
    if (total > 0)
      eval.per_class_accuracy[c] = static_cast<double>(hits) / static_cast<double>(total);
  }

  switch (cfg.metric) {
    case MetricKind::kAccuracy:
      eval.metric_value = accuracy(eval.predicted, eval.truth);
      break;
    case MetricKind::kMeanAveragePrecision: {
      // Retrieval scores: negated raw distances to the effective prototypes.
      IntVector truth_local(eval.truth.size());
      std::map<int, int> local_of;
      for (std::size_t t = 0; t < split.test_classes.size(); ++t)
        local_of[split.test_classes[t]] = static_cast<int>(t);
      for (Eigen::Index i = 0; i < eval.truth.size(); ++i)
        truth_local[i] = local_of[eval.truth[i]];
      eval.metric_value = mean_average_precision(-distances.d, truth_local);
      break;
    }
    case MetricKind::kAuc: {
      Matrix distractor_distances;
      if (!distractor_rows.empty()) {
        const Matrix f_distractors = model.project(select_rows(ds.x, distractor_rows));
        distractor_distances = compute_distances(f_distractors, effective_prototypes).d;
      } else {
        distractor_distances.resize(0, distances.d.cols());
      }
      double sum = 0.0;
      std::vector<char> relevance(static_cast<std::size_t>(eval.truth.size()));
      for (std::size_t t = 0; t < split.test_classes.size(); ++t) {
        const int c = split.test_classes[t];
        for (Eigen::Index i = 0; i < eval.truth.size(); ++i)
          relevance[static_cast<std::size_t>(i)] = eval.truth[i] == c ? 1 : 0;
        sum += auc_with_distractors(
            -distances.d.col(static_cast<Eigen::Index>(t)), relevance,
            -distractor_distances.col(static_cast<Eigen::Index>(t)));
      }
      eval.metric_value = sum / static_cast<double>(split.test_classes.size());
      break;
    }
  }
  return eval;
}

}  // namespace detail

inline ExperimentReport run_experiment(const Dataset& dataset,
                                       const EmbeddingSource& source,
                                       const std::vector<Dataset>& aux,
                                       const ExperimentConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();

  const std::vector<ZeroShotSplit> splits =
      generate_splits(dataset.class_count(), config.n_splits, config.base_seed);

  detail::SplitWorkspace workspace{dataset, source, aux, config};
  std::vector<SplitEvaluation> evaluations(splits.size());
  parallel_for(static_cast<int>(splits.size()), std::max(1, config.workers), [&](int s) {
    try {
      evaluations[static_cast<std::size_t>(s)] =
          detail::evaluate_split(workspace, splits[static_cast<std::size_t>(s)]);
    } catch (const ConfigError& e) {
      throw ConfigError("split " + std::to_string(s) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("split " + std::to_string(s) + ": " + e.what());
    } catch (const NumericError& e) {
      throw NumericError("split " + std::to_string(s) + ": " + e.what());
    }
  });

  ExperimentReport report;
  report.config = config;
  report.per_split.reserve(evaluations.size());
  for (const auto& eval : evaluations) report.per_split.push_back(eval.metric_value);
  report.mean = sample_mean(report.per_split);
  report.stddev = sample_stddev(report.per_split);
  if (config.retain_predictions) report.evaluations = std::move(evaluations);
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// ---------------------------------------------------------------------------
// Report serialization. `runtime_seconds` is wall-clock and therefore
// excluded from determinism comparisons (include_runtime = false).
// ---------------------------------------------------------------------------

inline nlohmann::json config_to_json(const ExperimentConfig& config) {
  nlohmann::json j;
  j["variant"] = fit_kind_name(config.variant);
  j["matcher"] = matcher_name(config.matcher);
  j["self_train"] = config.self_train;
  j["self_train_renormalize"] = config.self_train_renormalize;
  j["augment"] = config.augment;
  j["metric"] = metric_name(config.metric);
  j["gamma_a"] = config.params.gamma_a;
  j["gamma_i"] = config.params.gamma_i;
  j["graph_k"] = config.params.graph_k;
  j["self_train_k"] = config.params.self_train_k;
  j["n_splits"] = config.n_splits;
  j["seed"] = config.base_seed;
  j["distractors_per_class"] = config.distractors_per_class;
  if (!config.subsample_percent.empty()) {
    nlohmann::json sub = nlohmann::json::object();
    for (const auto& [class_id, percent] : config.subsample_percent)
      sub[std::to_string(class_id)] = percent;
    j["subsample"] = sub;
  }
  if (config.subsample_first) {
    j["subsample_first"] = {{"classes", config.subsample_first->first},
                            {"percent", config.subsample_first->second}};
  }
  return j;
}

inline nlohmann::json report_to_json(const ExperimentReport& report,
                                     bool include_runtime = true) {
  nlohmann::json j;
  j["config"] = config_to_json(report.config);
  j["per_split"] = report.per_split;
  j["mean"] = report.mean;
  j["std"] = report.stddev;
  if (include_runtime) j["runtime_seconds"] = report.runtime_seconds;
  return j;
}

inline std::string report_metrics_csv(const ExperimentReport& report) {
  std::string csv = "split_id,metric\n";
  char buf[64];
  for (std::size_t s = 0; s < report.per_split.size(); ++s) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", s, report.per_split[s]);
    csv += buf;
  }
  return csv;
}

}  // namespace zsl
