#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "zsl/common.hpp"
#include "zsl/dataio.hpp"
#include "zsl/evaluation.hpp"
#include "zsl/inference.hpp"
#include "zsl/regression.hpp"

namespace zsl {

// ---------------------------------------------------------------------------
// Transfer analytics: which training classes help which testing classes.
// ---------------------------------------------------------------------------

struct SplitOutcomeRecord {
  std::vector<char> train_inclusion;  // size C: class i was a training class
  Vector per_class_accuracy;          // size C; NaN where the class was not tested
};

inline SplitOutcomeRecord make_outcome_record(const SplitEvaluation& eval,
                                              int class_count) {
  SplitOutcomeRecord record;
  record.train_inclusion.assign(static_cast<std::size_t>(class_count), 0);
  for (int c : eval.split.train_classes)
    record.train_inclusion[static_cast<std::size_t>(c)] = 1;
  record.per_class_accuracy = eval.per_class_accuracy;
  return record;
}

struct TransferCorrelationMatrix {
  Matrix corr;            // C x C: corr(i, j) of inclusion(i) vs accuracy(j)
  Eigen::MatrixXi valid;  // 1 where enough co-occurring splits and variance
};

/// Correlates training-class inclusion with per-test-class accuracy across
/// splits. The default denominator is std(b) * std(e) (a Pearson coefficient
/// in [-1, 1]); `pearson = false` divides by var(b) * var(e) instead.
inline TransferCorrelationMatrix transfer_correlation(
    const std::vector<SplitOutcomeRecord>& records, bool pearson = true) {
  if (records.size() < 10)
    throw DataError("transfer correlation needs at least 10 splits, got " +
                    std::to_string(records.size()));
  const Eigen::Index c = records.front().per_class_accuracy.size();
  for (const auto& record : records)
    if (record.per_class_accuracy.size() != c ||
        static_cast<Eigen::Index>(record.train_inclusion.size()) != c)
      throw DataError("inconsistent record sizes");

  TransferCorrelationMatrix out;
  out.corr = Matrix::Zero(c, c);
  out.valid = Eigen::MatrixXi::Zero(c, c);

  std::vector<double> b, e;
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < c; ++i) {
      if (i == j) continue;  // a class is never train and test simultaneously
      b.clear();
      e.clear();
      for (const auto& record : records) {
        const double acc = record.per_class_accuracy[j];
        if (std::isnan(acc)) continue;
        b.push_back(record.train_inclusion[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
        e.push_back(acc);
      }
      if (b.size() < 3) continue;
      const double n = static_cast<double>(b.size());
      double mb = 0.0, me = 0.0;
      for (std::size_t t = 0; t < b.size(); ++t) {
        mb += b[t];
        me += e[t];
      }
      mb /= n;
      me /= n;
      double cov = 0.0, vb = 0.0, ve = 0.0;
      for (std::size_t t = 0; t < b.size(); ++t) {
        cov += (b[t] - mb) * (e[t] - me);
        vb += (b[t] - mb) * (b[t] - mb);
        ve += (e[t] - me) * (e[t] - me);
      }
      cov /= n;
      vb /= n;
      ve /= n;
      if (vb <= 0.0 || ve <= 0.0) continue;
      out.corr(i, j) = pearson ? cov / std::sqrt(vb * ve) : cov / (vb * ve);
      out.valid(i, j) = 1;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Class-name affinity: 1 - ||g(y_i) - g(y_j)|| on unit vectors, plus the
// percentile-rank form used for reporting pair similarity.
// ---------------------------------------------------------------------------

enum class AffinityOp { kMax, kMean, kMin };

inline const char* affinity_op_name(AffinityOp op) {
  switch (op) {
    case AffinityOp::kMax: return "max";
    case AffinityOp::kMean: return "mean";
    case AffinityOp::kMin: return "min";
  }
  return "unknown";
}

struct ClassAffinity {
  double r_max = 0.0;
  double r_mean = 0.0;
  double r_min = 0.0;

  double by(AffinityOp op) const {
    switch (op) {
      case AffinityOp::kMax: return r_max;
      case AffinityOp::kMean: return r_mean;
      case AffinityOp::kMin: return r_min;
    }
    return 0.0;
  }
};

/// Point-to-set affinities of every class to the given test set.
inline std::vector<ClassAffinity> classname_affinity(const Matrix& class_vectors,
                                                     const std::vector<int>& test_classes) {
  if (test_classes.empty()) throw DataError("classname affinity needs a non-empty test set");
  const Eigen::Index c = class_vectors.cols();
  std::vector<ClassAffinity> out(static_cast<std::size_t>(c));
  for (Eigen::Index i = 0; i < c; ++i) {
    double a_max = -std::numeric_limits<double>::infinity();
    double a_min = std::numeric_limits<double>::infinity();
    double a_sum = 0.0;
    for (int j : test_classes) {
      const double affinity = 1.0 - (class_vectors.col(i) - class_vectors.col(j)).norm();
      a_max = std::max(a_max, affinity);
      a_min = std::min(a_min, affinity);
      a_sum += affinity;
    }
    out[static_cast<std::size_t>(i)] = {a_max, a_sum / static_cast<double>(test_classes.size()),
                                        a_min};
  }
  return out;
}

struct AffinityReport {
  Matrix cosine;      // C x C: 1 - ||z_i - z_j||; diagonal 1
  Matrix percentile;  // C x C: percentile rank over ordered pairs; diagonal 1
};

/// Pairwise affinity matrices. The percentile rank of an ordered pair is the
/// fraction of other ordered pairs at strictly larger distance (ties count
/// half), so values near 1 mean most-similar.
inline AffinityReport classname_affinity_report(const Matrix& class_vectors) {
  const Eigen::Index c = class_vectors.cols();
  if (c < 2) throw DataError("affinity report needs at least 2 classes");
  AffinityReport report;
  report.cosine = Matrix::Ones(c, c);
  report.percentile = Matrix::Ones(c, c);

  std::vector<double> distances;
  distances.reserve(static_cast<std::size_t>(c * (c - 1)));
  for (Eigen::Index i = 0; i < c; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) {
      if (i == j) continue;
      const double d = (class_vectors.col(i) - class_vectors.col(j)).norm();
      report.cosine(i, j) = 1.0 - d;
      distances.push_back(d);
    }
  }
  std::vector<double> sorted = distances;
  std::sort(sorted.begin(), sorted.end());
  const double total = static_cast<double>(sorted.size());
  std::size_t pair_index = 0;
  for (Eigen::Index i = 0; i < c; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) {
      if (i == j) continue;
      const double d = distances[pair_index++];
      const double greater =
          total - static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), d) -
                                      sorted.begin());
      const double equal =
          static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), d) -
                              std::lower_bound(sorted.begin(), sorted.end(), d)) -
          1.0;
      report.percentile(i, j) = total > 1.0 ? (greater + 0.5 * equal) / (total - 1.0) : 1.0;
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Related/unrelated training-subset curves: accuracy of models trained on
// the top-S% most related (or bottom-(100-S)% least related) training
// classes, with the test classes fixed. Both endpoints reduce to the plain
// all-classes ridge model.
// ---------------------------------------------------------------------------

struct RelatedCurvePoint {
  double s_percent = 0.0;
  double related = 0.0;    // mean accuracy over splits
  double unrelated = 0.0;  // mean accuracy over splits
};

namespace detail {

inline double subset_model_accuracy(const Dataset& ds, const EmbeddingSource& source,
                                    const ZeroShotSplit& split,
                                    const std::vector<int>& chosen_classes,
                                    double gamma_a) {
  std::unordered_set<int> chosen(chosen_classes.begin(), chosen_classes.end());
  std::vector<int> train_rows;
  for (Eigen::Index i = 0; i < ds.n(); ++i)
    if (chosen.count(ds.y[i])) train_rows.push_back(static_cast<int>(i));

  std::map<int, Vector> class_vec;
  for (int c : chosen_classes)
    class_vec[c] = source.embed(ds.class_names[static_cast<std::size_t>(c)]);
  Matrix z_train(source.dim(), static_cast<Eigen::Index>(train_rows.size()));
  for (std::size_t i = 0; i < train_rows.size(); ++i)
    z_train.col(static_cast<Eigen::Index>(i)) = class_vec[ds.y[train_rows[i]]];

  const Matrix x_train = select_rows(ds.x, train_rows);
  const EmbeddingModel model = fit_ridge(x_train, z_train, gamma_a);

  std::unordered_set<int> test_set(split.test_classes.begin(), split.test_classes.end());
  std::vector<int> test_rows;
  for (Eigen::Index i = 0; i < ds.n(); ++i)
    if (test_set.count(ds.y[i])) test_rows.push_back(static_cast<int>(i));

  const Matrix prototypes =
      build_class_matrix(source, names_of(ds, split.test_classes));
  const Matrix projections = model.project(select_rows(ds.x, test_rows));
  const Prediction prediction =
      nn_predict(compute_distances(projections, prototypes));

  IntVector truth(static_cast<Eigen::Index>(test_rows.size()));
  IntVector predicted(static_cast<Eigen::Index>(test_rows.size()));
  for (std::size_t i = 0; i < test_rows.size(); ++i) {
    truth[static_cast<Eigen::Index>(i)] = ds.y[test_rows[i]];
    predicted[static_cast<Eigen::Index>(i)] =
        split.test_classes[static_cast<std::size_t>(prediction.labels[static_cast<Eigen::Index>(i)])];
  }
  return accuracy(predicted, truth);
}

}  // namespace detail

inline std::vector<RelatedCurvePoint> related_subset_curve(
    const Dataset& ds, const EmbeddingSource& source,
    const std::vector<ZeroShotSplit>& splits, const std::vector<double>& s_values,
    AffinityOp op, double gamma_a = 1e-6) {
  if (splits.empty()) throw DataError("related_subset_curve needs at least one split");
  for (double s : s_values)
    if (s <= 0.0 || s > 100.0)
      throw ConfigError("subset percentage must lie in (0, 100]");

  const Matrix class_vectors = build_class_matrix(source, ds.class_names);

  std::vector<RelatedCurvePoint> curve(s_values.size());
  for (std::size_t p = 0; p < s_values.size(); ++p) curve[p].s_percent = s_values[p];

  for (const auto& split : splits) {
    const std::vector<ClassAffinity> affinities =
        classname_affinity(class_vectors, split.test_classes);

    // Training classes ordered most-related first; ties toward lower id.
    std::vector<int> by_relatedness = split.train_classes;
    std::sort(by_relatedness.begin(), by_relatedness.end(), [&](int a, int b) {
      const double ra = affinities[static_cast<std::size_t>(a)].by(op);
      const double rb = affinities[static_cast<std::size_t>(b)].by(op);
      return ra > rb || (ra == rb && a < b);
    });
    const int t = static_cast<int>(by_relatedness.size());

    for (std::size_t p = 0; p < s_values.size(); ++p) {
      const double s = s_values[p];
      const auto clamp_count = [&](double fraction) {
        const int k = static_cast<int>(std::llround(fraction * t / 100.0));
        return std::max(1, std::min(t, k));
      };
      std::vector<int> related(by_relatedness.begin(),
                               by_relatedness.begin() + clamp_count(s));
      std::vector<int> unrelated(by_relatedness.end() - clamp_count(100.0 - s),
                                 by_relatedness.end());
      curve[p].related +=
          detail::subset_model_accuracy(ds, source, split, related, gamma_a);
      curve[p].unrelated +=
          detail::subset_model_accuracy(ds, source, split, unrelated, gamma_a);
    }
  }
  for (auto& point : curve) {
    point.related /= static_cast<double>(splits.size());
    point.unrelated /= static_cast<double>(splits.size());
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Exports.
// ---------------------------------------------------------------------------

/// Projected test instances plus original (and, when self-training is on,
/// adapted) prototypes, for external 2-D visualization.
inline void export_projections(const EmbeddingModel& model, const Dataset& ds,
                               const ZeroShotSplit& split, const EmbeddingSource& source,
                               const std::string& path, bool with_self_training,
                               int self_train_k) {
  std::unordered_set<int> test_set(split.test_classes.begin(), split.test_classes.end());
  std::vector<int> test_rows;
  for (Eigen::Index i = 0; i < ds.n(); ++i)
    if (test_set.count(ds.y[i])) test_rows.push_back(static_cast<int>(i));
  if (test_rows.empty()) throw DataError("split has no test instances");

  const Matrix projections = model.project(detail::select_rows(ds.x, test_rows));
  const Matrix prototypes =
      build_class_matrix(source, detail::names_of(ds, split.test_classes));

  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "role,class_name";
  for (Eigen::Index k = 0; k < projections.rows(); ++k) out << ",c" << k;
  out << '\n';
  char buf[64];
  const auto write_column = [&](const char* role, const std::string& name,
                                const auto& column) {
    out << role << ',' << name;
    for (Eigen::Index k = 0; k < column.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", column[k]);
      out << ',' << buf;
    }
    out << '\n';
  };
  for (std::size_t i = 0; i < test_rows.size(); ++i)
    write_column("instance",
                 ds.class_names[static_cast<std::size_t>(ds.y[test_rows[i]])],
                 projections.col(static_cast<Eigen::Index>(i)));
  for (std::size_t t = 0; t < split.test_classes.size(); ++t)
    write_column("prototype",
                 ds.class_names[static_cast<std::size_t>(split.test_classes[t])],
                 prototypes.col(static_cast<Eigen::Index>(t)));
  if (with_self_training) {
    const Matrix adapted = self_train(prototypes, projections, self_train_k);
    for (std::size_t t = 0; t < split.test_classes.size(); ++t)
      write_column("adapted_prototype",
                   ds.class_names[static_cast<std::size_t>(split.test_classes[t])],
                   adapted.col(static_cast<Eigen::Index>(t)));
  }
  if (!out) throw DataError("failed writing '" + path + "'");
}

/// C x C matrix as CSV with class-name row/column headers; invalid entries
/// are written as nan.
inline void write_matrix_csv(const std::string& path, const Matrix& values,
                             const Eigen::MatrixXi* valid,
                             const std::vector<std::string>& class_names) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "class";
  for (const auto& name : class_names) out << ',' << name;
  out << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    out << class_names.at(static_cast<std::size_t>(i));
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      if (valid && (*valid)(i, j) == 0) {
        out << ",nan";
      } else {
        std::snprintf(buf, sizeof buf, "%.17g", values(i, j));
        out << ',' << buf;
      }
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing '" + path + "'");
}

/// Flattens the valid, off-diagonal entries of both matrices into paired
/// samples and returns their Pearson correlation (the correlation-affinity
/// agreement coefficient).
inline double matrix_agreement(const Matrix& a, const Eigen::MatrixXi& valid_a,
                               const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DataError("matrix_agreement: shape mismatch");
  std::vector<double> xs, ys;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (i == j || valid_a(i, j) == 0) continue;
      xs.push_back(a(i, j));
      ys.push_back(b(i, j));
    }
  }
  if (xs.size() < 2) throw DataError("matrix_agreement: not enough valid entries");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    mx += xs[t];
    my += ys[t];
  }
  mx /= n;
  my /= n;
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    cov += (xs[t] - mx) * (ys[t] - my);
    vx += (xs[t] - mx) * (xs[t] - mx);
    vy += (ys[t] - my) * (ys[t] - my);
  }
  if (vx <= 0.0 || vy <= 0.0) throw DataError("matrix_agreement: zero variance");
  return cov / std::sqrt(vx * vy);
}

}  // namespace zsl
