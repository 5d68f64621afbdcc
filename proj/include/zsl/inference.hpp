#pragma once

#include <algorithm>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "zsl/common.hpp"

namespace zsl {

// ---------------------------------------------------------------------------
// Semantic-space matching. All matchers consume a full test-batch distance
// matrix (transductive by design for NRM/GC). Vectors are expected unit-norm
// so Euclidean distance is monotone in cosine distance.
// ---------------------------------------------------------------------------

struct DistanceMatrix {
  Matrix d;  // n_u x C: d(i, j) = || f(x_i) - g(y_j) ||

  Eigen::Index instance_count() const { return d.rows(); }
  Eigen::Index class_count() const { return d.cols(); }
};

/// Euclidean distances between projected instances (columns of `projections`)
/// and class prototypes (columns of `prototypes`).
inline DistanceMatrix compute_distances(const Matrix& projections,
                                        const Matrix& prototypes) {
  if (projections.rows() != prototypes.rows())
    throw DataError("projection/prototype dimension mismatch");
  if (prototypes.cols() == 0) throw DataError("empty prototype set");
  const Eigen::Index n = projections.cols();
  const Eigen::Index c = prototypes.cols();
  DistanceMatrix out;
  out.d.resize(n, c);
  const Vector f_sq = projections.colwise().squaredNorm();
  const Vector g_sq = prototypes.colwise().squaredNorm();
  const Matrix cross = projections.transpose() * prototypes;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < c; ++j)
      out.d(i, j) = std::sqrt(std::max(0.0, f_sq[i] + g_sq[j] - 2.0 * cross(i, j)));
  return out;
}

enum class Matcher { kNearest, kNormalized, kGloballyCorrected };

inline const char* matcher_name(Matcher m) {
  switch (m) {
    case Matcher::kNearest: return "nn";
    case Matcher::kNormalized: return "nrm";
    case Matcher::kGloballyCorrected: return "gc";
  }
  return "unknown";
}

struct Prediction {
  IntVector labels;  // per-instance prototype column index
  Matrix scores;     // n_u x C: negated effective distance (or negated rank)
  Matcher matcher = Matcher::kNearest;
  bool self_trained = false;
};

namespace detail {

/// Row-wise argmin with ties broken toward the lowest class index.
inline IntVector argmin_rows(const Matrix& values) {
  IntVector labels(values.rows());
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    int best = 0;
    for (Eigen::Index j = 1; j < values.cols(); ++j)
      if (values(i, j) < values(i, best)) best = static_cast<int>(j);
    labels[i] = best;
  }
  return labels;
}

}  // namespace detail

/// Plain nearest-neighbour matching.
inline Prediction nn_predict(const DistanceMatrix& distances) {
  if (distances.class_count() == 0) throw DataError("empty prototype set");
  Prediction p;
  p.matcher = Matcher::kNearest;
  p.labels = detail::argmin_rows(distances.d);
  p.scores = -distances.d;
  return p;
}

/// Normalized nearest neighbour: every prototype's distance column is scaled
/// to unit L2 norm before matching, which suppresses hub prototypes without
/// changing the per-prototype ranking of instances.
inline Prediction nrm_predict(const DistanceMatrix& distances) {
  if (distances.instance_count() < 1) throw DataError("NRM requires test instances");
  Matrix scaled = distances.d;
  for (Eigen::Index j = 0; j < scaled.cols(); ++j) {
    const double norm = scaled.col(j).norm();
    if (norm > 0.0)
      scaled.col(j) /= norm;
    else
      warn("NRM: prototype " + std::to_string(j) +
           " has an all-zero distance column, left unscaled");
  }
  Prediction p;
  p.matcher = Matcher::kNormalized;
  p.labels = detail::argmin_rows(scaled);
  p.scores = -scaled;
  return p;
}

/// Globally corrected matching: instances are assigned to the prototype that
/// ranks them best. Rank(y, x_i) counts the other instances at distance <=
/// d(i, y), so duplicates tie.
inline Prediction gc_predict(const DistanceMatrix& distances) {
  const Eigen::Index n = distances.instance_count();
  if (n < 2) throw DataError("GC matching requires at least 2 test instances");
  Matrix ranks(n, distances.class_count());
  std::vector<double> sorted(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < distances.class_count(); ++j) {
    for (Eigen::Index i = 0; i < n; ++i) sorted[static_cast<std::size_t>(i)] = distances.d(i, j);
    std::sort(sorted.begin(), sorted.end());
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto at_most = std::upper_bound(sorted.begin(), sorted.end(), distances.d(i, j));
      ranks(i, j) = static_cast<double>(at_most - sorted.begin()) - 1.0;
    }
  }
  Prediction p;
  p.matcher = Matcher::kGloballyCorrected;
  p.labels = detail::argmin_rows(ranks);
  p.scores = -ranks;
  return p;
}

inline Prediction predict(const DistanceMatrix& distances, Matcher matcher) {
  switch (matcher) {
    case Matcher::kNearest: return nn_predict(distances);
    case Matcher::kNormalized: return nrm_predict(distances);
    case Matcher::kGloballyCorrected: return gc_predict(distances);
  }
  throw ConfigError("invalid matcher");
}

// ---------------------------------------------------------------------------
// Self-training: each prototype is replaced by the mean of its K nearest
// projected test instances (neighbors of the prototype), then re-normalized.
// ---------------------------------------------------------------------------

inline Matrix self_train(const Matrix& prototypes, const Matrix& projections,
                         int neighbor_count, bool renormalize = true) {
  if (neighbor_count < 1) throw ConfigError("self-training K must be at least 1");
  const Eigen::Index n = projections.cols();
  if (n == 0) throw DataError("self-training requires projected test instances");
  if (static_cast<Eigen::Index>(neighbor_count) > n) {
    warn("self-training K = " + std::to_string(neighbor_count) + " clamped to " +
         std::to_string(n) + " test instances");
    neighbor_count = static_cast<int>(n);
  }

  const DistanceMatrix to_prototypes = compute_distances(projections, prototypes);
  Matrix adapted(prototypes.rows(), prototypes.cols());
  std::vector<int> order(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < prototypes.cols(); ++j) {
    std::iota(order.begin(), order.end(), 0);
    const auto closer = [&](int a, int b) {
      const double da = to_prototypes.d(a, j), db = to_prototypes.d(b, j);
      return da < db || (da == db && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + neighbor_count, order.end(), closer);
    // Accumulate in index order so identical neighbor sets give bitwise
    // identical means.
    std::sort(order.begin(), order.begin() + neighbor_count);
    Vector mean = Vector::Zero(prototypes.rows());
    for (int t = 0; t < neighbor_count; ++t)
      mean += projections.col(order[static_cast<std::size_t>(t)]);
    mean /= static_cast<double>(neighbor_count);
    adapted.col(j) = mean;
  }
  if (renormalize) normalize_columns(adapted, "adapted prototype");
  return adapted;
}

// ---------------------------------------------------------------------------
// Prediction export.
// ---------------------------------------------------------------------------

inline void write_predictions_csv(const std::string& path, const Prediction& prediction,
                                  const std::vector<int>& instance_ids,
                                  const std::vector<std::string>& class_names) {
  if (static_cast<Eigen::Index>(instance_ids.size()) != prediction.labels.size())
    throw DataError("instance id count does not match predictions");
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "instance_id,predicted_class,score\n";
  char buf[64];
  for (Eigen::Index i = 0; i < prediction.labels.size(); ++i) {
    const int label = prediction.labels[i];
    std::snprintf(buf, sizeof buf, "%.17g", prediction.scores(i, label));
    out << instance_ids[static_cast<std::size_t>(i)] << ','
        << class_names.at(static_cast<std::size_t>(label)) << ',' << buf << '\n';
  }
  if (!out) throw DataError("failed writing '" + path + "'");
}

}  // namespace zsl
