#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "test_support.hpp"
#include "zsl/analysis.hpp"

using namespace zsl;
using Catch::Approx;

namespace {

SplitOutcomeRecord record_of(std::vector<char> inclusion, std::vector<double> accuracy) {
  SplitOutcomeRecord r;
  r.train_inclusion = std::move(inclusion);
  r.per_class_accuracy.resize(static_cast<Eigen::Index>(accuracy.size()));
  for (std::size_t i = 0; i < accuracy.size(); ++i)
    r.per_class_accuracy[static_cast<Eigen::Index>(i)] = accuracy[i];
  return r;
}

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

}  // namespace

TEST_CASE("transfer_correlation detects perfectly aligned inclusion") {
  // Class 0's inclusion tracks class 1's accuracy exactly across 12 splits.
  std::vector<SplitOutcomeRecord> records;
  for (int s = 0; s < 12; ++s) {
    const bool included = s % 2 == 0;
    records.push_back(record_of({included ? char(1) : char(0), 0},
                                {kNan, included ? 0.3 : 0.1}));
  }
  const TransferCorrelationMatrix m = transfer_correlation(records);
  REQUIRE(m.valid(0, 1) == 1);
  CHECK(m.corr(0, 1) == Approx(1.0).margin(1e-12));
}

TEST_CASE("transfer_correlation masks constant inclusion and needs 10 splits") {
  std::vector<SplitOutcomeRecord> records;
  for (int s = 0; s < 12; ++s)
    records.push_back(record_of({1, 0}, {kNan, 0.1 * s}));
  const TransferCorrelationMatrix m = transfer_correlation(records);
  CHECK(m.valid(0, 1) == 0);  // b is constant
  CHECK(m.valid(1, 1) == 0);  // diagonal always masked

  records.resize(5);
  CHECK_THROWS_AS(transfer_correlation(records), DataError);
}

TEST_CASE("transfer_correlation matches an independent one-pass oracle") {
  Rng rng(51);
  const int c = 6, n_splits = 40;
  std::vector<SplitOutcomeRecord> records;
  for (int s = 0; s < n_splits; ++s) {
    std::vector<char> inclusion(c);
    std::vector<double> acc(c, kNan);
    for (int k = 0; k < c; ++k) inclusion[static_cast<std::size_t>(k)] = rng.below(2) ? 1 : 0;
    for (int k = 0; k < c; ++k)
      if (!inclusion[static_cast<std::size_t>(k)]) acc[static_cast<std::size_t>(k)] = rng.uniform();
    records.push_back(record_of(inclusion, acc));
  }
  const TransferCorrelationMatrix m = transfer_correlation(records);

  for (int i = 0; i < c; ++i) {
    for (int j = 0; j < c; ++j) {
      if (i == j || m.valid(i, j) == 0) continue;
      // One-pass moment oracle: corr = (E[be] - E[b]E[e]) / sqrt(var var).
      double sb = 0, se = 0, sbe = 0, sbb = 0, see = 0, n = 0;
      for (const auto& r : records) {
        if (std::isnan(r.per_class_accuracy[j])) continue;
        const double b = r.train_inclusion[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
        const double e = r.per_class_accuracy[j];
        sb += b;
        se += e;
        sbe += b * e;
        sbb += b * b;
        see += e * e;
        n += 1.0;
      }
      const double cov = sbe / n - (sb / n) * (se / n);
      const double vb = sbb / n - (sb / n) * (sb / n);
      const double ve = see / n - (se / n) * (se / n);
      CHECK(m.corr(i, j) == Approx(cov / std::sqrt(vb * ve)).margin(1e-10));
      CHECK(m.corr(i, j) >= -1.0 - 1e-12);
      CHECK(m.corr(i, j) <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("transfer_correlation is asymmetric by construction") {
  // Class 0 inclusion predicts class 1 accuracy; class 1 inclusion is noise
  // with respect to class 0 accuracy.
  std::vector<SplitOutcomeRecord> records;
  for (int s = 0; s < 16; ++s) {
    const bool b0 = s % 2 == 0;
    const bool b1 = (s / 2) % 2 == 0;
    std::vector<char> inclusion = {b0 ? char(1) : char(0), b1 ? char(1) : char(0), 0};
    std::vector<double> acc(3, kNan);
    acc[1] = b0 ? 0.8 : 0.2;           // driven by class 0
    acc[0] = 0.1 * ((s * 7) % 5);      // unrelated to class 1
    records.push_back(record_of(inclusion, acc));
  }
  const TransferCorrelationMatrix m = transfer_correlation(records);
  REQUIRE(m.valid(0, 1) == 1);
  REQUIRE(m.valid(1, 0) == 1);
  CHECK(m.corr(0, 1) == Approx(1.0).margin(1e-9));
  CHECK(std::abs(m.corr(1, 0)) < 0.9);
}

TEST_CASE("verbatim denominator differs from the Pearson default") {
  std::vector<SplitOutcomeRecord> records;
  for (int s = 0; s < 12; ++s) {
    const bool included = s % 2 == 0;
    records.push_back(record_of({included ? char(1) : char(0), 0},
                                {kNan, included ? 0.3 : 0.1}));
  }
  const TransferCorrelationMatrix pearson = transfer_correlation(records, true);
  const TransferCorrelationMatrix verbatim = transfer_correlation(records, false);
  // cov = 0.05, var_b = 0.25, var_e = 0.01: Pearson 1.0, verbatim 20.0.
  CHECK(pearson.corr(0, 1) == Approx(1.0).margin(1e-12));
  CHECK(verbatim.corr(0, 1) == Approx(20.0).margin(1e-9));
}

TEST_CASE("classname_affinity covers the hand cases and ordering invariant") {
  Matrix z = Matrix::Identity(3, 3);  // orthogonal unit vectors
  const auto affinities = classname_affinity(z, {1, 2});
  // Class 0 vs orthogonal classes: affinity 1 - sqrt(2).
  CHECK(affinities[0].r_max == Approx(1.0 - std::sqrt(2.0)).epsilon(1e-12));
  CHECK(affinities[0].r_min == Approx(1.0 - std::sqrt(2.0)).epsilon(1e-12));
  // A class inside the test set sees itself: R_max = 1.
  CHECK(affinities[1].r_max == Approx(1.0).margin(1e-12));

  Rng rng(53);
  Matrix random = rng.gaussian_matrix(5, 8);
  for (Eigen::Index j = 0; j < 8; ++j) random.col(j).normalize();
  const auto all = classname_affinity(random, {0, 3, 6});
  for (const auto& a : all) {
    CHECK(a.r_min <= a.r_mean + 1e-12);
    CHECK(a.r_mean <= a.r_max + 1e-12);
  }

  // Brute-force check of one entry.
  double expected = -2.0;
  for (int j : {0, 3, 6})
    expected = std::max(expected, 1.0 - (random.col(4) - random.col(j)).norm());
  CHECK(all[4].r_max == Approx(expected).margin(1e-12));
}

TEST_CASE("affinity percentile ranks live in [0, 1] and order by similarity") {
  Rng rng(59);
  Matrix z = rng.gaussian_matrix(4, 6);
  for (Eigen::Index j = 0; j < 6; ++j) z.col(j).normalize();
  const AffinityReport report = classname_affinity_report(z);
  double best_cosine = -2.0, best_percentile = -1.0, max_percentile = -1.0;
  for (Eigen::Index i = 0; i < 6; ++i) {
    for (Eigen::Index j = 0; j < 6; ++j) {
      if (i == j) continue;
      CHECK(report.percentile(i, j) >= 0.0);
      CHECK(report.percentile(i, j) <= 1.0);
      max_percentile = std::max(max_percentile, report.percentile(i, j));
      if (report.cosine(i, j) > best_cosine) {
        best_cosine = report.cosine(i, j);
        best_percentile = report.percentile(i, j);
      }
    }
  }
  // The most similar ordered pair carries the highest percentile. Its mirror
  // pair ties with it, so the top value sits just below 1.
  CHECK(best_percentile == Approx(max_percentile).margin(1e-12));
  CHECK(best_percentile > 0.9);
}

namespace {

// Two clusters of classes; test classes all come from cluster A, so related
// training classes (same cluster) should transfer better than unrelated.
struct ClusteredData {
  Dataset dataset;
  Matrix class_vectors;
  WordVectorStore store;
};

ClusteredData make_clustered(std::uint64_t seed) {
  Rng rng(seed);
  const int d_z = 6, d_x = 24, per_class = 12;
  const int c = 12;  // 0..5 cluster A, 6..11 cluster B
  Matrix gaussian = rng.gaussian_matrix(d_x, d_z);
  const Matrix basis =
      Eigen::HouseholderQR<Matrix>(gaussian).householderQ() * Matrix::Identity(d_x, d_z);

  Vector center_a = rng.unit_vector(d_z);
  Vector center_b = rng.unit_vector(d_z);
  while (std::abs(center_a.dot(center_b)) > 0.2) center_b = rng.unit_vector(d_z);

  Matrix class_vectors(d_z, c);
  for (int k = 0; k < c; ++k) {
    const Vector& center = k < 6 ? center_a : center_b;
    Vector v = center + 0.25 * rng.gaussian_vector(d_z);
    class_vectors.col(k) = v / v.norm();
  }

  ClusteredData data;
  data.class_vectors = class_vectors;
  data.dataset.name = "clustered";
  data.dataset.x.resize(c * per_class, d_x);
  data.dataset.y.resize(c * per_class);
  for (int k = 0; k < c; ++k) {
    data.dataset.class_names.push_back(synthetic_class_name(k, c));
    for (int t = 0; t < per_class; ++t) {
      Vector v = basis * class_vectors.col(k) + 0.1 * rng.gaussian_vector(d_x);
      data.dataset.x.row(k * per_class + t) = (v / v.norm()).transpose();
      data.dataset.y[k * per_class + t] = k;
    }
  }
  for (int k = 0; k < c; ++k)
    data.store.insert(data.dataset.class_names[static_cast<std::size_t>(k)],
                      class_vectors.col(k));
  return data;
}

}  // namespace

TEST_CASE("related_subset_curve endpoints equal the all-classes baseline") {
  const ClusteredData data = make_clustered(61);
  const EmbeddingSource source(&data.store);
  const auto splits = generate_splits(data.dataset.class_count(), 3, 11);

  const auto curve = related_subset_curve(data.dataset, source, splits, {0.5, 100.0},
                                          AffinityOp::kMax, 1e-6);
  REQUIRE(curve.size() == 2);
  double baseline = 0.0;
  for (const auto& split : splits) {
    std::vector<int> all = split.train_classes;
    baseline += zsl::detail::subset_model_accuracy(data.dataset, source, split, all, 1e-6);
  }
  baseline /= static_cast<double>(splits.size());
  // S = 100: related selects all training classes. S -> 0: unrelated selects
  // the bottom 100%, i.e. all training classes again. Both baseline, exactly.
  CHECK(curve[1].related == Approx(baseline).margin(0.0));
  CHECK(curve[0].unrelated == Approx(baseline).margin(0.0));
}

TEST_CASE("related beats unrelated on clustered classes at the midpoint") {
  const ClusteredData data = make_clustered(67);
  const EmbeddingSource source(&data.store);

  // Fix test classes to cluster A's first half so relatedness matters.
  ZeroShotSplit split;
  split.split_id = 0;
  split.test_classes = {0, 1, 2};
  for (int k = 3; k < 12; ++k) split.train_classes.push_back(k);

  const auto curve = related_subset_curve(data.dataset, source, {split}, {34.0},
                                          AffinityOp::kMax, 1e-6);
  // Top third of training classes are the cluster-A mates; bottom two thirds
  // are mostly cluster B.
  CHECK(curve[0].related > curve[0].unrelated);
}

TEST_CASE("export_projections writes the expected row counts") {
  const ClusteredData data = make_clustered(71);
  const EmbeddingSource source(&data.store);
  const auto splits = generate_splits(data.dataset.class_count(), 1, 5);
  const ZeroShotSplit& split = splits[0];

  std::vector<int> train_rows, test_rows;
  std::unordered_set<int> train_set(split.train_classes.begin(), split.train_classes.end());
  for (Eigen::Index i = 0; i < data.dataset.n(); ++i)
    (train_set.count(data.dataset.y[i]) ? train_rows : test_rows).push_back(static_cast<int>(i));

  Matrix x_train(train_rows.size(), data.dataset.feature_dim());
  Matrix z_train(source.dim(), train_rows.size());
  for (std::size_t i = 0; i < train_rows.size(); ++i) {
    x_train.row(static_cast<Eigen::Index>(i)) = data.dataset.x.row(train_rows[i]);
    z_train.col(static_cast<Eigen::Index>(i)) =
        data.class_vectors.col(data.dataset.y[train_rows[i]]);
  }
  const EmbeddingModel model = fit_ridge(x_train, z_train, 1e-6);

  zsl_test::TempDir dir("proj");
  const auto count_lines = [](const std::string& text) {
    std::size_t lines = 0;
    for (char ch : text)
      if (ch == '\n') ++lines;
    return lines;
  };

  export_projections(model, data.dataset, split, source, dir.file("st.csv"), true, 10);
  const std::string with_st = zsl_test::read_text(dir.file("st.csv"));
  CHECK(count_lines(with_st) ==
        1 + test_rows.size() + 2 * split.test_classes.size());

  export_projections(model, data.dataset, split, source, dir.file("plain.csv"), false, 10);
  const std::string without_st = zsl_test::read_text(dir.file("plain.csv"));
  CHECK(count_lines(without_st) == 1 + test_rows.size() + split.test_classes.size());

  // Spot-check round-trip of the first instance row.
  std::istringstream lines(with_st);
  std::string header, first;
  std::getline(lines, header);
  std::getline(lines, first);
  std::istringstream fields(first);
  std::string role, name, cell;
  std::getline(fields, role, ',');
  std::getline(fields, name, ',');
  CHECK(role == "instance");
  const Matrix projections = model.project(detail::select_rows(data.dataset.x, test_rows));
  std::getline(fields, cell, ',');
  CHECK(std::stod(cell) == Approx(projections(0, 0)).margin(1e-15));
}

TEST_CASE("matrix_agreement is positive for aligned matrices") {
  Rng rng(73);
  Matrix a = rng.gaussian_matrix(5, 5);
  Matrix noise = rng.gaussian_matrix(5, 5);
  Matrix b = a + 0.1 * noise;
  Eigen::MatrixXi valid = Eigen::MatrixXi::Ones(5, 5);
  CHECK(matrix_agreement(a, valid, b) > 0.9);
  CHECK(matrix_agreement(a, valid, a) == Approx(1.0).margin(1e-12));
}
