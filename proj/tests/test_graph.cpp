#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>

#include <sstream>

#include "test_support.hpp"
#include "zsl/common.hpp"
#include "zsl/graph.hpp"

using namespace zsl;
using Catch::Approx;

namespace {

// Brute-force form of the smoothness term: half the w-weighted sum of
// squared projection differences.
double pairwise_half_sum(const Matrix& f, const Matrix& w) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      sum += w(i, j) * (f.col(i) - f.col(j)).squaredNorm();
  return 0.5 * sum;
}

}  // namespace

TEST_CASE("two-node graph has the textbook Laplacian") {
  Matrix x(2, 2);
  x << 1, 0, 0.9, 0.1;
  const KnnGraph g = build_knn_graph(x, 1);
  const Matrix w = Matrix(g.adjacency);
  const Matrix l = Matrix(g.laplacian);
  CHECK(w(0, 1) == 1.0);
  CHECK(w(1, 0) == 1.0);
  CHECK(w(0, 0) == 0.0);
  CHECK(l(0, 0) == 1.0);
  CHECK(l(0, 1) == -1.0);
  CHECK(l(1, 0) == -1.0);
  CHECK(l(1, 1) == 1.0);
}

TEST_CASE("K=1 on three points connects mutual favorites after symmetrization") {
  // Similarities: s(0,1) > s(0,2), node 1 favors 0, node 2 favors 1.
  Matrix x(3, 2);
  x << 1.0, 0.0, 0.9, 0.1, 0.5, 0.6;
  const Matrix kernel = x * x.transpose();
  REQUIRE(kernel(0, 1) > kernel(0, 2));
  const KnnGraph g = build_knn_graph(x, 1);
  const Matrix w = Matrix(g.adjacency);
  CHECK(w(0, 1) == 1.0);  // mutual edge {0,1}
  // Node 2's single favorite introduces exactly one more undirected edge.
  CHECK(w.sum() == 4.0);
  CHECK(w(2, 0) + w(2, 1) == 1.0);
}

TEST_CASE("graph invariants hold on random instances") {
  Rng rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 20 + static_cast<int>(rng.below(40));
    const int k = 1 + static_cast<int>(rng.below(5));
    const Matrix x = rng.gaussian_matrix(n, 6);
    const KnnGraph g = build_knn_graph(x, k);
    const Matrix w = Matrix(g.adjacency);

    CHECK((w - w.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(w.diagonal().cwiseAbs().maxCoeff() == 0.0);
    for (Eigen::Index i = 0; i < n; ++i) CHECK(g.degrees[i] >= k);

    const Matrix l = Matrix(g.laplacian);
    CHECK((l * Vector::Ones(n)).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> eigen(l);
    CHECK(eigen.eigenvalues().minCoeff() >= -1e-9);
  }
}

TEST_CASE("build_knn_graph rejects K >= n") {
  const Matrix x = Matrix::Random(4, 3);
  CHECK_THROWS_AS(build_knn_graph(x, 4), ConfigError);
  CHECK_THROWS_AS(build_knn_graph(x, 0), ConfigError);
}

TEST_CASE("laplacian_quadratic is zero for constant projections") {
  const Matrix x = Matrix::Random(12, 4);
  const KnnGraph g = build_knn_graph(x, 3);
  const Matrix f = Vector::Ones(3) * Eigen::RowVectorXd::Constant(12, 2.5);
  CHECK(laplacian_quadratic(f, g.laplacian) == Approx(0.0).margin(1e-9));
}

TEST_CASE("laplacian_quadratic matches the hand-computed two-node case") {
  Matrix x(2, 1);
  x << 1.0, 0.9;
  const KnnGraph g = build_knn_graph(x, 1);
  Matrix f(1, 2);
  f << 0.0, 2.0;
  CHECK(laplacian_quadratic(f, g.laplacian) == Approx(4.0).margin(1e-12));
}

TEST_CASE("trace form equals the pairwise half-sum on random graphs") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 10 + static_cast<int>(rng.below(30));
    const Matrix x = rng.gaussian_matrix(n, 5);
    const KnnGraph g = build_knn_graph(x, 2 + static_cast<int>(rng.below(3)));
    const Matrix f = rng.gaussian_matrix(4, n);
    const double trace_form = laplacian_quadratic(f, g.laplacian);
    const double pair_form = pairwise_half_sum(f, Matrix(g.adjacency));
    CHECK(trace_form == Approx(pair_form).margin(1e-9));
  }
}

TEST_CASE("laplacian_quadratic rejects mismatched dimensions") {
  const Matrix x = Matrix::Random(6, 3);
  const KnnGraph g = build_knn_graph(x, 2);
  CHECK_THROWS_AS(laplacian_quadratic(Matrix::Zero(2, 5), g.laplacian), DataError);
}

TEST_CASE("write_edge_list dumps each undirected edge once") {
  zsl_test::TempDir dir("edges");
  Rng rng(77);
  const KnnGraph g = build_knn_graph(rng.gaussian_matrix(10, 4), 2);
  write_edge_list(dir.file("edges.txt"), g);

  std::istringstream in(zsl_test::read_text(dir.file("edges.txt")));
  const Matrix w = Matrix(g.adjacency);
  int i, j, count = 0;
  while (in >> i >> j) {
    CHECK(i < j);
    CHECK(w(i, j) == 1.0);
    ++count;
  }
  CHECK(count * 2 == static_cast<int>(w.sum()));
}
