#pragma once

#include <Eigen/Sparse>

#include <algorithm>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "zsl/common.hpp"

namespace zsl {

// ---------------------------------------------------------------------------
// Symmetric KNN graph over all instances and its unnormalized Laplacian
// L = D - W. Neighbors are selected by linear-kernel similarity; the
// directed top-K graph is symmetrized by edge union, weights are binary.
// ---------------------------------------------------------------------------

struct KnnGraph {
  Eigen::SparseMatrix<double> adjacency;  // W: symmetric, zero diagonal
  Vector degrees;                         // d_ii = row sums of W
  Eigen::SparseMatrix<double> laplacian;  // L = D - W
  int k = 0;

  Eigen::Index n() const { return adjacency.rows(); }
};

/// Builds the graph from a precomputed similarity (kernel) matrix. Ties are
/// broken toward the lower instance index.
inline KnnGraph build_knn_graph_from_kernel(const Matrix& kernel, int k) {
  const Eigen::Index n = kernel.rows();
  if (kernel.cols() != n) throw DataError("kernel matrix must be square");
  if (k < 1) throw ConfigError("graph K must be at least 1");
  if (static_cast<Eigen::Index>(k) >= n)
    throw ConfigError("graph K = " + std::to_string(k) +
                      " must be smaller than the instance count " + std::to_string(n));

  std::vector<std::pair<int, int>> edges;
  edges.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(k));
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    order.clear();
    for (int j = 0; j < static_cast<int>(n); ++j)
      if (j != static_cast<int>(i)) order.push_back(j);
    const auto closer = [&](int a, int b) {
      const double sa = kernel(i, a), sb = kernel(i, b);
      return sa > sb || (sa == sb && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + k, order.end(), closer);
    for (int t = 0; t < k; ++t) {
      const int j = order[static_cast<std::size_t>(t)];
      edges.emplace_back(std::min<int>(static_cast<int>(i), j),
                         std::max<int>(static_cast<int>(i), j));
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(edges.size() * 2);
  for (const auto& [a, b] : edges) {
    triplets.emplace_back(a, b, 1.0);
    triplets.emplace_back(b, a, 1.0);
  }

  KnnGraph graph;
  graph.k = k;
  graph.adjacency.resize(n, n);
  graph.adjacency.setFromTriplets(triplets.begin(), triplets.end());
  graph.degrees = graph.adjacency * Vector::Ones(n);

  std::vector<Eigen::Triplet<double>> lap;
  lap.reserve(edges.size() * 2 + static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) lap.emplace_back(i, i, graph.degrees[i]);
  for (const auto& [a, b] : edges) {
    lap.emplace_back(a, b, -1.0);
    lap.emplace_back(b, a, -1.0);
  }
  graph.laplacian.resize(n, n);
  graph.laplacian.setFromTriplets(lap.begin(), lap.end());
  return graph;
}

/// Builds the graph from instance rows using the linear kernel X X^T.
inline KnnGraph build_knn_graph(const Matrix& instances, int k) {
  const Matrix kernel = instances * instances.transpose();
  return build_knn_graph_from_kernel(kernel, k);
}

/// Tr(F^T F L), the manifold smoothness of column-per-instance projections F.
/// Equals one half of the w-weighted sum of squared projection differences.
inline double laplacian_quadratic(const Matrix& projections,
                                  const Eigen::SparseMatrix<double>& laplacian) {
  if (projections.cols() != laplacian.rows() || laplacian.rows() != laplacian.cols())
    throw DataError("projection/Laplacian dimension mismatch");
  const Matrix fl = projections * laplacian;
  return fl.cwiseProduct(projections).sum();
}

/// Debug dump: one undirected edge "i j" per line, i < j.
inline void write_edge_list(const std::string& path, const KnnGraph& graph) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  for (Eigen::Index col = 0; col < graph.adjacency.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(graph.adjacency, col); it; ++it)
      if (it.row() < it.col()) out << it.row() << ' ' << it.col() << '\n';
  if (!out) throw DataError("failed writing '" + path + "'");
}

}  // namespace zsl
