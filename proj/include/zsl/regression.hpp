#pragma once

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/Sparse>

#include <cstdint>
#include <fstream>
#include <string>
#include <utility>

#include "zsl/common.hpp"
#include "zsl/dataio.hpp"
#include "zsl/graph.hpp"

namespace zsl {

// ---------------------------------------------------------------------------
// Hyperparameters. gamma_a = 0 is rejected outright: with no ridge term the
// kernel system is numerically singular and accuracy collapses to chance.
// ---------------------------------------------------------------------------

inline constexpr double kMinGammaA = 1e-12;
inline constexpr double kConditionWarnThreshold = 1e12;

struct HyperParams {
  double gamma_a = 1e-6;   // ridge weight
  double gamma_i = 40.0;   // manifold weight
  int graph_k = 5;         // KNN graph neighbors
  int self_train_k = 100;  // self-training neighbors

  void validate() const {
    if (!(gamma_a >= kMinGammaA))
      throw ConfigError("gamma_a must be at least 1e-12 (unregularized solves are rejected)");
    if (gamma_i < 0.0) throw ConfigError("gamma_i must be non-negative");
    if (graph_k < 1) throw ConfigError("graph_k must be at least 1");
    if (self_train_k < 1) throw ConfigError("self_train_k must be at least 1");
  }
};

// ---------------------------------------------------------------------------
// FitProblem: the assembled linear system data. Basis ordering is fixed as
// [labeled rows..., unlabeled rows...] so the labeled mask is a leading
// block of ones and the targets carry zero columns for unlabeled instances.
// ---------------------------------------------------------------------------

struct FitProblem {
  Matrix kernel;                          // n x n, symmetric PSD
  Matrix targets;                         // d_z x n, zero columns beyond n_labeled
  Vector labeled_mask;                    // diagonal of J: n_labeled ones then zeros
  Eigen::SparseMatrix<double> laplacian;  // n x n, or empty when unused
  Eigen::Index n_labeled = 0;
  Eigen::Index n_unlabeled = 0;

  Eigen::Index n() const { return kernel.rows(); }
  bool has_laplacian() const { return laplacian.rows() > 0; }
};

enum class ModelVariant { kRidge, kManifold, kAugmentedRidge, kAugmentedManifold };

inline const char* variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::kRidge: return "ridge";
    case ModelVariant::kManifold: return "manifold";
    case ModelVariant::kAugmentedRidge: return "augmented-ridge";
    case ModelVariant::kAugmentedManifold: return "augmented-manifold";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// EmbeddingModel: coefficients A over a fixed basis; f(x) = A k(x, basis).
// ---------------------------------------------------------------------------

struct EmbeddingModel {
  Matrix coefficients;  // A: d_z x n
  Matrix basis;         // n x d_x (instance rows defining the kernel columns)
  HyperParams params;
  ModelVariant variant = ModelVariant::kRidge;

  Eigen::Index embed_dim() const { return coefficients.rows(); }
  Eigen::Index basis_size() const { return coefficients.cols(); }
  Eigen::Index feature_dim() const { return basis.cols(); }

  /// Raw semantic projections, one column per instance row of `instances`.
  Matrix project_raw(const Matrix& instances) const {
    if (instances.cols() != basis.cols())
      throw DataError("projection input dimension " + std::to_string(instances.cols()) +
                      " != basis dimension " + std::to_string(basis.cols()));
    return coefficients * (basis * instances.transpose());
  }

  /// Unit-normalized projections for semantic-space matching. Zero-norm
  /// columns fall back to zero vectors with a warning.
  Matrix project(const Matrix& instances) const {
    Matrix f = project_raw(instances);
    normalize_columns(f, "projection");
    return f;
  }
};

/// Linear kernel: entry (i, j) is the dot product of row i of `a` and row j
/// of `b`.
inline Matrix linear_kernel(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw DataError("linear_kernel dimension mismatch: " + std::to_string(a.cols()) +
                    " vs " + std::to_string(b.cols()));
  return a * b.transpose();
}

// ---------------------------------------------------------------------------
// System assembly and closed-form solve.
// ---------------------------------------------------------------------------

inline FitProblem assemble_fit_problem(const Matrix& x_labeled, const Matrix& z_labeled,
                                       const Matrix& x_unlabeled, const HyperParams& hp) {
  hp.validate();
  const Eigen::Index n_l = x_labeled.rows();
  const Eigen::Index n_u = x_unlabeled.rows();
  if (n_l < 1) throw DataError("fit requires at least one labeled instance");
  if (z_labeled.cols() != n_l)
    throw DataError("target columns " + std::to_string(z_labeled.cols()) +
                    " != labeled instance count " + std::to_string(n_l));
  if (n_u > 0 && x_unlabeled.cols() != x_labeled.cols())
    throw DataError("labeled/unlabeled feature dimensions differ");
  if (n_u == 0 && hp.gamma_i > 0.0)
    throw ConfigError("manifold fit with gamma_i > 0 requires unlabeled instances");

  FitProblem problem;
  const Eigen::Index n = n_l + n_u;
  Matrix x_all(n, x_labeled.cols());
  x_all.topRows(n_l) = x_labeled;
  if (n_u > 0) x_all.bottomRows(n_u) = x_unlabeled;

  problem.kernel = x_all * x_all.transpose();
  if (!problem.kernel.allFinite())
    throw NumericError("kernel matrix contains non-finite values (feature scale overflow)");
  problem.targets = Matrix::Zero(z_labeled.rows(), n);
  problem.targets.leftCols(n_l) = z_labeled;
  problem.labeled_mask = Vector::Zero(n);
  problem.labeled_mask.head(n_l).setOnes();
  problem.n_labeled = n_l;
  problem.n_unlabeled = n_u;

  if (hp.gamma_i > 0.0)
    problem.laplacian = build_knn_graph_from_kernel(problem.kernel, hp.graph_k).laplacian;
  return problem;
}

namespace detail {

inline void check_solution_finite(const Matrix& a, double rcond) {
  if (!a.allFinite())
    throw NumericError("singular regression system (estimated condition " +
                       std::to_string(rcond > 0.0 ? 1.0 / rcond : 0.0) + ")");
}

/// A = targets * M^{-1} for symmetric positive-definite M, with a pivoted-LU
/// fallback when the Cholesky factorization breaks down.
inline Matrix solve_spd(const Matrix& m, const Matrix& targets) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() == Eigen::Success) {
    const double rcond = llt.rcond();
    if (rcond > 0.0 && 1.0 / rcond > kConditionWarnThreshold)
      warn("regression system is ill-conditioned (estimated condition " +
           std::to_string(1.0 / rcond) + ")");
    Matrix a = llt.solve(targets.transpose()).transpose();
    check_solution_finite(a, rcond);
    return a;
  }
  warn("Cholesky factorization failed; falling back to a pivoted solve");
  Eigen::PartialPivLU<Matrix> lu(m);
  const double rcond = lu.rcond();
  Matrix a = lu.solve(targets.transpose()).transpose();
  check_solution_finite(a, rcond);
  return a;
}

/// A = targets * M^{-1} for a general square M (the transductive system is
/// nonsymmetric because of K J and K L).
inline Matrix solve_general(const Matrix& m, const Matrix& targets) {
  Eigen::PartialPivLU<Matrix> lu(m.transpose());
  const double rcond = lu.rcond();
  if (rcond > 0.0 && 1.0 / rcond > kConditionWarnThreshold)
    warn("regression system is ill-conditioned (estimated condition " +
         std::to_string(1.0 / rcond) + ")");
  Matrix a = lu.solve(targets.transpose()).transpose();
  check_solution_finite(a, rcond);
  return a;
}

}  // namespace detail

/// Closed-form coefficients for the assembled problem:
///   A = Z~ (K J + gamma_a n_l I + gamma_i n_l / (n_l+n_u)^2 K L)^{-1}
/// which reduces to A = Z (K + gamma_a n_l I)^{-1} in the fully labeled case.
inline Matrix solve_fit_problem(const FitProblem& problem, const HyperParams& hp) {
  const Eigen::Index n = problem.n();
  const Eigen::Index n_l = problem.n_labeled;
  const double ridge = hp.gamma_a * static_cast<double>(n_l);

  if (problem.n_unlabeled == 0 && !problem.has_laplacian()) {
    Matrix m = problem.kernel;
    m.diagonal().array() += ridge;
    return detail::solve_spd(m, problem.targets);
  }

  Matrix m = Matrix::Zero(n, n);
  m.leftCols(n_l) = problem.kernel.leftCols(n_l);  // K J
  m.diagonal().array() += ridge;
  if (hp.gamma_i > 0.0 && problem.has_laplacian()) {
    const double total = static_cast<double>(n);
    const double scale = hp.gamma_i * static_cast<double>(n_l) / (total * total);
    const Matrix kernel_laplacian = problem.kernel * problem.laplacian;
    m.noalias() += scale * kernel_laplacian;
  }
  return detail::solve_general(m, problem.targets);
}

// ---------------------------------------------------------------------------
// Fitting entry points.
// ---------------------------------------------------------------------------

inline EmbeddingModel fit_ridge(const Matrix& x_train, const Matrix& z_train,
                                double gamma_a) {
  HyperParams hp;
  hp.gamma_a = gamma_a;
  hp.gamma_i = 0.0;
  hp.validate();
  const FitProblem problem = assemble_fit_problem(x_train, z_train, Matrix(0, x_train.cols()), hp);
  EmbeddingModel model;
  model.coefficients = solve_fit_problem(problem, hp);
  model.basis = x_train;
  model.params = hp;
  model.variant = ModelVariant::kRidge;
  return model;
}

inline EmbeddingModel fit_manifold(const Matrix& x_train, const Matrix& z_train,
                                   const Matrix& x_test, const HyperParams& hp) {
  const FitProblem problem = assemble_fit_problem(x_train, z_train, x_test, hp);
  EmbeddingModel model;
  model.coefficients = solve_fit_problem(problem, hp);
  model.basis.resize(problem.n(), x_train.cols());
  model.basis.topRows(x_train.rows()) = x_train;
  if (x_test.rows() > 0) model.basis.bottomRows(x_test.rows()) = x_test;
  model.params = hp;
  model.variant = ModelVariant::kManifold;
  return model;
}

/// Augmented fit: the stacked labeled block (target training rows plus kept
/// auxiliary rows) plays the labeled role; gamma_i = 0 degenerates to ridge
/// on the stacked block, with identical predictions.
inline EmbeddingModel fit_augmented(const AugmentedTrainSet& train, const Matrix& x_test,
                                    const HyperParams& hp) {
  hp.validate();
  EmbeddingModel model;
  if (hp.gamma_i > 0.0) {
    model = fit_manifold(train.x, train.z, x_test, hp);
    model.variant = ModelVariant::kAugmentedManifold;
  } else {
    model = fit_ridge(train.x, train.z, hp.gamma_a);
    model.params = hp;
    model.variant = ModelVariant::kAugmentedRidge;
  }
  return model;
}

// ---------------------------------------------------------------------------
// Loss and gradient of the transductive objective
//   (1/n_l) ||Z~ - A K J||_F^2 + gamma_a Tr(A K A^T)
//     + gamma_i / (n_l+n_u)^2 Tr(K^T A^T A K L)
// used for optimality checks and optional iterative solving.
// ---------------------------------------------------------------------------

inline std::pair<double, Matrix> loss_and_gradient(const FitProblem& problem,
                                                   const Matrix& coefficients,
                                                   double gamma_a, double gamma_i) {
  const Eigen::Index n = problem.n();
  if (coefficients.cols() != n || coefficients.rows() != problem.targets.rows())
    throw DataError("coefficient matrix shape mismatch");
  const double n_l = static_cast<double>(problem.n_labeled);

  const Matrix ak = coefficients * problem.kernel;
  const Matrix akj = ak * problem.labeled_mask.asDiagonal();
  const Matrix residual = akj - problem.targets;

  double loss = residual.squaredNorm() / n_l;
  loss += gamma_a * ak.cwiseProduct(coefficients).sum();

  Matrix gradient = (2.0 / n_l) * ((residual * problem.labeled_mask.asDiagonal()) * problem.kernel);
  gradient.noalias() += 2.0 * gamma_a * ak;

  if (gamma_i > 0.0) {
    if (!problem.has_laplacian())
      throw ConfigError("loss with gamma_i > 0 requires a graph Laplacian");
    const double scale = gamma_i / (static_cast<double>(n) * static_cast<double>(n));
    const Matrix akl = ak * problem.laplacian;
    loss += scale * akl.cwiseProduct(ak).sum();
    gradient.noalias() += (2.0 * scale) * (akl * problem.kernel);
  }
  return {loss, gradient};
}

// ---------------------------------------------------------------------------
// Model container format: magic "ZSLA", little-endian fields, raw float64
// payloads; round-trips bit-exactly.
// ---------------------------------------------------------------------------

inline constexpr char kModelMagic[4] = {'Z', 'S', 'L', 'A'};
inline constexpr std::uint32_t kModelVersion = 1;

inline void save_model(const EmbeddingModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out.write(kModelMagic, 4);
  detail::write_u32(out, kModelVersion);
  detail::write_u32(out, static_cast<std::uint32_t>(model.variant));
  detail::write_u64(out, static_cast<std::uint64_t>(model.embed_dim()));
  detail::write_u64(out, static_cast<std::uint64_t>(model.basis_size()));
  detail::write_u64(out, static_cast<std::uint64_t>(model.feature_dim()));
  const auto write_doubles = [&](const double* data, std::size_t count) {
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count * sizeof(double)));
  };
  const double hp[2] = {model.params.gamma_a, model.params.gamma_i};
  write_doubles(hp, 2);
  detail::write_u32(out, static_cast<std::uint32_t>(model.params.graph_k));
  detail::write_u32(out, static_cast<std::uint32_t>(model.params.self_train_k));
  write_doubles(model.coefficients.data(),
                static_cast<std::size_t>(model.coefficients.size()));
  write_doubles(model.basis.data(), static_cast<std::size_t>(model.basis.size()));
  if (!out) throw DataError("failed writing '" + path + "'");
}

inline EmbeddingModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kModelMagic, 4) != 0)
    throw DataError("'" + path + "' is not a model file (bad magic)");
  if (detail::read_u32(in) != kModelVersion)
    throw DataError("'" + path + "': unsupported model version");
  EmbeddingModel model;
  const std::uint32_t variant = detail::read_u32(in);
  if (variant > static_cast<std::uint32_t>(ModelVariant::kAugmentedManifold))
    throw DataError("'" + path + "': unknown model variant");
  model.variant = static_cast<ModelVariant>(variant);
  const auto d_z = static_cast<Eigen::Index>(detail::read_u64(in));
  const auto n = static_cast<Eigen::Index>(detail::read_u64(in));
  const auto d_x = static_cast<Eigen::Index>(detail::read_u64(in));
  const auto read_doubles = [&](double* data, std::size_t count) {
    in.read(reinterpret_cast<char*>(data),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw DataError("'" + path + "': truncated model data");
  };
  double hp[2];
  read_doubles(hp, 2);
  model.params.gamma_a = hp[0];
  model.params.gamma_i = hp[1];
  model.params.graph_k = static_cast<int>(detail::read_u32(in));
  model.params.self_train_k = static_cast<int>(detail::read_u32(in));
  model.coefficients.resize(d_z, n);
  read_doubles(model.coefficients.data(), static_cast<std::size_t>(model.coefficients.size()));
  model.basis.resize(n, d_x);
  read_doubles(model.basis.data(), static_cast<std::size_t>(model.basis.size()));
  if (!model.coefficients.allFinite())
    throw DataError("'" + path + "': model coefficients contain non-finite values");
  return model;
}

}  // namespace zsl
