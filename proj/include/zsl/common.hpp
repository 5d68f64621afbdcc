#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace zsl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;

// ---------------------------------------------------------------------------
// Errors. The CLI maps these onto exit codes: config 2, data 3, numeric 4.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, parameters, or command-line usage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed, inconsistent, or missing input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure (singular or hopelessly ill-conditioned system).
class NumericError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Warnings. Non-fatal conditions are reported through a process-wide handler
// so tests and the CLI can capture or silence them.
// ---------------------------------------------------------------------------

using WarningHandler = std::function<void(const std::string&)>;

inline WarningHandler& warning_handler() {
  static WarningHandler handler = [](const std::string& msg) {
    std::cerr << "[zsl] warning: " << msg << '\n';
  };
  return handler;
}

inline void set_warning_handler(WarningHandler handler) {
  warning_handler() = std::move(handler);
}

inline void warn(const std::string& msg) {
  if (warning_handler()) warning_handler()(msg);
}

// ---------------------------------------------------------------------------
// Deterministic randomness. Distributions are implemented explicitly (the
// standard library leaves them implementation-defined) so that identical
// seeds give identical streams everywhere.
// ---------------------------------------------------------------------------

/// Stream seed for sub-task `stream` of a run seeded with `base`.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  return base ^ (stream * 0x9e3779b97f4a7c15ULL);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Unbiased integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw ConfigError("Rng::below requires a positive bound");
    const std::uint64_t threshold = (-bound) % bound;
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= threshold) return r % bound;
    }
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  Vector gaussian_vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = gaussian();
    return v;
  }

  Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = gaussian();
    return m;
  }

  /// Uniform direction on the unit sphere in n dimensions.
  Vector unit_vector(Eigen::Index n) {
    for (;;) {
      Vector v = gaussian_vector(n);
      const double norm = v.norm();
      if (norm > 1e-12) return v / norm;
    }
  }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Parallel loop over independent index-addressed work items. Each index is
// processed exactly once; outputs must go to index-distinct slots so the
// result is identical for any worker count. The lowest-index exception is
// rethrown after all workers join.
// ---------------------------------------------------------------------------

template <typename Fn>
void parallel_for(int count, int workers, Fn&& fn) {
  if (count <= 0) return;
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::pair<int, std::exception_ptr>> failures(
      static_cast<std::size_t>(workers), {count, nullptr});
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          if (i < failures[static_cast<std::size_t>(w)].first)
            failures[static_cast<std::size_t>(w)] = {i, std::current_exception()};
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  std::exception_ptr first;
  int first_index = count;
  for (const auto& [index, error] : failures) {
    if (error && index < first_index) {
      first_index = index;
      first = error;
    }
  }
  if (first) std::rethrow_exception(first);
}

inline int default_worker_count() {
  if (const char* env = std::getenv("ZSL_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// ---------------------------------------------------------------------------
// Small vector helpers shared across modules.
// ---------------------------------------------------------------------------

/// Normalizes each column to unit length. Zero columns are left untouched
/// and reported through warn().
inline void normalize_columns(Matrix& m, const char* what = "column") {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double norm = m.col(j).norm();
    if (norm > 0.0) {
      m.col(j) /= norm;
    } else {
      warn(std::string("zero-norm ") + what + " " + std::to_string(j) +
           " left unnormalized");
    }
  }
}

inline double sample_mean(const std::vector<double>& xs) {
  if (xs.empty()) throw DataError("mean of an empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Sample standard deviation (n-1 denominator); 0 for fewer than two values.
inline double sample_stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = sample_mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace zsl
