#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "zsl/common.hpp"
#include "zsl/wordvec.hpp"

namespace zsl {

// ---------------------------------------------------------------------------
// Dataset: feature matrix (row per instance), integer labels, class names in
// first-occurrence order. Immutable after load.
// ---------------------------------------------------------------------------

struct Dataset {
  std::string name;
  Matrix x;                              // N x d_x
  IntVector y;                           // N labels in [0, C)
  std::vector<std::string> class_names;  // C entries

  Eigen::Index n() const { return x.rows(); }
  Eigen::Index feature_dim() const { return x.cols(); }
  int class_count() const { return static_cast<int>(class_names.size()); }

  std::vector<int> instances_of(int class_id) const {
    std::vector<int> rows;
    for (Eigen::Index i = 0; i < y.size(); ++i)
      if (y[i] == class_id) rows.push_back(static_cast<int>(i));
    return rows;
  }
};

inline void validate_dataset(const Dataset& ds) {
  if (ds.n() == 0) throw DataError("dataset '" + ds.name + "' has no instances");
  if (ds.y.size() != ds.n())
    throw DataError("dataset '" + ds.name + "': label count " +
                    std::to_string(ds.y.size()) + " != row count " +
                    std::to_string(ds.n()));
  if (!ds.x.allFinite())
    throw DataError("dataset '" + ds.name + "' contains NaN or Inf features");
  std::vector<int> seen(ds.class_names.size(), 0);
  for (Eigen::Index i = 0; i < ds.y.size(); ++i) {
    const int label = ds.y[i];
    if (label < 0 || label >= ds.class_count())
      throw DataError("dataset '" + ds.name + "': label " + std::to_string(label) +
                      " out of range");
    ++seen[static_cast<std::size_t>(label)];
  }
  for (std::size_t c = 0; c < seen.size(); ++c)
    if (seen[c] == 0)
      throw DataError("dataset '" + ds.name + "': class '" + ds.class_names[c] +
                      "' has no instances");
}

// ---------------------------------------------------------------------------
// Feature files. Binary: magic "ZSLF", u32 LE version=1, u64 LE N, u64 LE d,
// then N*d little-endian float32, row-major. CSV: header "id,f0,...,f{d-1}".
// Labels: one class name per line, aligned with feature rows.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("unexpected end of binary feature file");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw DataError("unexpected end of binary feature file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline float to_le_float(float v) {
  static_assert(sizeof(float) == 4);
  return v;  // little-endian host assumed; asserted at load via the magic check
}

}  // namespace detail

inline constexpr char kFeatureMagic[4] = {'Z', 'S', 'L', 'F'};
inline constexpr std::uint32_t kFeatureVersion = 1;

inline void write_features_binary(const std::string& path, const Matrix& x) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out.write(kFeatureMagic, 4);
  detail::write_u32(out, kFeatureVersion);
  detail::write_u64(out, static_cast<std::uint64_t>(x.rows()));
  detail::write_u64(out, static_cast<std::uint64_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const float v = detail::to_le_float(static_cast<float>(x(i, j)));
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  if (!out) throw DataError("failed writing '" + path + "'");
}

inline Matrix read_features_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFeatureMagic, 4) != 0)
    throw DataError("'" + path + "' is not a binary feature file (bad magic)");
  const std::uint32_t version = detail::read_u32(in);
  if (version != kFeatureVersion)
    throw DataError("'" + path + "': unsupported feature file version " +
                    std::to_string(version));
  const std::uint64_t rows = detail::read_u64(in);
  const std::uint64_t cols = detail::read_u64(in);
  if (rows == 0 || cols == 0)
    throw DataError("'" + path + "': empty feature matrix");
  Matrix x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::uint64_t i = 0; i < rows; ++i) {
    for (std::uint64_t j = 0; j < cols; ++j) {
      float v = 0.0f;
      in.read(reinterpret_cast<char*>(&v), sizeof v);
      if (!in) throw DataError("'" + path + "': truncated feature data");
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  }
  return x;
}

inline void write_features_csv(const std::string& path, const Matrix& x) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "id";
  for (Eigen::Index j = 0; j < x.cols(); ++j) out << ",f" << j;
  out << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out << i;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", x(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing '" + path + "'");
}

inline Matrix read_features_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature file '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw DataError("'" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  Eigen::Index cols = 0;
  {
    std::istringstream header(line);
    std::string field;
    if (!std::getline(header, field, ',') || field != "id")
      throw DataError("'" + path + "': feature CSV header must start with 'id'");
    while (std::getline(header, field, ',')) ++cols;
    if (cols == 0) throw DataError("'" + path + "': no feature columns");
  }
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    if (!std::getline(fields, cell, ','))
      throw DataError(path + ":" + std::to_string(line_no) + ": missing id");
    Eigen::Index j = 0;
    while (std::getline(fields, cell, ',')) {
      if (j >= cols)
        throw DataError(path + ":" + std::to_string(line_no) + ": too many values");
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": malformed value '" + cell + "'");
      }
      ++j;
    }
    if (j != cols)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(cols) + " values, found " + std::to_string(j));
    ++rows;
  }
  if (rows == 0) throw DataError("'" + path + "' has no feature rows");
  Matrix x(static_cast<Eigen::Index>(rows), cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      x(static_cast<Eigen::Index>(i), j) = values[i * static_cast<std::size_t>(cols) +
                                                  static_cast<std::size_t>(j)];
  return x;
}

inline void write_labels(const std::string& path,
                         const std::vector<std::string>& row_labels) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  for (const auto& label : row_labels) out << label << '\n';
  if (!out) throw DataError("failed writing '" + path + "'");
}

inline std::vector<std::string> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label file '" + path + "'");
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    labels.push_back(line);
  }
  while (!labels.empty() && labels.back().empty()) labels.pop_back();
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i].empty())
      throw DataError(path + ":" + std::to_string(i + 1) + ": empty label");
  if (labels.empty()) throw DataError("label file '" + path + "' is empty");
  return labels;
}

/// Loads features (binary or CSV, detected from the magic bytes) plus the
/// aligned label file. Per-row L2 normalization is on by default.
inline Dataset load_dataset(const std::string& feature_path,
                            const std::string& label_path,
                            const std::string& name = "",
                            bool normalize_rows = true) {
  bool binary = false;
  {
    std::ifstream probe(feature_path, std::ios::binary);
    if (!probe) throw DataError("cannot open feature file '" + feature_path + "'");
    char magic[4] = {0, 0, 0, 0};
    probe.read(magic, 4);
    binary = probe && std::memcmp(magic, kFeatureMagic, 4) == 0;
  }
  Dataset ds;
  ds.name = name.empty() ? feature_path : name;
  ds.x = binary ? read_features_binary(feature_path) : read_features_csv(feature_path);

  const std::vector<std::string> row_labels = read_labels(label_path);
  if (static_cast<Eigen::Index>(row_labels.size()) != ds.x.rows())
    throw DataError("'" + label_path + "': " + std::to_string(row_labels.size()) +
                    " labels for " + std::to_string(ds.x.rows()) + " feature rows");

  std::unordered_map<std::string, int> ids;
  ds.y.resize(ds.x.rows());
  for (std::size_t i = 0; i < row_labels.size(); ++i) {
    auto [it, inserted] = ids.emplace(row_labels[i], static_cast<int>(ds.class_names.size()));
    if (inserted) ds.class_names.push_back(row_labels[i]);
    ds.y[static_cast<Eigen::Index>(i)] = it->second;
  }

  if (!ds.x.allFinite())
    throw DataError("'" + feature_path + "' contains NaN or Inf features");
  if (normalize_rows) {
    for (Eigen::Index i = 0; i < ds.x.rows(); ++i) {
      const double norm = ds.x.row(i).norm();
      if (norm > 0.0)
        ds.x.row(i) /= norm;
      else
        warn("feature row " + std::to_string(i) + " has zero norm, left as-is");
    }
  }
  validate_dataset(ds);
  return ds;
}

// ---------------------------------------------------------------------------
// Zero-shot splits: disjoint train/test class sets with |test| = floor(C/2).
// Split s draws from sub-seed seed^s. When at least 20 splits are requested,
// coverage is verified (every class appears in some test set) and offending
// splits are deterministically resampled.
// ---------------------------------------------------------------------------

struct ZeroShotSplit {
  int split_id = 0;
  std::vector<int> train_classes;  // sorted ascending
  std::vector<int> test_classes;   // sorted ascending
  std::uint64_t seed = 0;
};

namespace detail {

inline ZeroShotSplit draw_split(int class_count, int split_id, std::uint64_t sub_seed) {
  std::vector<int> ids(static_cast<std::size_t>(class_count));
  for (int c = 0; c < class_count; ++c) ids[static_cast<std::size_t>(c)] = c;
  Rng rng(sub_seed);
  rng.shuffle(ids);
  const int n_test = class_count / 2;
  ZeroShotSplit split;
  split.split_id = split_id;
  split.seed = sub_seed;
  split.test_classes.assign(ids.begin(), ids.begin() + n_test);
  split.train_classes.assign(ids.begin() + n_test, ids.end());
  std::sort(split.test_classes.begin(), split.test_classes.end());
  std::sort(split.train_classes.begin(), split.train_classes.end());
  return split;
}

}  // namespace detail

inline std::vector<ZeroShotSplit> generate_splits(int class_count, int n_splits,
                                                  std::uint64_t seed) {
  if (class_count < 2) throw ConfigError("need at least 2 classes to split");
  if (n_splits < 1) throw ConfigError("need at least 1 split");

  std::vector<ZeroShotSplit> splits;
  splits.reserve(static_cast<std::size_t>(n_splits));
  for (int s = 0; s < n_splits; ++s)
    splits.push_back(detail::draw_split(class_count, s,
                                        seed ^ static_cast<std::uint64_t>(s)));

  if (n_splits >= 20) {
    // Coverage repair: every class must be evaluated as a testing class at
    // least once across the splits.
    for (std::uint64_t attempt = 1; attempt <= 10000; ++attempt) {
      std::vector<int> test_hits(static_cast<std::size_t>(class_count), 0);
      for (const auto& split : splits)
        for (int c : split.test_classes) ++test_hits[static_cast<std::size_t>(c)];
      bool covered = true;
      for (int hits : test_hits) covered = covered && hits > 0;
      if (covered) break;
      const int victim = static_cast<int>((attempt - 1) % static_cast<std::uint64_t>(n_splits));
      splits[static_cast<std::size_t>(victim)] = detail::draw_split(
          class_count, victim,
          mix_seed(seed ^ static_cast<std::uint64_t>(victim), attempt));
      if (attempt == 10000)
        throw NumericError("split coverage repair did not converge");
    }
  }
  return splits;
}

// ---------------------------------------------------------------------------
// Cross-dataset augmentation: stack target training rows with auxiliary rows
// whose class names do not exactly match (canonically) any target test class.
// ---------------------------------------------------------------------------

using ClassEmbedder = std::function<Vector(const std::string&)>;

struct AugmentedTrainSet {
  Matrix x;                             // (n_target + n_aux) x d_x
  Matrix z;                             // d_z x (n_target + n_aux)
  std::vector<std::string> provenance;  // per-row source dataset name
  Eigen::Index n_target = 0;
  Eigen::Index n_aux = 0;
  std::vector<std::string> dropped_aux_classes;
};

inline AugmentedTrainSet build_augmented(const Dataset& target,
                                         const ZeroShotSplit& split,
                                         const std::vector<Dataset>& aux,
                                         const ClassEmbedder& embed) {
  std::unordered_set<std::string> excluded_keys;
  for (int c : split.test_classes)
    excluded_keys.insert(canonical_class_key(target.class_names[static_cast<std::size_t>(c)]));

  struct Block {
    const Dataset* source;
    std::vector<int> rows;
    std::vector<int> labels;
  };
  std::vector<Block> blocks;

  Block target_block{&target, {}, {}};
  {
    std::unordered_set<int> train_set(split.train_classes.begin(), split.train_classes.end());
    for (Eigen::Index i = 0; i < target.n(); ++i) {
      if (train_set.count(target.y[i])) {
        target_block.rows.push_back(static_cast<int>(i));
        target_block.labels.push_back(target.y[i]);
      }
    }
  }
  blocks.push_back(std::move(target_block));

  AugmentedTrainSet out;
  for (const auto& ds : aux) {
    if (ds.feature_dim() != target.feature_dim())
      throw DataError("auxiliary dataset '" + ds.name + "' feature dimension " +
                      std::to_string(ds.feature_dim()) + " != target " +
                      std::to_string(target.feature_dim()));
    Block block{&ds, {}, {}};
    std::vector<char> keep(ds.class_names.size(), 1);
    for (std::size_t c = 0; c < ds.class_names.size(); ++c) {
      if (excluded_keys.count(canonical_class_key(ds.class_names[c]))) {
        keep[c] = 0;
        out.dropped_aux_classes.push_back(ds.name + ":" + ds.class_names[c]);
        warn("augmentation: dropping auxiliary class '" + ds.class_names[c] +
             "' (" + ds.name + "), exact match with a target test class");
      }
    }
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
      if (keep[static_cast<std::size_t>(ds.y[i])]) {
        block.rows.push_back(static_cast<int>(i));
        block.labels.push_back(ds.y[i]);
      }
    }
    blocks.push_back(std::move(block));
  }

  Eigen::Index total = 0;
  for (const auto& block : blocks) total += static_cast<Eigen::Index>(block.rows.size());
  if (total == 0) throw DataError("augmented training set is empty");

  // Embed each distinct class name once per source.
  const Eigen::Index d_z = embed(target.class_names.at(0)).size();
  out.x.resize(total, target.feature_dim());
  out.z.resize(d_z, total);
  out.provenance.reserve(static_cast<std::size_t>(total));

  Eigen::Index row = 0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const Block& block = blocks[b];
    std::unordered_map<int, Vector> cache;
    for (std::size_t k = 0; k < block.rows.size(); ++k) {
      const int label = block.labels[k];
      auto it = cache.find(label);
      if (it == cache.end()) {
        Vector v = embed(block.source->class_names[static_cast<std::size_t>(label)]);
        if (v.size() != d_z)
          throw DataError("embedding dimension mismatch for class '" +
                          block.source->class_names[static_cast<std::size_t>(label)] + "'");
        it = cache.emplace(label, std::move(v)).first;
      }
      out.x.row(row) = block.source->x.row(block.rows[k]);
      out.z.col(row) = it->second;
      out.provenance.push_back(block.source->name);
      ++row;
    }
    if (b == 0) out.n_target = row;
  }
  out.n_aux = total - out.n_target;
  return out;
}

// ---------------------------------------------------------------------------
// Per-class test subsampling (imbalanced test-set protocol).
// ---------------------------------------------------------------------------

/// Returns the sorted dataset row indices that survive per-class subsampling
/// of the split's test instances. Classes absent from `percent_by_class`
/// keep 100% of their instances.
inline std::vector<int> subsample_test(const Dataset& ds, const ZeroShotSplit& split,
                                       const std::map<int, double>& percent_by_class,
                                       std::uint64_t seed) {
  for (const auto& [class_id, percent] : percent_by_class) {
    if (percent <= 0.0 || percent > 100.0)
      throw ConfigError("subsample percentage for class " + std::to_string(class_id) +
                        " must lie in (0, 100]");
  }
  std::vector<int> kept;
  for (int c : split.test_classes) {
    std::vector<int> rows = ds.instances_of(c);
    const auto it = percent_by_class.find(c);
    if (it == percent_by_class.end() || it->second >= 100.0) {
      kept.insert(kept.end(), rows.begin(), rows.end());
      continue;
    }
    std::size_t want = static_cast<std::size_t>(
        std::llround(static_cast<double>(rows.size()) * it->second / 100.0));
    if (want == 0) {
      warn("subsample of class " + std::to_string(c) + " rounds to 0 instances; keeping 1");
      want = 1;
    }
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(c) + 1));
    rng.shuffle(rows);
    rows.resize(std::min(want, rows.size()));
    kept.insert(kept.end(), rows.begin(), rows.end());
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

// ---------------------------------------------------------------------------
// Synthetic data with a planted linear visual-to-semantic map. Class vectors
// are drawn on the unit sphere, the map has orthonormal columns so class
// means stay unit-norm, and test classes can receive a fixed-norm offset to
// model domain shift.
// ---------------------------------------------------------------------------

struct SyntheticSpec {
  int c_train = 6;
  int c_test = 4;
  int per_class = 30;
  int d_x = 20;
  int d_z = 5;
  double noise_sigma = 0.0;
  double shift_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (c_train < 1 || c_test < 1 || per_class < 1 || d_x < 1 || d_z < 1)
      throw ConfigError("synthetic spec counts must be positive");
    if (d_x < d_z) throw ConfigError("synthetic spec requires d_x >= d_z");
    if (noise_sigma < 0.0 || shift_sigma < 0.0)
      throw ConfigError("synthetic spec sigmas must be non-negative");
  }
};

struct SyntheticData {
  Dataset dataset;
  Matrix class_vectors;  // d_z x C, unit columns; train classes first
  Matrix map;            // d_x x d_z, orthonormal columns
};

inline std::string synthetic_class_name(int class_id, int class_count) {
  int width = 1;
  for (int v = class_count - 1; v >= 10; v /= 10) ++width;
  std::string digits = std::to_string(class_id);
  while (static_cast<int>(digits.size()) < width) digits.insert(digits.begin(), '0');
  return "syn" + digits;
}

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const int c_total = spec.c_train + spec.c_test;
  Rng rng(spec.seed);

  // Orthonormal map via QR of a Gaussian matrix, signs fixed for canonical form.
  Matrix gaussian = rng.gaussian_matrix(spec.d_x, spec.d_z);
  Eigen::HouseholderQR<Matrix> qr(gaussian);
  Matrix basis = qr.householderQ() * Matrix::Identity(spec.d_x, spec.d_z);
  const Matrix r = qr.matrixQR().topRows(spec.d_z).triangularView<Eigen::Upper>();
  for (int j = 0; j < spec.d_z; ++j)
    if (r(j, j) < 0.0) basis.col(j) = -basis.col(j);

  Matrix class_vectors(spec.d_z, c_total);
  for (int c = 0; c < c_total; ++c) class_vectors.col(c) = rng.unit_vector(spec.d_z);

  SyntheticData out;
  out.map = basis;
  out.class_vectors = class_vectors;

  Dataset& ds = out.dataset;
  ds.name = "synthetic";
  const Eigen::Index n = static_cast<Eigen::Index>(c_total) * spec.per_class;
  ds.x.resize(n, spec.d_x);
  ds.y.resize(n);
  for (int c = 0; c < c_total; ++c)
    ds.class_names.push_back(synthetic_class_name(c, c_total));

  Eigen::Index row = 0;
  for (int c = 0; c < c_total; ++c) {
    const Vector mean = basis * class_vectors.col(c);
    Vector offset = Vector::Zero(spec.d_x);
    if (c >= spec.c_train && spec.shift_sigma > 0.0)
      offset = spec.shift_sigma * rng.unit_vector(spec.d_x);
    for (int k = 0; k < spec.per_class; ++k, ++row) {
      Vector sample = mean + offset;
      if (spec.noise_sigma > 0.0)
        sample += spec.noise_sigma * rng.gaussian_vector(spec.d_x);
      const double norm = sample.norm();
      if (norm > 0.0) sample /= norm;
      ds.x.row(row) = sample.transpose();
      ds.y[row] = c;
    }
  }
  validate_dataset(ds);
  return out;
}

}  // namespace zsl
