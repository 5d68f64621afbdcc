#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "zsl/common.hpp"

namespace zsl {

// ---------------------------------------------------------------------------
// Class-name tokenization: split on whitespace, underscores, hyphens, and
// camelCase boundaries; everything lower-cased. Handles the naming mix seen
// in action datasets ("brush_hair", "Apply Eye Makeup", "IceSkating").
// ---------------------------------------------------------------------------

inline std::vector<std::string> tokenize_class_name(const std::string& name) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  const auto lower = [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  };
  for (std::size_t i = 0; i < name.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(name[i]);
    if (std::isspace(c) || c == '_' || c == '-') {
      flush();
      continue;
    }
    if (std::isupper(c) && !current.empty()) {
      const unsigned char prev = static_cast<unsigned char>(name[i - 1]);
      const bool after_lower = std::islower(prev) || std::isdigit(prev);
      const bool acronym_end = std::isupper(prev) && i + 1 < name.size() &&
                               std::islower(static_cast<unsigned char>(name[i + 1]));
      if (after_lower || acronym_end) flush();
    }
    current.push_back(lower(c));
  }
  flush();
  return tokens;
}

/// Canonical key for comparing class names across datasets and files.
inline std::string canonical_class_key(const std::string& name) {
  std::string key;
  for (const auto& token : tokenize_class_name(name)) {
    if (!key.empty()) key.push_back(' ');
    key += token;
  }
  return key;
}

// ---------------------------------------------------------------------------
// WordVectorStore: token -> d_z dimensional vector, immutable after load.
// ---------------------------------------------------------------------------

class WordVectorStore {
 public:
  WordVectorStore() = default;

  Eigen::Index dim() const { return dim_; }
  std::size_t token_count() const { return entries_.size(); }

  bool contains(const std::string& token) const {
    return entries_.find(token) != entries_.end();
  }

  const Vector& vector(const std::string& token) const {
    const auto it = entries_.find(token);
    if (it == entries_.end())
      throw DataError("unknown token '" + token + "'");
    return it->second;
  }

  /// Inserts a token vector; tokens are lower-cased here so lookups can
  /// assume canonical form.
  void insert(const std::string& token, Vector v) {
    std::string key;
    key.reserve(token.size());
    for (unsigned char c : token) key.push_back(static_cast<char>(std::tolower(c)));
    if (key.empty()) throw DataError("empty token");
    if (dim_ == 0) dim_ = v.size();
    if (v.size() != dim_)
      throw DataError("token '" + key + "' has dimension " +
                      std::to_string(v.size()) + ", expected " +
                      std::to_string(dim_));
    if (!entries_.emplace(key, std::move(v)).second)
      throw DataError("duplicate token '" + key + "'");
  }

  std::vector<std::string> tokens() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [token, v] : entries_) out.push_back(token);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  Eigen::Index dim_ = 0;
  std::unordered_map<std::string, Vector> entries_;
};

// Text format: optional "<count> <dim>" header, then "<token> <f_1> ... <f_d>"
// per line. Dimension is inferred from the first entry when no header is
// present.
inline WordVectorStore load_word_vectors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open word-vector file '" + path + "'");

  WordVectorStore store;
  std::string line;
  std::size_t line_no = 0;
  long declared_count = -1;
  long declared_dim = -1;
  bool first_content_line = true;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    if (first_content_line) {
      first_content_line = false;
      std::istringstream header(line);
      long a = 0, b = 0;
      if (header >> a >> b && header.eof() && a > 0 && b > 0) {
        declared_count = a;
        declared_dim = b;
        continue;
      }
    }

    std::istringstream fields(line);
    std::string token;
    fields >> token;
    if (token.empty())
      throw DataError(path + ":" + std::to_string(line_no) + ": missing token");

    std::vector<double> values;
    double x = 0.0;
    while (fields >> x) values.push_back(x);
    if (!fields.eof())
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": malformed value in vector for '" + token + "'");

    const long expected = declared_dim > 0 ? declared_dim
                          : store.dim() > 0 ? static_cast<long>(store.dim())
                                            : static_cast<long>(values.size());
    if (static_cast<long>(values.size()) != expected || values.empty())
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(expected) + " values for '" + token +
                      "', found " + std::to_string(values.size()));

    store.insert(token, Eigen::Map<const Vector>(values.data(),
                                                 static_cast<Eigen::Index>(values.size())));
  }

  if (store.token_count() == 0)
    throw DataError("word-vector file '" + path + "' contains no entries");
  if (declared_count >= 0 &&
      static_cast<long>(store.token_count()) != declared_count)
    warn("word-vector file '" + path + "' declares " +
         std::to_string(declared_count) + " tokens but contains " +
         std::to_string(store.token_count()));
  return store;
}

// ---------------------------------------------------------------------------
// Class prototypes: averaged constituent-token vectors, unit-normalized.
// ---------------------------------------------------------------------------

struct ClassEmbedding {
  std::string class_name;
  Vector vector;
  bool normalized = false;
  std::vector<std::string> missing_tokens;
};

inline ClassEmbedding compose_class_vector(const WordVectorStore& store,
                                           const std::string& class_name) {
  if (class_name.empty()) throw DataError("empty class name");
  const std::vector<std::string> tokens = tokenize_class_name(class_name);
  if (tokens.empty())
    throw DataError("class name '" + class_name + "' yields no tokens");

  ClassEmbedding result;
  result.class_name = class_name;
  Vector sum = Vector::Zero(store.dim());
  int found = 0;
  for (const auto& token : tokens) {
    if (store.contains(token)) {
      sum += store.vector(token);
      ++found;
    } else {
      result.missing_tokens.push_back(token);
    }
  }
  if (found == 0) {
    std::string missing;
    for (const auto& t : result.missing_tokens) missing += " '" + t + "'";
    throw DataError("no token of class '" + class_name +
                    "' found in the vector store:" + missing);
  }
  if (!result.missing_tokens.empty()) {
    std::string skipped;
    for (const auto& t : result.missing_tokens) skipped += " '" + t + "'";
    warn("class '" + class_name + "': skipped unknown tokens" + skipped);
  }

  result.vector = sum / static_cast<double>(found);
  const double norm = result.vector.norm();
  if (norm <= 0.0)
    throw DataError("class '" + class_name + "' has a degenerate (zero) embedding");
  result.vector /= norm;
  result.normalized = true;
  return result;
}

// ---------------------------------------------------------------------------
// Attribute table: CSV with header "class,a_1,...,a_m", one row per class.
// Rows are keyed by the canonical class key so naming conventions match.
// ---------------------------------------------------------------------------

class AttributeTable {
 public:
  static AttributeTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open attribute file '" + path + "'");
    AttributeTable table;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line))
      throw DataError("attribute file '" + path + "' is empty");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    {
      std::istringstream header(line);
      std::string field;
      if (!std::getline(header, field, ',') || field != "class")
        throw DataError(path + ":1: attribute header must start with 'class'");
      while (std::getline(header, field, ',')) ++table.dim_;
      if (table.dim_ == 0)
        throw DataError(path + ":1: attribute header declares no attributes");
    }
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::istringstream fields(line);
      std::string name;
      if (!std::getline(fields, name, ','))
        throw DataError(path + ":" + std::to_string(line_no) + ": missing class name");
      Vector v(table.dim_);
      std::string cell;
      Eigen::Index i = 0;
      while (std::getline(fields, cell, ',')) {
        if (i >= table.dim_)
          throw DataError(path + ":" + std::to_string(line_no) +
                          ": too many attribute values for '" + name + "'");
        try {
          std::size_t used = 0;
          v[i] = std::stod(cell, &used);
          if (used != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
          throw DataError(path + ":" + std::to_string(line_no) +
                          ": malformed attribute value '" + cell + "'");
        }
        ++i;
      }
      if (i != table.dim_)
        throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(table.dim_) + " attribute values for '" +
                        name + "', found " + std::to_string(i));
      const std::string key = canonical_class_key(name);
      if (!table.rows_.emplace(key, std::move(v)).second)
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": duplicate class '" + name + "'");
    }
    if (table.rows_.empty())
      throw DataError("attribute file '" + path + "' contains no rows");
    return table;
  }

  Eigen::Index dim() const { return dim_; }

  bool contains(const std::string& class_name) const {
    return rows_.find(canonical_class_key(class_name)) != rows_.end();
  }

  const Vector& vector(const std::string& class_name) const {
    const auto it = rows_.find(canonical_class_key(class_name));
    if (it == rows_.end())
      throw DataError("class '" + class_name + "' missing from attribute file");
    return it->second;
  }

 private:
  Eigen::Index dim_ = 0;
  std::unordered_map<std::string, Vector> rows_;
};

// ---------------------------------------------------------------------------
// EmbeddingSource: the class-name embedding g(.) used to build regression
// targets and matching prototypes. Word vectors, per-class attribute rows,
// or their concatenation (each block unit-normalized before stacking).
// ---------------------------------------------------------------------------

enum class EmbeddingMode { kWordVector, kAttributeFile, kConcatenated };

class EmbeddingSource {
 public:
  explicit EmbeddingSource(const WordVectorStore* store)
      : mode_(EmbeddingMode::kWordVector), store_(store) {
    if (!store_) throw ConfigError("word-vector mode requires a vector store");
  }

  explicit EmbeddingSource(const AttributeTable* attributes)
      : mode_(EmbeddingMode::kAttributeFile), attributes_(attributes) {
    if (!attributes_) throw ConfigError("attribute mode requires an attribute table");
  }

  EmbeddingSource(const WordVectorStore* store, const AttributeTable* attributes)
      : mode_(EmbeddingMode::kConcatenated), store_(store), attributes_(attributes) {
    if (!store_ || !attributes_)
      throw ConfigError("concatenated mode requires both a vector store and an attribute table");
  }

  EmbeddingMode mode() const { return mode_; }

  Eigen::Index dim() const {
    switch (mode_) {
      case EmbeddingMode::kWordVector:
        return store_->dim();
      case EmbeddingMode::kAttributeFile:
        return attributes_->dim();
      case EmbeddingMode::kConcatenated:
        return store_->dim() + attributes_->dim();
    }
    return 0;
  }

  /// Unit-norm embedding of one class name.
  Vector embed(const std::string& class_name) const {
    switch (mode_) {
      case EmbeddingMode::kWordVector:
        return compose_class_vector(*store_, class_name).vector;
      case EmbeddingMode::kAttributeFile: {
        Vector v = attributes_->vector(class_name);
        const double norm = v.norm();
        if (norm <= 0.0)
          throw DataError("class '" + class_name + "' has an all-zero attribute row");
        return v / norm;
      }
      case EmbeddingMode::kConcatenated: {
        const Vector word = compose_class_vector(*store_, class_name).vector;
        Vector attr = attributes_->vector(class_name);
        const double attr_norm = attr.norm();
        if (attr_norm <= 0.0)
          throw DataError("class '" + class_name + "' has an all-zero attribute row");
        attr /= attr_norm;
        Vector stacked(word.size() + attr.size());
        stacked << word, attr;
        stacked /= stacked.norm();
        return stacked;
      }
    }
    throw ConfigError("invalid embedding mode");
  }

 private:
  EmbeddingMode mode_;
  const WordVectorStore* store_ = nullptr;
  const AttributeTable* attributes_ = nullptr;
};

/// Column i is the unit-norm embedding of class_names[i].
inline Matrix build_class_matrix(const EmbeddingSource& source,
                                 const std::vector<std::string>& class_names) {
  if (class_names.empty()) throw DataError("no class names given");
  Matrix z(source.dim(), static_cast<Eigen::Index>(class_names.size()));
  for (std::size_t i = 0; i < class_names.size(); ++i)
    z.col(static_cast<Eigen::Index>(i)) = source.embed(class_names[i]);
  return z;
}

}  // namespace zsl
