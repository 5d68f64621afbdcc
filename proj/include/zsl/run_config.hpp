#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "zsl/analysis.hpp"
#include "zsl/common.hpp"
#include "zsl/evaluation.hpp"

namespace zsl {

// ---------------------------------------------------------------------------
// Declarative run configuration: a flat, typed key = value format grouped in
// sections. All defaults match the reference hyperparameters, so a minimal
// config (data paths plus word vectors) reproduces the headline pipeline.
// Unknown keys are rejected.
// ---------------------------------------------------------------------------

struct RunConfig {
  // [data]
  std::string features;
  std::string labels;
  std::string dataset_name = "dataset";
  bool normalize = true;
  // [embedding]
  std::string word_vectors;
  std::string attributes;
  std::string embedding_mode = "word-vector";  // attribute-file | concatenated
  // [aux]
  std::vector<std::string> aux_features;
  std::vector<std::string> aux_labels;
  std::vector<std::string> aux_names;
  // [experiment]
  std::string variant = "ridge";  // ridge | manifold
  std::string matcher = "nn";     // nn | nrm | gc
  std::string metric = "accuracy";  // accuracy | map | auc
  bool self_train = false;
  bool self_train_renormalize = true;
  bool augment = false;
  bool retain_predictions = false;
  int splits = 50;
  int workers = 0;  // 0: ZSL_THREADS env or hardware concurrency
  int distractors_per_class = 0;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, double>> subsample;  // class name -> P
  int subsample_first_count = 0;
  double subsample_first_percent = 100.0;
  // [params]
  double gamma_a = 1e-6;
  double gamma_i = 40.0;
  int graph_k = 5;
  int self_train_k = 100;
  // [output]
  std::string out_dir = "zsl_out";
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::string unquote(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
    return s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::istringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    part = trim(part);
    if (!part.empty()) parts.push_back(unquote(part));
  }
  return parts;
}

inline bool parse_bool(const std::string& value, const std::string& where) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw ConfigError(where + ": expected true or false, got '" + value + "'");
}

inline double parse_double(const std::string& value, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(where + ": malformed number '" + value + "'");
  }
}

inline long long parse_int(const std::string& value, const std::string& where) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(where + ": malformed integer '" + value + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& value, const std::string& where) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(where + ": malformed unsigned integer '" + value + "'");
  }
}

/// Shortest decimal form that parses back to exactly the same double.
inline std::string format_double(double v) {
  char buf[64];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::stod(buf) == v) break;
  }
  return buf;
}

}  // namespace detail

inline RunConfig parse_run_config(std::istream& in, const std::string& origin) {
  RunConfig cfg;
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section != "data" && section != "embedding" && section != "aux" &&
          section != "experiment" && section != "params" && section != "output")
        throw ConfigError(where + ": unknown section [" + section + "]");
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::unquote(detail::trim(line.substr(eq + 1)));
    const std::string qualified = section + "." + key;

    if (qualified == "data.features") cfg.features = value;
    else if (qualified == "data.labels") cfg.labels = value;
    else if (qualified == "data.name") cfg.dataset_name = value;
    else if (qualified == "data.normalize") cfg.normalize = detail::parse_bool(value, where);
    else if (qualified == "embedding.word_vectors") cfg.word_vectors = value;
    else if (qualified == "embedding.attributes") cfg.attributes = value;
    else if (qualified == "embedding.mode") cfg.embedding_mode = value;
    else if (qualified == "aux.features") cfg.aux_features = detail::split_list(value);
    else if (qualified == "aux.labels") cfg.aux_labels = detail::split_list(value);
    else if (qualified == "aux.names") cfg.aux_names = detail::split_list(value);
    else if (qualified == "experiment.variant") cfg.variant = value;
    else if (qualified == "experiment.matcher") cfg.matcher = value;
    else if (qualified == "experiment.metric") cfg.metric = value;
    else if (qualified == "experiment.self_train") cfg.self_train = detail::parse_bool(value, where);
    else if (qualified == "experiment.self_train_renormalize")
      cfg.self_train_renormalize = detail::parse_bool(value, where);
    else if (qualified == "experiment.augment") cfg.augment = detail::parse_bool(value, where);
    else if (qualified == "experiment.retain_predictions")
      cfg.retain_predictions = detail::parse_bool(value, where);
    else if (qualified == "experiment.splits")
      cfg.splits = static_cast<int>(detail::parse_int(value, where));
    else if (qualified == "experiment.workers")
      cfg.workers = static_cast<int>(detail::parse_int(value, where));
    else if (qualified == "experiment.distractors_per_class")
      cfg.distractors_per_class = static_cast<int>(detail::parse_int(value, where));
    else if (qualified == "experiment.seed") cfg.seed = detail::parse_u64(value, where);
    else if (qualified == "experiment.subsample") {
      cfg.subsample.clear();
      for (const auto& entry : detail::split_list(value)) {
        const std::size_t at = entry.rfind('=');
        if (at == std::string::npos)
          throw ConfigError(where + ": subsample entries must look like name=P");
        cfg.subsample.emplace_back(detail::trim(entry.substr(0, at)),
                                   detail::parse_double(detail::trim(entry.substr(at + 1)), where));
      }
    } else if (qualified == "experiment.subsample_first") {
      const std::size_t colon = value.find(':');
      if (colon == std::string::npos)
        throw ConfigError(where + ": subsample_first must look like K:P");
      cfg.subsample_first_count =
          static_cast<int>(detail::parse_int(detail::trim(value.substr(0, colon)), where));
      cfg.subsample_first_percent =
          detail::parse_double(detail::trim(value.substr(colon + 1)), where);
    } else if (qualified == "params.gamma_a") cfg.gamma_a = detail::parse_double(value, where);
    else if (qualified == "params.gamma_i") cfg.gamma_i = detail::parse_double(value, where);
    else if (qualified == "params.graph_k")
      cfg.graph_k = static_cast<int>(detail::parse_int(value, where));
    else if (qualified == "params.self_train_k")
      cfg.self_train_k = static_cast<int>(detail::parse_int(value, where));
    else if (qualified == "output.dir") cfg.out_dir = value;
    else throw ConfigError(where + ": unknown key '" + key + "' in section [" + section + "]");
  }
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_run_config(in, path);
}

inline void validate_run_config(const RunConfig& cfg) {
  if (cfg.variant != "ridge" && cfg.variant != "manifold")
    throw ConfigError("variant must be ridge or manifold, got '" + cfg.variant + "'");
  if (cfg.matcher != "nn" && cfg.matcher != "nrm" && cfg.matcher != "gc")
    throw ConfigError("matcher must be nn, nrm, or gc, got '" + cfg.matcher + "'");
  if (cfg.metric != "accuracy" && cfg.metric != "map" && cfg.metric != "auc")
    throw ConfigError("metric must be accuracy, map, or auc, got '" + cfg.metric + "'");
  if (cfg.embedding_mode != "word-vector" && cfg.embedding_mode != "attribute-file" &&
      cfg.embedding_mode != "concatenated")
    throw ConfigError("embedding mode must be word-vector, attribute-file, or concatenated");
  if (cfg.embedding_mode != "attribute-file" && cfg.word_vectors.empty())
    throw ConfigError("embedding mode '" + cfg.embedding_mode + "' requires word_vectors");
  if (cfg.embedding_mode != "word-vector" && cfg.attributes.empty())
    throw ConfigError("embedding mode '" + cfg.embedding_mode + "' requires attributes");
  if (cfg.aux_features.size() != cfg.aux_labels.size())
    throw ConfigError("aux.features and aux.labels must have matching lengths");
  if (!cfg.aux_names.empty() && cfg.aux_names.size() != cfg.aux_features.size())
    throw ConfigError("aux.names must match aux.features in length");
  if (cfg.augment && cfg.aux_features.empty())
    warn("augment = true with no auxiliary datasets; augmentation is a no-op");
  HyperParams hp{cfg.gamma_a, cfg.gamma_i, cfg.graph_k, cfg.self_train_k};
  hp.validate();
  if (cfg.splits < 1) throw ConfigError("splits must be at least 1");
  if (cfg.workers < 0) throw ConfigError("workers must be non-negative");
}

/// Canonical echo of a config; parsing it back reproduces the run.
inline std::string render_run_config(const RunConfig& cfg) {
  std::ostringstream out;
  const auto join = [](const std::vector<std::string>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i) s += ", ";
      s += xs[i];
    }
    return s;
  };
  out << "[data]\n";
  out << "features = " << cfg.features << "\n";
  out << "labels = " << cfg.labels << "\n";
  out << "name = " << cfg.dataset_name << "\n";
  out << "normalize = " << (cfg.normalize ? "true" : "false") << "\n";
  out << "\n[embedding]\n";
  out << "word_vectors = " << cfg.word_vectors << "\n";
  if (!cfg.attributes.empty()) out << "attributes = " << cfg.attributes << "\n";
  out << "mode = " << cfg.embedding_mode << "\n";
  if (!cfg.aux_features.empty()) {
    out << "\n[aux]\n";
    out << "features = " << join(cfg.aux_features) << "\n";
    out << "labels = " << join(cfg.aux_labels) << "\n";
    if (!cfg.aux_names.empty()) out << "names = " << join(cfg.aux_names) << "\n";
  }
  out << "\n[experiment]\n";
  out << "variant = " << cfg.variant << "\n";
  out << "matcher = " << cfg.matcher << "\n";
  out << "metric = " << cfg.metric << "\n";
  out << "self_train = " << (cfg.self_train ? "true" : "false") << "\n";
  out << "self_train_renormalize = " << (cfg.self_train_renormalize ? "true" : "false") << "\n";
  out << "augment = " << (cfg.augment ? "true" : "false") << "\n";
  out << "retain_predictions = " << (cfg.retain_predictions ? "true" : "false") << "\n";
  out << "splits = " << cfg.splits << "\n";
  out << "workers = " << cfg.workers << "\n";
  out << "distractors_per_class = " << cfg.distractors_per_class << "\n";
  out << "seed = " << cfg.seed << "\n";
  if (!cfg.subsample.empty()) {
    out << "subsample = ";
    for (std::size_t i = 0; i < cfg.subsample.size(); ++i) {
      if (i) out << ", ";
      out << cfg.subsample[i].first << "=" << detail::format_double(cfg.subsample[i].second);
    }
    out << "\n";
  }
  if (cfg.subsample_first_count > 0)
    out << "subsample_first = " << cfg.subsample_first_count << ":"
        << detail::format_double(cfg.subsample_first_percent) << "\n";
  out << "\n[params]\n";
  out << "gamma_a = " << detail::format_double(cfg.gamma_a) << "\n";
  out << "gamma_i = " << detail::format_double(cfg.gamma_i) << "\n";
  out << "graph_k = " << cfg.graph_k << "\n";
  out << "self_train_k = " << cfg.self_train_k << "\n";
  out << "\n[output]\n";
  out << "dir = " << cfg.out_dir << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Resolution into runtime objects.
// ---------------------------------------------------------------------------

inline FitKind parse_fit_kind(const std::string& s) {
  if (s == "ridge") return FitKind::kRidge;
  if (s == "manifold") return FitKind::kManifold;
  throw ConfigError("unknown variant '" + s + "'");
}

inline Matcher parse_matcher(const std::string& s) {
  if (s == "nn") return Matcher::kNearest;
  if (s == "nrm") return Matcher::kNormalized;
  if (s == "gc") return Matcher::kGloballyCorrected;
  throw ConfigError("unknown matcher '" + s + "'");
}

inline MetricKind parse_metric(const std::string& s) {
  if (s == "accuracy") return MetricKind::kAccuracy;
  if (s == "map") return MetricKind::kMeanAveragePrecision;
  if (s == "auc") return MetricKind::kAuc;
  throw ConfigError("unknown metric '" + s + "'");
}

inline AffinityOp parse_affinity_op(const std::string& s) {
  if (s == "max") return AffinityOp::kMax;
  if (s == "mean") return AffinityOp::kMean;
  if (s == "min") return AffinityOp::kMin;
  throw ConfigError("unknown affinity op '" + s + "'");
}

/// Builds the runtime experiment config against a loaded dataset (class
/// names in the subsample map are resolved to ids here).
inline ExperimentConfig to_experiment_config(const RunConfig& cfg, const Dataset& ds) {
  ExperimentConfig out;
  out.variant = parse_fit_kind(cfg.variant);
  out.matcher = parse_matcher(cfg.matcher);
  out.metric = parse_metric(cfg.metric);
  out.self_train = cfg.self_train;
  out.self_train_renormalize = cfg.self_train_renormalize;
  out.augment = cfg.augment;
  out.params = HyperParams{cfg.gamma_a, cfg.gamma_i, cfg.graph_k, cfg.self_train_k};
  out.n_splits = cfg.splits;
  out.base_seed = cfg.seed;
  out.distractors_per_class = cfg.distractors_per_class;
  out.retain_predictions = cfg.retain_predictions;
  out.workers = cfg.workers > 0 ? cfg.workers : default_worker_count();
  for (const auto& [name, percent] : cfg.subsample) {
    int found = -1;
    for (int c = 0; c < ds.class_count(); ++c)
      if (ds.class_names[static_cast<std::size_t>(c)] == name) {
        found = c;
        break;
      }
    if (found < 0)
      throw ConfigError("subsample class '" + name + "' not present in dataset");
    out.subsample_percent[found] = percent;
  }
  if (cfg.subsample_first_count > 0)
    out.subsample_first = {cfg.subsample_first_count, cfg.subsample_first_percent};
  out.validate();
  return out;
}

/// Stable 64-bit content hash (FNV-1a) used for sweep cell identity.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace zsl
