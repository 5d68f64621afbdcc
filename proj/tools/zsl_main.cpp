// Command-line front end: evaluation runs, parameter sweeps, synthetic data
// generation, transfer analysis, model fitting and prediction.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "zsl/analysis.hpp"
#include "zsl/common.hpp"
#include "zsl/dataio.hpp"
#include "zsl/evaluation.hpp"
#include "zsl/inference.hpp"
#include "zsl/regression.hpp"
#include "zsl/run_config.hpp"
#include "zsl/wordvec.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw zsl::DataError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw zsl::DataError("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Config + resource loading.
// ---------------------------------------------------------------------------

struct Overrides {
  std::optional<std::string> variant, matcher, metric, out_dir;
  std::optional<bool> self_train, augment, retain;
  std::optional<int> splits, workers, graph_k, self_train_k, distractors;
  std::optional<double> gamma_a, gamma_i;
  std::optional<std::uint64_t> seed;
};

void add_override_options(CLI::App* cmd, std::string& config_path, Overrides& o) {
  cmd->add_option("--config", config_path, "run configuration file")->required();
  cmd->add_option("--variant", o.variant, "ridge | manifold");
  cmd->add_option("--matcher", o.matcher, "nn | nrm | gc");
  cmd->add_option("--metric", o.metric, "accuracy | map | auc");
  cmd->add_flag("--self-train,!--no-self-train", o.self_train, "adapt prototypes by self-training");
  cmd->add_flag("--augment,!--no-augment", o.augment, "pool auxiliary training data");
  cmd->add_flag("--retain-predictions", o.retain, "keep per-split predictions on disk");
  cmd->add_option("--splits", o.splits, "number of random class splits");
  cmd->add_option("--seed", o.seed, "base seed");
  cmd->add_option("--workers", o.workers, "worker pool size (0: auto)");
  cmd->add_option("--gamma-a", o.gamma_a, "ridge regularization weight");
  cmd->add_option("--gamma-i", o.gamma_i, "manifold regularization weight");
  cmd->add_option("--graph-k", o.graph_k, "KNN graph neighbor count");
  cmd->add_option("--st-k", o.self_train_k, "self-training neighbor count");
  cmd->add_option("--distractors", o.distractors, "held-out known-class negatives per class");
  cmd->add_option("--out", o.out_dir, "output directory");
}

zsl::RunConfig resolve_config(const std::string& path, const Overrides& o) {
  zsl::RunConfig cfg = zsl::load_run_config(path);
  if (o.variant) cfg.variant = *o.variant;
  if (o.matcher) cfg.matcher = *o.matcher;
  if (o.metric) cfg.metric = *o.metric;
  if (o.self_train) cfg.self_train = *o.self_train;
  if (o.augment) cfg.augment = *o.augment;
  if (o.retain) cfg.retain_predictions = *o.retain;
  if (o.splits) cfg.splits = *o.splits;
  if (o.seed) cfg.seed = *o.seed;
  if (o.workers) cfg.workers = *o.workers;
  if (o.gamma_a) cfg.gamma_a = *o.gamma_a;
  if (o.gamma_i) cfg.gamma_i = *o.gamma_i;
  if (o.graph_k) cfg.graph_k = *o.graph_k;
  if (o.self_train_k) cfg.self_train_k = *o.self_train_k;
  if (o.distractors) cfg.distractors_per_class = *o.distractors;
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  zsl::validate_run_config(cfg);
  return cfg;
}

struct Resources {
  zsl::Dataset dataset;
  std::vector<zsl::Dataset> aux;
  std::optional<zsl::WordVectorStore> store;
  std::optional<zsl::AttributeTable> attributes;
  std::unique_ptr<zsl::EmbeddingSource> source;
};

Resources load_resources(const zsl::RunConfig& cfg) {
  Resources r;
  if (cfg.features.empty() || cfg.labels.empty())
    throw zsl::ConfigError("config must set data.features and data.labels");
  r.dataset = zsl::load_dataset(cfg.features, cfg.labels, cfg.dataset_name, cfg.normalize);
  for (std::size_t i = 0; i < cfg.aux_features.size(); ++i) {
    const std::string name =
        i < cfg.aux_names.size() ? cfg.aux_names[i] : ("aux" + std::to_string(i));
    r.aux.push_back(zsl::load_dataset(cfg.aux_features[i], cfg.aux_labels[i], name, cfg.normalize));
  }
  if (cfg.embedding_mode != "attribute-file")
    r.store = zsl::load_word_vectors(cfg.word_vectors);
  if (cfg.embedding_mode != "word-vector")
    r.attributes = zsl::AttributeTable::load(cfg.attributes);
  if (cfg.embedding_mode == "word-vector")
    r.source = std::make_unique<zsl::EmbeddingSource>(&*r.store);
  else if (cfg.embedding_mode == "attribute-file")
    r.source = std::make_unique<zsl::EmbeddingSource>(&*r.attributes);
  else
    r.source = std::make_unique<zsl::EmbeddingSource>(&*r.store, &*r.attributes);
  return r;
}

// ---------------------------------------------------------------------------
// Output writers.
// ---------------------------------------------------------------------------

json splits_to_json(const std::vector<zsl::ZeroShotSplit>& splits,
                    const std::vector<std::string>& class_names) {
  json j;
  j["class_names"] = class_names;
  json list = json::array();
  for (const auto& split : splits) {
    list.push_back({{"split_id", split.split_id},
                    {"seed", split.seed},
                    {"train", split.train_classes},
                    {"test", split.test_classes}});
  }
  j["splits"] = list;
  return j;
}

void write_eval_outputs(const zsl::RunConfig& cfg, const zsl::ExperimentReport& report,
                        const zsl::Dataset& dataset) {
  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);
  write_file((out_dir / "resolved.cfg").string(), zsl::render_run_config(cfg));
  write_file((out_dir / "report.json").string(), zsl::report_to_json(report).dump(2) + "\n");
  write_file((out_dir / "metrics.csv").string(), zsl::report_metrics_csv(report));

  const auto splits =
      zsl::generate_splits(dataset.class_count(), report.config.n_splits, report.config.base_seed);
  write_file((out_dir / "splits.json").string(),
             splits_to_json(splits, dataset.class_names).dump(2) + "\n");

  if (report.config.retain_predictions) {
    char buf[64];
    for (const auto& eval : report.evaluations) {
      std::string csv = "instance_id,truth,predicted,score\n";
      for (Eigen::Index i = 0; i < eval.predicted.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", eval.scores[i]);
        csv += std::to_string(eval.test_instances[static_cast<std::size_t>(i)]) + "," +
               dataset.class_names[static_cast<std::size_t>(eval.truth[i])] + "," +
               dataset.class_names[static_cast<std::size_t>(eval.predicted[i])] + "," + buf +
               "\n";
      }
      write_file((out_dir / ("predictions_split_" + std::to_string(eval.split_id) + ".csv"))
                     .string(),
                 csv);
    }
  }
}

// ---------------------------------------------------------------------------
// Subcommand: eval
// ---------------------------------------------------------------------------

int cmd_eval(const zsl::RunConfig& cfg) {
  const Resources r = load_resources(cfg);
  const zsl::ExperimentConfig experiment = zsl::to_experiment_config(cfg, r.dataset);
  const zsl::ExperimentReport report =
      zsl::run_experiment(r.dataset, *r.source, r.aux, experiment);
  write_eval_outputs(cfg, report, r.dataset);
  std::cout << "metric " << zsl::metric_name(experiment.metric) << " mean "
            << report.mean << " std " << report.stddev << " over "
            << report.per_split.size() << " splits (" << report.runtime_seconds
            << " s)\n"
            << "outputs in " << cfg.out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Subcommand: sweep
// ---------------------------------------------------------------------------

struct SweepGrids {
  std::vector<double> gamma_a, gamma_i;
  std::vector<int> graph_k, self_train_k;
};

int cmd_sweep(const zsl::RunConfig& base, const SweepGrids& grids) {
  std::vector<double> gamma_a = grids.gamma_a.empty() ? std::vector<double>{base.gamma_a}
                                                      : grids.gamma_a;
  std::vector<double> gamma_i = grids.gamma_i.empty() ? std::vector<double>{base.gamma_i}
                                                      : grids.gamma_i;
  std::vector<int> graph_k = grids.graph_k.empty() ? std::vector<int>{base.graph_k}
                                                   : grids.graph_k;
  std::vector<int> st_k = grids.self_train_k.empty() ? std::vector<int>{base.self_train_k}
                                                     : grids.self_train_k;
  for (double g : gamma_a)
    if (g < zsl::kMinGammaA)
      throw zsl::ConfigError(
          "sweep grid contains gamma_a = " + std::to_string(g) +
          "; unregularized solves are numerically singular and perform near chance");

  const Resources r = load_resources(base);
  const fs::path sweep_dir = fs::path(base.out_dir) / "sweep";
  fs::create_directories(sweep_dir);

  std::string summary = "gamma_a,gamma_i,graph_k,self_train_k,mean,std\n";
  char buf[160];
  int cell_index = 0;
  for (double ga : gamma_a) {
    for (double gi : gamma_i) {
      for (int gk : graph_k) {
        for (int sk : st_k) {
          zsl::RunConfig cell = base;
          cell.gamma_a = ga;
          cell.gamma_i = gi;
          cell.graph_k = gk;
          cell.self_train_k = sk;
          const std::string rendered = zsl::render_run_config(cell);
          std::snprintf(buf, sizeof buf, "cell_%03d_%016llx", cell_index++,
                        static_cast<unsigned long long>(zsl::fnv1a64(rendered)));
          const fs::path cell_dir = sweep_dir / buf;
          cell.out_dir = cell_dir.string();

          double mean = 0.0, stddev = 0.0;
          const fs::path report_path = cell_dir / "report.json";
          const fs::path cfg_path = cell_dir / "resolved.cfg";
          bool reused = false;
          if (fs::exists(report_path) && fs::exists(cfg_path)) {
            std::ifstream existing(cfg_path);
            std::stringstream content;
            content << existing.rdbuf();
            if (content.str() == zsl::render_run_config(cell)) {
              std::ifstream in(report_path);
              const json j = json::parse(in, nullptr, false);
              if (!j.is_discarded() && j.contains("mean") && j.contains("std")) {
                mean = j["mean"].get<double>();
                stddev = j["std"].get<double>();
                reused = true;
                std::cout << "cell " << cell_dir.filename().string() << ": cached\n";
              }
            }
          }
          if (!reused) {
            const zsl::ExperimentConfig experiment = zsl::to_experiment_config(cell, r.dataset);
            const zsl::ExperimentReport report =
                zsl::run_experiment(r.dataset, *r.source, r.aux, experiment);
            write_eval_outputs(cell, report, r.dataset);
            mean = report.mean;
            stddev = report.stddev;
            std::cout << "cell " << cell_dir.filename().string() << ": mean " << mean << "\n";
          }
          std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d,%d,%.17g,%.17g\n", ga, gi, gk, sk,
                        mean, stddev);
          summary += buf;
        }
      }
    }
  }
  write_file((fs::path(base.out_dir) / "sweep_summary.csv").string(), summary);
  std::cout << "sweep summary in " << (fs::path(base.out_dir) / "sweep_summary.csv").string()
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Subcommand: gen-synthetic
// ---------------------------------------------------------------------------

int cmd_gen_synthetic(const zsl::SyntheticSpec& spec, const std::string& out_dir) {
  const zsl::SyntheticData data = zsl::generate_synthetic(spec);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);

  zsl::write_features_binary((dir / "features.zslf").string(), data.dataset.x);
  std::vector<std::string> row_labels;
  for (Eigen::Index i = 0; i < data.dataset.n(); ++i)
    row_labels.push_back(
        data.dataset.class_names[static_cast<std::size_t>(data.dataset.y[i])]);
  zsl::write_labels((dir / "labels.txt").string(), row_labels);

  std::ostringstream vectors;
  vectors.precision(17);
  vectors << data.dataset.class_count() << " " << spec.d_z << "\n";
  for (int c = 0; c < data.dataset.class_count(); ++c) {
    vectors << data.dataset.class_names[static_cast<std::size_t>(c)];
    for (int k = 0; k < spec.d_z; ++k) vectors << " " << data.class_vectors(k, c);
    vectors << "\n";
  }
  write_file((dir / "class_vectors.txt").string(), vectors.str());

  std::cout << "synthetic dataset: " << data.dataset.n() << " instances, "
            << spec.c_train << "+" << spec.c_test << " classes, d_x " << spec.d_x
            << ", d_z " << spec.d_z << ", noise " << spec.noise_sigma << ", shift "
            << spec.shift_sigma << ", seed " << spec.seed << "\n"
            << "planted map: orthonormal " << spec.d_x << "x" << spec.d_z
            << " (class means are exact images of the class vectors)\n"
            << "files: features.zslf labels.txt class_vectors.txt in " << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Subcommand: fit / predict / export-projections
// ---------------------------------------------------------------------------

zsl::EmbeddingModel fit_from_config(const zsl::RunConfig& cfg, const Resources& r,
                                    int split_index, zsl::ZeroShotSplit* used_split) {
  const auto splits = zsl::generate_splits(r.dataset.class_count(), cfg.splits, cfg.seed);
  if (split_index < 0 || split_index >= static_cast<int>(splits.size()))
    throw zsl::ConfigError("split index " + std::to_string(split_index) +
                           " out of range (have " + std::to_string(splits.size()) + ")");
  const zsl::ZeroShotSplit& split = splits[static_cast<std::size_t>(split_index)];
  if (used_split) *used_split = split;

  std::unordered_set<int> train_set(split.train_classes.begin(), split.train_classes.end());
  std::vector<int> train_rows, test_rows;
  for (Eigen::Index i = 0; i < r.dataset.n(); ++i)
    (train_set.count(r.dataset.y[i]) ? train_rows : test_rows).push_back(static_cast<int>(i));

  zsl::Matrix x_train(static_cast<Eigen::Index>(train_rows.size()), r.dataset.feature_dim());
  zsl::Matrix x_test(static_cast<Eigen::Index>(test_rows.size()), r.dataset.feature_dim());
  zsl::Matrix z_train(r.source->dim(), static_cast<Eigen::Index>(train_rows.size()));
  std::map<int, zsl::Vector> class_vec;
  for (int c : split.train_classes)
    class_vec[c] = r.source->embed(r.dataset.class_names[static_cast<std::size_t>(c)]);
  for (std::size_t i = 0; i < train_rows.size(); ++i) {
    x_train.row(static_cast<Eigen::Index>(i)) = r.dataset.x.row(train_rows[i]);
    z_train.col(static_cast<Eigen::Index>(i)) = class_vec[r.dataset.y[train_rows[i]]];
  }
  for (std::size_t i = 0; i < test_rows.size(); ++i)
    x_test.row(static_cast<Eigen::Index>(i)) = r.dataset.x.row(test_rows[i]);

  zsl::HyperParams hp{cfg.gamma_a, cfg.gamma_i, cfg.graph_k, cfg.self_train_k};
  if (cfg.variant == "ridge") {
    zsl::EmbeddingModel model = zsl::fit_ridge(x_train, z_train, hp.gamma_a);
    model.params = hp;
    model.params.gamma_i = 0.0;
    return model;
  }
  return zsl::fit_manifold(x_train, z_train, x_test, hp);
}

int cmd_fit(const zsl::RunConfig& cfg, int split_index, const std::string& out_path) {
  const Resources r = load_resources(cfg);
  const zsl::EmbeddingModel model = fit_from_config(cfg, r, split_index, nullptr);
  const std::string path =
      out_path.empty() ? (fs::path(cfg.out_dir) / "model.zsla").string() : out_path;
  fs::create_directories(fs::path(path).parent_path().empty()
                             ? fs::path(".")
                             : fs::path(path).parent_path());
  zsl::save_model(model, path);
  std::cout << "model (" << zsl::variant_name(model.variant) << ", basis "
            << model.basis_size() << ") written to " << path << "\n";
  return 0;
}

std::vector<std::string> class_names_in_file_order(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw zsl::DataError("cannot open class-vector file '" + path + "'");
  std::vector<std::string> names;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string token;
    fields >> token;
    if (first) {
      first = false;
      long a = 0, b = 0;
      std::istringstream header(line);
      if (header >> a >> b && header.eof() && a > 0 && b > 0) continue;  // count/dim line
    }
    if (!token.empty()) names.push_back(token);
  }
  return names;
}

int cmd_predict(const std::string& model_path, const std::string& features_path,
                const std::string& class_vectors_path, std::vector<std::string> classes,
                const std::string& matcher_name, bool use_self_train,
                std::optional<int> st_k, bool normalize, const std::string& out_path) {
  const zsl::EmbeddingModel model = zsl::load_model(model_path);
  zsl::Matrix x = [&] {
    std::ifstream probe(features_path, std::ios::binary);
    if (!probe) throw zsl::DataError("cannot open feature file '" + features_path + "'");
    char magic[4] = {0, 0, 0, 0};
    probe.read(magic, 4);
    return (probe && std::memcmp(magic, zsl::kFeatureMagic, 4) == 0)
               ? zsl::read_features_binary(features_path)
               : zsl::read_features_csv(features_path);
  }();
  if (normalize)
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double norm = x.row(i).norm();
      if (norm > 0.0) x.row(i) /= norm;
    }

  const zsl::WordVectorStore store = zsl::load_word_vectors(class_vectors_path);
  const zsl::EmbeddingSource source(&store);
  if (classes.empty()) classes = class_names_in_file_order(class_vectors_path);
  if (classes.empty()) throw zsl::DataError("no classes to match against");
  const zsl::Matrix prototypes = zsl::build_class_matrix(source, classes);

  const zsl::Matrix projections = model.project(x);
  zsl::Matrix effective = prototypes;
  if (use_self_train)
    effective = zsl::self_train(prototypes, projections,
                                st_k.value_or(model.params.self_train_k));
  const zsl::Prediction prediction =
      zsl::predict(zsl::compute_distances(projections, effective),
                   zsl::parse_matcher(matcher_name));

  std::vector<int> instance_ids(static_cast<std::size_t>(x.rows()));
  std::iota(instance_ids.begin(), instance_ids.end(), 0);
  zsl::write_predictions_csv(out_path, prediction, instance_ids, classes);
  std::cout << "predictions for " << x.rows() << " instances written to " << out_path << "\n";
  return 0;
}

int cmd_export_projections(const zsl::RunConfig& cfg, int split_index,
                           const std::string& out_path) {
  const Resources r = load_resources(cfg);
  zsl::ZeroShotSplit split;
  const zsl::EmbeddingModel model = fit_from_config(cfg, r, split_index, &split);
  const std::string path =
      out_path.empty() ? (fs::path(cfg.out_dir) / "projections.csv").string() : out_path;
  if (!fs::path(path).parent_path().empty())
    fs::create_directories(fs::path(path).parent_path());
  zsl::export_projections(model, r.dataset, split, *r.source, path, cfg.self_train,
                          cfg.self_train_k);
  std::cout << "projection export written to " << path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Subcommand: analyze
// ---------------------------------------------------------------------------

int cmd_analyze(const std::string& records_dir, std::string out_dir, bool with_curve,
                const std::string& affinity_op_name, bool variance_denominator,
                std::vector<double> curve_s) {
  const fs::path records(records_dir);
  if (!fs::exists(records / "resolved.cfg"))
    throw zsl::DataError("no resolved.cfg in '" + records_dir + "'; run eval first");
  const zsl::RunConfig cfg = zsl::load_run_config((records / "resolved.cfg").string());
  const Resources r = load_resources(cfg);
  if (out_dir.empty()) out_dir = (records / "analysis").string();
  fs::create_directories(out_dir);

  // Reload splits and per-split predictions.
  std::ifstream splits_in(records / "splits.json");
  if (!splits_in) throw zsl::DataError("missing splits.json in '" + records_dir + "'");
  const json splits_json = json::parse(splits_in);
  std::map<std::string, int> class_id;
  for (int c = 0; c < r.dataset.class_count(); ++c)
    class_id[r.dataset.class_names[static_cast<std::size_t>(c)]] = c;

  std::vector<zsl::ZeroShotSplit> splits;
  std::vector<zsl::SplitOutcomeRecord> outcomes;
  for (const auto& entry : splits_json.at("splits")) {
    zsl::ZeroShotSplit split;
    split.split_id = entry.at("split_id").get<int>();
    split.seed = entry.at("seed").get<std::uint64_t>();
    split.train_classes = entry.at("train").get<std::vector<int>>();
    split.test_classes = entry.at("test").get<std::vector<int>>();
    splits.push_back(split);

    const fs::path pred_path =
        records / ("predictions_split_" + std::to_string(split.split_id) + ".csv");
    if (!fs::exists(pred_path))
      throw zsl::DataError("missing " + pred_path.string() +
                           "; rerun eval with retain_predictions = true "
                           "(--retain-predictions)");
    std::ifstream pred(pred_path);
    std::string line;
    std::getline(pred, line);  // header
    std::vector<int> hits(static_cast<std::size_t>(r.dataset.class_count()), 0);
    std::vector<int> totals(static_cast<std::size_t>(r.dataset.class_count()), 0);
    while (std::getline(pred, line)) {
      if (line.empty()) continue;
      std::istringstream fields(line);
      std::string id_str, truth_name, predicted_name;
      std::getline(fields, id_str, ',');
      std::getline(fields, truth_name, ',');
      std::getline(fields, predicted_name, ',');
      const auto truth_it = class_id.find(truth_name);
      const auto pred_it = class_id.find(predicted_name);
      if (truth_it == class_id.end() || pred_it == class_id.end())
        throw zsl::DataError(pred_path.string() + ": unknown class in predictions");
      ++totals[static_cast<std::size_t>(truth_it->second)];
      if (truth_it->second == pred_it->second)
        ++hits[static_cast<std::size_t>(truth_it->second)];
    }

    zsl::SplitOutcomeRecord record;
    record.train_inclusion.assign(static_cast<std::size_t>(r.dataset.class_count()), 0);
    for (int c : split.train_classes) record.train_inclusion[static_cast<std::size_t>(c)] = 1;
    record.per_class_accuracy = zsl::Vector::Constant(
        r.dataset.class_count(), std::numeric_limits<double>::quiet_NaN());
    for (int c : split.test_classes)
      if (totals[static_cast<std::size_t>(c)] > 0)
        record.per_class_accuracy[c] = static_cast<double>(hits[static_cast<std::size_t>(c)]) /
                                       static_cast<double>(totals[static_cast<std::size_t>(c)]);
    outcomes.push_back(std::move(record));
  }

  const zsl::TransferCorrelationMatrix corr =
      zsl::transfer_correlation(outcomes, !variance_denominator);
  zsl::write_matrix_csv((fs::path(out_dir) / "correlation.csv").string(), corr.corr,
                        &corr.valid, r.dataset.class_names);

  const zsl::Matrix class_vectors = zsl::build_class_matrix(*r.source, r.dataset.class_names);
  const zsl::AffinityReport affinity = zsl::classname_affinity_report(class_vectors);
  zsl::write_matrix_csv((fs::path(out_dir) / "affinity_cosine.csv").string(), affinity.cosine,
                        nullptr, r.dataset.class_names);
  zsl::write_matrix_csv((fs::path(out_dir) / "affinity_percentile.csv").string(),
                        affinity.percentile, nullptr, r.dataset.class_names);

  const double agreement = zsl::matrix_agreement(corr.corr, corr.valid, affinity.cosine);
  {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g\n", agreement);
    write_file((fs::path(out_dir) / "agreement.txt").string(), buf);
  }
  std::cout << "correlation-affinity agreement: " << agreement << "\n";

  if (with_curve) {
    if (curve_s.empty())
      curve_s = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
    const auto curve = zsl::related_subset_curve(r.dataset, *r.source, splits, curve_s,
                                                 zsl::parse_affinity_op(affinity_op_name),
                                                 cfg.gamma_a);
    std::string csv = "s_percent,related,unrelated\n";
    char buf[96];
    for (const auto& point : curve) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", point.s_percent, point.related,
                    point.unrelated);
      csv += buf;
    }
    write_file((fs::path(out_dir) / ("curve_" + affinity_op_name + ".csv")).string(), csv);
    std::cout << "related-subset curve written (op " << affinity_op_name << ")\n";
  }
  std::cout << "analysis outputs in " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transductive zero-shot recognition toolkit"};
  app.require_subcommand(1);

  // eval
  std::string eval_config;
  Overrides eval_overrides;
  auto* eval = app.add_subcommand("eval", "run the split evaluation protocol");
  add_override_options(eval, eval_config, eval_overrides);

  // sweep
  std::string sweep_config;
  Overrides sweep_overrides;
  SweepGrids grids;
  auto* sweep = app.add_subcommand("sweep", "grid-run hyperparameters");
  add_override_options(sweep, sweep_config, sweep_overrides);
  sweep->add_option("--gamma-a-grid", grids.gamma_a, "gamma_a grid values");
  sweep->add_option("--gamma-i-grid", grids.gamma_i, "gamma_i grid values");
  sweep->add_option("--graph-k-grid", grids.graph_k, "graph K grid values");
  sweep->add_option("--st-k-grid", grids.self_train_k, "self-training K grid values");

  // gen-synthetic
  zsl::SyntheticSpec spec;
  std::string synth_out = "synthetic";
  auto* gen = app.add_subcommand("gen-synthetic", "generate planted-map synthetic data");
  gen->add_option("--c-train", spec.c_train, "training class count");
  gen->add_option("--c-test", spec.c_test, "testing class count");
  gen->add_option("--per-class", spec.per_class, "instances per class");
  gen->add_option("--dx", spec.d_x, "feature dimension");
  gen->add_option("--dz", spec.d_z, "embedding dimension");
  gen->add_option("--noise", spec.noise_sigma, "instance noise sigma");
  gen->add_option("--shift", spec.shift_sigma, "test-class shift magnitude");
  gen->add_option("--seed", spec.seed, "generator seed");
  gen->add_option("--out", synth_out, "output directory");

  // fit
  std::string fit_config, fit_out;
  Overrides fit_overrides;
  int fit_split_index = 0;
  auto* fit = app.add_subcommand("fit", "fit one split's model and save it");
  add_override_options(fit, fit_config, fit_overrides);
  fit->add_option("--split-index", fit_split_index, "which generated split to fit");
  fit->add_option("--model-out", fit_out, "model output path (default <out>/model.zsla)");

  // predict
  std::string predict_model, predict_features, predict_vectors, predict_out = "predictions.csv";
  std::string predict_matcher = "nn";
  std::vector<std::string> predict_classes;
  bool predict_self_train = false;
  bool predict_no_normalize = false;
  std::optional<int> predict_st_k;
  auto* predict = app.add_subcommand("predict", "classify instances with a saved model");
  predict->add_option("--model", predict_model, "model file")->required();
  predict->add_option("--features", predict_features, "feature file")->required();
  predict->add_option("--class-vectors", predict_vectors, "class vector file")->required();
  predict->add_option("--classes", predict_classes, "candidate class names (default: all)");
  predict->add_option("--matcher", predict_matcher, "nn | nrm | gc");
  predict->add_flag("--self-train", predict_self_train, "adapt prototypes before matching");
  predict->add_option("--st-k", predict_st_k, "self-training neighbor count");
  predict->add_flag("--no-normalize", predict_no_normalize, "skip per-row feature normalization");
  predict->add_option("--out", predict_out, "prediction CSV path");

  // export-projections
  std::string export_config, export_out;
  Overrides export_overrides;
  int export_split_index = 0;
  auto* exportp = app.add_subcommand("export-projections",
                                     "dump projected instances and prototypes as CSV");
  add_override_options(exportp, export_config, export_overrides);
  exportp->add_option("--split-index", export_split_index, "which generated split to export");
  exportp->add_option("--csv-out", export_out, "output CSV (default <out>/projections.csv)");

  // analyze
  std::string analyze_records, analyze_out, analyze_op = "max";
  bool analyze_curve = false, analyze_variance_denominator = false;
  std::vector<double> analyze_s;
  auto* analyze = app.add_subcommand("analyze", "transfer correlation and affinity analysis");
  analyze->add_option("--records", analyze_records, "eval output directory")->required();
  analyze->add_option("--out", analyze_out, "analysis output directory");
  analyze->add_flag("--curve", analyze_curve, "compute related/unrelated subset curves");
  analyze->add_option("--affinity-op", analyze_op, "max | mean | min");
  analyze->add_option("--curve-s", analyze_s, "subset percentages for the curve");
  analyze->add_flag("--variance-denominator", analyze_variance_denominator,
                    "divide by var*var instead of std*std");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (app.got_subcommand(eval)) return cmd_eval(resolve_config(eval_config, eval_overrides));
    if (app.got_subcommand(sweep))
      return cmd_sweep(resolve_config(sweep_config, sweep_overrides), grids);
    if (app.got_subcommand(gen)) return cmd_gen_synthetic(spec, synth_out);
    if (app.got_subcommand(fit))
      return cmd_fit(resolve_config(fit_config, fit_overrides), fit_split_index, fit_out);
    if (app.got_subcommand(predict))
      return cmd_predict(predict_model, predict_features, predict_vectors, predict_classes,
                         predict_matcher, predict_self_train, predict_st_k,
                         !predict_no_normalize, predict_out);
    if (app.got_subcommand(exportp))
      return cmd_export_projections(resolve_config(export_config, export_overrides),
                                    export_split_index, export_out);
    if (app.got_subcommand(analyze))
      return cmd_analyze(analyze_records, analyze_out, analyze_curve, analyze_op,
                         analyze_variance_denominator, analyze_s);
    throw zsl::ConfigError("no subcommand selected");
  } catch (const zsl::ConfigError& e) {
    std::cerr << json{{"error", {{"category", "config"}, {"message", e.what()}}}}.dump()
              << "\n";
    return kExitConfig;
  } catch (const zsl::DataError& e) {
    std::cerr << json{{"error", {{"category", "data"}, {"message", e.what()}}}}.dump() << "\n";
    return kExitData;
  } catch (const zsl::NumericError& e) {
    std::cerr << json{{"error", {{"category", "numeric"}, {"message", e.what()}}}}.dump()
              << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"category", "internal"}, {"message", e.what()}}}}.dump()
              << "\n";
    return 1;
  }
}
