// Copyright 2026 The SHOE Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment orchestration: configuration, data ingestion, the
// kernelize -> CCA -> train -> encode -> retrieve -> evaluate pipeline, and
// result emission.

#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "shoe/cca.hpp"
#include "shoe/classify.hpp"
#include "shoe/core.hpp"
#include "shoe/embeddings.hpp"
#include "shoe/features.hpp"
#include "shoe/io.hpp"
#include "shoe/lsh.hpp"
#include "shoe/metrics.hpp"
#include "shoe/random.hpp"
#include "shoe/retrieval.hpp"
#include "shoe/synthetic.hpp"
#include "shoe/trainer.hpp"

namespace shoe {

enum class PipelineOrder { KernelFirst, CcaFirst };

struct ExperimentConfig {
  // data
  std::string train_features;
  std::string train_labels;
  std::string query_features;
  std::string query_labels;
  std::string embeddings;
  std::string hierarchy;
  std::string class_nodes;
  bool center_embeddings = true;
  bool synthetic = false;
  SyntheticSpec synth;

  // features
  bool kernelize = true;
  Index anchors = 300;
  double bandwidth = 0.0;  // 0: median heuristic
  bool cca = false;
  Index cca_rank = 0;    // 0: min(code_len, feature dim, embedding dim)
  double cca_reg = -1.0;  // < 0: 1e-4 * trace(cov) / dim per view
  PipelineOrder order = PipelineOrder::KernelFirst;

  // hashing
  std::string mode = "learned";
  TrainConfig train;
  bool lsh_pca = true;

  // evaluation
  std::vector<std::size_t> ks = {10, 30, 50};
  std::size_t curve_depth = 100;
  std::size_t rank_depth = 100;
  std::size_t classify_k = 10;
  std::size_t topn_k = 50;
  std::size_t topn = 5;
  bool exclude_self = false;
  unsigned threads = 1;

  std::string output_dir;
  std::uint64_t seed = 0;
};

// ---- key table -----------------------------------------------------------------------

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out{};
  if (!(is >> out) || !(is >> std::ws).eof()) throw ConfigError(key + ": cannot parse '" + v + "'");
  if constexpr (std::is_unsigned_v<T>) {
    if (!v.empty() && v.front() == '-') throw ConfigError(key + ": must be non-negative");
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, double>) {
    return format_double(v);
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  } else {
    return std::to_string(v);
  }
}

template <typename T>
T parse_value(const std::string& key, const std::string& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return parse_bool(key, v);
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) out.push_back(parse_number<std::size_t>(key, item));
    }
    return out;
  } else {
    return parse_number<T>(key, v);
  }
}

}  // namespace detail

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
  /// Excluded from the canonical text (does not influence results).
  bool location_only = false;
};

namespace detail {

template <typename Getter>
ConfigKey make_key(std::string name, std::string help, Getter field, bool location_only = false) {
  using T = std::remove_cvref_t<decltype(field(std::declval<ExperimentConfig&>()))>;
  ConfigKey k;
  k.name = name;
  k.help = std::move(help);
  k.set = [field, name](ExperimentConfig& c, const std::string& v) { field(c) = parse_value<T>(name, v); };
  k.get = [field](const ExperimentConfig& c) {
    return format_value<T>(field(const_cast<ExperimentConfig&>(c)));
  };
  k.location_only = location_only;
  return k;
}

}  // namespace detail

#define SHOE_FIELD(expr) [](ExperimentConfig & c) -> auto& { return c.expr; }

/// Every accepted configuration key, in canonical order.
inline const std::vector<ConfigKey>& config_keys() {
  using detail::make_key;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    k.push_back(make_key("train_features", "training/database features (SHM1 or text)", SHOE_FIELD(train_features)));
    k.push_back(make_key("train_labels", "training labels, one per line", SHOE_FIELD(train_labels)));
    k.push_back(make_key("query_features", "query features; empty: query with the database itself",
                         SHOE_FIELD(query_features)));
    k.push_back(make_key("query_labels", "query labels", SHOE_FIELD(query_labels)));
    k.push_back(make_key("embeddings", "class embedding table (SHM1 or text), one row per class", SHOE_FIELD(embeddings)));
    k.push_back(make_key("hierarchy", "taxonomy file `child parent` (alternative to embeddings)", SHOE_FIELD(hierarchy)));
    k.push_back(make_key("class_nodes", "hierarchy node id of each class, one per line", SHOE_FIELD(class_nodes)));
    k.push_back(make_key("center_embeddings", "mean-center embedding columns before normalizing",
                         SHOE_FIELD(center_embeddings)));
    k.push_back(make_key("synthetic", "generate the synthetic hierarchy instead of reading files", SHOE_FIELD(synthetic)));
    k.push_back(make_key("synth_classes", "synthetic class count L", SHOE_FIELD(synth.n_classes)));
    k.push_back(make_key("synth_superclasses", "synthetic superclass count S", SHOE_FIELD(synth.n_superclasses)));
    k.push_back(make_key("synth_dim", "synthetic feature dimension", SHOE_FIELD(synth.dim)));
    k.push_back(make_key("synth_per_class", "synthetic training items per class", SHOE_FIELD(synth.per_class)));
    k.push_back(make_key("synth_queries_per_class", "synthetic queries per class", SHOE_FIELD(synth.queries_per_class)));
    k.push_back(make_key("synth_sib_spacing", "distance between class means in a superclass", SHOE_FIELD(synth.sib_spacing)));
    k.push_back(make_key("synth_far_spacing", "distance between superclass centers", SHOE_FIELD(synth.far_spacing)));
    k.push_back(make_key("synth_noise", "per-dimension item noise", SHOE_FIELD(synth.noise)));
    k.push_back(make_key("kernelize", "RBF anchor kernelization", SHOE_FIELD(kernelize)));
    k.push_back(make_key("anchors", "anchor count p", SHOE_FIELD(anchors)));
    k.push_back(make_key("bandwidth", "RBF gamma; 0 selects the median heuristic", SHOE_FIELD(bandwidth)));
    k.push_back(make_key("cca", "CCA projection against class embeddings", SHOE_FIELD(cca)));
    k.push_back(make_key("cca_rank", "CCA output dim; 0 selects min(code_len, d, e)", SHOE_FIELD(cca_rank)));
    k.push_back(make_key("cca_reg", "CCA ridge; negative selects 1e-4 * trace(cov) / dim", SHOE_FIELD(cca_reg)));
    ConfigKey order;
    order.name = "order";
    order.help = "kernel_first or cca_first";
    order.set = [](ExperimentConfig& c, const std::string& v) {
      if (v == "kernel_first") {
        c.order = PipelineOrder::KernelFirst;
      } else if (v == "cca_first") {
        c.order = PipelineOrder::CcaFirst;
      } else {
        throw ConfigError("order: expected kernel_first or cca_first, got '" + v + "'");
      }
    };
    order.get = [](const ExperimentConfig& c) {
      return std::string(c.order == PipelineOrder::KernelFirst ? "kernel_first" : "cca_first");
    };
    k.push_back(order);
    k.push_back(make_key("mode", "embedding, fixed, learned, ksh or lsh", SHOE_FIELD(mode)));
    k.push_back(make_key("code_len", "bits per code", SHOE_FIELD(train.code_len)));
    k.push_back(make_key("m", "sibling window size including the class itself", SHOE_FIELD(train.sibling_count)));
    k.push_back(make_key("theta", "initial (learned) or constant (fixed) sibling similarity", SHOE_FIELD(train.theta)));
    k.push_back(make_key("lambda", "weight of the (theta + 1)^2 regularizer", SHOE_FIELD(train.lambda)));
    k.push_back(make_key("lambda_per_pair", "if > 0, lambda = this times the sibling pair count",
                         SHOE_FIELD(train.lambda_per_sibling_pair)));
    k.push_back(make_key("grad_steps", "gradient steps per bit", SHOE_FIELD(train.grad_steps)));
    k.push_back(make_key("step_size", "initial relative step size", SHOE_FIELD(train.step_size)));
    k.push_back(make_key("smoothing", "tanh scale replacing sgn during refinement", SHOE_FIELD(train.smoothing)));
    k.push_back(make_key("include_diagonal", "include i == j pairs in the objective", SHOE_FIELD(train.include_diagonal)));
    k.push_back(make_key("max_dense_items", "subsample pairs above this training size", SHOE_FIELD(train.max_dense_items)));
    k.push_back(make_key("pairs_per_category", "ordered pairs kept per category when subsampling",
                         SHOE_FIELD(train.sampled_pairs_per_category)));
    k.push_back(make_key("lsh_pca", "rotate onto principal components before LSH", SHOE_FIELD(lsh_pca)));
    k.push_back(make_key("ks", "comma-separated cutoffs for precision@k / recall@k", SHOE_FIELD(ks)));
    k.push_back(make_key("curve_depth", "precision/recall curve length", SHOE_FIELD(curve_depth)));
    k.push_back(make_key("rank_depth", "ranked items per query written to results.csv", SHOE_FIELD(rank_depth)));
    k.push_back(make_key("classify_k", "neighbors pooled for top-1 / sibling accuracy", SHOE_FIELD(classify_k)));
    k.push_back(make_key("topn_k", "neighbors pooled for top-n accuracy", SHOE_FIELD(topn_k)));
    k.push_back(make_key("topn", "n for top-n accuracy", SHOE_FIELD(topn)));
    k.push_back(make_key("exclude_self", "drop the query itself from its ranking", SHOE_FIELD(exclude_self)));
    k.push_back(make_key("threads", "query threads for retrieval", SHOE_FIELD(threads), true));
    k.push_back(make_key("output_dir", "directory for models, codes and reports", SHOE_FIELD(output_dir), true));
    k.push_back(make_key("seed", "root seed (env SHOE_SEED overrides)", SHOE_FIELD(seed)));
    return k;
  }();
  return keys;
}

#undef SHOE_FIELD

inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown configuration key: " + key);
}

/// `key = value` lines; `#` starts a comment.
inline ExperimentConfig parse_config(std::istream& is, ExperimentConfig cfg = {}) {
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig cfg = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  return parse_config(is, std::move(cfg));
}

inline void apply_env_overrides(ExperimentConfig& cfg) {
  if (const char* s = std::getenv("SHOE_SEED"); s != nullptr && *s != '\0') set_config_value(cfg, "seed", s);
}

/// Every result-affecting key as `key = value`, in table order.
inline std::string canonical_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& k : config_keys()) {
    if (!k.location_only) out += k.name + " = " + k.get(cfg) + "\n";
  }
  return out;
}

inline std::uint64_t config_hash(const ExperimentConfig& cfg) { return fnv1a(canonical_text(cfg)); }

inline bool is_hash_mode(const std::string& mode) {
  return mode == "embedding" || mode == "fixed" || mode == "learned" || mode == "ksh";
}

/// Static checks; no file is read or written.
inline void validate_config(const ExperimentConfig& cfg) {
  if (!is_hash_mode(cfg.mode) && cfg.mode != "lsh") throw ConfigError("mode: unknown value '" + cfg.mode + "'");
  if (is_hash_mode(cfg.mode)) {
    TrainConfig t = cfg.train;
    t.mode = parse_target_mode(cfg.mode);
    try {
      t.validate();
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  } else if (cfg.train.code_len < 1) {
    throw ConfigError("code_len must be >= 1");
  }
  if (cfg.synthetic) {
    try {
      cfg.synth.validate();
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  } else {
    if (cfg.train_features.empty() || cfg.train_labels.empty()) {
      throw ConfigError("train_features and train_labels are required unless synthetic = true");
    }
    if (cfg.query_features.empty() != cfg.query_labels.empty()) {
      throw ConfigError("query_features and query_labels must be given together");
    }
    const bool have_table = !cfg.embeddings.empty();
    const bool have_tree = !cfg.hierarchy.empty();
    if (!have_table && !have_tree) {
      throw ConfigError("an embeddings file (or hierarchy + class_nodes) is required: mode '" + cfg.mode +
                        "' and the sibling metrics both need class embeddings");
    }
    if (have_table && have_tree) throw ConfigError("give either embeddings or hierarchy, not both");
    if (have_tree && cfg.class_nodes.empty()) throw ConfigError("hierarchy needs class_nodes");
    for (const std::string* p : {&cfg.train_features, &cfg.train_labels, &cfg.query_features, &cfg.query_labels,
                                 &cfg.embeddings, &cfg.hierarchy, &cfg.class_nodes}) {
      if (!p->empty() && !std::filesystem::exists(*p)) throw ConfigError("input file not found: " + *p);
    }
  }
  if (cfg.kernelize && cfg.anchors < 1) throw ConfigError("anchors must be >= 1");
  if (cfg.bandwidth < 0.0) throw ConfigError("bandwidth must be >= 0");
  if (cfg.cca_rank < 0) throw ConfigError("cca_rank must be >= 0");
  if (cfg.ks.empty()) throw ConfigError("ks must list at least one cutoff");
  for (std::size_t k : cfg.ks)
    if (k == 0) throw ConfigError("ks entries must be >= 1");
  if (cfg.classify_k < 1 || cfg.topn_k < 1 || cfg.topn < 1) throw ConfigError("classify_k, topn_k, topn must be >= 1");
  if (cfg.threads < 1) throw ConfigError("threads must be >= 1");
}

// ---- data ----------------------------------------------------------------------------

struct ExperimentData {
  FeatureMatrix train;
  LabelVector train_labels;
  FeatureMatrix query;
  LabelVector query_labels;
  bool query_is_database = false;
  OutputEmbeddingTable table;
  SiblingRanking ranking;
};

inline OutputEmbeddingTable load_embedding_table(const ExperimentConfig& cfg) {
  if (!cfg.embeddings.empty()) return OutputEmbeddingTable(io::load_any_matrix(cfg.embeddings), cfg.center_embeddings);
  std::vector<std::int64_t> nodes;
  {
    std::ifstream is(cfg.class_nodes);
    if (!is) throw FormatError("cannot open class_nodes " + cfg.class_nodes);
    std::int64_t v = 0;
    while (is >> v) nodes.push_back(v);
  }
  return build_taxonomy_embeddings(io::load_hierarchy(cfg.hierarchy), nodes);
}

inline ExperimentData load_data(const ExperimentConfig& cfg) {
  ExperimentData data;
  if (cfg.synthetic) {
    SyntheticSpec spec = cfg.synth;
    spec.seed = stage_seed(cfg.seed, "synthetic");
    SyntheticData syn = generate_synthetic(spec);
    data.train = std::move(syn.train);
    data.train_labels = std::move(syn.train_labels);
    if (!syn.query.empty()) {
      data.query = std::move(syn.query);
      data.query_labels = std::move(syn.query_labels);
    }
    data.table = OutputEmbeddingTable(std::move(syn.embeddings), cfg.center_embeddings);
  } else {
    data.table = load_embedding_table(cfg);
    data.train = FeatureMatrix(io::load_any_matrix(cfg.train_features));
    data.train_labels = LabelVector(io::load_labels(cfg.train_labels), data.table.n_classes());
    if (!cfg.query_features.empty()) {
      data.query = FeatureMatrix(io::load_any_matrix(cfg.query_features));
      data.query_labels = LabelVector(io::load_labels(cfg.query_labels), data.table.n_classes());
    }
  }
  detail::require_same(data.train_labels.size(), static_cast<std::size_t>(data.train.n_items()),
                       "train labels vs train features");
  if (data.query.empty()) {
    data.query = data.train;
    data.query_labels = data.train_labels;
    data.query_is_database = true;
  }
  detail::require_same(data.query_labels.size(), static_cast<std::size_t>(data.query.n_items()),
                       "query labels vs query features");
  detail::require_same(static_cast<std::size_t>(data.query.dim()), static_cast<std::size_t>(data.train.dim()),
                       "query vs train feature dim");
  data.ranking = build_sibling_ranking(data.table);
  return data;
}

// ---- feature pipeline ------------------------------------------------------------------

struct FeaturePipeline {
  std::optional<KernelPipeline> kernel;
  std::optional<CcaModel> cca;
  PipelineOrder order = PipelineOrder::KernelFirst;

  FeatureMatrix apply(const FeatureMatrix& raw) const {
    FeatureMatrix x = raw;
    if (order == PipelineOrder::KernelFirst) {
      if (kernel) x = kernel->apply(x);
      if (cca) x = project(*cca, x);
    } else {
      if (cca) x = project(*cca, x);
      if (kernel) x = kernel->apply(x);
    }
    return x;
  }
};

inline Index resolve_cca_rank(const ExperimentConfig& cfg, Index feature_dim, Index embed_dim) {
  if (cfg.cca_rank > 0) return cfg.cca_rank;
  return std::min<Index>({static_cast<Index>(cfg.train.code_len), feature_dim, embed_dim});
}

inline FeaturePipeline fit_feature_pipeline(const ExperimentConfig& cfg, const FeatureMatrix& train,
                                            const LabelVector& labels, const OutputEmbeddingTable& table) {
  FeaturePipeline fp;
  fp.order = cfg.order;
  const Matrix per_item = table.per_item(labels);
  auto fit_kernel = [&](const FeatureMatrix& x) {
    KernelOptions opt;
    opt.n_anchors = cfg.anchors;
    opt.seed = stage_seed(cfg.seed, "anchors");
    opt.labels = &labels;
    if (cfg.bandwidth > 0.0) opt.bandwidth = cfg.bandwidth;
    fp.kernel = fit_kernel_pipeline(x, opt);
    return fp.kernel->apply(x);
  };
  auto fit_proj = [&](const FeatureMatrix& x) {
    CcaOptions opt;
    opt.rank = resolve_cca_rank(cfg, x.dim(), per_item.cols());
    if (cfg.cca_reg >= 0.0) opt.reg = cfg.cca_reg;
    fp.cca = fit_cca(x.values(), per_item, opt);
    return project(*fp.cca, x);
  };
  FeatureMatrix x = train;
  if (cfg.order == PipelineOrder::KernelFirst) {
    if (cfg.kernelize) x = fit_kernel(x);
    if (cfg.cca) x = fit_proj(x);
  } else {
    if (cfg.cca) x = fit_proj(x);
    if (cfg.kernelize) x = fit_kernel(x);
  }
  return fp;
}

/// Train a hash model on pipeline output; the train-set mean is stored as the model center.
inline HashModel fit_hash_model(const ExperimentConfig& cfg, const FeatureMatrix& features, const ExperimentData& data) {
  if (cfg.mode == "lsh") {
    return fit_lsh(features, cfg.train.code_len, stage_seed(cfg.seed, "lsh"), cfg.lsh_pca).to_hash_model();
  }
  Centered centered = mean_center(features);
  TrainConfig t = cfg.train;
  t.mode = parse_target_mode(cfg.mode);
  t.seed = stage_seed(cfg.seed, "train");
  HashModel model = train(centered.features, data.train_labels, data.ranking, t, &data.table);
  model.center = std::move(centered.mean);
  return model;
}

// ---- outputs ----------------------------------------------------------------------------

/// Thrown when a pipeline stage fails; carries the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "': " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

template <typename Fn>
auto run_stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

inline std::uint64_t file_hash(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return fnv1a(ss.str());
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Files written by a run; removed together when a later stage fails.
class OutputSet {
 public:
  explicit OutputSet(std::string dir) : dir_(std::move(dir)) {}

  bool enabled() const { return !dir_.empty(); }
  std::string path(const std::string& name) const { return (std::filesystem::path(dir_) / name).string(); }

  template <typename Writer>
  void write(const std::string& name, Writer&& writer, bool binary = true) {
    if (!enabled()) return;
    std::filesystem::create_directories(dir_);
    names_.push_back(name);
    std::ofstream os(path(name), binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!os) throw FormatError("cannot write " + path(name));
    writer(os);
    if (!os) throw FormatError("write failed: " + path(name));
  }

  const std::vector<std::string>& names() const { return names_; }

  void remove_all() noexcept {
    std::error_code ec;
    for (const auto& n : names_) std::filesystem::remove(path(n), ec);
    names_.clear();
  }

 private:
  std::string dir_;
  std::vector<std::string> names_;
};

struct ExperimentResult {
  MetricsReport report;
  Accuracies accuracies;
  HashModel model;
  PackedCodes database_codes;
  PackedCodes query_codes;
  BatchStats retrieval_stats;
  std::uint64_t config_hash = 0;
  std::vector<std::string> files;
};

inline std::string pipeline_manifest(const FeaturePipeline& fp) {
  std::ostringstream os;
  os << "order = " << (fp.order == PipelineOrder::KernelFirst ? "kernel_first" : "cca_first") << '\n'
     << "kernel = " << (fp.kernel ? "kernel.shk" : "") << '\n'
     << "cca = " << (fp.cca ? "cca.shcc" : "") << '\n';
  return os.str();
}

/// Write kernel.shk / cca.shcc / pipeline.txt / model.shw and fill the model's pipeline ids.
inline void write_model_files(OutputSet& out, const FeaturePipeline& fp, HashModel& model) {
  if (fp.kernel) {
    std::ostringstream buf;
    write_kernel_pipeline(buf, *fp.kernel);
    model.kernel_id = "kernel.shk:" + hex64(fnv1a(buf.str()));
    out.write("kernel.shk", [&](std::ostream& os) { os << buf.str(); });
  }
  if (fp.cca) {
    std::ostringstream buf;
    write_cca(buf, *fp.cca);
    model.cca_id = "cca.shcc:" + hex64(fnv1a(buf.str()));
    out.write("cca.shcc", [&](std::ostream& os) { os << buf.str(); });
  }
  out.write("pipeline.txt", [&](std::ostream& os) { os << pipeline_manifest(fp); }, false);
  out.write("model.shw", [&](std::ostream& os) { write_hash_model(os, model); });
}

/// Reload a pipeline written by write_model_files.
inline FeaturePipeline load_feature_pipeline(const std::string& dir) {
  const std::filesystem::path base(dir);
  std::ifstream is(base / "pipeline.txt");
  if (!is) throw FormatError("cannot read " + (base / "pipeline.txt").string());
  FeaturePipeline fp;
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (key == "order") fp.order = value == "cca_first" ? PipelineOrder::CcaFirst : PipelineOrder::KernelFirst;
    if (key == "kernel" && !value.empty()) {
      auto f = io::open_in((base / value).string());
      fp.kernel = read_kernel_pipeline(f);
    }
    if (key == "cca" && !value.empty()) {
      auto f = io::open_in((base / value).string());
      fp.cca = read_cca(f);
    }
  }
  return fp;
}

inline HashModel load_hash_model(const std::string& path) {
  auto is = io::open_in(path);
  return read_hash_model(is);
}

/// Full pipeline. With an empty output_dir nothing is written.
inline ExperimentResult run_experiment(ExperimentConfig cfg) {
  run_stage("config", [&] { validate_config(cfg); });
  ExperimentResult res;
  res.config_hash = config_hash(cfg);
  OutputSet out(cfg.output_dir);
  try {
    ExperimentData data = run_stage("load", [&] { return load_data(cfg); });
    if (data.query_is_database) cfg.exclude_self = true;

    FeaturePipeline fp = run_stage("features", [&] {
      return fit_feature_pipeline(cfg, data.train, data.train_labels, data.table);
    });
    const FeatureMatrix train_x = run_stage("features", [&] { return fp.apply(data.train); });
    const FeatureMatrix query_x = run_stage("features", [&] { return fp.apply(data.query); });

    res.model = run_stage("train", [&] { return fit_hash_model(cfg, train_x, data); });

    run_stage("encode", [&] {
      res.database_codes = pack(encode(res.model, train_x));
      res.query_codes = pack(encode(res.model, query_x));
    });

    const HammingIndex index(res.database_codes, data.train_labels);
    SearchOptions full;
    std::vector<RetrievalResult> results = run_stage("retrieve", [&] {
      return batch_search(index, res.query_codes, full, {}, cfg.threads, &res.retrieval_stats);
    });

    run_stage("evaluate", [&] {
      EvalOptions eo;
      eo.m = cfg.train.sibling_count;
      eo.ks = cfg.ks;
      eo.curve_depth = cfg.curve_depth;
      eo.exclude_self = cfg.exclude_self;
      res.report = evaluate(results, data.query_labels, data.train_labels, data.ranking, eo);
    });

    std::vector<ClassId> predictions;
    std::vector<std::vector<ClassId>> top;
    run_stage("classify", [&] {
      const PoolingClassifier top1(index, cfg.classify_k);
      const PoolingClassifier topn(index, cfg.topn_k);
      for (const auto& r : results) {
        std::vector<Hit> hits = r.ranked;
        if (cfg.exclude_self) std::erase_if(hits, [&](const Hit& h) { return h.item_id == r.query_id; });
        predictions.push_back(top1.vote(hits, 1).front());
        top.push_back(topn.vote(hits, cfg.topn));
      }
      res.accuracies = classification_accuracies(predictions, top, data.query_labels, data.ranking,
                                                 cfg.train.sibling_count);
    });

    run_stage("write", [&] {
      write_model_files(out, fp, res.model);
      out.write("database_codes.shc", [&](std::ostream& os) { io::write_codes(os, res.database_codes); });
      out.write("query_codes.shc", [&](std::ostream& os) { io::write_codes(os, res.query_codes); });
      out.write("database.ids", [&](std::ostream& os) {
        for (std::size_t i = 0; i < index.size(); ++i) os << i << ' ' << data.train_labels[i] << '\n';
      }, false);
      out.write("results.csv", [&](std::ostream& os) {
        std::vector<RetrievalResult> trimmed = results;
        for (auto& r : trimmed)
          if (r.ranked.size() > cfg.rank_depth) r.ranked.resize(cfg.rank_depth);
        write_results_csv(os, trimmed);
      }, false);
      out.write("metrics.csv", [&](std::ostream& os) { write_metrics_csv(os, res.report); }, false);
      out.write("metrics.txt", [&](std::ostream& os) {
        write_metrics_summary(os, res.report);
        os << std::setprecision(10) << "accuracy.top1 = " << res.accuracies.top1 << '\n'
           << "accuracy.top" << cfg.topn << " = " << res.accuracies.top5 << '\n'
           << "accuracy.sibling = " << res.accuracies.sibling << '\n'
           << "theta.final = " << res.model.final_theta() << '\n';
      }, false);
      out.write("curve.csv", [&](std::ostream& os) { write_curve_csv(os, res.report); }, false);
      out.write("per_query_ap.csv", [&](std::ostream& os) { write_per_query_csv(os, res.report); }, false);
      out.write("predictions.csv", [&](std::ostream& os) {
        os << "query_id,truth,predicted,top" << cfg.topn << '\n';
        for (std::size_t q = 0; q < predictions.size(); ++q) {
          os << q << ',' << data.query_labels[q] << ',' << predictions[q] << ',';
          for (std::size_t j = 0; j < top[q].size(); ++j) os << (j ? ";" : "") << top[q][j];
          os << '\n';
        }
      }, false);
      if (out.enabled()) {
        std::ostringstream manifest;
        manifest << "config_hash = " << hex64(res.config_hash) << '\n' << "seed = " << cfg.seed << '\n';
        manifest << "\n[config]\n" << canonical_text(cfg) << "\n[outputs]\n";
        for (const auto& name : out.names()) manifest << name << ' ' << hex64(file_hash(out.path(name))) << '\n';
        out.write("manifest.txt", [&](std::ostream& os) { os << manifest.str(); }, false);
      }
    });
  } catch (...) {
    out.remove_all();
    throw;
  }
  res.files = out.names();
  return res;
}

}  // namespace shoe
