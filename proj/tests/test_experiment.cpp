// Copyright 2026 The SHOE Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "shoe/experiment.hpp"

namespace shoe {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// Fresh scratch directory under the system temp dir.
fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("shoe_test_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig small_synthetic() {
  ExperimentConfig cfg;
  cfg.synthetic = true;
  cfg.synth.n_classes = 8;
  cfg.synth.n_superclasses = 2;
  cfg.synth.dim = 8;
  cfg.synth.per_class = 12;
  cfg.synth.queries_per_class = 3;
  cfg.anchors = 40;
  cfg.train.code_len = 8;
  cfg.train.grad_steps = 20;
  cfg.train.sibling_count = 4;
  cfg.ks = {5, 10};
  cfg.curve_depth = 10;
  cfg.seed = 17;
  return cfg;
}

TEST(Config, ParsesKeyValueLines) {
  std::istringstream is(
      "# comment\n"
      "mode = fixed   # trailing comment\n"
      "theta=-0.25\n"
      "\n"
      "ks = 5,15\n"
      "order = cca_first\n"
      "synthetic = yes\n"
      "code_len = 48\n");
  const ExperimentConfig cfg = parse_config(is);
  EXPECT_EQ(cfg.mode, "fixed");
  EXPECT_EQ(cfg.train.theta, -0.25);
  EXPECT_EQ(cfg.ks, (std::vector<std::size_t>{5, 15}));
  EXPECT_EQ(cfg.order, PipelineOrder::CcaFirst);
  EXPECT_TRUE(cfg.synthetic);
  EXPECT_EQ(cfg.train.code_len, 48u);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  std::istringstream unknown("mode = ksh\nbitz = 3\n");
  try {
    parse_config(unknown);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("bitz"), std::string::npos);
  }
  std::istringstream bad_bool("cca = maybe\n");
  EXPECT_THROW(parse_config(bad_bool), ConfigError);
  std::istringstream bad_num("anchors = 12x\n");
  EXPECT_THROW(parse_config(bad_num), ConfigError);
  std::istringstream no_eq("anchors 12\n");
  EXPECT_THROW(parse_config(no_eq), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/shoe.cfg"), ConfigError);
}

TEST(Config, CanonicalTextRoundTripsAndIgnoresLocation) {
  ExperimentConfig a = small_synthetic();
  a.mode = "fixed";
  a.train.theta = -0.3;
  std::istringstream is(canonical_text(a));
  const ExperimentConfig b = parse_config(is);
  EXPECT_EQ(canonical_text(b), canonical_text(a));
  ExperimentConfig c = a;
  c.output_dir = "/somewhere/else";
  c.threads = 4;
  EXPECT_EQ(config_hash(c), config_hash(a));
  c.seed = 18;
  EXPECT_NE(config_hash(c), config_hash(a));
}

TEST(Config, EnvironmentSeedOverride) {
  ExperimentConfig cfg;
  ::setenv("SHOE_SEED", "99", 1);
  apply_env_overrides(cfg);
  ::unsetenv("SHOE_SEED");
  EXPECT_EQ(cfg.seed, 99u);
}

TEST(Config, ValidationHappensBeforeAnyWrite) {
  const fs::path dir = scratch("validation");
  const fs::path feats = dir.string() + "_x.txt";
  const fs::path labels = dir.string() + "_y.txt";
  std::ofstream(feats) << "1 2\n3 4\n";
  std::ofstream(labels) << "0\n1\n";
  ExperimentConfig cfg;
  cfg.mode = "embedding";
  cfg.train_features = feats.string();
  cfg.train_labels = labels.string();
  cfg.output_dir = dir.string();
  try {
    run_experiment(cfg);
    FAIL() << "expected a config error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "config");
    EXPECT_NE(std::string(e.what()).find("embeddings"), std::string::npos);
  }
  EXPECT_FALSE(fs::exists(dir));
  cfg.embeddings = (dir / "missing.shm").string();
  EXPECT_THROW(run_experiment(cfg), StageError);
  EXPECT_FALSE(fs::exists(dir));
  fs::remove(feats);
  fs::remove(labels);

  ExperimentConfig modes = small_synthetic();
  modes.mode = "itq";
  EXPECT_THROW(validate_config(modes), ConfigError);
  modes.mode = "learned";
  modes.train.theta = 0.5;
  EXPECT_THROW(validate_config(modes), ConfigError);
}

TEST(Experiment, DeterministicOutputs) {
  const fs::path a = scratch("det_a");
  const fs::path b = scratch("det_b");
  ExperimentConfig cfg = small_synthetic();
  cfg.output_dir = a.string();
  const auto ra = run_experiment(cfg);
  cfg.output_dir = b.string();
  cfg.threads = 2;
  const auto rb = run_experiment(cfg);
  EXPECT_EQ(ra.files, rb.files);
  for (const std::string name : {"manifest.txt", "database_codes.shc", "query_codes.shc", "metrics.csv", "model.shw"})
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
  EXPECT_NE(slurp(a / "manifest.txt").find("config_hash = "), std::string::npos);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Experiment, KshAndLearnedProduceCompleteReports) {
  for (const std::string mode : {"ksh", "learned"}) {
    const fs::path dir = scratch("modes_" + mode);
    ExperimentConfig cfg = small_synthetic();
    cfg.mode = mode;
    cfg.output_dir = dir.string();
    const auto r = run_experiment(cfg);
    EXPECT_EQ(r.report.variants.size(), 3u);
    for (const auto& [v, vm] : r.report.variants) {
      EXPECT_GE(vm.mean_ap, 0.0);
      EXPECT_LE(vm.mean_ap, 1.0);
      EXPECT_EQ(vm.per_query_ap.size(), 24u);
    }
    for (const std::string name : {"model.shw", "kernel.shk", "pipeline.txt", "results.csv", "metrics.csv",
                                   "metrics.txt", "curve.csv", "per_query_ap.csv", "predictions.csv", "manifest.txt"})
      EXPECT_TRUE(fs::exists(dir / name)) << mode << ": " << name;
    EXPECT_EQ(r.model.tag, mode == "ksh" ? ModelTag::KSHBinary : ModelTag::LearnedTheta);
    fs::remove_all(dir);
  }
}

TEST(Experiment, ReloadedPipelineReproducesCodes) {
  const fs::path dir = scratch("reload");
  ExperimentConfig cfg = small_synthetic();
  cfg.cca = true;
  cfg.output_dir = dir.string();
  const auto r = run_experiment(cfg);
  const FeaturePipeline fp = load_feature_pipeline(dir.string());
  ASSERT_TRUE(fp.kernel.has_value());
  ASSERT_TRUE(fp.cca.has_value());
  const HashModel model = load_hash_model((dir / "model.shw").string());
  EXPECT_NE(model.kernel_id.find("kernel.shk:"), std::string::npos);
  SyntheticSpec spec = cfg.synth;
  spec.seed = stage_seed(cfg.seed, "synthetic");
  const auto data = generate_synthetic(spec);
  EXPECT_EQ(pack(encode(model, fp.apply(data.train))), r.database_codes);
  fs::remove_all(dir);
}

TEST(Experiment, StageFailureRemovesPartialOutputs) {
  const fs::path dir = scratch("cleanup");
  fs::create_directories(dir / "results.csv");  // a directory where a file must go
  ExperimentConfig cfg = small_synthetic();
  cfg.output_dir = dir.string();
  try {
    run_experiment(cfg);
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "write");
  }
  EXPECT_FALSE(fs::exists(dir / "model.shw"));
  EXPECT_FALSE(fs::exists(dir / "database_codes.shc"));
  EXPECT_FALSE(fs::exists(dir / "manifest.txt"));
  fs::remove_all(dir);

  ExperimentConfig bad_k = small_synthetic();
  bad_k.ks = {0};
  try {
    run_experiment(bad_k);
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "config");
  }

  const fs::path dir2 = scratch("cleanup_features");
  ExperimentConfig too_many = small_synthetic();
  too_many.anchors = 10000;
  too_many.output_dir = dir2.string();
  try {
    run_experiment(too_many);
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "features");
    EXPECT_NE(std::string(e.what()).find("anchors"), std::string::npos);
  }
  EXPECT_FALSE(fs::exists(dir2));
}

TEST(Synthetic, SingleSuperclassMakesEveryClassASibling) {
  SyntheticSpec spec;
  spec.n_classes = 6;
  spec.n_superclasses = 1;
  spec.per_class = 2;
  const auto data = generate_synthetic(spec);
  EXPECT_TRUE(data.warnings.empty());
  const auto ranking = build_sibling_ranking(data.embeddings);
  for (ClassId y = 0; y < 6; ++y) {
    EXPECT_EQ(data.superclass[y], 0u);
    for (ClassId z = 0; z < 6; ++z) EXPECT_EQ(in_sibling_window(ranking, y, z, 6), z != y);
  }
}

TEST(Synthetic, OneClassPerSuperclassWarns) {
  SyntheticSpec spec;
  spec.n_classes = 5;
  spec.n_superclasses = 5;
  spec.per_class = 2;
  const auto data = generate_synthetic(spec);
  ASSERT_EQ(data.warnings.size(), 1u);
  EXPECT_NE(data.warnings[0].find("own superclass"), std::string::npos);
}

TEST(Synthetic, RankingMatchesSuperclassPartition) {
  SyntheticSpec spec;
  spec.n_classes = 16;
  spec.n_superclasses = 4;
  spec.sib_spacing = 2.0;
  spec.far_spacing = 20.0;
  spec.per_class = 3;
  spec.seed = 5;
  const auto data = generate_synthetic(spec);
  const auto ranking = build_sibling_ranking(data.embeddings);
  for (ClassId y = 0; y < 16; ++y) {
    const auto order = ranking.ordered(y);
    for (std::uint32_t r = 0; r < 16; ++r) EXPECT_EQ(data.superclass[order[r]] == data.superclass[y], r < 4) << y;
  }
  // graded siblings: the chain neighbor ranks ahead of the chain end
  EXPECT_LT(ranking(0, 1), ranking(0, 3));
}

TEST(Synthetic, ValidationAndDeterminism) {
  SyntheticSpec spec;
  spec.n_classes = 10;
  spec.n_superclasses = 4;
  EXPECT_THROW(generate_synthetic(spec), DomainError);
  spec.n_superclasses = 2;
  spec.sib_spacing = 30.0;
  EXPECT_THROW(generate_synthetic(spec), DomainError);
  spec.sib_spacing = 1.0;
  spec.per_class = 4;
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  EXPECT_EQ(a.train.values(), b.train.values());
  EXPECT_EQ(a.query.values(), b.query.values());
  EXPECT_EQ(a.embeddings, b.embeddings);
  EXPECT_EQ(a.train.n_items(), 40);
  EXPECT_EQ(a.query.n_items(), 100);
}

TEST(Synthetic, WritesInputFiles) {
  const fs::path dir = scratch("synth_files");
  SyntheticSpec spec;
  spec.n_classes = 4;
  spec.n_superclasses = 2;
  spec.per_class = 3;
  const auto data = generate_synthetic(spec);
  const auto written = write_synthetic(data, dir.string());
  EXPECT_EQ(written.size(), 5u);
  EXPECT_EQ(io::load_matrix((dir / "train_features.shm").string()), data.train.values());
  EXPECT_EQ(io::load_labels((dir / "train_labels.txt").string()), data.train_labels.values());
  fs::remove_all(dir);
}

}  // namespace
}  // namespace shoe
