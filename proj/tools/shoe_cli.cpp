// Copyright 2026 The SHOE Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "shoe/shoe.hpp"

namespace {

using shoe::ExperimentConfig;

/// One `--<key>` option per configuration key, plus `--config`.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "flat key = value configuration file")->check(CLI::ExistingFile);
    for (const auto& key : shoe::config_keys()) app->add_option("--" + key.name, values[key.name], key.help);
  }

  ExperimentConfig resolve(CLI::App* app) const {
    ExperimentConfig cfg;
    if (!config_file.empty()) cfg = shoe::load_config(config_file);
    shoe::apply_env_overrides(cfg);
    for (const auto& [name, value] : values) {
      if (app->count("--" + name) > 0) shoe::set_config_value(cfg, name, value);
    }
    return cfg;
  }
};

shoe::FeatureMatrix load_features(const std::string& path) {
  return shoe::FeatureMatrix(shoe::io::load_any_matrix(path));
}

/// Rebuild ranked lists from results.csv against a loaded database index.
std::vector<shoe::RetrievalResult> read_results_csv(const std::string& path, const shoe::HammingIndex& db,
                                                    const shoe::HammingIndex& queries) {
  std::map<shoe::ItemId, std::size_t> db_pos;
  for (std::size_t i = 0; i < db.size(); ++i) db_pos[db.item_ids()[i]] = i;
  std::map<shoe::ItemId, std::size_t> q_pos;
  for (std::size_t i = 0; i < queries.size(); ++i) q_pos[queries.item_ids()[i]] = i;

  std::vector<shoe::RetrievalResult> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) out[i].query_id = queries.item_ids()[i];
  std::ifstream is(path);
  if (!is) throw shoe::FormatError("cannot read " + path);
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    shoe::ItemId qid = 0;
    std::size_t rank = 0;
    shoe::ItemId item = 0;
    std::uint32_t dist = 0;
    if (!(ls >> qid >> rank >> item >> dist)) throw shoe::FormatError("bad results row: " + line);
    const auto q = q_pos.find(qid);
    const auto d = db_pos.find(item);
    if (q == q_pos.end() || d == db_pos.end()) throw shoe::FormatError("results row names an unknown id: " + line);
    out[q->second].ranked.push_back({d->second, item, dist});
  }
  return out;
}

shoe::SiblingRanking ranking_from(const std::string& embeddings, bool center) {
  return shoe::build_sibling_ranking(shoe::OutputEmbeddingTable(shoe::io::load_any_matrix(embeddings), center));
}

void print_report(const shoe::MetricsReport& report) {
  for (const auto& [v, vm] : report.variants) std::cout << shoe::to_string(v) << " mAP " << vm.mean_ap << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Supervised hashing with output embeddings"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic class hierarchy dataset");
  ConfigFlags synth_flags;
  synth_flags.attach(synth);
  std::string synth_out;
  synth->add_option("--out", synth_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "fit the feature pipeline and hash model");
  ConfigFlags train_flags;
  train_flags.attach(train);

  // encode
  auto* enc = app.add_subcommand("encode", "encode features into packed codes");
  std::string enc_model;
  std::string enc_features;
  std::string enc_labels;
  std::string enc_out;
  enc->add_option("--model", enc_model, "directory written by train")->required()->check(CLI::ExistingDirectory);
  enc->add_option("--features", enc_features, "features (SHM1 or text)")->required()->check(CLI::ExistingFile);
  enc->add_option("--labels", enc_labels, "optional labels stored in the .ids sidecar")->check(CLI::ExistingFile);
  enc->add_option("--out", enc_out, "output prefix: <out>.shc and <out>.ids")->required();

  // retrieve
  auto* ret = app.add_subcommand("retrieve", "rank a database for every query by Hamming distance");
  std::string ret_db;
  std::string ret_q;
  std::string ret_out;
  std::size_t ret_k = 100;
  unsigned ret_threads = 1;
  ret->add_option("--database", ret_db, "database prefix from encode")->required();
  ret->add_option("--queries", ret_q, "query prefix from encode")->required();
  ret->add_option("--k", ret_k, "results per query (0: all)");
  ret->add_option("--threads", ret_threads, "query threads")->check(CLI::PositiveNumber);
  ret->add_option("--out", ret_out, "results CSV")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "score a results CSV");
  std::string ev_db;
  std::string ev_q;
  std::string ev_results;
  std::string ev_emb;
  std::string ev_out;
  bool ev_center = true;
  shoe::EvalOptions ev_opt;
  ev_opt.curve_depth = 100;
  ev->add_option("--database", ev_db, "labelled database prefix")->required();
  ev->add_option("--queries", ev_q, "labelled query prefix")->required();
  ev->add_option("--results", ev_results, "results CSV from retrieve")->required()->check(CLI::ExistingFile);
  ev->add_option("--embeddings", ev_emb, "class embedding table")->required()->check(CLI::ExistingFile);
  ev->add_option("--center_embeddings", ev_center, "mean-center embedding columns");
  ev->add_option("--m", ev_opt.m, "sibling window size");
  ev->add_option("--ks", ev_opt.ks, "precision/recall cutoffs")->delimiter(',');
  ev->add_option("--curve_depth", ev_opt.curve_depth, "curve length");
  ev->add_flag("--exclude_self", ev_opt.exclude_self, "drop hits whose id equals the query id");
  ev->add_option("--out", ev_out, "output directory")->required();

  // classify
  auto* cls = app.add_subcommand("classify", "k-nn pooling classification of query codes");
  std::string cls_db;
  std::string cls_q;
  std::string cls_out;
  std::string cls_emb;
  std::size_t cls_k = 10;
  std::size_t cls_topn = 5;
  std::size_t cls_topn_k = 50;
  std::uint32_t cls_m = 6;
  cls->add_option("--database", cls_db, "labelled database prefix")->required();
  cls->add_option("--queries", cls_q, "query prefix")->required();
  cls->add_option("--k", cls_k, "neighbors pooled for the top-1 vote")->check(CLI::PositiveNumber);
  cls->add_option("--topn", cls_topn, "classes listed per query")->check(CLI::PositiveNumber);
  cls->add_option("--topn_k", cls_topn_k, "neighbors pooled for the top-n list")->check(CLI::PositiveNumber);
  cls->add_option("--embeddings", cls_emb, "class embeddings, for sibling accuracy")->check(CLI::ExistingFile);
  cls->add_option("--m", cls_m, "sibling window size");
  cls->add_option("--out", cls_out, "predictions CSV")->required();

  // run
  auto* run = app.add_subcommand("run", "full pipeline: kernelize, CCA, train, encode, retrieve, evaluate, classify");
  ConfigFlags run_flags;
  run_flags.attach(run);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      ExperimentConfig cfg = synth_flags.resolve(synth);
      shoe::SyntheticSpec spec = cfg.synth;
      spec.seed = shoe::stage_seed(cfg.seed, "synthetic");
      const shoe::SyntheticData data = shoe::generate_synthetic(spec);
      for (const auto& w : data.warnings) std::cerr << "warning: " << w << '\n';
      for (const auto& f : shoe::write_synthetic(data, synth_out)) std::cout << f << '\n';
    } else if (train->parsed()) {
      ExperimentConfig cfg = train_flags.resolve(train);
      shoe::run_stage("config", [&] { shoe::validate_config(cfg); });
      if (cfg.output_dir.empty()) throw shoe::ConfigError("train needs output_dir");
      shoe::OutputSet out(cfg.output_dir);
      try {
        const auto data = shoe::run_stage("load", [&] { return shoe::load_data(cfg); });
        const auto fp = shoe::run_stage("features", [&] {
          return shoe::fit_feature_pipeline(cfg, data.train, data.train_labels, data.table);
        });
        const auto x = shoe::run_stage("features", [&] { return fp.apply(data.train); });
        auto model = shoe::run_stage("train", [&] { return shoe::fit_hash_model(cfg, x, data); });
        shoe::run_stage("write", [&] { shoe::write_model_files(out, fp, model); });
        std::cout << "bits " << model.code_len() << " theta " << model.final_theta() << '\n';
      } catch (...) {
        out.remove_all();
        throw;
      }
    } else if (enc->parsed()) {
      const auto fp = shoe::load_feature_pipeline(enc_model);
      const auto model = shoe::load_hash_model((std::filesystem::path(enc_model) / "model.shw").string());
      const auto codes = shoe::pack(shoe::encode(model, fp.apply(load_features(enc_features))));
      std::optional<shoe::LabelVector> labels;
      if (!enc_labels.empty()) labels = shoe::LabelVector::infer(shoe::io::load_labels(enc_labels));
      shoe::save_index(enc_out, shoe::HammingIndex(codes, labels));
    } else if (ret->parsed()) {
      const auto db = shoe::load_index(ret_db);
      const auto queries = shoe::load_index(ret_q);
      shoe::SearchOptions opt;
      opt.k = ret_k == 0 ? shoe::kAll : ret_k;
      shoe::BatchStats stats;
      const auto results = shoe::batch_search(db, queries.codes(), opt, queries.item_ids(), ret_threads, &stats);
      std::ofstream os(ret_out, std::ios::trunc);
      if (!os) throw shoe::FormatError("cannot write " + ret_out);
      shoe::write_results_csv(os, results);
      std::cerr << stats.queries << " queries, " << stats.codes_per_second() << " codes/s\n";
    } else if (ev->parsed()) {
      const auto db = shoe::load_index(ev_db);
      const auto queries = shoe::load_index(ev_q);
      const auto results = read_results_csv(ev_results, db, queries);
      const auto ranking = ranking_from(ev_emb, ev_center);
      const auto report = shoe::evaluate(results, queries.labels(), db.labels(), ranking, ev_opt);
      shoe::OutputSet out(ev_out);
      out.write("metrics.csv", [&](std::ostream& os) { shoe::write_metrics_csv(os, report); }, false);
      out.write("metrics.txt", [&](std::ostream& os) { shoe::write_metrics_summary(os, report); }, false);
      out.write("curve.csv", [&](std::ostream& os) { shoe::write_curve_csv(os, report); }, false);
      out.write("per_query_ap.csv", [&](std::ostream& os) { shoe::write_per_query_csv(os, report); }, false);
      print_report(report);
    } else if (cls->parsed()) {
      const auto db = shoe::load_index(cls_db);
      const auto queries = shoe::load_index(cls_q);
      const shoe::PoolingClassifier top1(db, cls_k);
      const shoe::PoolingClassifier topn(db, cls_topn_k);
      std::vector<shoe::ClassId> pred;
      std::vector<std::vector<shoe::ClassId>> top;
      std::ofstream os(cls_out, std::ios::trunc);
      if (!os) throw shoe::FormatError("cannot write " + cls_out);
      os << "query_id,predicted,top" << cls_topn << '\n';
      for (std::size_t q = 0; q < queries.size(); ++q) {
        const auto row = queries.codes().row(static_cast<shoe::Index>(q));
        pred.push_back(top1.predict(row));
        top.push_back(topn.predict_topn(row, cls_topn));
        os << queries.item_ids()[q] << ',' << pred.back() << ',';
        for (std::size_t j = 0; j < top.back().size(); ++j) os << (j ? ";" : "") << top.back()[j];
        os << '\n';
      }
      if (queries.has_labels() && !cls_emb.empty()) {
        const auto acc =
            shoe::classification_accuracies(pred, top, queries.labels(), ranking_from(cls_emb, true), cls_m);
        std::cout << "top1 " << acc.top1 << " top" << cls_topn << ' ' << acc.top5 << " sibling " << acc.sibling << '\n';
      }
    } else if (run->parsed()) {
      const auto res = shoe::run_experiment(run_flags.resolve(run));
      print_report(res.report);
      std::cout << "top1 " << res.accuracies.top1 << " theta " << res.model.final_theta() << '\n';
      std::cerr << res.retrieval_stats.codes_per_second() << " codes/s\n";
    }
  } catch (const shoe::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
