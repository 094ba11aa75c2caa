// Copyright 2026 The SHOE Authors
// SPDX-License-Identifier: Apache-2.0

// Trains 32-bit codes on a small synthetic hierarchy with and without
// sibling supervision and prints retrieval quality for both.

#include <iomanip>
#include <iostream>

#include "shoe/shoe.hpp"

int main() {
  shoe::SyntheticSpec spec;
  spec.per_class = 20;
  spec.queries_per_class = 5;
  spec.seed = 7;
  const shoe::SyntheticData data = shoe::generate_synthetic(spec);
  const shoe::OutputEmbeddingTable table(data.embeddings);
  const shoe::SiblingRanking ranking = shoe::build_sibling_ranking(table);

  const shoe::KernelPipeline kernel = shoe::fit_kernel_pipeline(data.train, 100, 7);
  const shoe::FeatureMatrix train_x = kernel.apply(data.train);
  const shoe::FeatureMatrix query_x = kernel.apply(data.query);

  std::cout << std::fixed << std::setprecision(3);
  for (const auto mode : {shoe::TargetMode::KSHBinary, shoe::TargetMode::FixedTheta}) {
    shoe::TrainConfig cfg;
    cfg.code_len = 32;
    cfg.mode = mode;
    cfg.grad_steps = 100;
    const shoe::HashModel model = shoe::train(train_x, data.train_labels, ranking, cfg, &table);

    const shoe::HammingIndex index(shoe::pack(shoe::encode(model, train_x)), data.train_labels);
    const auto results = shoe::batch_search(index, shoe::pack(shoe::encode(model, query_x)));
    const auto report = shoe::evaluate(results, data.query_labels, data.train_labels, ranking, {});

    std::cout << shoe::to_string(mode) << ":";
    for (const auto& [variant, vm] : report.variants) std::cout << "  " << shoe::to_string(variant) << " mAP " << vm.mean_ap;
    std::cout << '\n';
  }
}
