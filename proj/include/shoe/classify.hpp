// Copyright 2026 The SHOE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <vector>

#include "shoe/retrieval.hpp"

namespace shoe {

/// Majority vote over the top-k Hamming neighbors. Vote ties go to the class
/// whose best-ranked neighbor appears first, then to the lower class id.
class PoolingClassifier {
 public:
  PoolingClassifier(const HammingIndex& index, std::size_t k = 10) : index_(&index), k_(k) {
    if (k_ < 1) throw DomainError("pooling classifier: k must be >= 1");
    if (!index.has_labels()) throw DomainError("pooling classifier: index has no labels");
  }

  std::size_t k() const { return k_; }

  /// Classes ordered by descending vote, at most n of them.
  std::vector<ClassId> predict_topn(const PackedRow& query, std::size_t n) const {
    if (n < 1) throw DomainError("predict_topn: n must be >= 1");
    return vote(search(*index_, query, k_).ranked, n);
  }

  ClassId predict(const PackedRow& query) const { return predict_topn(query, 1).front(); }

  /// Vote over an already-ranked neighbor list (the first k entries are used).
  std::vector<ClassId> vote(const std::vector<Hit>& ranked, std::size_t n) const {
    if (index_->size() == 0 || ranked.empty()) throw DomainError("pooling classifier: empty index");
    struct Tally {
      std::size_t votes = 0;
      std::size_t best_rank = 0;
    };
    std::map<ClassId, Tally> tally;
    const std::size_t depth = std::min(k_, ranked.size());
    for (std::size_t r = 0; r < depth; ++r) {
      const ClassId y = index_->labels()[ranked[r].index];
      auto it = tally.try_emplace(y, Tally{0, r}).first;
      ++it->second.votes;
    }
    std::vector<std::pair<ClassId, Tally>> order(tally.begin(), tally.end());
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      if (a.second.votes != b.second.votes) return a.second.votes > b.second.votes;
      if (a.second.best_rank != b.second.best_rank) return a.second.best_rank < b.second.best_rank;
      return a.first < b.first;
    });
    std::vector<ClassId> out;
    for (std::size_t i = 0; i < order.size() && i < n; ++i) out.push_back(order[i].first);
    return out;
  }

 private:
  const HammingIndex* index_;
  std::size_t k_;
};

}  // namespace shoe
