// Copyright 2026 The SHOE Authors
// SPDX-License-Identifier: Apache-2.0

// Exhaustive Hamming ranking over a packed code database.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "shoe/core.hpp"
#include "shoe/io.hpp"
#include "shoe/random.hpp"

namespace shoe {

using ItemId = std::uint64_t;

inline constexpr std::size_t kAll = std::numeric_limits<std::size_t>::max();

class HammingIndex {
 public:
  HammingIndex() = default;

  /// Item ids default to 0..N-1.
  explicit HammingIndex(PackedCodes codes, std::optional<LabelVector> labels = std::nullopt,
                        std::vector<ItemId> item_ids = {})
      : codes_(std::move(codes)), ids_(std::move(item_ids)), labels_(std::move(labels)) {
    const auto n = static_cast<std::size_t>(codes_.n_items());
    if (ids_.empty()) {
      ids_.resize(n);
      for (std::size_t i = 0; i < n; ++i) ids_[i] = i;
    }
    detail::require_same(ids_.size(), n, "hamming index: item ids vs codes");
    if (labels_) detail::require_same(labels_->size(), n, "hamming index: labels vs codes");
    if (std::set<ItemId>(ids_.begin(), ids_.end()).size() != n) throw DomainError("hamming index: duplicate item ids");
  }

  std::size_t size() const { return ids_.size(); }
  std::uint32_t code_len() const { return codes_.code_len(); }
  const PackedCodes& codes() const { return codes_; }
  const std::vector<ItemId>& item_ids() const { return ids_; }
  bool has_labels() const { return labels_.has_value(); }
  const LabelVector& labels() const {
    if (!labels_) throw DomainError("hamming index has no labels");
    return *labels_;
  }

 private:
  PackedCodes codes_;
  std::vector<ItemId> ids_;
  std::optional<LabelVector> labels_;
};

struct Hit {
  std::size_t index = 0;  // position in the database
  ItemId item_id = 0;
  std::uint32_t distance = 0;
  bool operator==(const Hit&) const = default;
};

struct RetrievalResult {
  ItemId query_id = 0;
  std::vector<Hit> ranked;  // ascending distance, ties by database position
  bool operator==(const RetrievalResult&) const = default;
};

struct SearchOptions {
  std::size_t k = kAll;
  /// Shuffle within equal-distance groups instead of the stable index order.
  std::optional<std::uint64_t> tie_shuffle_seed;
};

/// Top-k by ascending Hamming distance, counting-sorted over distance buckets.
inline RetrievalResult search(const HammingIndex& index, const PackedRow& query, const SearchOptions& opt,
                              ItemId query_id = 0) {
  detail::require_same(query.code_len, index.code_len(), "search: query vs database code length");
  const std::size_t n = index.size();
  const std::uint32_t c = index.code_len();
  std::vector<std::uint32_t> dist(n);
  std::vector<std::size_t> bucket_start(static_cast<std::size_t>(c) + 2, 0);
  for (std::size_t i = 0; i < n; ++i) {
    dist[i] = hamming_distance(index.codes().row(static_cast<Index>(i)), query);
    ++bucket_start[dist[i] + 1];
  }
  for (std::size_t b = 1; b < bucket_start.size(); ++b) bucket_start[b] += bucket_start[b - 1];
  std::vector<std::size_t> order(n);
  {
    std::vector<std::size_t> cursor(bucket_start.begin(), bucket_start.end() - 1);
    for (std::size_t i = 0; i < n; ++i) order[cursor[dist[i]]++] = i;
  }
  if (opt.tie_shuffle_seed) {
    Rng rng = make_rng(*opt.tie_shuffle_seed ^ query_id);
    for (std::uint32_t d = 0; d <= c; ++d) {
      std::shuffle(order.begin() + static_cast<std::ptrdiff_t>(bucket_start[d]),
                   order.begin() + static_cast<std::ptrdiff_t>(bucket_start[d + 1]), rng);
    }
  }
  const std::size_t k = std::min(opt.k, n);
  RetrievalResult out;
  out.query_id = query_id;
  out.ranked.reserve(k);
  for (std::size_t r = 0; r < k; ++r) out.ranked.push_back({order[r], index.item_ids()[order[r]], dist[order[r]]});
  return out;
}

inline RetrievalResult search(const HammingIndex& index, const PackedRow& query, std::size_t k = kAll,
                              ItemId query_id = 0) {
  SearchOptions opt;
  opt.k = k;
  return search(index, query, opt, query_id);
}

struct BatchStats {
  std::size_t queries = 0;
  std::size_t codes_compared = 0;
  double seconds = 0.0;
  double codes_per_second() const { return seconds > 0.0 ? static_cast<double>(codes_compared) / seconds : 0.0; }
};

/// search() for every query row, in query order. Queries are split across `threads`.
inline std::vector<RetrievalResult> batch_search(const HammingIndex& index, const PackedCodes& queries,
                                                 const SearchOptions& opt, std::vector<ItemId> query_ids = {},
                                                 unsigned threads = 1, BatchStats* stats = nullptr) {
  detail::require_same(queries.code_len(), index.code_len(), "batch_search: query vs database code length");
  const auto q = static_cast<std::size_t>(queries.n_items());
  if (query_ids.empty()) {
    query_ids.resize(q);
    for (std::size_t i = 0; i < q; ++i) query_ids[i] = i;
  }
  detail::require_same(query_ids.size(), q, "batch_search: query ids vs queries");
  std::vector<RetrievalResult> out(q);
  const auto start = std::chrono::steady_clock::now();
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i)
      out[i] = search(index, queries.row(static_cast<Index>(i)), opt, query_ids[i]);
  };
  threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(q, 1))));
  if (threads == 1) {
    work(0, q);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (q + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t lo = std::min(q, t * chunk);
      const std::size_t hi = std::min(q, lo + chunk);
      pool.emplace_back(work, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  if (stats != nullptr) {
    stats->queries = q;
    stats->codes_compared = q * index.size();
    stats->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return out;
}

inline std::vector<RetrievalResult> batch_search(const HammingIndex& index, const PackedCodes& queries,
                                                 std::size_t k = kAll) {
  SearchOptions opt;
  opt.k = k;
  return batch_search(index, queries, opt);
}

/// CSV rows `query_id,rank,item_id,distance`; rank starts at 1.
inline void write_results_csv(std::ostream& os, const std::vector<RetrievalResult>& results) {
  os << "query_id,rank,item_id,distance\n";
  for (const auto& r : results)
    for (std::size_t k = 0; k < r.ranked.size(); ++k)
      os << r.query_id << ',' << (k + 1) << ',' << r.ranked[k].item_id << ',' << r.ranked[k].distance << '\n';
}

/// Index as `<prefix>.shc` (codes) and `<prefix>.ids` (lines `item_id [label]`).
inline void save_index(const std::string& prefix, const HammingIndex& index) {
  io::save_codes(prefix + ".shc", index.codes());
  std::ofstream os(prefix + ".ids", std::ios::trunc);
  if (!os) throw FormatError("cannot write " + prefix + ".ids");
  for (std::size_t i = 0; i < index.size(); ++i) {
    os << index.item_ids()[i];
    if (index.has_labels()) os << ' ' << index.labels()[i];
    os << '\n';
  }
}

inline HammingIndex load_index(const std::string& prefix) {
  PackedCodes codes = io::load_codes(prefix + ".shc");
  std::ifstream is(prefix + ".ids");
  if (!is) throw FormatError("cannot read " + prefix + ".ids");
  std::vector<ItemId> ids;
  std::vector<ClassId> labels;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    ItemId id = 0;
    if (!(ls >> id)) continue;
    ids.push_back(id);
    ClassId y = 0;
    if (ls >> y) labels.push_back(y);
  }
  std::optional<LabelVector> lv;
  if (!labels.empty()) {
    detail::require_same(labels.size(), ids.size(), "index sidecar: labelled vs unlabelled rows");
    lv = LabelVector::infer(std::move(labels));
  }
  return HammingIndex(std::move(codes), std::move(lv), std::move(ids));
}

}  // namespace shoe
