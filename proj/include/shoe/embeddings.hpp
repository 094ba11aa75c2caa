// Copyright 2026 The SHOE Authors
// SPDX-License-Identifier: Apache-2.0

// Output embeddings psi(y), the class ranking R_y derived from them, and the
// per-pair similarity targets o_ij the hash functions are fitted to.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "shoe/core.hpp"
#include "shoe/io.hpp"

namespace shoe {

/// Class embedding table: raw rows psi(y) and unit-norm rows psi_bar(y).
class OutputEmbeddingTable {
 public:
  OutputEmbeddingTable() = default;

  /// Columns are mean-centered before normalization when `center_columns` is set.
  explicit OutputEmbeddingTable(Matrix raw, bool center_columns = true) : raw_(std::move(raw)) {
    if (raw_.rows() < 1 || raw_.cols() < 1) throw DomainError("embedding table must be non-empty");
    if (!raw_.allFinite()) throw DomainError("embedding table contains NaN or Inf");
    Matrix work = raw_;
    if (center_columns) work.rowwise() -= work.colwise().mean();
    normalized_ = normalize_rows(work);
  }

  /// Unit-normalize every row. A zero row has no direction and is rejected.
  static Matrix normalize_rows(const Matrix& m) {
    Matrix out = m;
    for (Index y = 0; y < out.rows(); ++y) {
      const double norm = out.row(y).norm();
      if (!(norm > 0.0)) {
        throw DegenerateData("embedding row " + std::to_string(y) +
                             " has zero norm and cannot be normalized");
      }
      out.row(y) /= norm;
    }
    return out;
  }

  std::uint32_t n_classes() const { return static_cast<std::uint32_t>(raw_.rows()); }
  Index embed_dim() const { return raw_.cols(); }
  const Matrix& raw() const { return raw_; }
  const Matrix& normalized() const { return normalized_; }

  /// psi_bar(a) . psi_bar(b), clamped into [-1, 1] against rounding.
  double similarity(ClassId a, ClassId b) const {
    return std::clamp(normalized_.row(a).dot(normalized_.row(b)), -1.0, 1.0);
  }

  /// Per-item embedding matrix (row i = psi(labels[i])).
  Matrix per_item(const LabelVector& labels, bool normalized_rows = false) const {
    const Matrix& src = normalized_rows ? normalized_ : raw_;
    Matrix out(static_cast<Index>(labels.size()), src.cols());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= n_classes()) throw DomainError("label without an embedding row");
      out.row(static_cast<Index>(i)) = src.row(labels[i]);
    }
    return out;
  }

 private:
  Matrix raw_;
  Matrix normalized_;
};

/// rank(y, z): position of class z when all classes are sorted by embedding
/// distance from y. rank(y, y) = 0 and each row is a permutation of 0..L-1.
class SiblingRanking {
 public:
  SiblingRanking() = default;
  SiblingRanking(std::uint32_t n_classes, std::vector<std::uint32_t> ranks)
      : n_(n_classes), rank_(std::move(ranks)) {
    detail::require_same(rank_.size(), static_cast<std::size_t>(n_) * n_, "sibling ranking size");
  }

  std::uint32_t n_classes() const { return n_; }
  std::uint32_t operator()(ClassId query, ClassId other) const {
    return rank_[static_cast<std::size_t>(query) * n_ + other];
  }

  /// Classes in ranked order for `query` (position 0 is the class itself).
  std::vector<ClassId> ordered(ClassId query) const {
    std::vector<ClassId> out(n_);
    for (ClassId z = 0; z < n_; ++z) out[(*this)(query, z)] = z;
    return out;
  }

  bool operator==(const SiblingRanking&) const = default;

 private:
  std::uint32_t n_ = 0;
  std::vector<std::uint32_t> rank_;
};

/// Sort by Euclidean distance between raw embeddings; self first, ties by class id.
inline SiblingRanking build_sibling_ranking(const Matrix& embeddings) {
  const auto n = static_cast<std::uint32_t>(embeddings.rows());
  if (n < 2) throw DomainError("sibling ranking needs at least 2 classes");
  std::vector<std::uint32_t> ranks(static_cast<std::size_t>(n) * n);
  std::vector<double> dist(n);
  std::vector<ClassId> order(n);
  for (ClassId y = 0; y < n; ++y) {
    for (ClassId z = 0; z < n; ++z) dist[z] = (embeddings.row(y) - embeddings.row(z)).squaredNorm();
    std::iota(order.begin(), order.end(), ClassId{0});
    std::stable_sort(order.begin(), order.end(), [&](ClassId a, ClassId b) {
      if (a == y || b == y) return a == y && b != y;
      return dist[a] < dist[b];
    });
    for (std::uint32_t r = 0; r < n; ++r) ranks[static_cast<std::size_t>(y) * n + order[r]] = r;
  }
  return SiblingRanking(n, std::move(ranks));
}

inline SiblingRanking build_sibling_ranking(const OutputEmbeddingTable& table) {
  return build_sibling_ranking(table.raw());
}

enum class TargetMode : std::uint32_t { Embedding = 0, FixedTheta = 1, LearnedTheta = 2, KSHBinary = 3 };

inline std::string to_string(TargetMode mode) {
  switch (mode) {
    case TargetMode::Embedding: return "embedding";
    case TargetMode::FixedTheta: return "fixed";
    case TargetMode::LearnedTheta: return "learned";
    case TargetMode::KSHBinary: return "ksh";
  }
  return "unknown";
}

inline TargetMode parse_target_mode(const std::string& s) {
  if (s == "embedding" || s == "E") return TargetMode::Embedding;
  if (s == "fixed") return TargetMode::FixedTheta;
  if (s == "learned" || s == "L") return TargetMode::LearnedTheta;
  if (s == "ksh") return TargetMode::KSHBinary;
  throw DomainError("unknown target mode: " + s);
}

enum class PairCategory : std::uint8_t { Same = 0, Sibling = 1, Unrelated = 2 };

/// Target definition for training pairs.
struct PairTargetSpec {
  TargetMode mode = TargetMode::LearnedTheta;
  /// Related classes per query class, counting the class itself.
  std::uint32_t sibling_count = 6;
};

struct PairTarget {
  double value = 0.0;
  PairCategory category = PairCategory::Unrelated;
};

/// Query-directional test: z is within y's window of m-1 nearest other classes.
inline bool in_sibling_window(const SiblingRanking& ranking, ClassId y, ClassId z, std::uint32_t m) {
  const std::uint32_t r = ranking(y, z);
  return r >= 1 && r + 1 <= m;
}

/// Training-side category. Sibling status is symmetrized: either direction qualifies.
inline PairCategory training_category(const SiblingRanking& ranking, ClassId a, ClassId b, std::uint32_t m) {
  if (a == b) return PairCategory::Same;
  if (in_sibling_window(ranking, a, b, m) || in_sibling_window(ranking, b, a, m)) return PairCategory::Sibling;
  return PairCategory::Unrelated;
}

inline PairTarget pair_target(const PairTargetSpec& spec, ClassId a, ClassId b, const SiblingRanking& ranking,
                              const OutputEmbeddingTable* table, double theta) {
  const PairCategory cat = training_category(ranking, a, b, spec.sibling_count);
  if (cat == PairCategory::Same) return {1.0, cat};
  switch (spec.mode) {
    case TargetMode::Embedding:
      if (table == nullptr) throw DomainError("embedding targets need an output embedding table");
      return {table->similarity(a, b), cat};
    case TargetMode::FixedTheta:
    case TargetMode::LearnedTheta:
      if (theta < -1.0 || theta > 1.0) throw DomainError("theta must lie in [-1, 1]");
      return {cat == PairCategory::Sibling ? theta : -1.0, cat};
    case TargetMode::KSHBinary:
      return {-1.0, cat};
  }
  return {-1.0, cat};
}

/// Ancestor-indicator embeddings from a parent-pointer forest. Row i has a 1 in
/// column j iff node j is class i's node or one of its ancestors. Columns are
/// the nodes in ascending id order. Rows are normalized without centering.
inline OutputEmbeddingTable build_taxonomy_embeddings(const std::vector<io::HierarchyEdge>& edges,
                                                      const std::vector<std::int64_t>& leaf_nodes) {
  std::map<std::int64_t, std::int64_t> parent;
  for (const auto& e : edges) {
    auto [it, inserted] = parent.emplace(e.child, e.parent);
    if (!inserted && it->second != e.parent) {
      throw DomainError("node " + std::to_string(e.child) + " has more than one parent");
    }
  }
  for (const auto& e : edges) {
    if (e.parent != -1 && !parent.contains(e.parent)) parent.emplace(e.parent, -1);
  }
  std::map<std::int64_t, Index> column;
  for (const auto& [node, _] : parent) column.emplace(node, static_cast<Index>(column.size()));
  const auto n_nodes = static_cast<Index>(column.size());
  for (const auto& [start, _] : parent) {
    auto node = start;
    for (Index steps = 0; node != -1; ++steps) {
      if (steps > n_nodes) throw DomainError("cycle detected in hierarchy through node " + std::to_string(start));
      node = parent.at(node);
    }
  }

  Matrix raw = Matrix::Zero(static_cast<Index>(leaf_nodes.size()), n_nodes);
  for (std::size_t i = 0; i < leaf_nodes.size(); ++i) {
    auto node = leaf_nodes[i];
    if (!column.contains(node)) throw DomainError("unknown leaf node id " + std::to_string(node));
    while (node != -1) {
      raw(static_cast<Index>(i), column.at(node)) = 1.0;
      node = parent.at(node);
    }
  }
  return OutputEmbeddingTable(std::move(raw), /*center_columns=*/false);
}

}  // namespace shoe
