// Copyright 2026 The SHOE Authors
// SPDX-License-Identifier: Apache-2.0

// Retrieval metrics with graded relevance. Each retrieved item earns a weight
// in [0, 1] that depends on how the query class ranks the item's class:
//   Standard    1 iff same class
//   Sib         1 iff rank <= m-1 (the class itself plus its m-1 nearest classes)
//   SibWeighted (m - rank) / m inside the same window, 0 outside
// Precision and recall are weight sums; AP accumulates precision@k times the
// recall increment at k.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <iomanip>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "shoe/core.hpp"
#include "shoe/embeddings.hpp"
#include "shoe/retrieval.hpp"

namespace shoe {

enum class WeightVariant { Standard = 0, Sib = 1, SibWeighted = 2 };

inline constexpr std::array<WeightVariant, 3> kAllVariants = {WeightVariant::Standard, WeightVariant::Sib,
                                                              WeightVariant::SibWeighted};

inline std::string to_string(WeightVariant v) {
  switch (v) {
    case WeightVariant::Standard: return "standard";
    case WeightVariant::Sib: return "sibling";
    case WeightVariant::SibWeighted: return "weighted_sibling";
  }
  return "unknown";
}

inline double sibling_weight(WeightVariant variant, ClassId query, ClassId other, const SiblingRanking& ranking,
                             std::uint32_t m) {
  if (variant == WeightVariant::Standard) return query == other ? 1.0 : 0.0;
  const std::uint32_t rank = ranking(query, other);
  if (rank + 1 > m) return 0.0;
  if (variant == WeightVariant::Sib) return 1.0;
  return static_cast<double>(m - rank) / static_cast<double>(m);
}

struct SiblingWeightFn {
  WeightVariant variant = WeightVariant::Standard;
  std::uint32_t m = 6;
  double operator()(ClassId query, ClassId other, const SiblingRanking& ranking) const {
    return sibling_weight(variant, query, other, ranking, m);
  }
};

/// Per-position weights of a ranked list for one query.
inline std::vector<double> gains(const RetrievalResult& result, const SiblingWeightFn& weight, ClassId query_class,
                                 const SiblingRanking& ranking, const LabelVector& db_labels) {
  std::vector<double> g;
  g.reserve(result.ranked.size());
  for (const Hit& h : result.ranked) g.push_back(weight(query_class, db_labels[h.index], ranking));
  return g;
}

/// Total weight available to a query over the retrieval set: sum_p count(p) * weight(query, p).
inline double achievable_weight(const SiblingWeightFn& weight, ClassId query_class, const SiblingRanking& ranking,
                                const std::vector<std::size_t>& class_counts) {
  double total = 0.0;
  for (ClassId p = 0; p < class_counts.size(); ++p)
    total += static_cast<double>(class_counts[p]) * weight(query_class, p, ranking);
  return total;
}

inline double precision_at_k(const RetrievalResult& result, const SiblingWeightFn& weight, ClassId query_class,
                             const SiblingRanking& ranking, const LabelVector& db_labels, std::size_t k) {
  if (k == 0) throw DomainError("precision_at_k: k must be >= 1");
  if (k > result.ranked.size()) throw DomainError("precision_at_k: k exceeds the result length");
  double sum = 0.0;
  for (std::size_t l = 0; l < k; ++l) sum += weight(query_class, db_labels[result.ranked[l].index], ranking);
  return sum / static_cast<double>(k);
}

inline double recall_at_k(const RetrievalResult& result, const SiblingWeightFn& weight, ClassId query_class,
                          const SiblingRanking& ranking, const LabelVector& db_labels,
                          const std::vector<std::size_t>& class_counts, std::size_t k) {
  const double denom = achievable_weight(weight, query_class, ranking, class_counts);
  if (!(denom > 0.0)) {
    throw DomainError("recall_at_k: query class " + std::to_string(query_class) +
                      " has no relevant items in the retrieval set");
  }
  k = std::min(k, result.ranked.size());
  double sum = 0.0;
  for (std::size_t l = 0; l < k; ++l) sum += weight(query_class, db_labels[result.ranked[l].index], ranking);
  return sum / denom;
}

/// sum_k precision@k * (recall@k - recall@(k-1)) over the full ranked list.
inline double average_precision(const std::vector<double>& g, double achievable) {
  if (!(achievable > 0.0)) throw DomainError("average_precision: no relevant weight");
  double ap = 0.0;
  double cum = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    cum += g[k];
    if (g[k] != 0.0) ap += (cum / static_cast<double>(k + 1)) * (g[k] / achievable);
  }
  return std::min(ap, 1.0);
}

inline double mean_average_precision(const std::vector<RetrievalResult>& results, const LabelVector& query_labels,
                                     const SiblingWeightFn& weight, const SiblingRanking& ranking,
                                     const LabelVector& db_labels) {
  detail::require_same(results.size(), query_labels.size(), "mAP: results vs query labels");
  if (results.empty()) throw DomainError("mAP: no queries");
  const auto counts = db_labels.class_counts();
  double total = 0.0;
  for (std::size_t q = 0; q < results.size(); ++q) {
    const ClassId y = query_labels[q];
    total += average_precision(gains(results[q], weight, y, ranking, db_labels),
                               achievable_weight(weight, y, ranking, counts));
  }
  return std::min(total / static_cast<double>(results.size()), 1.0);
}

// ---- reports ---------------------------------------------------------------------------

struct VariantMetrics {
  std::map<std::size_t, double> precision_at;
  std::map<std::size_t, double> recall_at;
  double mean_ap = 0.0;
  std::vector<double> per_query_ap;
};

struct MetricsReport {
  std::uint32_t m = 6;
  std::map<WeightVariant, VariantMetrics> variants;
  /// Mean precision and recall at every k = 1..curve_depth, per variant.
  std::map<WeightVariant, std::vector<std::pair<double, double>>> curve;

  const VariantMetrics& at(WeightVariant v) const { return variants.at(v); }
};

struct EvalOptions {
  std::uint32_t m = 6;
  std::vector<std::size_t> ks = {10, 30, 50};
  std::size_t curve_depth = 0;
  /// Drop hits whose item id equals the query id (query set overlaps the database).
  bool exclude_self = false;
};

/// Full-ranking evaluation of every query under all three weight variants.
inline MetricsReport evaluate(const std::vector<RetrievalResult>& results, const LabelVector& query_labels,
                              const LabelVector& db_labels, const SiblingRanking& ranking, const EvalOptions& opt) {
  detail::require_same(results.size(), query_labels.size(), "evaluate: results vs query labels");
  if (results.empty()) throw DomainError("evaluate: no queries");
  MetricsReport report;
  report.m = opt.m;
  const auto base_counts = db_labels.class_counts();
  const double nq = static_cast<double>(results.size());

  for (WeightVariant v : kAllVariants) {
    const SiblingWeightFn weight{v, opt.m};
    VariantMetrics vm;
    std::vector<std::pair<double, double>> curve(opt.curve_depth, {0.0, 0.0});
    for (std::size_t q = 0; q < results.size(); ++q) {
      const ClassId y = query_labels[q];
      RetrievalResult r = results[q];
      auto counts = base_counts;
      if (opt.exclude_self) {
        auto self = std::find_if(r.ranked.begin(), r.ranked.end(), [&](const Hit& h) { return h.item_id == r.query_id; });
        if (self != r.ranked.end()) {
          --counts[db_labels[self->index]];
          r.ranked.erase(self);
        }
      }
      const auto g = gains(r, weight, y, ranking, db_labels);
      const double denom = achievable_weight(weight, y, ranking, counts);
      if (!(denom > 0.0)) {
        throw DomainError("evaluate: query class " + std::to_string(y) + " has no relevant items in the retrieval set");
      }
      const double ap = average_precision(g, denom);
      vm.per_query_ap.push_back(ap);
      vm.mean_ap += ap;

      std::vector<double> prefix(g.size() + 1, 0.0);
      for (std::size_t k = 0; k < g.size(); ++k) prefix[k + 1] = prefix[k] + g[k];
      for (std::size_t k : opt.ks) {
        if (k == 0) throw DomainError("evaluate: k must be >= 1");
        const std::size_t kk = std::min(k, g.size());
        vm.precision_at[k] += (kk > 0 ? prefix[kk] / static_cast<double>(k) : 0.0) / nq;
        vm.recall_at[k] += prefix[kk] / denom / nq;
      }
      for (std::size_t k = 1; k <= opt.curve_depth; ++k) {
        const std::size_t kk = std::min(k, g.size());
        curve[k - 1].first += prefix[kk] / static_cast<double>(k) / nq;
        curve[k - 1].second += prefix[kk] / denom / nq;
      }
    }
    vm.mean_ap = std::min(vm.mean_ap / nq, 1.0);
    report.variants[v] = std::move(vm);
    report.curve[v] = std::move(curve);
  }
  return report;
}

/// CSV `variant,metric,k,value`; mAP rows carry k = 0.
inline void write_metrics_csv(std::ostream& os, const MetricsReport& report) {
  os << "variant,metric,k,value\n" << std::setprecision(10);
  for (const auto& [v, vm] : report.variants) {
    for (const auto& [k, p] : vm.precision_at) os << to_string(v) << ",precision," << k << ',' << p << '\n';
    for (const auto& [k, r] : vm.recall_at) os << to_string(v) << ",recall," << k << ',' << r << '\n';
    os << to_string(v) << ",mAP,0," << vm.mean_ap << '\n';
  }
}

/// Flat `key = value` summary.
inline void write_metrics_summary(std::ostream& os, const MetricsReport& report) {
  os << std::setprecision(10) << "m = " << report.m << '\n';
  for (const auto& [v, vm] : report.variants) {
    os << to_string(v) << ".mAP = " << vm.mean_ap << '\n';
    for (const auto& [k, p] : vm.precision_at) os << to_string(v) << ".precision@" << k << " = " << p << '\n';
    for (const auto& [k, r] : vm.recall_at) os << to_string(v) << ".recall@" << k << " = " << r << '\n';
  }
}

/// CSV `variant,k,precision,recall` for k = 1..curve_depth.
inline void write_curve_csv(std::ostream& os, const MetricsReport& report) {
  os << "variant,k,precision,recall\n" << std::setprecision(10);
  for (const auto& [v, pts] : report.curve)
    for (std::size_t k = 0; k < pts.size(); ++k)
      os << to_string(v) << ',' << (k + 1) << ',' << pts[k].first << ',' << pts[k].second << '\n';
}

/// Per-query AP table `query,variant,ap`.
inline void write_per_query_csv(std::ostream& os, const MetricsReport& report) {
  os << "query,variant,ap\n" << std::setprecision(10);
  for (const auto& [v, vm] : report.variants)
    for (std::size_t q = 0; q < vm.per_query_ap.size(); ++q) os << q << ',' << to_string(v) << ',' << vm.per_query_ap[q] << '\n';
}

// ---- classification ------------------------------------------------------------------

struct Accuracies {
  double top1 = 0.0;
  double top5 = 0.0;
  double sibling = 0.0;
};

/// top1: exact; top5: truth among the top-n list; sibling: rank(truth, predicted) <= m-1.
inline Accuracies classification_accuracies(const std::vector<ClassId>& predictions,
                                            const std::vector<std::vector<ClassId>>& top_predictions,
                                            const LabelVector& truth, const SiblingRanking& ranking, std::uint32_t m) {
  detail::require_same(predictions.size(), truth.size(), "accuracies: predictions vs truth");
  detail::require_same(top_predictions.size(), truth.size(), "accuracies: top predictions vs truth");
  if (truth.size() == 0) return {};
  Accuracies acc;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const ClassId y = truth[i];
    if (predictions[i] == y) acc.top1 += 1.0;
    if (std::find(top_predictions[i].begin(), top_predictions[i].end(), y) != top_predictions[i].end()) acc.top5 += 1.0;
    if (ranking(y, predictions[i]) + 1 <= m) acc.sibling += 1.0;
  }
  const double n = static_cast<double>(truth.size());
  acc.top1 /= n;
  acc.top5 /= n;
  acc.sibling /= n;
  return acc;
}

}  // namespace shoe
