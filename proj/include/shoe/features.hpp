// Copyright 2026 The SHOE Authors
// SPDX-License-Identifier: Apache-2.0

// Kernelized, mean-centered input features built from RBF responses to a set
// of anchor points.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "shoe/core.hpp"
#include "shoe/io.hpp"
#include "shoe/random.hpp"

namespace shoe {

struct Centered {
  FeatureMatrix features;
  Vector mean;
};

/// Subtract column means. The returned mean is what queries must be centered with.
inline Centered mean_center(const FeatureMatrix& features) {
  Vector mean = features.values().colwise().mean().transpose();
  Matrix centered = features.values().rowwise() - mean.transpose();
  return {FeatureMatrix(std::move(centered)), std::move(mean)};
}

/// Center with a previously estimated mean (query time).
inline FeatureMatrix apply_center(const FeatureMatrix& features, const Vector& mean) {
  detail::require_same(static_cast<std::size_t>(features.dim()), static_cast<std::size_t>(mean.size()),
                       "apply_center: feature dim vs mean length");
  return FeatureMatrix(features.values().rowwise() - mean.transpose());
}

/// Squared Euclidean distances between every row of `a` and every row of `b`.
inline Matrix pairwise_sq_distances(const Matrix& a, const Matrix& b) {
  detail::require_same(static_cast<std::size_t>(a.cols()), static_cast<std::size_t>(b.cols()),
                       "pairwise distances: dims");
  Matrix d(a.rows(), b.rows());
  for (Index k = 0; k < b.rows(); ++k) d.col(k) = (a.rowwise() - b.row(k)).rowwise().squaredNorm();
  return d;
}

/// RBF kernel map phi(x) = [exp(-gamma ||x - a_k||^2)]_k - center_mean.
struct KernelPipeline {
  Matrix anchors;     // p x d_raw
  double bandwidth = 0.0;  // gamma
  Vector center_mean;  // length p

  Index n_anchors() const { return anchors.rows(); }
  Index raw_dim() const { return anchors.cols(); }

  /// Kernel responses before centering; every entry lies in (0, 1].
  Matrix responses(const FeatureMatrix& raw) const {
    detail::require_same(static_cast<std::size_t>(raw.dim()), static_cast<std::size_t>(raw_dim()),
                         "kernel pipeline: raw feature dim vs anchor dim");
    Matrix k = pairwise_sq_distances(raw.values(), anchors);
    k = (-bandwidth * k.array()).exp().matrix();
    return k;
  }

  FeatureMatrix apply(const FeatureMatrix& raw) const {
    Matrix k = responses(raw);
    k.rowwise() -= center_mean.transpose();
    return FeatureMatrix(std::move(k));
  }

  bool operator==(const KernelPipeline& o) const {
    return anchors == o.anchors && bandwidth == o.bandwidth && center_mean == o.center_mean;
  }
};

inline FeatureMatrix apply_kernel_pipeline(const KernelPipeline& pipe, const FeatureMatrix& raw) {
  return pipe.apply(raw);
}

/// Median of the squared distances over distinct anchor pairs.
inline double median_sq_distance(const Matrix& anchors) {
  const Index p = anchors.rows();
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(p * (p - 1) / 2));
  for (Index i = 0; i < p; ++i)
    for (Index j = i + 1; j < p; ++j) d.push_back((anchors.row(i) - anchors.row(j)).squaredNorm());
  if (d.empty()) return 0.0;
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  double med = d[mid];
  if (d.size() % 2 == 0) {
    med = 0.5 * (med + *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return med;
}

struct KernelOptions {
  Index n_anchors = 300;
  std::uint64_t seed = 0;
  /// Fixed gamma; the median heuristic is used when unset.
  std::optional<double> bandwidth;
  /// When given, anchors are drawn round-robin across classes.
  const LabelVector* labels = nullptr;
};

namespace detail {

inline std::vector<Index> uniform_anchor_rows(Index n, Index p, Rng& rng) {
  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Index{0});
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(static_cast<std::size_t>(p));
  return rows;
}

inline std::vector<Index> stratified_anchor_rows(const LabelVector& labels, Index p, Rng& rng) {
  std::vector<std::vector<Index>> by_class(labels.n_classes());
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<Index>(i));
  for (auto& members : by_class) std::shuffle(members.begin(), members.end(), rng);
  std::vector<Index> rows;
  rows.reserve(static_cast<std::size_t>(p));
  for (std::size_t round = 0; static_cast<Index>(rows.size()) < p; ++round) {
    for (const auto& members : by_class) {
      if (round < members.size() && static_cast<Index>(rows.size()) < p) rows.push_back(members[round]);
    }
  }
  return rows;
}

}  // namespace detail

inline KernelPipeline fit_kernel_pipeline(const FeatureMatrix& raw, const KernelOptions& opt) {
  const Index n = raw.n_items();
  if (opt.n_anchors < 1) throw DomainError("kernel pipeline: anchor count must be >= 1");
  if (opt.n_anchors > n) {
    throw DomainError("kernel pipeline: " + std::to_string(opt.n_anchors) + " anchors requested from " +
                      std::to_string(n) + " training rows");
  }
  if (opt.labels != nullptr) {
    detail::require_same(opt.labels->size(), static_cast<std::size_t>(n), "kernel pipeline: labels vs rows");
  }
  Rng rng = make_rng(opt.seed);
  const std::vector<Index> rows = opt.labels != nullptr
                                      ? detail::stratified_anchor_rows(*opt.labels, opt.n_anchors, rng)
                                      : detail::uniform_anchor_rows(n, opt.n_anchors, rng);

  KernelPipeline pipe;
  pipe.anchors.resize(opt.n_anchors, raw.dim());
  for (std::size_t k = 0; k < rows.size(); ++k) pipe.anchors.row(static_cast<Index>(k)) = raw.row(rows[k]);

  if (opt.bandwidth) {
    if (!(*opt.bandwidth > 0.0)) throw DomainError("kernel pipeline: bandwidth must be positive");
    pipe.bandwidth = *opt.bandwidth;
  } else {
    const double med = median_sq_distance(pipe.anchors);
    if (!(med > 0.0)) {
      throw DegenerateData(
          "kernel pipeline: median squared anchor distance is 0 (anchors identical); "
          "cannot set bandwidth by the median heuristic");
    }
    pipe.bandwidth = 1.0 / med;
  }
  pipe.center_mean = Vector::Zero(opt.n_anchors);
  pipe.center_mean = pipe.responses(raw).colwise().mean().transpose();
  return pipe;
}

inline KernelPipeline fit_kernel_pipeline(const FeatureMatrix& raw, Index n_anchors, std::uint64_t seed) {
  KernelOptions opt;
  opt.n_anchors = n_anchors;
  opt.seed = seed;
  return fit_kernel_pipeline(raw, opt);
}

// SHK1: magic, u32 p, u32 d_raw, f64 bandwidth, anchors payload, center_mean payload.
inline void write_kernel_pipeline(std::ostream& os, const KernelPipeline& pipe) {
  io::put_magic(os, "SHK1");
  io::put_u32(os, static_cast<std::uint32_t>(pipe.n_anchors()));
  io::put_u32(os, static_cast<std::uint32_t>(pipe.raw_dim()));
  io::put_f64(os, pipe.bandwidth);
  io::put_payload(os, pipe.anchors);
  io::put_vector(os, pipe.center_mean);
}

inline KernelPipeline read_kernel_pipeline(std::istream& is) {
  io::expect_magic(is, "SHK1");
  KernelPipeline pipe;
  const std::uint32_t p = io::get_u32(is);
  const std::uint32_t d = io::get_u32(is);
  pipe.bandwidth = io::get_f64(is);
  pipe.anchors = io::get_payload(is, p, d);
  pipe.center_mean = io::get_vector(is, p);
  return pipe;
}

}  // namespace shoe
