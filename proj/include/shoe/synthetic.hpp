// Copyright 2026 The SHOE Authors
// SPDX-License-Identifier: Apache-2.0

// Desk-scale class hierarchy: S superclasses, each with L/S subclasses. The
// subclasses of a superclass sit on a line through its center, neighbors
// delta_sib apart, so sibling similarity is graded. Superclass centers are
// delta_far apart. Items are isotropic Gaussians around their class mean.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "shoe/core.hpp"
#include "shoe/io.hpp"
#include "shoe/random.hpp"

namespace shoe {

struct SyntheticSpec {
  std::uint32_t n_classes = 16;
  std::uint32_t n_superclasses = 4;
  Index dim = 32;
  std::uint32_t per_class = 50;
  std::uint32_t queries_per_class = 10;
  double sib_spacing = 2.0;
  double far_spacing = 20.0;
  double noise = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_classes < 2) throw DomainError("synthetic: need at least 2 classes");
    if (n_superclasses < 1 || n_classes % n_superclasses != 0) {
      throw DomainError("synthetic: " + std::to_string(n_classes) + " classes are not divisible into " +
                        std::to_string(n_superclasses) + " superclasses");
    }
    if (!(sib_spacing > 0.0 && sib_spacing < far_spacing)) {
      throw DomainError("synthetic: need 0 < sib_spacing < far_spacing");
    }
    if (dim < 1 || per_class < 1) throw DomainError("synthetic: dim and per_class must be >= 1");
    if (!(noise >= 0.0)) throw DomainError("synthetic: noise must be >= 0");
  }
};

struct SyntheticData {
  FeatureMatrix train;
  LabelVector train_labels;
  FeatureMatrix query;
  LabelVector query_labels;
  Matrix embeddings;  // L x dim
  Matrix class_means;
  std::vector<std::uint32_t> superclass;  // per class
  std::vector<std::string> warnings;
};

namespace detail {

/// `count` directions in R^dim: orthonormal when count <= dim, otherwise random unit vectors.
inline Matrix spread_directions(Index count, Index dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(dim, std::max(count, Index{1}));
  for (Index i = 0; i < g.rows(); ++i)
    for (Index j = 0; j < g.cols(); ++j) g(i, j) = normal(rng);
  if (count <= dim) {
    Eigen::HouseholderQR<Matrix> qr(g);
    return Matrix(qr.householderQ() * Matrix::Identity(dim, count)).transpose();
  }
  Matrix out = g.transpose();
  out.rowwise().normalize();
  return out;
}

}  // namespace detail

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::uint32_t L = spec.n_classes;
  const std::uint32_t S = spec.n_superclasses;
  const std::uint32_t per_super = L / S;
  Rng rng = make_rng(spec.seed);

  SyntheticData data;
  if (S == L) {
    data.warnings.push_back("every class is its own superclass; sibling structure comes from noise only");
  }
  // Superclass centers and per-superclass chain directions share one orthonormal frame when possible.
  const Matrix dirs = detail::spread_directions(2 * S, spec.dim, rng);
  const double half = 1.0 / std::sqrt(2.0);
  data.class_means.resize(L, spec.dim);
  data.embeddings.resize(L, spec.dim);
  data.superclass.resize(L);
  for (ClassId y = 0; y < L; ++y) {
    const std::uint32_t s = y / per_super;
    data.superclass[y] = s;
    const Vector center = spec.far_spacing * half * dirs.row(s).transpose();
    const double position = static_cast<double>(y % per_super) - 0.5 * static_cast<double>(per_super - 1);
    const Vector offset = spec.sib_spacing * position * dirs.row(S + s).transpose();
    data.class_means.row(y) = (center + offset).transpose();
    data.embeddings.row(y) = (2.0 * center + offset).transpose();
  }

  std::normal_distribution<double> normal(0.0, spec.noise);
  auto sample = [&](std::uint32_t count, FeatureMatrix& out, LabelVector& labels) {
    Matrix x(static_cast<Index>(L) * count, spec.dim);
    std::vector<ClassId> y;
    y.reserve(static_cast<std::size_t>(L) * count);
    for (ClassId c = 0; c < L; ++c) {
      for (std::uint32_t k = 0; k < count; ++k) {
        const Index row = static_cast<Index>(y.size());
        for (Index j = 0; j < spec.dim; ++j) x(row, j) = data.class_means(c, j) + normal(rng);
        y.push_back(c);
      }
    }
    out = FeatureMatrix(std::move(x));
    labels = LabelVector(std::move(y), L);
  };
  sample(spec.per_class, data.train, data.train_labels);
  if (spec.queries_per_class > 0) sample(spec.queries_per_class, data.query, data.query_labels);
  return data;
}

/// Writes train_features.shm, train_labels.txt, query_features.shm, query_labels.txt, embeddings.shm.
inline std::vector<std::string> write_synthetic(const SyntheticData& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  std::vector<std::string> written;
  auto mat = [&](const std::string& name, const Matrix& m) {
    io::save_matrix((base / name).string(), m);
    written.push_back((base / name).string());
  };
  auto lab = [&](const std::string& name, const LabelVector& y) {
    io::save_labels((base / name).string(), y.values());
    written.push_back((base / name).string());
  };
  mat("train_features.shm", data.train.values());
  lab("train_labels.txt", data.train_labels);
  if (!data.query.empty()) {
    mat("query_features.shm", data.query.values());
    lab("query_labels.txt", data.query_labels);
  }
  mat("embeddings.shm", data.embeddings);
  return written;
}

}  // namespace shoe
