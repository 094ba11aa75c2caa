// Copyright 2026 The SHOE Authors
// SPDX-License-Identifier: Apache-2.0

// Unsupervised random-hyperplane baseline: zero-center, optionally rotate onto
// the leading principal components, then project onto Gaussian directions.

#pragma once

#include <algorithm>
#include <cstdint>
#include <random>

#include <Eigen/Eigenvalues>

#include "shoe/core.hpp"
#include "shoe/random.hpp"
#include "shoe/trainer.hpp"

namespace shoe {

struct LshModel {
  Vector mean;
  Matrix pca;       // d x d_pca, empty when PCA is off
  Matrix gaussian;  // c x d_pca (or c x d)
  std::uint64_t seed = 0;

  std::uint32_t code_len() const { return static_cast<std::uint32_t>(gaussian.rows()); }

  /// Projection acting on centered raw features (c x d).
  Matrix effective_projection() const {
    return pca.size() == 0 ? gaussian : Matrix(gaussian * pca.transpose());
  }

  CodeMatrix encode(const FeatureMatrix& x) const {
    detail::require_same(static_cast<std::size_t>(x.dim()), static_cast<std::size_t>(mean.size()),
                         "lsh encode: feature dim");
    return sign_encode(Matrix(x.values().rowwise() - mean.transpose()), effective_projection());
  }

  HashModel to_hash_model() const {
    HashModel m;
    m.tag = ModelTag::LSH;
    m.projection = effective_projection();
    m.center = mean;
    m.theta = -1.0;
    m.lambda = 0.0;
    m.sibling_count = 1;
    return m;
  }
};

/// Top-k principal directions (columns), each with its largest-magnitude entry positive.
inline Matrix principal_directions(const Matrix& centered, Index k) {
  const Matrix cov = centered.transpose() * centered / static_cast<double>(std::max<Index>(centered.rows() - 1, 1));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  Matrix out(centered.cols(), k);
  for (Index j = 0; j < k; ++j) {
    out.col(j) = eig.eigenvectors().col(centered.cols() - 1 - j);
    Index arg = 0;
    out.col(j).cwiseAbs().maxCoeff(&arg);
    if (out(arg, j) < 0.0) out.col(j) = -out.col(j);
  }
  return out;
}

inline LshModel fit_lsh(const FeatureMatrix& features, std::uint32_t code_len, std::uint64_t seed, bool use_pca) {
  if (code_len < 1) throw DomainError("lsh: code length must be >= 1");
  LshModel model;
  model.seed = seed;
  model.mean = features.values().colwise().mean().transpose();
  Index in_dim = features.dim();
  if (use_pca) {
    const Matrix centered = features.values().rowwise() - model.mean.transpose();
    in_dim = std::min<Index>(features.dim(), code_len);
    model.pca = principal_directions(centered, in_dim);
  }
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  model.gaussian.resize(code_len, in_dim);
  for (Index i = 0; i < model.gaussian.rows(); ++i)
    for (Index j = 0; j < model.gaussian.cols(); ++j) model.gaussian(i, j) = normal(rng);
  return model;
}

}  // namespace shoe
