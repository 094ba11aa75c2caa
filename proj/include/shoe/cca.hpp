// Copyright 2026 The SHOE Authors
// SPDX-License-Identifier: Apache-2.0

// Canonical correlation analysis between input features and per-item output
// embeddings, used as a supervised dimensionality reduction before hashing.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "shoe/core.hpp"
#include "shoe/io.hpp"

namespace shoe {

struct CcaModel {
  Matrix proj_x;        // d x r
  Matrix proj_y;        // e x r
  Vector correlations;  // length r, non-increasing, in [0, 1]
  Vector mean_x;
  Vector mean_y;
  double reg_x = 0.0;
  double reg_y = 0.0;

  Index rank() const { return proj_x.cols(); }
  Index dim_x() const { return proj_x.rows(); }
  Index dim_y() const { return proj_y.rows(); }

  bool operator==(const CcaModel& o) const {
    return proj_x == o.proj_x && proj_y == o.proj_y && correlations == o.correlations &&
           mean_x == o.mean_x && mean_y == o.mean_y && reg_x == o.reg_x && reg_y == o.reg_y;
  }
};

struct CcaOptions {
  Index rank = 0;
  /// Ridge added to both covariance diagonals. Unset: 1e-4 * trace(C) / dim per view.
  std::optional<double> reg;
};

/// 1e-4 * trace(cov) / dim for an already-centered view.
inline double default_cca_regularizer(const Matrix& centered) {
  const double n = static_cast<double>(std::max<Index>(centered.rows() - 1, 1));
  return 1e-4 * centered.squaredNorm() / n / static_cast<double>(centered.cols());
}

namespace detail {

/// C^{-1/2} for a symmetric positive definite C.
inline Matrix inverse_sqrt(const Matrix& cov, bool regularized, const char* view) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Vector& vals = eig.eigenvalues();
  const double top = std::max(vals.maxCoeff(), 0.0);
  if (!(vals.minCoeff() > 1e-12 * std::max(top, 1e-300))) {
    throw DegenerateData(std::string("cca: covariance of view ") + view +
                         (regularized ? " is not positive definite even after regularization; increase eps"
                                      : " is rank-deficient; pass a regularizer eps > 0"));
  }
  const Vector inv = vals.cwiseSqrt().cwiseInverse();
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

inline double sample_correlation(const Vector& a, const Vector& b) {
  const double den = std::sqrt(a.squaredNorm() * b.squaredNorm());
  return den > 0.0 ? a.dot(b) / den : 0.0;
}

}  // namespace detail

/// Solve the regularized CCA problem via the SVD of Cxx^{-1/2} Cxy Cyy^{-1/2}.
/// Each returned component has unit sample variance on the training views, and
/// `correlations` holds the sample correlation of the projected pair.
inline CcaModel fit_cca(const Matrix& x, const Matrix& y, const CcaOptions& opt) {
  detail::require_same(static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(y.rows()),
                       "cca: row count of the two views");
  const Index n = x.rows();
  const Index d = x.cols();
  const Index e = y.cols();
  const Index r = opt.rank;
  if (n < 2) throw DomainError("cca: need at least 2 rows");
  if (r < 1 || r > std::min(d, e)) {
    throw DomainError("cca: rank " + std::to_string(r) + " must lie in [1, min(d, e) = " +
                      std::to_string(std::min(d, e)) + "]");
  }
  if (!x.allFinite() || !y.allFinite()) throw DomainError("cca: non-finite input");

  CcaModel model;
  model.mean_x = x.colwise().mean().transpose();
  model.mean_y = y.colwise().mean().transpose();
  const Matrix xc = x.rowwise() - model.mean_x.transpose();
  const Matrix yc = y.rowwise() - model.mean_y.transpose();
  const double scale = 1.0 / static_cast<double>(n - 1);

  if (opt.reg && *opt.reg < 0.0) throw DomainError("cca: regularizer must be >= 0");
  model.reg_x = opt.reg ? *opt.reg : default_cca_regularizer(xc);
  model.reg_y = opt.reg ? *opt.reg : default_cca_regularizer(yc);

  Matrix cxx = scale * (xc.transpose() * xc);
  Matrix cyy = scale * (yc.transpose() * yc);
  cxx.diagonal().array() += model.reg_x;
  cyy.diagonal().array() += model.reg_y;
  const Matrix cxy = scale * (xc.transpose() * yc);

  const Matrix kx = detail::inverse_sqrt(cxx, model.reg_x > 0.0, "x");
  const Matrix ky = detail::inverse_sqrt(cyy, model.reg_y > 0.0, "y");
  Eigen::JacobiSVD<Matrix> svd(kx * cxy * ky, Eigen::ComputeThinU | Eigen::ComputeThinV);

  Matrix px = kx * svd.matrixU().leftCols(r);
  Matrix py = ky * svd.matrixV().leftCols(r);
  Vector corr(r);
  for (Index k = 0; k < r; ++k) {
    Vector u = xc * px.col(k);
    Vector v = yc * py.col(k);
    const double su = std::sqrt(u.squaredNorm() * scale);
    const double sv = std::sqrt(v.squaredNorm() * scale);
    if (su > 0.0) px.col(k) /= su;
    if (sv > 0.0) py.col(k) /= sv;

    Index arg = 0;
    px.col(k).cwiseAbs().maxCoeff(&arg);
    if (px(arg, k) < 0.0) px.col(k) = -px.col(k);
    corr[k] = detail::sample_correlation(xc * px.col(k), yc * py.col(k));
    if (corr[k] < 0.0) {
      py.col(k) = -py.col(k);
      corr[k] = -corr[k];
    }
    corr[k] = std::min(corr[k], 1.0);
  }

  std::vector<Index> order(static_cast<std::size_t>(r));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return corr[a] > corr[b]; });
  model.proj_x.resize(d, r);
  model.proj_y.resize(e, r);
  model.correlations.resize(r);
  for (Index k = 0; k < r; ++k) {
    model.proj_x.col(k) = px.col(order[static_cast<std::size_t>(k)]);
    model.proj_y.col(k) = py.col(order[static_cast<std::size_t>(k)]);
    model.correlations[k] = corr[order[static_cast<std::size_t>(k)]];
  }
  return model;
}

inline CcaModel fit_cca(const FeatureMatrix& x, const Matrix& y, Index rank, std::optional<double> reg = {}) {
  return fit_cca(x.values(), y, CcaOptions{rank, reg});
}

/// omega(x) = (x - train mean) * proj_x
inline FeatureMatrix project(const CcaModel& model, const FeatureMatrix& x) {
  detail::require_same(static_cast<std::size_t>(x.dim()), static_cast<std::size_t>(model.dim_x()),
                       "cca project: feature dim");
  return FeatureMatrix((x.values().rowwise() - model.mean_x.transpose()) * model.proj_x);
}

inline Matrix project_y(const CcaModel& model, const Matrix& y) {
  detail::require_same(static_cast<std::size_t>(y.cols()), static_cast<std::size_t>(model.dim_y()),
                       "cca project_y: embedding dim");
  return (y.rowwise() - model.mean_y.transpose()) * model.proj_y;
}

// SHCC: magic, u32 d, u32 e, u32 r, f64 eps_x, f64 eps_y, proj_x, proj_y,
// correlations, mean_x, mean_y.
inline void write_cca(std::ostream& os, const CcaModel& m) {
  io::put_magic(os, "SHCC");
  io::put_u32(os, static_cast<std::uint32_t>(m.dim_x()));
  io::put_u32(os, static_cast<std::uint32_t>(m.dim_y()));
  io::put_u32(os, static_cast<std::uint32_t>(m.rank()));
  io::put_f64(os, m.reg_x);
  io::put_f64(os, m.reg_y);
  io::put_payload(os, m.proj_x);
  io::put_payload(os, m.proj_y);
  io::put_vector(os, m.correlations);
  io::put_vector(os, m.mean_x);
  io::put_vector(os, m.mean_y);
}

inline CcaModel read_cca(std::istream& is) {
  io::expect_magic(is, "SHCC");
  CcaModel m;
  const std::uint32_t d = io::get_u32(is);
  const std::uint32_t e = io::get_u32(is);
  const std::uint32_t r = io::get_u32(is);
  m.reg_x = io::get_f64(is);
  m.reg_y = io::get_f64(is);
  m.proj_x = io::get_payload(is, d, r);
  m.proj_y = io::get_payload(is, e, r);
  m.correlations = io::get_vector(is, r);
  m.mean_x = io::get_vector(is, d);
  m.mean_y = io::get_vector(is, e);
  return m;
}

}  // namespace shoe
