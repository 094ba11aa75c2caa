// Copyright 2026 The SHOE Authors
// SPDX-License-Identifier: Apache-2.0

// Shared numeric containers and binary-code algebra.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "shoe/error.hpp"

namespace shoe {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using ClassId = std::uint32_t;

/// N x d matrix of finite feature values, one row per item.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;

  explicit FeatureMatrix(Matrix data) : data_(std::move(data)) {
    if (data_.rows() < 1 || data_.cols() < 1) {
      throw DomainError("feature matrix must have at least one row and one column");
    }
    if (!data_.allFinite()) throw DomainError("feature matrix contains NaN or Inf");
  }

  Index n_items() const { return data_.rows(); }
  Index dim() const { return data_.cols(); }
  bool empty() const { return data_.size() == 0; }
  const Matrix& values() const { return data_; }
  auto row(Index i) const { return data_.row(i); }

 private:
  Matrix data_;
};

/// Class ids in [0, n_classes), one per item.
class LabelVector {
 public:
  LabelVector() = default;

  LabelVector(std::vector<ClassId> labels, std::uint32_t n_classes)
      : labels_(std::move(labels)), n_classes_(n_classes) {
    for (ClassId y : labels_) {
      if (y >= n_classes_) {
        throw DomainError("label " + std::to_string(y) + " out of range for " +
                          std::to_string(n_classes_) + " classes");
      }
    }
  }

  /// n_classes is inferred as max label + 1.
  static LabelVector infer(std::vector<ClassId> labels) {
    std::uint32_t n = 0;
    for (ClassId y : labels) n = std::max<std::uint32_t>(n, y + 1);
    return LabelVector(std::move(labels), n);
  }

  std::size_t size() const { return labels_.size(); }
  std::uint32_t n_classes() const { return n_classes_; }
  ClassId operator[](std::size_t i) const { return labels_[i]; }
  const std::vector<ClassId>& values() const { return labels_; }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(n_classes_, 0);
    for (ClassId y : labels_) ++counts[y];
    return counts;
  }

 private:
  std::vector<ClassId> labels_;
  std::uint32_t n_classes_ = 0;
};

/// N x c matrix of codes with entries exactly -1 or +1.
class CodeMatrix {
 public:
  CodeMatrix() = default;
  CodeMatrix(Index n_items, std::uint32_t code_len)
      : bits_(static_cast<std::size_t>(n_items) * code_len, 1), n_items_(n_items), code_len_(code_len) {}

  Index n_items() const { return n_items_; }
  std::uint32_t code_len() const { return code_len_; }

  std::int8_t operator()(Index i, std::uint32_t l) const { return bits_[index(i, l)]; }

  void set(Index i, std::uint32_t l, std::int8_t v) {
    if (v != 1 && v != -1) throw DomainError("code entries must be -1 or +1");
    bits_[index(i, l)] = v;
  }

  std::span<const std::int8_t> row(Index i) const {
    return {bits_.data() + index(i, 0), code_len_};
  }

  /// Column l as a dense +-1 vector.
  Vector bit(std::uint32_t l) const {
    Vector out(n_items_);
    for (Index i = 0; i < n_items_; ++i) out[i] = (*this)(i, l);
    return out;
  }

  /// First `l` columns as a dense N x l matrix.
  Matrix leading_bits(std::uint32_t l) const {
    Matrix out(n_items_, l);
    for (Index i = 0; i < n_items_; ++i)
      for (std::uint32_t k = 0; k < l; ++k) out(i, k) = (*this)(i, k);
    return out;
  }

  bool operator==(const CodeMatrix&) const = default;

 private:
  std::size_t index(Index i, std::uint32_t l) const {
    return static_cast<std::size_t>(i) * code_len_ + l;
  }

  std::vector<std::int8_t> bits_;
  Index n_items_ = 0;
  std::uint32_t code_len_ = 0;
};

/// View of one packed code.
struct PackedRow {
  std::span<const std::uint64_t> words;
  std::uint32_t code_len = 0;
};

/// Codes sign-packed into 64-bit words. Bit j of word w holds code bit 64w+j;
/// a set bit encodes +1. Unused high bits of the last word are zero.
class PackedCodes {
 public:
  PackedCodes() = default;
  PackedCodes(Index n_items, std::uint32_t code_len)
      : words_(static_cast<std::size_t>(n_items) * words_for(code_len), 0),
        n_items_(n_items),
        code_len_(code_len) {}

  static std::size_t words_for(std::uint32_t code_len) { return (code_len + 63) / 64; }

  Index n_items() const { return n_items_; }
  std::uint32_t code_len() const { return code_len_; }
  std::size_t words_per_row() const { return words_for(code_len_); }

  PackedRow row(Index i) const {
    return {{words_.data() + static_cast<std::size_t>(i) * words_per_row(), words_per_row()}, code_len_};
  }
  std::span<std::uint64_t> mutable_row(Index i) {
    return {words_.data() + static_cast<std::size_t>(i) * words_per_row(), words_per_row()};
  }

  const std::vector<std::uint64_t>& words() const { return words_; }
  std::vector<std::uint64_t>& words() { return words_; }

  bool operator==(const PackedCodes&) const = default;

 private:
  std::vector<std::uint64_t> words_;
  Index n_items_ = 0;
  std::uint32_t code_len_ = 0;
};

inline PackedCodes pack(const CodeMatrix& codes) {
  PackedCodes out(codes.n_items(), codes.code_len());
  for (Index i = 0; i < codes.n_items(); ++i) {
    auto dst = out.mutable_row(i);
    for (std::uint32_t l = 0; l < codes.code_len(); ++l) {
      if (codes(i, l) > 0) dst[l / 64] |= std::uint64_t{1} << (l % 64);
    }
  }
  return out;
}

inline CodeMatrix unpack(const PackedCodes& packed) {
  CodeMatrix out(packed.n_items(), packed.code_len());
  for (Index i = 0; i < packed.n_items(); ++i) {
    PackedRow r = packed.row(i);
    for (std::uint32_t l = 0; l < packed.code_len(); ++l) {
      bool on = (r.words[l / 64] >> (l % 64)) & 1U;
      out.set(i, l, on ? 1 : -1);
    }
  }
  return out;
}

/// Number of differing bits between two packed codes.
inline std::uint32_t hamming_distance(const PackedRow& a, const PackedRow& b) {
  if (a.code_len != b.code_len) {
    throw LengthMismatch("hamming_distance: code lengths differ (" + std::to_string(a.code_len) +
                         " vs " + std::to_string(b.code_len) + ")");
  }
  std::uint32_t d = 0;
  for (std::size_t w = 0; w < a.words.size(); ++w) d += std::popcount(a.words[w] ^ b.words[w]);
  return d;
}

/// Code inner product b_i^T b_j recovered from a Hamming distance: c - 2 d_H.
inline std::int64_t inner_product_from_hamming(std::int64_t d_h, std::int64_t code_len) {
  if (code_len < 1 || d_h < 0 || d_h > code_len) {
    throw DomainError("inner_product_from_hamming: distance " + std::to_string(d_h) +
                      " outside [0, " + std::to_string(code_len) + "]");
  }
  return code_len - 2 * d_h;
}

/// sgn with sgn(0) = +1.
inline std::int8_t sign_bit(double v) { return v < 0.0 ? -1 : 1; }

/// Entry (i, l) = sgn(w_l . x_i), W is c x d.
inline CodeMatrix sign_encode(const Matrix& features, const Matrix& projection) {
  detail::require_same(static_cast<std::size_t>(features.cols()),
                       static_cast<std::size_t>(projection.cols()),
                       "sign_encode: feature dim vs projection columns");
  const Matrix proj = features * projection.transpose();
  CodeMatrix codes(features.rows(), static_cast<std::uint32_t>(projection.rows()));
  for (Index i = 0; i < proj.rows(); ++i)
    for (Index l = 0; l < proj.cols(); ++l) codes.set(i, static_cast<std::uint32_t>(l), sign_bit(proj(i, l)));
  return codes;
}

inline CodeMatrix sign_encode(const FeatureMatrix& features, const Matrix& projection) {
  return sign_encode(features.values(), projection);
}

}  // namespace shoe
