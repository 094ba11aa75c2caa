// Copyright 2026 The SHOE Authors
// SPDX-License-Identifier: Apache-2.0

// Sequential greedy learning of c hash projections. Bit l is fitted to the
// residual R_{l-1} = c * O - sum_{k<l} b_k b_k^T, where O holds the pairwise
// similarity targets (1 same class, theta sibling, -1 unrelated, or raw
// output-embedding similarity). In learned-theta mode the sibling level is
// re-estimated in closed form after every bit.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>

#include "shoe/core.hpp"
#include "shoe/embeddings.hpp"
#include "shoe/io.hpp"
#include "shoe/random.hpp"

namespace shoe {

// ---- pair categories ------------------------------------------------------------

/// Dense N x N matrix of training pair categories.
class PairCategories {
 public:
  PairCategories() = default;
  PairCategories(Index n, std::vector<PairCategory> cats) : n_(n), cats_(std::move(cats)) {
    detail::require_same(cats_.size(), static_cast<std::size_t>(n * n), "pair category matrix size");
  }

  Index size() const { return n_; }
  PairCategory operator()(Index i, Index j) const { return cats_[static_cast<std::size_t>(i * n_ + j)]; }

 private:
  Index n_ = 0;
  std::vector<PairCategory> cats_;
};

inline PairCategories build_pair_categories(const LabelVector& labels, const SiblingRanking& ranking,
                                            std::uint32_t m) {
  const auto n = static_cast<Index>(labels.size());
  const std::uint32_t L = ranking.n_classes();
  std::vector<PairCategory> by_class(static_cast<std::size_t>(L) * L);
  for (ClassId a = 0; a < L; ++a)
    for (ClassId b = 0; b < L; ++b) by_class[static_cast<std::size_t>(a) * L + b] = training_category(ranking, a, b, m);
  std::vector<PairCategory> cats(static_cast<std::size_t>(n * n));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      cats[static_cast<std::size_t>(i * n + j)] =
          by_class[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]) * L + labels[static_cast<std::size_t>(j)]];
  return PairCategories(n, std::move(cats));
}

// ---- theta ------------------------------------------------------------------------

/// Minimizer of sum_sib (H_ij - theta)^2 + lambda (theta + 1)^2, clamped to [-1, 1].
inline double theta_closed_form(double sum_h, std::size_t n_sib, double lambda) {
  if (n_sib == 0) throw DomainError("theta update needs at least one sibling pair");
  if (lambda < 0.0) throw DomainError("lambda must be >= 0");
  const double theta = (sum_h - lambda) / (static_cast<double>(n_sib) + lambda);
  return std::clamp(theta, -1.0, 1.0);
}

/// Closed-form theta from the first `bits` columns of `codes`, with
/// H_ij = b_i^T b_j / bits averaged over the given (ordered) sibling pairs.
inline double learn_theta(const CodeMatrix& codes, const std::vector<std::pair<Index, Index>>& sibling_pairs,
                          double lambda, std::uint32_t bits) {
  if (bits < 1 || bits > codes.code_len()) throw DomainError("learn_theta: bits must lie in [1, code_len]");
  double sum_h = 0.0;
  for (auto [i, j] : sibling_pairs) {
    std::int64_t dot = 0;
    for (std::uint32_t l = 0; l < bits; ++l) dot += codes(i, l) * codes(j, l);
    sum_h += static_cast<double>(dot) / bits;
  }
  return theta_closed_form(sum_h, sibling_pairs.size(), lambda);
}

/// Ordered sibling pairs (i != j) of a category matrix.
inline std::vector<std::pair<Index, Index>> sibling_pairs(const PairCategories& cats) {
  std::vector<std::pair<Index, Index>> out;
  for (Index i = 0; i < cats.size(); ++i)
    for (Index j = 0; j < cats.size(); ++j)
      if (cats(i, j) == PairCategory::Sibling) out.emplace_back(i, j);
  return out;
}

/// Three-part objective over all ordered pairs with H_ij = b_i^T b_j / c:
/// sum_same (H-1)^2 + sum_sib (H-theta)^2 + sum_unrel (H+1)^2 + lambda (theta+1)^2.
inline double objective_value(const CodeMatrix& codes, const PairCategories& cats, double theta, double lambda,
                              bool include_diagonal = true) {
  detail::require_same(static_cast<std::size_t>(codes.n_items()), static_cast<std::size_t>(cats.size()),
                       "objective_value: codes vs categories");
  const Matrix b = codes.leading_bits(codes.code_len());
  const Matrix h = (b * b.transpose()) / static_cast<double>(codes.code_len());
  double total = 0.0;
  for (Index i = 0; i < h.rows(); ++i) {
    for (Index j = 0; j < h.cols(); ++j) {
      if (i == j && !include_diagonal) continue;
      double target = -1.0;
      if (cats(i, j) == PairCategory::Same) target = 1.0;
      if (cats(i, j) == PairCategory::Sibling) target = theta;
      total += (h(i, j) - target) * (h(i, j) - target);
    }
  }
  return total + lambda * (theta + 1.0) * (theta + 1.0);
}

// ---- smoothed per-bit objective ---------------------------------------------------

/// sum_ij (tanh(s w.phi_i) tanh(s w.phi_j) - r_ij)^2
inline double smoothed_objective(const Vector& w, const Matrix& features, const Matrix& residual, double s) {
  const Vector a = (s * (features * w)).array().tanh().matrix();
  return ((a * a.transpose()) - residual).squaredNorm();
}

/// Exact gradient of smoothed_objective with respect to w. `residual` need not be symmetric.
inline Vector smoothed_gradient(const Vector& w, const Matrix& features, const Matrix& residual, double s) {
  if (!(s > 0.0)) throw DomainError("smoothing scale must be positive");
  detail::require_same(static_cast<std::size_t>(features.cols()), static_cast<std::size_t>(w.size()),
                       "smoothed_gradient: w vs feature dim");
  const Vector a = (s * (features * w)).array().tanh().matrix();
  const Vector ga = 4.0 * a.squaredNorm() * a - 2.0 * (residual * a + residual.transpose() * a);
  const Vector chain = (s * (1.0 - a.array().square())).matrix();
  return features.transpose() * ga.cwiseProduct(chain);
}

// ---- configuration and model ---------------------------------------------------------

struct TrainConfig {
  std::uint32_t code_len = 32;
  TargetMode mode = TargetMode::LearnedTheta;
  std::uint32_t sibling_count = 6;
  /// Initial theta in learned mode (must lie in (-1, 0)); the constant theta in fixed mode.
  double theta = -0.5;
  double lambda = 1.0;
  /// When positive, overrides lambda with this multiple of the sibling pair count.
  double lambda_per_sibling_pair = 0.0;
  std::uint32_t grad_steps = 500;
  /// Initial step, relative to ||w||, along the normalized negative gradient.
  double step_size = 1e-2;
  double smoothing = 1.0;
  std::uint64_t seed = 0;
  bool include_diagonal = true;
  /// Above this many items, pairs are subsampled per category.
  Index max_dense_items = 3000;
  /// Ordered-pair budget per category when subsampling.
  std::size_t sampled_pairs_per_category = 1'000'000;

  void validate() const {
    if (code_len < 1) throw DomainError("code_len must be >= 1");
    if (sibling_count < 1) throw DomainError("sibling_count must be >= 1");
    if (mode == TargetMode::LearnedTheta && !(theta > -1.0 && theta < 0.0)) {
      throw DomainError("initial theta must lie in (-1, 0)");
    }
    if (mode == TargetMode::FixedTheta && !(theta >= -1.0 && theta <= 1.0)) {
      throw DomainError("fixed theta must lie in [-1, 1]");
    }
    if (lambda < 0.0) throw DomainError("lambda must be >= 0");
    if (lambda_per_sibling_pair < 0.0) throw DomainError("lambda_per_pair must be >= 0");
    if (!(step_size > 0.0)) throw DomainError("step_size must be positive");
    if (!(smoothing > 0.0)) throw DomainError("smoothing must be positive");
  }
};

/// Per-bit fit of the discrete residual objective, before and after refinement.
struct BitDiagnostics {
  double spectral_fit = 0.0;
  double final_fit = 0.0;
  bool refined_kept = false;
  std::uint32_t steps = 0;
};

/// Serialized tag for the kind of projection stored in a HashModel.
enum class ModelTag : std::uint32_t { Embedding = 0, FixedTheta = 1, LearnedTheta = 2, KSHBinary = 3, LSH = 4 };

inline ModelTag model_tag(TargetMode mode) { return static_cast<ModelTag>(static_cast<std::uint32_t>(mode)); }

inline std::string to_string(ModelTag tag) {
  return tag == ModelTag::LSH ? "LSH" : to_string(static_cast<TargetMode>(tag));
}

struct HashModel {
  Matrix projection;  // c x d, row l = w_l
  std::vector<double> theta_trajectory;
  ModelTag tag = ModelTag::LearnedTheta;
  double theta = -0.5;
  double lambda = 1.0;
  std::uint32_t sibling_count = 6;
  /// Subtracted from features before projecting; empty when inputs are pre-centered.
  Vector center;
  std::string kernel_id;
  std::string cca_id;
  std::vector<BitDiagnostics> diagnostics;  // not serialized

  std::uint32_t code_len() const { return static_cast<std::uint32_t>(projection.rows()); }
  Index dim() const { return projection.cols(); }
  double final_theta() const { return theta_trajectory.empty() ? theta : theta_trajectory.back(); }
};

inline CodeMatrix encode(const HashModel& model, const FeatureMatrix& features) {
  if (model.center.size() == 0) return sign_encode(features, model.projection);
  detail::require_same(static_cast<std::size_t>(features.dim()), static_cast<std::size_t>(model.center.size()),
                       "encode: feature dim vs model center");
  return sign_encode(Matrix(features.values().rowwise() - model.center.transpose()), model.projection);
}

// SHW1: magic, u32 c, u32 d, u32 tag, f64 theta, f64 lambda, u32 m, u32 n_theta,
// f64 theta_trajectory, f64 W (c x d row-major), u32 n_center, f64 center,
// string kernel_id, string cca_id.
inline void write_hash_model(std::ostream& os, const HashModel& m) {
  io::put_magic(os, "SHW1");
  io::put_u32(os, m.code_len());
  io::put_u32(os, static_cast<std::uint32_t>(m.dim()));
  io::put_u32(os, static_cast<std::uint32_t>(m.tag));
  io::put_f64(os, m.theta);
  io::put_f64(os, m.lambda);
  io::put_u32(os, m.sibling_count);
  io::put_u32(os, static_cast<std::uint32_t>(m.theta_trajectory.size()));
  for (double t : m.theta_trajectory) io::put_f64(os, t);
  io::put_payload(os, m.projection);
  io::put_u32(os, static_cast<std::uint32_t>(m.center.size()));
  io::put_vector(os, m.center);
  io::put_string(os, m.kernel_id);
  io::put_string(os, m.cca_id);
}

inline HashModel read_hash_model(std::istream& is) {
  io::expect_magic(is, "SHW1");
  HashModel m;
  const std::uint32_t c = io::get_u32(is);
  const std::uint32_t d = io::get_u32(is);
  const std::uint32_t tag = io::get_u32(is);
  if (tag > 4) throw FormatError("SHW1: unknown mode tag " + std::to_string(tag));
  m.tag = static_cast<ModelTag>(tag);
  m.theta = io::get_f64(is);
  m.lambda = io::get_f64(is);
  m.sibling_count = io::get_u32(is);
  m.theta_trajectory.resize(io::get_u32(is));
  for (double& t : m.theta_trajectory) t = io::get_f64(is);
  m.projection = io::get_payload(is, c, d);
  m.center = io::get_vector(is, io::get_u32(is));
  m.kernel_id = io::get_string(is);
  m.cca_id = io::get_string(is);
  return m;
}

// ---- residual backends ---------------------------------------------------------------

namespace detail {

/// Residual targets r_ij = c * o_ij - sum_k b_ki b_kj over the training pair set.
class PairResiduals {
 public:
  virtual ~PairResiduals() = default;
  /// Rebuild targets for a new sibling level.
  virtual void set_theta(double theta) = 0;
  /// Phi^T R Phi
  virtual Matrix spectral_matrix(const Matrix& phi) const = 0;
  /// sum over pairs of (a_i a_j - r_ij)^2; writes d/da into `grad` when non-null.
  virtual double fit(const Vector& a, Vector* grad) const = 0;
  virtual void commit(const Vector& bits) = 0;
  virtual double sibling_inner_sum() const = 0;
  virtual std::size_t sibling_count() const = 0;
};

struct TargetRule {
  TargetMode mode;
  double code_len;
  const Matrix* class_similarity;  // embedding mode
  double target(PairCategory cat, ClassId a, ClassId b, double theta) const {
    if (cat == PairCategory::Same) return code_len;
    if (mode == TargetMode::Embedding) return code_len * (*class_similarity)(a, b);
    if (cat == PairCategory::Sibling && (mode == TargetMode::FixedTheta || mode == TargetMode::LearnedTheta)) {
      return code_len * theta;
    }
    return -code_len;
  }
};

class DenseResiduals final : public PairResiduals {
 public:
  DenseResiduals(const LabelVector& labels, PairCategories cats, TargetRule rule, bool include_diagonal, double theta)
      : labels_(labels), cats_(std::move(cats)), rule_(rule), diag_(include_diagonal) {
    const Index n = cats_.size();
    inner_ = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        if (cats_(i, j) == PairCategory::Sibling) ++n_sib_;
    set_theta(theta);
  }

  void set_theta(double theta) override {
    const Index n = cats_.size();
    residual_.resize(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        residual_(i, j) = rule_.target(cats_(i, j), labels_[static_cast<std::size_t>(i)],
                                       labels_[static_cast<std::size_t>(j)], theta) -
                          inner_(i, j);
    if (!diag_) residual_.diagonal().setZero();
    residual_sq_ = residual_.squaredNorm();
  }

  Matrix spectral_matrix(const Matrix& phi) const override { return phi.transpose() * (residual_ * phi); }

  double fit(const Vector& a, Vector* grad) const override {
    const Vector ra = residual_ * a;
    const double aa = a.squaredNorm();
    double value = aa * aa - 2.0 * a.dot(ra) + residual_sq_;
    if (grad != nullptr) *grad = 4.0 * aa * a - 4.0 * ra;
    if (!diag_) {
      const Vector a2 = a.array().square().matrix();
      value -= a2.squaredNorm();
      if (grad != nullptr) *grad -= 4.0 * a2.cwiseProduct(a);
    }
    return value;
  }

  void commit(const Vector& bits) override {
    const Matrix outer = bits * bits.transpose();
    inner_ += outer;
    residual_ -= outer;
    if (!diag_) residual_.diagonal().setZero();
    residual_sq_ = residual_.squaredNorm();
  }

  double sibling_inner_sum() const override {
    double s = 0.0;
    for (Index i = 0; i < cats_.size(); ++i)
      for (Index j = 0; j < cats_.size(); ++j)
        if (cats_(i, j) == PairCategory::Sibling) s += inner_(i, j);
    return s;
  }
  std::size_t sibling_count() const override { return n_sib_; }

 private:
  const LabelVector& labels_;
  PairCategories cats_;
  TargetRule rule_;
  bool diag_;
  Matrix inner_;
  Matrix residual_;
  double residual_sq_ = 0.0;
  std::size_t n_sib_ = 0;
};

/// Seeded per-category pair sample; both orientations of every sampled pair are kept.
class SampledResiduals final : public PairResiduals {
 public:
  struct Pair {
    Index i, j;
    PairCategory cat;
  };

  SampledResiduals(const LabelVector& labels, const SiblingRanking& ranking, std::uint32_t m, TargetRule rule,
                   bool include_diagonal, double theta, std::size_t budget, std::uint64_t seed)
      : labels_(labels), rule_(rule) {
    const auto n = static_cast<Index>(labels.size());
    const std::size_t half = std::max<std::size_t>(budget / 2, 1);
    std::array<std::vector<std::pair<Index, Index>>, 3> reservoir;
    std::array<std::size_t, 3> seen{};
    Rng rng = make_rng(seed);
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        const auto cat = training_category(ranking, labels[static_cast<std::size_t>(i)],
                                           labels[static_cast<std::size_t>(j)], m);
        const auto c = static_cast<std::size_t>(cat);
        auto& bucket = reservoir[c];
        if (bucket.size() < half) {
          bucket.emplace_back(i, j);
        } else {
          std::uniform_int_distribution<std::size_t> pick(0, seen[c]);
          const std::size_t slot = pick(rng);
          if (slot < half) bucket[slot] = {i, j};
        }
        ++seen[c];
      }
    }
    if (include_diagonal) {
      for (Index i = 0; i < n; ++i) pairs_.push_back({i, i, PairCategory::Same});
    }
    for (std::size_t c = 0; c < 3; ++c) {
      std::sort(reservoir[c].begin(), reservoir[c].end());
      for (auto [i, j] : reservoir[c]) {
        pairs_.push_back({i, j, static_cast<PairCategory>(c)});
        pairs_.push_back({j, i, static_cast<PairCategory>(c)});
      }
    }
    for (const auto& p : pairs_)
      if (p.cat == PairCategory::Sibling) ++n_sib_;
    inner_.assign(pairs_.size(), 0.0);
    residual_.resize(pairs_.size());
    set_theta(theta);
  }

  void set_theta(double theta) override {
    for (std::size_t k = 0; k < pairs_.size(); ++k) {
      const auto& p = pairs_[k];
      residual_[k] = rule_.target(p.cat, labels_[static_cast<std::size_t>(p.i)],
                                  labels_[static_cast<std::size_t>(p.j)], theta) -
                     inner_[k];
    }
  }

  Matrix spectral_matrix(const Matrix& phi) const override {
    const Index n = phi.rows();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(pairs_.size());
    for (std::size_t k = 0; k < pairs_.size(); ++k) trip.emplace_back(pairs_[k].i, pairs_[k].j, residual_[k]);
    Eigen::SparseMatrix<double> r(n, n);
    r.setFromTriplets(trip.begin(), trip.end());
    return phi.transpose() * (r * phi);
  }

  double fit(const Vector& a, Vector* grad) const override {
    double value = 0.0;
    if (grad != nullptr) *grad = Vector::Zero(a.size());
    for (std::size_t k = 0; k < pairs_.size(); ++k) {
      const auto& p = pairs_[k];
      const double e = a[p.i] * a[p.j] - residual_[k];
      value += e * e;
      if (grad != nullptr) {
        (*grad)[p.i] += 2.0 * e * a[p.j];
        (*grad)[p.j] += 2.0 * e * a[p.i];
      }
    }
    return value;
  }

  void commit(const Vector& bits) override {
    for (std::size_t k = 0; k < pairs_.size(); ++k) {
      const double v = bits[pairs_[k].i] * bits[pairs_[k].j];
      inner_[k] += v;
      residual_[k] -= v;
    }
  }

  double sibling_inner_sum() const override {
    double s = 0.0;
    for (std::size_t k = 0; k < pairs_.size(); ++k)
      if (pairs_[k].cat == PairCategory::Sibling) s += inner_[k];
    return s;
  }
  std::size_t sibling_count() const override { return n_sib_; }

 private:
  const LabelVector& labels_;
  TargetRule rule_;
  std::vector<Pair> pairs_;
  std::vector<double> inner_;
  std::vector<double> residual_;
  std::size_t n_sib_ = 0;
};

inline Vector signs_of(const Vector& v) {
  return v.unaryExpr([](double x) { return static_cast<double>(sign_bit(x)); });
}

}  // namespace detail

// ---- training ------------------------------------------------------------------------

/// Learn c projections on mean-centered features. `table` is required in embedding mode.
inline HashModel train(const FeatureMatrix& features, const LabelVector& labels, const SiblingRanking& ranking,
                       const TrainConfig& cfg, const OutputEmbeddingTable* table = nullptr) {
  cfg.validate();
  const Index n = features.n_items();
  detail::require_same(labels.size(), static_cast<std::size_t>(n), "train: labels vs feature rows");
  if (n < 2) throw DomainError("train: need at least 2 items");
  if (labels.n_classes() > ranking.n_classes()) throw DomainError("train: labels exceed ranked classes");
  const Matrix& phi = features.values();
  const double worst_mean = phi.colwise().mean().cwiseAbs().maxCoeff();
  if (worst_mean > 1e-6) {
    throw DomainError("train: features must be mean-centered (largest column mean " + std::to_string(worst_mean) + ")");
  }

  Matrix class_sim;
  if (cfg.mode == TargetMode::Embedding) {
    if (table == nullptr) throw DomainError("train: embedding mode needs an output embedding table");
    class_sim = table->normalized() * table->normalized().transpose();
    class_sim = class_sim.cwiseMax(-1.0).cwiseMin(1.0);
  }
  const detail::TargetRule rule{cfg.mode, static_cast<double>(cfg.code_len), &class_sim};

  std::unique_ptr<detail::PairResiduals> pairs;
  if (n <= cfg.max_dense_items) {
    auto cats = build_pair_categories(labels, ranking, cfg.sibling_count);
    bool any_same = cfg.include_diagonal;
    for (Index i = 0; i < n && !any_same; ++i)
      for (Index j = 0; j < n && !any_same; ++j)
        any_same = i != j && cats(i, j) == PairCategory::Same;
    if (!any_same) throw DomainError("train: no same-class pairs");
    pairs = std::make_unique<detail::DenseResiduals>(labels, std::move(cats), rule, cfg.include_diagonal, cfg.theta);
  } else {
    pairs = std::make_unique<detail::SampledResiduals>(labels, ranking, cfg.sibling_count, rule, cfg.include_diagonal,
                                                       cfg.theta, cfg.sampled_pairs_per_category,
                                                       stage_seed(cfg.seed, "pairs"));
  }
  if (cfg.mode == TargetMode::LearnedTheta && pairs->sibling_count() == 0) {
    throw DomainError("train: learned-theta mode needs at least one sibling pair");
  }

  HashModel model;
  model.tag = model_tag(cfg.mode);
  model.theta = cfg.mode == TargetMode::KSHBinary ? -1.0 : cfg.theta;
  const double lambda = cfg.lambda_per_sibling_pair > 0.0
                            ? cfg.lambda_per_sibling_pair * static_cast<double>(pairs->sibling_count())
                            : cfg.lambda;
  model.lambda = lambda;
  model.sibling_count = cfg.sibling_count;
  model.projection.resize(cfg.code_len, features.dim());

  const double s = cfg.smoothing;
  auto smoothed = [&](const Vector& w, Vector* grad_w) {
    const Vector a = (s * (phi * w)).array().tanh().matrix();
    if (grad_w == nullptr) return pairs->fit(a, nullptr);
    Vector ga;
    const double v = pairs->fit(a, &ga);
    *grad_w = phi.transpose() * ga.cwiseProduct((s * (1.0 - a.array().square())).matrix());
    return v;
  };

  double theta = cfg.theta;
  for (std::uint32_t l = 0; l < cfg.code_len; ++l) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(pairs->spectral_matrix(phi));
    Vector w0 = eig.eigenvectors().col(eig.eigenvectors().cols() - 1);
    const Vector b0 = detail::signs_of(phi * w0);

    BitDiagnostics diag;
    diag.spectral_fit = pairs->fit(b0, nullptr);

    Vector w = w0;
    Vector grad;
    double value = smoothed(w, &grad);
    double step = cfg.step_size;
    for (std::uint32_t it = 0; it < cfg.grad_steps; ++it) {
      const double gnorm = grad.norm();
      if (!(gnorm > 0.0)) break;
      const Vector dir = grad * (w.norm() / gnorm);
      bool accepted = false;
      Vector cand;
      double cand_value = value;
      for (int halving = 0; halving <= 20; ++halving) {
        cand = w - step * dir;
        cand_value = smoothed(cand, nullptr);
        if (cand_value < value) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
      const double gain = value - cand_value;
      w = std::move(cand);
      value = smoothed(w, &grad);
      ++diag.steps;
      step = std::min(2.0 * step, cfg.step_size);
      if (gain <= 1e-12 * std::max(1.0, std::abs(value))) break;
    }

    Vector bits = detail::signs_of(phi * w);
    const double refined_fit = pairs->fit(bits, nullptr);
    if (refined_fit <= diag.spectral_fit && w.allFinite() && w.norm() > 0.0) {
      diag.refined_kept = true;
      diag.final_fit = refined_fit;
    } else {
      w = w0;
      bits = b0;
      diag.final_fit = diag.spectral_fit;
    }
    model.projection.row(l) = w.transpose();
    pairs->commit(bits);
    model.diagnostics.push_back(diag);

    if (cfg.mode == TargetMode::LearnedTheta) {
      theta = theta_closed_form(pairs->sibling_inner_sum() / static_cast<double>(l + 1), pairs->sibling_count(),
                                lambda);
      model.theta_trajectory.push_back(theta);
      pairs->set_theta(theta);
    } else if (cfg.mode == TargetMode::FixedTheta) {
      model.theta_trajectory.push_back(theta);
    }
  }
  return model;
}

/// |sum_i b_il| / N per bit.
inline std::vector<double> bit_imbalance(const CodeMatrix& codes) {
  std::vector<double> out(codes.code_len(), 0.0);
  for (std::uint32_t l = 0; l < codes.code_len(); ++l) {
    std::int64_t sum = 0;
    for (Index i = 0; i < codes.n_items(); ++i) sum += codes(i, l);
    out[l] = std::abs(static_cast<double>(sum)) / static_cast<double>(codes.n_items());
  }
  return out;
}

}  // namespace shoe
