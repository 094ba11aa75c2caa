// Copyright 2026 The SHOE Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "shoe/features.hpp"
#include "shoe/trainer.hpp"

namespace shoe {
namespace {

/// Golden-section minimizer of a unimodal function on [lo, hi].
template <typename F>
double golden_min(F f, double lo, double hi) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  for (int it = 0; it < 200; ++it) {
    const double c = b - g * (b - a);
    const double d = a + g * (b - a);
    (f(c) < f(d) ? b : a) = (f(c) < f(d) ? d : c);
  }
  return 0.5 * (a + b);
}

/// Items drawn around class means placed on a line.
struct Toy {
  FeatureMatrix x;
  LabelVector y;
};

Toy clusters(const Matrix& means, Index per_class, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, noise);
  Matrix x(means.rows() * per_class, means.cols());
  std::vector<ClassId> y;
  for (Index c = 0; c < means.rows(); ++c) {
    for (Index k = 0; k < per_class; ++k) {
      const Index i = static_cast<Index>(y.size());
      for (Index j = 0; j < means.cols(); ++j) x(i, j) = means(c, j) + g(rng);
      y.push_back(static_cast<ClassId>(c));
    }
  }
  return {mean_center(FeatureMatrix(x)).features, LabelVector(y, static_cast<std::uint32_t>(means.rows()))};
}

/// Four classes: {0,1} and {2,3} are superclasses.
struct Hierarchy {
  Toy data;
  Matrix embeddings;
};

Hierarchy four_class_hierarchy(std::uint64_t seed) {
  Matrix means(4, 4);
  means << 6, 0, 1.5, 0,  //
      6, 0, -1.5, 0,      //
      -6, 0, 0, 1.5,      //
      -6, 0, 0, -1.5;
  return {clusters(means, 25, 0.5, seed), means};
}

TEST(Theta, ClosedFormExamples) {
  EXPECT_DOUBLE_EQ(theta_closed_form(0.5 + 0.0 - 0.5, 3, 1.0), -0.25);
  auto f = [](double t) {
    return (0.5 - t) * (0.5 - t) + (0.0 - t) * (0.0 - t) + (-0.5 - t) * (-0.5 - t) + (t + 1) * (t + 1);
  };
  EXPECT_NEAR(golden_min(f, -1.0, 1.0), -0.25, 1e-8);
  EXPECT_DOUBLE_EQ(theta_closed_form(1.2, 4, 0.0), 0.3);
  EXPECT_NEAR(theta_closed_form(3.0, 4, 1e12), -1.0, 1e-9);
  EXPECT_EQ(theta_closed_form(100.0, 2, 0.0), 1.0);
  EXPECT_THROW(theta_closed_form(0.0, 0, 1.0), DomainError);
}

TEST(Theta, LearnThetaFromCodes) {
  CodeMatrix codes(3, 2);
  codes.set(1, 1, -1);  // H(0,1) = 0
  codes.set(2, 0, -1);
  codes.set(2, 1, -1);  // H(0,2) = -1
  const std::vector<std::pair<Index, Index>> sib = {{0, 1}, {0, 2}};
  EXPECT_DOUBLE_EQ(learn_theta(codes, sib, 0.0, 2), -0.5);
  EXPECT_DOUBLE_EQ(learn_theta(codes, sib, 0.0, 1), 0.0);  // first bit only: H = 1 and -1
  EXPECT_THROW(learn_theta(codes, sib, 0.0, 3), DomainError);
  EXPECT_THROW(learn_theta(codes, {}, 0.0, 1), DomainError);
}

TEST(Objective, Examples) {
  // perfect realization with theta = -1
  CodeMatrix codes(3, 2);
  codes.set(2, 0, -1);
  codes.set(2, 1, -1);
  const auto r = build_sibling_ranking(Matrix(Matrix::Identity(2, 2)));
  const PairCategories cats = build_pair_categories(LabelVector({0, 0, 1}, 2), r, 1);
  EXPECT_DOUBLE_EQ(objective_value(codes, cats, -1.0, 5.0), 0.0);

  CodeMatrix two(2, 2);
  two.set(1, 0, -1);  // H = 0
  const PairCategories same(2, {PairCategory::Same, PairCategory::Same, PairCategory::Same, PairCategory::Same});
  EXPECT_DOUBLE_EQ(objective_value(two, same, 0.0, 0.0, false), 2.0);  // ordered pairs (0,1), (1,0)
}

TEST(Objective, MatchesNaiveLoop) {
  std::mt19937_64 rng(4);
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<int> cat(0, 2);
  const Index n = 7;
  const std::uint32_t c = 5;
  CodeMatrix codes(n, c);
  for (Index i = 0; i < n; ++i)
    for (std::uint32_t l = 0; l < c; ++l) codes.set(i, l, coin(rng) ? 1 : -1);
  std::vector<PairCategory> raw(n * n);
  for (auto& p : raw) p = static_cast<PairCategory>(cat(rng));
  const PairCategories cats(n, raw);
  const double theta = -0.3;
  const double lambda = 2.5;
  double expect = lambda * (theta + 1) * (theta + 1);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      double h = 0.0;
      for (std::uint32_t l = 0; l < c; ++l) h += codes(i, l) * codes(j, l);
      h /= c;
      const double o = raw[i * n + j] == PairCategory::Same ? 1.0 : raw[i * n + j] == PairCategory::Sibling ? theta : -1.0;
      expect += (h - o) * (h - o);
    }
  }
  EXPECT_NEAR(objective_value(codes, cats, theta, lambda), expect, 1e-12);
}

Vector finite_difference(const Vector& w, const Matrix& phi, const Matrix& r, double s) {
  Vector g(w.size());
  const double h = 1e-5;
  for (Index k = 0; k < w.size(); ++k) {
    Vector up = w, dn = w;
    up[k] += h;
    dn[k] -= h;
    g[k] = (smoothed_objective(up, phi, r, s) - smoothed_objective(dn, phi, r, s)) / (2 * h);
  }
  return g;
}

TEST(SmoothedGradient, FiniteDifferences) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int inst = 0; inst < 20; ++inst) {
    Matrix phi(6, 3);
    Matrix r(6, 6);
    Vector w(3);
    for (Index i = 0; i < phi.size(); ++i) phi.data()[i] = g(rng);
    for (Index i = 0; i < r.size(); ++i) r.data()[i] = g(rng);
    for (Index i = 0; i < w.size(); ++i) w[i] = 0.5 * g(rng);
    const double s = 0.5 + inst * 0.1;
    const Vector a = smoothed_gradient(w, phi, r, s);
    const Vector b = finite_difference(w, phi, r, s);
    EXPECT_LT((a - b).norm() / std::max(b.norm(), 1e-12), 1e-4);
  }
}

TEST(SmoothedGradient, AtZeroAndSaturated) {
  Matrix phi(3, 2);
  phi << 1, 0, 0, 1, 1, 1;
  Matrix r = Matrix::Ones(3, 3);
  const Vector z = Vector::Zero(2);
  const Vector fd = finite_difference(z, phi, r, 1.0);
  EXPECT_LT((smoothed_gradient(z, phi, r, 1.0) - fd).norm(), 1e-6);

  Matrix one(1, 1);
  one << 1.0;
  Vector big(1);
  big << 40.0;
  EXPECT_LT(smoothed_gradient(big, one, Matrix::Ones(1, 1), 1.0).norm(), 1e-12);
  EXPECT_THROW(smoothed_gradient(big, one, Matrix::Ones(1, 1), 0.0), DomainError);
}

TEST(Train, TwoSeparatedClasses) {
  Matrix means(2, 2);
  means << 5, 5, -5, -5;
  const Toy t = clusters(means, 30, 0.5, 6);
  const auto ranking = build_sibling_ranking(means);
  TrainConfig cfg;
  cfg.code_len = 4;
  cfg.mode = TargetMode::KSHBinary;
  const auto model = train(t.x, t.y, ranking, cfg);
  const auto codes = pack(encode(model, t.x));
  std::size_t good = 0, total = 0;
  for (Index i = 0; i < 60; ++i) {
    for (Index j = i + 1; j < 60; ++j) {
      const auto d = hamming_distance(codes.row(i), codes.row(j));
      good += (t.y[i] == t.y[j]) ? (d == 0) : (d == 4);
      ++total;
    }
  }
  EXPECT_GE(static_cast<double>(good) / static_cast<double>(total), 0.95);
}

TEST(Train, LearnedThetaKeepsSiblingsCloser) {
  const auto h = four_class_hierarchy(7);
  const auto ranking = build_sibling_ranking(h.embeddings);
  TrainConfig cfg;
  cfg.code_len = 16;
  cfg.sibling_count = 2;
  const auto model = train(h.data.x, h.data.y, ranking, cfg);
  ASSERT_EQ(model.theta_trajectory.size(), 16u);
  const auto codes = pack(encode(model, h.data.x));
  double sib = 0, unrel = 0;
  std::size_t n_sib = 0, n_unrel = 0;
  for (Index i = 0; i < 100; ++i) {
    for (Index j = 0; j < 100; ++j) {
      const ClassId a = h.data.y[i], b = h.data.y[j];
      if (a == b) continue;
      const double d = hamming_distance(codes.row(i), codes.row(j));
      if (a / 2 == b / 2) {
        sib += d;
        ++n_sib;
      } else {
        unrel += d;
        ++n_unrel;
      }
    }
  }
  EXPECT_LT(sib / n_sib, unrel / n_unrel);
  for (double theta : model.theta_trajectory) {
    EXPECT_GE(theta, -1.0);
    EXPECT_LE(theta, 1.0);
  }
}

TEST(Train, HeavyRegularizationPinsTheta) {
  const auto h = four_class_hierarchy(8);
  const auto ranking = build_sibling_ranking(h.embeddings);
  const auto n_sib = sibling_pairs(build_pair_categories(h.data.y, ranking, 2)).size();
  TrainConfig cfg;
  cfg.code_len = 8;
  cfg.sibling_count = 2;
  cfg.lambda_per_sibling_pair = 1e4;
  const auto model = train(h.data.x, h.data.y, ranking, cfg);
  EXPECT_DOUBLE_EQ(model.lambda, 1e4 * static_cast<double>(n_sib));
  for (double theta : model.theta_trajectory) {
    EXPECT_GE(theta, -1.0);
    EXPECT_LE(theta, -0.99);
  }
}

TEST(Train, ModeReductionsMatchKsh) {
  const auto h = four_class_hierarchy(9);
  const auto ranking = build_sibling_ranking(h.embeddings);
  TrainConfig ksh;
  ksh.code_len = 8;
  ksh.mode = TargetMode::KSHBinary;
  ksh.seed = 3;
  const auto base = train(h.data.x, h.data.y, ranking, ksh);

  TrainConfig fixed_neg = ksh;
  fixed_neg.mode = TargetMode::FixedTheta;
  fixed_neg.theta = -1.0;
  EXPECT_EQ(train(h.data.x, h.data.y, ranking, fixed_neg).projection, base.projection);

  TrainConfig no_siblings = fixed_neg;
  no_siblings.theta = 0.5;
  no_siblings.sibling_count = 1;
  EXPECT_EQ(train(h.data.x, h.data.y, ranking, no_siblings).projection, base.projection);

  TrainConfig learned = ksh;
  learned.mode = TargetMode::LearnedTheta;
  learned.sibling_count = 1;
  EXPECT_THROW(train(h.data.x, h.data.y, ranking, learned), DomainError);
}

TEST(Train, RejectsUncenteredFeatures) {
  const auto h = four_class_hierarchy(10);
  const Matrix shifted = h.data.x.values().array() + 1.0;
  EXPECT_THROW(train(FeatureMatrix(shifted), h.data.y, build_sibling_ranking(h.embeddings), TrainConfig{}),
               DomainError);
}

TEST(Train, RefinementNeverWorsensTheBitFit) {
  const auto h = four_class_hierarchy(11);
  TrainConfig cfg;
  cfg.code_len = 12;
  cfg.mode = TargetMode::FixedTheta;
  const auto model = train(h.data.x, h.data.y, build_sibling_ranking(h.embeddings), cfg);
  ASSERT_EQ(model.diagnostics.size(), 12u);
  for (const auto& d : model.diagnostics) EXPECT_LE(d.final_fit, d.spectral_fit);
  for (Index l = 0; l < model.projection.rows(); ++l) {
    EXPECT_TRUE(model.projection.row(l).allFinite());
    EXPECT_GT(model.projection.row(l).norm(), 0.0);
  }
}

TEST(Train, DeterministicSerializationAndBalance) {
  const auto h = four_class_hierarchy(12);
  const auto ranking = build_sibling_ranking(h.embeddings);
  TrainConfig cfg;
  cfg.code_len = 8;
  cfg.sibling_count = 2;
  std::ostringstream a, b;
  write_hash_model(a, train(h.data.x, h.data.y, ranking, cfg));
  const auto model = train(h.data.x, h.data.y, ranking, cfg);
  write_hash_model(b, model);
  EXPECT_EQ(a.str(), b.str());
  std::istringstream in(a.str());
  const auto back = read_hash_model(in);
  EXPECT_EQ(back.projection, model.projection);
  EXPECT_EQ(back.theta_trajectory, model.theta_trajectory);
  EXPECT_EQ(back.tag, ModelTag::LearnedTheta);
  for (double imbalance : bit_imbalance(encode(model, h.data.x))) EXPECT_LT(imbalance, 0.5);
}

TEST(Train, EmbeddingModeAndTrajectoryShapes) {
  const auto h = four_class_hierarchy(13);
  const OutputEmbeddingTable table(h.embeddings);
  const auto ranking = build_sibling_ranking(table);
  TrainConfig cfg;
  cfg.code_len = 6;
  cfg.mode = TargetMode::Embedding;
  EXPECT_THROW(train(h.data.x, h.data.y, ranking, cfg), DomainError);
  const auto e = train(h.data.x, h.data.y, ranking, cfg, &table);
  EXPECT_TRUE(e.theta_trajectory.empty());
  cfg.mode = TargetMode::FixedTheta;
  cfg.theta = 0.25;
  const auto f = train(h.data.x, h.data.y, ranking, cfg);
  EXPECT_EQ(f.theta_trajectory, std::vector<double>(6, 0.25));
  cfg.mode = TargetMode::KSHBinary;
  EXPECT_EQ(train(h.data.x, h.data.y, ranking, cfg).final_theta(), -1.0);
}

TEST(Train, SampledPairsBackend) {
  const auto h = four_class_hierarchy(14);
  const auto ranking = build_sibling_ranking(h.embeddings);
  TrainConfig cfg;
  cfg.code_len = 8;
  cfg.sibling_count = 2;
  cfg.max_dense_items = 50;
  cfg.sampled_pairs_per_category = 2000;
  const auto a = train(h.data.x, h.data.y, ranking, cfg);
  const auto b = train(h.data.x, h.data.y, ranking, cfg);
  EXPECT_EQ(a.projection, b.projection);
  const auto codes = pack(encode(a, h.data.x));
  double same = 0, other = 0;
  std::size_t ns = 0, no = 0;
  for (Index i = 0; i < 100; ++i)
    for (Index j = 0; j < 100; ++j) {
      const double d = hamming_distance(codes.row(i), codes.row(j));
      if (h.data.y[i] == h.data.y[j]) {
        same += d;
        ++ns;
      } else {
        other += d;
        ++no;
      }
    }
  EXPECT_LT(same / ns, other / no);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  cfg.theta = 0.2;
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg.mode = TargetMode::FixedTheta;
  EXPECT_NO_THROW(cfg.validate());
  cfg.theta = 1.5;
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg = TrainConfig{};
  cfg.code_len = 0;
  EXPECT_THROW(cfg.validate(), DomainError);
}

}  // namespace
}  // namespace shoe
