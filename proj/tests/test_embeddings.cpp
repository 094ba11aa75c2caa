// Copyright 2026 The SHOE Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "shoe/embeddings.hpp"

namespace shoe {
namespace {

Matrix line(std::initializer_list<double> xs) {
  Matrix m(static_cast<Index>(xs.size()), 1);
  Index i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

TEST(OutputEmbeddingTable, RowsAreUnitAndIdempotent) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Matrix raw(6, 4);
  for (Index i = 0; i < raw.size(); ++i) raw.data()[i] = g(rng);
  const OutputEmbeddingTable t(raw);
  for (Index y = 0; y < 6; ++y) EXPECT_NEAR(t.normalized().row(y).norm(), 1.0, 1e-9);
  const Matrix again = OutputEmbeddingTable::normalize_rows(t.normalized());
  EXPECT_LT((again - t.normalized()).cwiseAbs().maxCoeff(), 1e-12);
  for (ClassId a = 0; a < 6; ++a)
    for (ClassId b = 0; b < 6; ++b) {
      EXPECT_GE(t.similarity(a, b), -1.0);
      EXPECT_LE(t.similarity(a, b), 1.0);
    }
}

TEST(OutputEmbeddingTable, CentersColumnsBeforeNormalizing) {
  Matrix raw(2, 2);
  raw << 3, 1, 1, 1;
  const OutputEmbeddingTable centered(raw);
  EXPECT_NEAR(centered.similarity(0, 1), -1.0, 1e-12);
  const OutputEmbeddingTable plain(raw, false);
  EXPECT_NEAR(plain.similarity(0, 1), (3.0 + 1.0) / (std::sqrt(10.0) * std::sqrt(2.0)), 1e-12);
  Matrix zero_row(2, 2);
  zero_row << 1, 1, 0, 0;
  EXPECT_THROW(OutputEmbeddingTable(zero_row, false), DegenerateData);
}

TEST(SiblingRanking, TwoClasses) {
  const auto r = build_sibling_ranking(line({0.0, 5.0}));
  EXPECT_EQ(r(0, 0), 0u);
  EXPECT_EQ(r(0, 1), 1u);
  EXPECT_EQ(r(1, 1), 0u);
  EXPECT_EQ(r(1, 0), 1u);
  EXPECT_THROW(build_sibling_ranking(line({1.0})), DomainError);
}

TEST(SiblingRanking, Collinear) {
  const auto r = build_sibling_ranking(line({0.0, 1.0, 10.0}));
  EXPECT_EQ(r.ordered(0), (std::vector<ClassId>{0, 1, 2}));
  EXPECT_EQ(r.ordered(2), (std::vector<ClassId>{2, 1, 0}));
}

TEST(SiblingRanking, TiesByClassIdAndSelfFirst) {
  // classes 1 and 2 share an embedding; class 0 is equidistant from both
  const auto r = build_sibling_ranking(line({0.0, 4.0, 4.0, 9.0}));
  EXPECT_EQ(r.ordered(0), (std::vector<ClassId>{0, 1, 2, 3}));
  EXPECT_EQ(r.ordered(2), (std::vector<ClassId>{2, 1, 0, 3}));
}

TEST(SiblingRanking, RowsArePermutations) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> u(0, 3);
  Matrix raw(9, 2);
  for (Index i = 0; i < raw.size(); ++i) raw.data()[i] = u(rng);
  const auto r = build_sibling_ranking(raw);
  for (ClassId y = 0; y < 9; ++y) {
    EXPECT_EQ(r(y, y), 0u);
    std::vector<bool> seen(9, false);
    for (ClassId z = 0; z < 9; ++z) seen[r(y, z)] = true;
    EXPECT_EQ(std::count(seen.begin(), seen.end(), true), 9);
  }
}

TEST(PairTarget, SameClassAlwaysOne) {
  const auto r = build_sibling_ranking(line({0, 1, 2}));
  const OutputEmbeddingTable t(line({0, 1, 2}) + Matrix::Constant(3, 1, 1.0), false);
  for (auto mode : {TargetMode::Embedding, TargetMode::FixedTheta, TargetMode::LearnedTheta, TargetMode::KSHBinary}) {
    const auto p = pair_target({mode, 6}, 1, 1, r, &t, -0.5);
    EXPECT_EQ(p.value, 1.0);
    EXPECT_EQ(p.category, PairCategory::Same);
  }
}

TEST(PairTarget, EmbeddingModeOrthogonalIsZero) {
  const OutputEmbeddingTable t(Matrix::Identity(3, 3), false);
  const auto r = build_sibling_ranking(t);
  const auto p = pair_target({TargetMode::Embedding, 2}, 0, 2, r, &t, 0.0);
  EXPECT_NEAR(p.value, 0.0, 1e-15);
  EXPECT_EQ(p.category, training_category(r, 0, 2, 2));
}

TEST(PairTarget, FixedThetaSiblingAtRankThree) {
  const auto r = build_sibling_ranking(line({0, 1, 2, 3, 4, 5, 6, 7}));
  ASSERT_EQ(r(0, 3), 3u);
  const auto p = pair_target({TargetMode::FixedTheta, 6}, 0, 3, r, nullptr, -0.5);
  EXPECT_EQ(p.value, -0.5);
  EXPECT_EQ(p.category, PairCategory::Sibling);
  const auto far = pair_target({TargetMode::FixedTheta, 6}, 0, 7, r, nullptr, -0.5);
  EXPECT_EQ(far.value, -1.0);
  EXPECT_EQ(far.category, PairCategory::Unrelated);
  EXPECT_EQ(pair_target({TargetMode::KSHBinary, 6}, 0, 3, r, nullptr, -0.5).value, -1.0);
}

TEST(PairTarget, SiblingWindowExcludesRankM) {
  const auto r = build_sibling_ranking(line({0, 1, 2, 3, 4, 5, 6, 7}));
  EXPECT_TRUE(in_sibling_window(r, 0, 5, 6));
  EXPECT_FALSE(in_sibling_window(r, 0, 6, 6));
  EXPECT_FALSE(in_sibling_window(r, 0, 0, 6));
}

TEST(PairTarget, AsymmetricRankingIsSymmetrizedForTraining) {
  // positions 0, 1, 3 with m = 2: class 2's nearest is 1, but class 1's nearest is 0
  const auto r = build_sibling_ranking(line({0, 1, 3}));
  EXPECT_TRUE(in_sibling_window(r, 2, 1, 2));
  EXPECT_FALSE(in_sibling_window(r, 1, 2, 2));
  EXPECT_EQ(training_category(r, 1, 2, 2), PairCategory::Sibling);
  EXPECT_EQ(training_category(r, 2, 1, 2), PairCategory::Sibling);
  EXPECT_EQ(training_category(r, 0, 2, 2), PairCategory::Unrelated);
}

TEST(PairTarget, EmbeddingTargetsInRange) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  Matrix raw(7, 5);
  for (Index i = 0; i < raw.size(); ++i) raw.data()[i] = g(rng);
  const OutputEmbeddingTable t(raw);
  const auto r = build_sibling_ranking(t);
  for (ClassId a = 0; a < 7; ++a)
    for (ClassId b = 0; b < 7; ++b) {
      const double v = pair_target({TargetMode::Embedding, 6}, a, b, r, &t, 0.0).value;
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
}

TEST(TargetMode, ParseAndPrint) {
  for (auto mode : {TargetMode::Embedding, TargetMode::FixedTheta, TargetMode::LearnedTheta, TargetMode::KSHBinary})
    EXPECT_EQ(parse_target_mode(to_string(mode)), mode);
  EXPECT_THROW(parse_target_mode("bogus"), DomainError);
}

TEST(Taxonomy, RootWithTwoLeaves) {
  const std::vector<io::HierarchyEdge> edges = {{0, -1}, {1, 0}, {2, 0}};
  const auto t = build_taxonomy_embeddings(edges, {1, 2});
  Matrix expect(2, 3);
  expect << 1, 1, 0, 1, 0, 1;
  EXPECT_EQ(t.raw(), expect);
  EXPECT_NEAR(t.similarity(0, 1), 0.5, 1e-12);
}

TEST(Taxonomy, ReflexiveAncestor) {
  const auto t = build_taxonomy_embeddings({{5, -1}, {7, 5}}, {7, 5});
  EXPECT_EQ(t.raw()(0, 1), 1.0);  // node 7 sets its own column
  EXPECT_EQ(t.raw()(1, 0), 1.0);
  EXPECT_EQ(t.raw()(1, 1), 0.0);
}

TEST(Taxonomy, DisjointTreesAreOrthogonal) {
  const auto t = build_taxonomy_embeddings({{0, -1}, {1, 0}, {10, -1}, {11, 10}}, {1, 11});
  EXPECT_NEAR(t.similarity(0, 1), 0.0, 1e-15);
}

TEST(Taxonomy, Errors) {
  EXPECT_THROW(build_taxonomy_embeddings({{1, 2}, {2, 3}, {3, 1}}, {1}), DomainError);
  EXPECT_THROW(build_taxonomy_embeddings({{0, -1}, {1, 0}}, {9}), DomainError);
  EXPECT_THROW(build_taxonomy_embeddings({{1, 0}, {1, 2}}, {1}), DomainError);
}

}  // namespace
}  // namespace shoe
