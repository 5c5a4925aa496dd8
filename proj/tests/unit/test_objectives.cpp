#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mmp/errors.hpp"
#include "mmp/objectives.hpp"
#include "mmp/ops.hpp"
#include "test_support.hpp"

namespace mmp {
namespace {

using testing::nce_oracle;
using testing::random_tensor;

double triplet_oracle(const std::vector<double>& s, std::size_t b, double m) {
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      total += std::max(0.0, m - s[i * b + i] + s[i * b + j]);
      total += std::max(0.0, m - s[i * b + i] + s[j * b + i]);
    }
  }
  return total / b;
}

std::vector<double> random_s(std::size_t b, Rng& rng) {
  std::vector<double> s(b * b);
  for (double& x : s) x = rng.uniform(-1.0, 1.0);
  return s;
}

TEST(Nce, HandCaseIdentityTwoByTwo) {
  const double want = std::log(std::numbers::e + 2.0) - 1.0;
  EXPECT_NEAR(nce_batch_loss(Tensor::eye(2), 1.0).item(), want, 1e-12);
  EXPECT_NEAR(want, 0.551444, 1e-6);
}

TEST(Nce, MatchesScalarOracle) {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t b = 1 + trial % 4;
    const double tau = trial % 2 ? 1.0 : 0.1;
    const auto s = random_s(b, rng);
    EXPECT_NEAR(nce_batch_loss(Tensor::from({b, b}, s), tau).item(), nce_oracle(s, b, tau), 1e-10);
  }
}

TEST(Nce, SingletonBatchHasZeroLoss) {
  EXPECT_EQ(nce_batch_loss(Tensor::matrix({{0.3}}), 0.1).item(), 0.0);
}

TEST(Nce, InvariantToUniformShiftAndPositive) {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t b = 2 + trial % 3;
    auto s = random_s(b, rng);
    const double base = nce_batch_loss(Tensor::from({b, b}, s), 0.1).item();
    EXPECT_GT(base, 0.0);
    for (double& x : s) x += 0.37;
    EXPECT_NEAR(nce_batch_loss(Tensor::from({b, b}, s), 0.1).item(), base, 1e-12);
  }
}

TEST(Nce, StableForLargeLogits) {
  const double v = nce_batch_loss(Tensor::matrix({{1.0, -1.0}, {-1.0, 1.0}}), 1e-3).item();
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Nce, RejectsBadArguments) {
  EXPECT_THROW(nce_batch_loss(Tensor::eye(2), 0.0), ParameterError);
  EXPECT_THROW(nce_batch_loss(Tensor::matrix({{1, 2, 3}}), 0.1), DimensionError);
}

TEST(Triplet, MatchesScalarOracle) {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 1 + trial % 4;
    const auto s = random_s(b, rng);
    EXPECT_NEAR(triplet_batch_loss(Tensor::from({b, b}, s), 0.2).item(), triplet_oracle(s, b, 0.2),
                1e-12);
  }
  EXPECT_EQ(triplet_batch_loss(Tensor::eye(3), 0.2).item(), 0.0);
  EXPECT_THROW(triplet_batch_loss(Tensor::eye(2), -0.1), ParameterError);
}

TEST(Similarity, CosineAndMatrix) {
  EXPECT_NEAR(cosine_similarity(Tensor::vector({1, 0}), Tensor::vector({1, 1})).item(),
              1.0 / std::sqrt(2.0), 1e-15);
  Rng rng(24);
  Tensor a = random_tensor({3, 5}, rng, 1.0, false), b = random_tensor({3, 5}, rng, 1.0, false);
  Tensor s = similarity_matrix(a, b);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(s.at(i, j), cosine_similarity(ops::row(a, i), ops::row(b, j)).item(), 1e-14);
      EXPECT_LE(std::abs(s.at(i, j)), 1.0 + 1e-15);
    }
  }
  Tensor scaled = similarity_matrix(ops::scale(a, 3.0), b);
  EXPECT_NEAR(scaled.at(1, 2), s.at(1, 2), 1e-14);
  EXPECT_THROW(cosine_similarity(Tensor::vector({0, 0}), Tensor::vector({1, 1})), NumericError);
  EXPECT_THROW(similarity_matrix(a, random_tensor({3, 4}, rng)), DimensionError);
}

struct Encs {
  BatchEncodings e;
  Tensor x, v, xm, vm, y, ym, xc, yc;
};

Encs make_encodings(Rng& rng) {
  Encs s;
  s.x = random_tensor({4, 6}, rng);
  s.v = random_tensor({4, 6}, rng);
  s.xm = random_tensor({4, 6}, rng);
  s.vm = random_tensor({4, 6}, rng);
  s.y = random_tensor({4, 6}, rng);
  s.ym = random_tensor({4, 6}, rng);
  s.xc = random_tensor({4, 6}, rng);
  s.yc = random_tensor({4, 6}, rng);
  return s;
}

double nce(const Tensor& a, const Tensor& b) {
  return nce_batch_loss(similarity_matrix(a, b), 0.1).item();
}

TEST(TotalLoss, PairedComposition) {
  Rng rng(25);
  Encs s = make_encodings(rng);
  BatchEncodings e;
  e.text = s.x;
  e.video = s.v;
  LossOptions inter_only;
  inter_only.intra = false;
  TotalLoss a = total_loss(e, inter_only);
  EXPECT_NEAR(a.breakdown.total, nce(s.x, s.v), 1e-12);
  EXPECT_EQ(a.breakdown.intra, 0.0);
  EXPECT_FALSE(a.breakdown.cross.has_value());

  EXPECT_THROW(total_loss(e, LossOptions{}), UsageError);
  e.text_masked = s.xm;
  e.video_masked = s.vm;
  TotalLoss b = total_loss(e, LossOptions{});
  EXPECT_NEAR(b.breakdown.intra, nce(s.x, s.xm) + nce(s.v, s.vm), 1e-12);
  EXPECT_NEAR(b.breakdown.total, b.breakdown.inter + b.breakdown.intra, 1e-12);
  EXPECT_NEAR(b.value.item(), b.breakdown.total, 0.0);

  LossOptions cross;
  cross.cross = true;
  EXPECT_THROW(total_loss(e, cross), ConfigError);
}

TEST(TotalLoss, PivotedCompositionWithCross) {
  Rng rng(26);
  Encs s = make_encodings(rng);
  BatchEncodings e;
  e.text = s.x;
  e.video = s.v;
  e.text_masked = s.xm;
  e.video_masked = s.vm;
  e.pivot = s.y;
  e.pivot_masked = s.ym;
  LossOptions o;
  o.cross = true;
  EXPECT_THROW(total_loss(e, o), UsageError);
  e.text_conditioned = s.xc;
  e.pivot_conditioned = s.yc;
  TotalLoss t = total_loss(e, o);
  EXPECT_NEAR(t.breakdown.inter, nce(s.x, s.v) + nce(s.y, s.v), 1e-12);
  EXPECT_NEAR(t.breakdown.intra, nce(s.x, s.xm) + nce(s.y, s.ym) + nce(s.v, s.vm), 1e-12);
  ASSERT_TRUE(t.breakdown.cross.has_value());
  EXPECT_NEAR(*t.breakdown.cross, nce(s.xc, s.yc), 1e-12);
  EXPECT_NEAR(t.breakdown.total, t.breakdown.inter + t.breakdown.intra + *t.breakdown.cross,
              1e-12);
}

TEST(TotalLoss, TripletReplacesOnlyInterTerms) {
  Rng rng(27);
  Encs s = make_encodings(rng);
  BatchEncodings e;
  e.text = s.x;
  e.video = s.v;
  e.text_masked = s.xm;
  e.video_masked = s.vm;
  LossOptions o;
  o.objective = Objective::kTriplet;
  TotalLoss t = total_loss(e, o);
  EXPECT_NEAR(t.breakdown.inter, triplet_batch_loss(similarity_matrix(s.x, s.v), 0.2).item(), 1e-12);
  EXPECT_NEAR(t.breakdown.intra, nce(s.x, s.xm) + nce(s.v, s.vm), 1e-12);
}

TEST(TotalLoss, IntraAndCrossAreNceOverSimilarities) {
  Rng rng(28);
  Encs s = make_encodings(rng);
  EXPECT_NEAR(intra_modal_loss(s.x, s.xm, 0.1).item(), nce(s.x, s.xm), 1e-15);
  EXPECT_NEAR(cross_lingual_loss(s.xc, s.yc, 1.0).item(),
              nce_batch_loss(similarity_matrix(s.xc, s.yc), 1.0).item(), 1e-15);
}

}  // namespace
}  // namespace mmp
