#include "avlip/contrastive.hpp"
#include "avlip/rng.hpp"

#include "grad_check.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace avlip;

namespace {

Mat<double> random_unit_rows(int b, int d, Rng& rng) {
  Mat<double> m(b, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  m.rowwise().normalize();
  return m;
}

}  // namespace

TEST(InfoNce, IdenticalEmbeddingsGiveLogTwo) {
  Mat<double> z(2, 3);
  z << 1, 0, 0, 1, 0, 0;
  const auto r = info_nce<double>(z, z, 0.1);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-6);
}

TEST(InfoNce, OrthonormalPairClosedForm) {
  const Mat<double> z = Mat<double>::Identity(2, 2);
  const auto r = info_nce<double>(z, z, 0.1);
  // Positive similarity 1, negative 0, tau 0.1: -log(e^10 / (e^10 + 1)).
  EXPECT_NEAR(r.loss, std::log1p(std::exp(-10.0)), 1e-9);
  EXPECT_NEAR(r.loss, 4.5399e-5, 1e-9);
  EXPECT_DOUBLE_EQ(r.logits(0, 0), 10.0);
}

TEST(InfoNce, JointRowPermutationLeavesLossUnchanged) {
  Rng rng(1);
  const auto zv = random_unit_rows(6, 5, rng);
  const auto za = random_unit_rows(6, 5, rng);
  const auto perm = rng.permutation(6);
  Mat<double> pv(6, 5), pa(6, 5);
  for (int i = 0; i < 6; ++i) {
    pv.row(i) = zv.row(perm[static_cast<std::size_t>(i)]);
    pa.row(i) = za.row(perm[static_cast<std::size_t>(i)]);
  }
  EXPECT_NEAR(info_nce<double>(zv, za, 0.1).loss, info_nce<double>(pv, pa, 0.1).loss, 1e-7);
}

TEST(InfoNce, SwappingModalitiesIsSymmetric) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto zv = random_unit_rows(5, 7, rng);
    const auto za = random_unit_rows(5, 7, rng);
    const auto a = info_nce<double>(zv, za, 0.1);
    const auto b = info_nce<double>(za, zv, 0.1);
    EXPECT_NEAR(a.loss, b.loss, 1e-12);
    EXPECT_NEAR(a.loss_va, b.loss_av, 1e-12);
    EXPECT_GE(a.loss, 0.0);
  }
}

TEST(InfoNce, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  Mat<double> zv = random_unit_rows(3, 4, rng);
  Mat<double> za = random_unit_rows(3, 4, rng);
  const auto r = info_nce<double>(zv, za, 0.1);
  std::vector<double> xv(zv.data(), zv.data() + zv.size()), xa(za.data(), za.data() + za.size());
  auto lv = [&] { return info_nce<double>(ConstMatMap<double>(xv.data(), 3, 4), za, 0.1, false).loss; };
  auto la = [&] { return info_nce<double>(zv, ConstMatMap<double>(xa.data(), 3, 4), 0.1, false).loss; };
  const auto gv = avlip::testing::numeric_grad(xv, lv);
  const auto ga = avlip::testing::numeric_grad(xa, la);
  EXPECT_LT(avlip::testing::relative_error(gv, std::vector<double>(r.grad_v.data(), r.grad_v.data() + 12)), 1e-5);
  EXPECT_LT(avlip::testing::relative_error(ga, std::vector<double>(r.grad_a.data(), r.grad_a.data() + 12)), 1e-5);
}

TEST(InfoNce, LossShrinksAsPositivesSeparateFromNegatives) {
  // Diagonal similarity s, off-diagonal 0 on a 3-pair batch.
  double prev = 1e9;
  for (double s : {0.2, 0.4, 0.6, 0.8, 1.0}) {
    Mat<double> zv = Mat<double>::Identity(3, 6);
    Mat<double> za = Mat<double>::Zero(3, 6);
    for (int i = 0; i < 3; ++i) {
      za(i, i) = s;
      za(i, i + 3) = std::sqrt(1 - s * s);
    }
    const double l = info_nce<double>(zv, za, 0.1).loss;
    EXPECT_LT(l, prev);
    prev = l;
  }
  EXPECT_LT(prev, 1e-4);
}

TEST(InfoNce, LossNonIncreasingAsTemperatureFallsUnderDiagonalDominance) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    auto zv = random_unit_rows(4, 8, rng);
    Mat<double> za = zv + 0.3 * random_unit_rows(4, 8, rng);
    za.rowwise().normalize();
    const Mat<double> s = zv * za.transpose();
    bool dominant = true;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        if (i != j && !(s(i, i) > s(i, j) && s(i, i) > s(j, i))) dominant = false;
    if (!dominant) continue;
    double prev = 1e9;
    for (double tau : {1.0, 0.5, 0.2, 0.1, 0.05, 0.02}) {
      const double l = info_nce<double>(zv, za, tau).loss;
      EXPECT_LE(l, prev + 1e-15);
      prev = l;
    }
  }
}

TEST(InfoNce, RejectsBadBatches) {
  const Mat<double> one = Mat<double>::Identity(1, 3);
  EXPECT_THROW(info_nce<double>(one, one, 0.1), ArgumentError);
  const Mat<double> a = Mat<double>::Identity(2, 3), b = Mat<double>::Identity(3, 3);
  EXPECT_THROW(info_nce<double>(a, b, 0.1), ArgumentError);
  Mat<double> unnorm = Mat<double>::Identity(2, 3) * 2.0;
  EXPECT_THROW(info_nce<double>(unnorm, a, 0.1), ContractError);
  EXPECT_THROW(info_nce<double>(a, a, 0.0), ArgumentError);
}

TEST(Retrieval, MatchedAndDerangedBatches) {
  const Mat<double> z = Mat<double>::Identity(4, 4);
  const auto ok = batch_retrieval_accuracy<double>(z, z);
  EXPECT_EQ(ok.v2a_top1, 1.0);
  EXPECT_EQ(ok.a2v_top1, 1.0);
  Mat<double> der(4, 4);
  for (int i = 0; i < 4; ++i) der.row(i) = z.row((i + 1) % 4);
  const auto bad = batch_retrieval_accuracy<double>(z, der);
  EXPECT_EQ(bad.v2a_top1, 0.0);
  EXPECT_EQ(bad.a2v_top1, 0.0);
}

TEST(Retrieval, TiesCountAsFailures) {
  Mat<double> z(2, 2);
  z << 1, 0, 1, 0;
  const auto r = batch_retrieval_accuracy<double>(z, z);
  EXPECT_EQ(r.v2a_top1, 0.0);
}

TEST(Retrieval, RandomEmbeddingsScoreChance) {
  Rng rng(5);
  double acc = 0.0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const auto zv = random_unit_rows(8, 64, rng);
    const auto za = random_unit_rows(8, 64, rng);
    acc += batch_retrieval_accuracy<double>(zv, za).v2a_top1;
  }
  EXPECT_NEAR(acc / trials, 1.0 / 8.0, 0.05);
}
