#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "siamuap/losses.hpp"
#include "support.hpp"

using namespace siamuap;

namespace {

const GridGeometry kGrid{8, 6, 48};

HeadMaps<double> random_maps(std::mt19937_64& rng, int g) {
  std::uniform_real_distribution<double> p(0.05, 0.95), r(2.0, 30.0);
  HeadMaps<double> m(g);
  for (auto& v : m.cls) v = p(rng);
  for (auto& v : m.quality) v = p(rng);
  for (auto& v : m.reg) v = r(rng);
  return m;
}

}  // namespace

TEST(FocalLoss, SinglePositiveAtHalf) {
  const std::vector<double> c{0.5}, t{1.0};
  // 0.25 * (1 - 0.5)^2 * ln 2
  EXPECT_NEAR(focal_loss<double>(c, t, 2.0, 0.25), 0.25 * 0.25 * std::log(2.0), 1e-15);
  EXPECT_NEAR(focal_loss<double>(c, t, 2.0, 0.25), 0.04332, 1e-5);
}

TEST(FocalLoss, SaturatedPredictionIsNearZero) {
  const std::vector<double> c{1.0 - 1e-12, 0.0, 1e-300}, t{1.0, 0.0, 0.0};
  EXPECT_LT(focal_loss<double>(c, t, 2.0, 0.25), 1e-10);
}

TEST(FocalLoss, EmptyTargetAndZeroPredictionIsZero) {
  const std::vector<double> c(10, 0.0), t(10, 0.0);
  EXPECT_EQ(focal_loss<double>(c, t, 2.0, 0.25), 0.0);
}

TEST(FocalLoss, NonFiniteInputThrows) {
  const std::vector<double> c{NAN}, t{1.0};
  EXPECT_THROW(focal_loss<double>(c, t, 2.0, 0.25), std::invalid_argument);
}

TEST(QualityBce, Examples) {
  const std::vector<double> one{1.0};
  EXPECT_NEAR(quality_bce<double>(std::vector<double>{0.5}, one, one), std::log(2.0), 1e-15);
  const std::vector<double> q{1.0, 0.0}, qs{1.0, 0.0}, mask{1.0, 1.0};
  EXPECT_LT(quality_bce<double>(q, qs, mask), 1e-11);
  EXPECT_EQ(quality_bce<double>(std::vector<double>{0.3}, one, std::vector<double>{0.0}), 0.0);
}

TEST(IouLoss, Examples) {
  const std::vector<double> target{4, 4, 4, 4}, one{1.0}, zero{0.0};
  EXPECT_NEAR(iou_loss<double>(target, target, one), 0.0, 1e-15);
  // 16 x 8 box around the same point as an 8 x 8 target: IoU 64 / 128
  const std::vector<double> wide{4, 4, 12, 4};
  EXPECT_NEAR(iou_loss<double>(wide, target, one), std::log(2.0), 1e-15);
  EXPECT_EQ(iou_loss<double>(wide, target, zero), 0.0);
}

TEST(TotalLoss, ZeroBranchesAndZeroPerturbationIsZero) {
  HeadMaps<double> m(kGrid.grid_size);
  FakeLabels l = make_fake_labels({0, 0, 20, 20}, kGrid);
  for (std::size_t i = 0; i < m.cls.size(); ++i) {
    m.cls[i] = l.cls_target[i];
    m.quality[i] = l.cls_target[i];
  }
  m.reg.assign(l.reg_target.begin(), l.reg_target.end());
  const std::vector<double> delta(12, 0.0), patch(12, 0.0);
  const LossBreakdown out = total_loss<double>(m, l, kGrid, delta, patch, LossWeights{});
  EXPECT_LT(out.total, 1e-10);
  EXPECT_EQ(out.penalty, 0.0);
}

TEST(TotalLoss, TemplateEnergyOfAllOnes) {
  const std::vector<double> delta(127 * 127 * 3, 1.0);
  EXPECT_EQ(squared_norm<double>(delta), 48387.0);
  HeadMaps<double> m(kGrid.grid_size);
  FakeLabels l = make_fake_labels({0, 0, 20, 20}, kGrid);
  LossWeights w;
  w.alpha = w.beta = w.gamma = 0.0;
  const LossBreakdown out = total_loss<double>(m, l, kGrid, delta, {}, w);
  EXPECT_NEAR(out.total, 241.935, 1e-9);
}

TEST(TotalLoss, PublishedWeights) {
  const LossWeights w;
  EXPECT_EQ(w.alpha, 1.0);
  EXPECT_EQ(w.beta, 1.0);
  EXPECT_EQ(w.gamma, 1.0);
  EXPECT_EQ(w.eta1, 0.005);
  EXPECT_EQ(w.eta2, 0.005);
}

TEST(TotalLoss, NoPositiveCellThrows) {
  HeadMaps<double> m(kGrid.grid_size);
  FakeLabels l = make_fake_labels({0, 0, 1, 1}, kGrid);
  ASSERT_EQ(l.n_pos, 0);
  EXPECT_THROW(total_loss<double>(m, l, kGrid, {}, {}, LossWeights{}), NoPositiveSample);
}

TEST(BranchLoss, BranchesAreNonNegative) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 200; ++i) {
    const HeadMaps<double> m = random_maps(rng, kGrid.grid_size);
    FakeLabels l = make_fake_labels(oracle::random_box(rng, 0, 48, 10.0), kGrid);
    if (l.n_pos == 0) continue;
    const LossBreakdown out = branch_loss(m, l, kGrid, LossWeights{});
    EXPECT_GE(out.cls, 0.0);
    EXPECT_GE(out.quality, 0.0);
    EXPECT_GE(out.reg, 0.0);
  }
}

TEST(BranchLoss, ScalesLinearlyWithBranchWeights) {
  std::mt19937_64 rng(12);
  const HeadMaps<double> m = random_maps(rng, kGrid.grid_size);
  FakeLabels l = make_fake_labels({6, 6, 30, 30}, kGrid);
  const std::vector<double> delta(30, 2.0);
  LossWeights w;
  const LossBreakdown base = total_loss<double>(m, l, kGrid, delta, {}, w);
  w.alpha *= 3.0;
  w.beta *= 3.0;
  w.gamma *= 3.0;
  const LossBreakdown scaled = total_loss<double>(m, l, kGrid, delta, {}, w);
  EXPECT_NEAR(scaled.total - scaled.penalty, 3.0 * (base.total - base.penalty), 1e-12);
  EXPECT_EQ(scaled.penalty, base.penalty);
}

TEST(BranchLoss, QualityTargetFollowsPredictions) {
  std::mt19937_64 rng(13);
  const HeadMaps<double> m = random_maps(rng, kGrid.grid_size);
  FakeLabels l = make_fake_labels({6, 6, 30, 30}, kGrid);
  branch_loss(m, l, kGrid, LossWeights{});
  EXPECT_EQ(l.quality_target, make_quality_label(decode_cell_boxes(m.reg, kGrid), l.box));
}

// Central differences of the branch loss with respect to every map entry,
// quality target held fixed.
TEST(BranchLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 5; ++trial) {
    HeadMaps<double> m = random_maps(rng, kGrid.grid_size);
    FakeLabels l = make_fake_labels(oracle::random_box(rng, 0, 48, 12.0), kGrid);
    if (l.n_pos == 0) continue;
    branch_loss(m, l, kGrid, LossWeights{});
    HeadMaps<double> g;
    branch_loss(m, l, kGrid, LossWeights{}, &g, QualityTarget::frozen);
    auto check = [&](std::vector<double>& values, const std::vector<double>& grad) {
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double h = 1e-6, keep = values[i];
        values[i] = keep + h;
        const double up = branch_loss<double>(m, l, kGrid, LossWeights{}, nullptr, QualityTarget::frozen).total;
        values[i] = keep - h;
        const double down = branch_loss<double>(m, l, kGrid, LossWeights{}, nullptr, QualityTarget::frozen).total;
        values[i] = keep;
        const double fd = (up - down) / (2 * h);
        EXPECT_NEAR(grad[i], fd, 1e-6 * std::max(1.0, std::abs(fd))) << i;
      }
    };
    check(m.cls, g.cls);
    check(m.quality, g.quality);
    check(m.reg, g.reg);
  }
}
