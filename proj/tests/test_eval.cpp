#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "siamuap/eval.hpp"
#include "support.hpp"

using namespace siamuap;

namespace {

std::vector<Box> shifted(const std::vector<Box>& boxes, double dx) {
  std::vector<Box> out;
  for (const Box& b : boxes) out.push_back(b.translated(dx, 0));
  return out;
}

std::vector<Box> squares(int n, double side = 10.0) {
  std::vector<Box> out;
  for (int i = 0; i < n; ++i) out.push_back(Box::from_xywh(3.0 * i, 50, side, side));
  return out;
}

// Direct SSIM: explicit 2-D Gaussian weights at every window position.
double brute_ssim(const Image<double>& a, const Image<double>& b, int win, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(win) * win);
  double norm = 0.0;
  const double c = (win - 1) / 2.0;
  for (int y = 0; y < win; ++y) {
    for (int x = 0; x < win; ++x) {
      w[y * win + x] = std::exp(-((x - c) * (x - c) + (y - c) * (y - c)) / (2 * sigma * sigma));
      norm += w[y * win + x];
    }
  }
  for (double& v : w) v /= norm;
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  double total = 0.0;
  for (int ch = 0; ch < a.channels(); ++ch) {
    double sum = 0.0;
    int count = 0;
    for (int oy = 0; oy + win <= a.height(); ++oy) {
      for (int ox = 0; ox + win <= a.width(); ++ox) {
        double ma = 0, mb = 0;
        for (int y = 0; y < win; ++y) {
          for (int x = 0; x < win; ++x) {
            ma += w[y * win + x] * a(oy + y, ox + x, ch);
            mb += w[y * win + x] * b(oy + y, ox + x, ch);
          }
        }
        double va = 0, vb = 0, cov = 0;
        for (int y = 0; y < win; ++y) {
          for (int x = 0; x < win; ++x) {
            const double da = a(oy + y, ox + x, ch) - ma, db = b(oy + y, ox + x, ch) - mb;
            va += w[y * win + x] * da * da;
            vb += w[y * win + x] * db * db;
            cov += w[y * win + x] * da * db;
          }
        }
        sum += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
    total += sum / count;
  }
  return total / a.channels();
}

}  // namespace

TEST(Ao, IdenticalTrajectoriesScoreOne) {
  const auto gt = squares(8);
  EXPECT_DOUBLE_EQ(ao(gt, gt), 1.0);
  EXPECT_DOUBLE_EQ(success_rate(gt, gt), 1.0);
  EXPECT_DOUBLE_EQ(precision(gt, gt), 1.0);
  EXPECT_DOUBLE_EQ(norm_precision(gt, gt), 1.0);
}

TEST(Ao, FirstFrameIsExcluded) {
  auto gt = squares(3);
  auto pred = gt;
  pred[0] = Box{500, 500, 510, 510};
  EXPECT_DOUBLE_EQ(ao(pred, gt), 1.0);
}

TEST(Ao, AlternatingHalfOverlap) {
  // 5 px shift of a 10 px square: IoU 50 / 150.
  const auto gt = squares(5);
  auto pred = gt;
  for (std::size_t i = 1; i < pred.size(); i += 2) pred[i] = pred[i].translated(1000, 0);
  EXPECT_DOUBLE_EQ(ao(pred, gt), 0.5);
  EXPECT_DOUBLE_EQ(ao(shifted(gt, 5), gt), 1.0 / 3.0);
}

TEST(Ao, DegeneratePredictionCountsAsZero) {
  const auto gt = squares(3);
  auto pred = gt;
  pred[2] = Box{5, 5, 5, 9};
  EXPECT_DOUBLE_EQ(ao(pred, gt), 0.5);
}

TEST(Ao, Errors) {
  EXPECT_THROW(ao(squares(3), squares(4)), std::invalid_argument);
  EXPECT_THROW(ao(squares(1), squares(1)), std::invalid_argument);
}

TEST(SuccessRate, BoundaryIsExclusive) {
  // IoU exactly 0.5: 10 x 10 target inside a 10 x 20 prediction.
  const std::vector<Box> gt{{0, 0, 10, 10}, {0, 0, 10, 10}};
  const std::vector<Box> pred{{0, 0, 10, 10}, {0, 0, 10, 20}};
  EXPECT_DOUBLE_EQ(iou(pred[1], gt[1]), 0.5);
  EXPECT_EQ(success_rate(pred, gt, 0.5), 0.0);
  EXPECT_EQ(success_rate(pred, gt, 0.49), 1.0);
}

TEST(SuccessRate, ThreeOfFour) {
  const auto gt = squares(5);
  auto pred = gt;
  pred[3] = pred[3].translated(7, 0);
  EXPECT_DOUBLE_EQ(success_rate(pred, gt), 0.75);
}

TEST(SuccessRate, MonotoneInThreshold) {
  std::mt19937_64 rng(1);
  std::vector<Box> gt, pred;
  for (int i = 0; i < 40; ++i) {
    gt.push_back(oracle::random_box(rng, 0, 100, 5));
    pred.push_back(oracle::random_box(rng, 0, 100, 5));
  }
  double prev = 1.0;
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    const double s = success_rate(pred, gt, t);
    EXPECT_LE(s, prev);
    prev = s;
  }
}

TEST(Precision, RadiusIsInclusive) {
  const std::vector<Box> gt{{0, 0, 10, 10}, {0, 0, 10, 10}};
  const std::vector<Box> pred{{0, 0, 10, 10}, {20, 0, 30, 10}};
  EXPECT_EQ(precision(pred, gt, 20.0), 1.0);
  EXPECT_EQ(precision(pred, gt, 19.999), 0.0);
}

TEST(Precision, MixedDistances) {
  const std::vector<Box> gt(3, Box{0, 0, 10, 10});
  const std::vector<Box> pred{gt[0], gt[0].translated(10, 0), gt[0].translated(0, 30)};
  EXPECT_DOUBLE_EQ(precision(pred, gt), 0.5);
}

TEST(Precision, AsymmetricUnderRoleSwapForNormalizedVariant) {
  // Center error is symmetric but normalization uses the reference size.
  const std::vector<Box> small{{0, 0, 10, 10}, {0, 0, 10, 10}};
  const std::vector<Box> large{{0, 0, 10, 10}, {0, 0, 14, 14}};
  EXPECT_EQ(precision(small, large), precision(large, small));
  EXPECT_NE(norm_precision(small, large), norm_precision(large, small));
}

TEST(NormPrecision, CurveSamples) {
  // Normalized error 0.1 on the only frame: thresholds 0.1..0.5 succeed,
  // i.e. samples 20..100 of 0..100.
  const std::vector<Box> gt{{0, 0, 10, 10}, {0, 0, 10, 10}};
  const std::vector<Box> pred{gt[0], gt[0].translated(1, 0)};
  EXPECT_NEAR(norm_precision(pred, gt), 81.0 / 101.0, 1e-12);
}

TEST(Ao, SymmetricInArguments) {
  std::mt19937_64 rng(2);
  std::vector<Box> a, b;
  for (int i = 0; i < 30; ++i) {
    a.push_back(oracle::random_box(rng, 0, 80, 5));
    b.push_back(oracle::random_box(rng, 0, 80, 5));
  }
  EXPECT_DOUBLE_EQ(ao(a, b), ao(b, a));
}

TEST(Ao, InvariantToFramePermutationAfterFirst) {
  std::mt19937_64 rng(3);
  std::vector<Box> a, b;
  for (int i = 0; i < 30; ++i) {
    a.push_back(oracle::random_box(rng, 0, 80, 5));
    b.push_back(oracle::random_box(rng, 0, 80, 5));
  }
  std::vector<std::size_t> idx(29);
  std::iota(idx.begin(), idx.end(), 1);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Box> pa{a[0]}, pb{b[0]};
  for (std::size_t i : idx) {
    pa.push_back(a[i]);
    pb.push_back(b[i]);
  }
  EXPECT_NEAR(ao(pa, pb), ao(a, b), 1e-12);
  EXPECT_NEAR(success_rate(pa, pb), success_rate(a, b), 1e-12);
  EXPECT_NEAR(precision(pa, pb), precision(a, b), 1e-12);
}

TEST(Robustness, PerHundredFrames) {
  const Robustness r = robustness(3, 150);
  EXPECT_EQ(r.failures, 3);
  EXPECT_DOUBLE_EQ(r.per_100_frames, 2.0);
  EXPECT_THROW(robustness(1, 0), std::invalid_argument);
  EXPECT_THROW(robustness(-1, 10), std::invalid_argument);
}

TEST(Accuracy, TrackedFramesOnly) {
  const std::vector<double> o{1.0, 0.6, 0.6, 0.0, 0.0, 1.0, 0.6};
  const std::vector<FrameStatus> s{FrameStatus::init,    FrameStatus::tracked, FrameStatus::tracked,
                                   FrameStatus::failure, FrameStatus::skipped, FrameStatus::init,
                                   FrameStatus::tracked};
  EXPECT_DOUBLE_EQ(accuracy(o, s), 0.6);
  EXPECT_EQ(accuracy({1.0}, {FrameStatus::init}), 0.0);
  EXPECT_THROW(accuracy({1.0}, {}), std::invalid_argument);
}

TEST(Ssim, IdenticalImagesScoreOne) {
  std::mt19937_64 rng(4);
  const auto a = oracle::random_image<double>(rng, 24, 30, 3);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, Symmetric) {
  std::mt19937_64 rng(5);
  const auto a = oracle::random_image<double>(rng, 20, 20, 3);
  const auto b = oracle::random_image<double>(rng, 20, 20, 3);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
}

TEST(Ssim, ConstantImagesClosedForm) {
  const Image<double> a(16, 16, 1, 100.0), b(16, 16, 1, 120.0);
  const double c1 = std::pow(0.01 * 255, 2);
  const double expected = (2 * 100.0 * 120.0 + c1) / (100.0 * 100.0 + 120.0 * 120.0 + c1);
  EXPECT_NEAR(ssim(a, b), expected, 1e-9);
}

TEST(Ssim, MatchesDirectWindowComputation) {
  std::mt19937_64 rng(6);
  const auto a = oracle::random_image<double>(rng, 19, 23, 2);
  auto b = a;
  std::normal_distribution<double> noise(0, 20);
  for (auto& v : b.data()) v = std::clamp(v + noise(rng), 0.0, 255.0);
  EXPECT_NEAR(ssim(a, b), brute_ssim(a, b, 11, 1.5), 1e-9);
}

TEST(Ssim, RegionRestrictsComparison) {
  std::mt19937_64 rng(7);
  const auto a = oracle::random_image<double>(rng, 40, 40, 3);
  auto b = a;
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 12; ++x) b(y, x, 0) = 0.0;
  }
  EXPECT_LT(ssim(a, b), 1.0);
  EXPECT_NEAR(ssim(a, b, Box{15, 15, 40, 40}), 1.0, 1e-12);
  EXPECT_LT(ssim(a, b, Box{0, 0, 20, 20}), 1.0);
}

TEST(Ssim, Errors) {
  const Image<double> a(20, 20, 3), b(20, 21, 3);
  EXPECT_THROW(ssim(a, b), std::invalid_argument);
  EXPECT_THROW(ssim(a, a, Box{0, 0, 8, 8}), std::invalid_argument);
  EXPECT_THROW(ssim(a, a, Box{-5, 0, 15, 15}), std::invalid_argument);
}

TEST(Report, EmptyInputsAreErrors) {
  EXPECT_THROW(make_report({}), std::invalid_argument);
  RunRecord r;
  r.label = "empty";
  EXPECT_THROW(summarize(r), std::invalid_argument);
}

TEST(Report, CleanRunOmitsFakeMetrics) {
  const auto gt = squares(6);
  RunRecord r;
  r.sequences.push_back(evaluate_sequence("a", gt, gt));
  const auto rep = summarize(r);
  EXPECT_FALSE(rep.aggregate.ao_fake.has_value());
  EXPECT_FALSE(rep.aggregate.robustness_failures.has_value());
  EXPECT_DOUBLE_EQ(rep.aggregate.ao_real, 1.0);
}

TEST(Report, AggregatesAreSequenceMeans) {
  const auto gt = squares(6);
  const auto fake = shifted(gt, 12);
  RunRecord r;
  r.sequences.push_back(evaluate_sequence("a", gt, gt, &fake));
  r.sequences.push_back(evaluate_sequence("b", shifted(gt, 5), gt, &fake));
  ReinitRun run;
  run.failures = 2;
  run.status = std::vector<FrameStatus>(50, FrameStatus::tracked);
  run.overlaps = std::vector<double>(50, 0.5);
  add_reinit(r.sequences[0], run);
  const auto rep = make_report({r});
  ASSERT_EQ(rep.size(), 1u);
  const Aggregate& a = rep[0].aggregate;
  EXPECT_NEAR(a.ao_real, (1.0 + 1.0 / 3.0) / 2.0, 1e-12);
  ASSERT_TRUE(a.ao_fake.has_value());
  EXPECT_NEAR(*a.ao_fake, (r.sequences[0].ao_fake.value() + r.sequences[1].ao_fake.value()) / 2.0, 1e-12);
  EXPECT_EQ(a.robustness_failures.value(), 2);
  EXPECT_DOUBLE_EQ(a.robustness_per_100_frames.value(), 4.0);
  EXPECT_DOUBLE_EQ(a.accuracy.value(), 0.5);
}
