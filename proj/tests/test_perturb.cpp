#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "siamuap/perturb.hpp"
#include "support.hpp"

using namespace siamuap;

namespace {

Image<double> constant(int h, int w, int c, double v) { return Image<double>(h, w, c, v); }

}  // namespace

TEST(PatchRegion, SquareFakeBoxCoversItsFootprint) {
  const PatchRegion r = patch_region(160, 160, 32, {10, 10, 42, 42});
  EXPECT_EQ(r.x0, 10);
  EXPECT_EQ(r.x1, 42);
  EXPECT_EQ(r.y0, 10);
  EXPECT_EQ(r.y1, 42);
  EXPECT_EQ(r.px, 0);
  EXPECT_EQ(r.py, 0);
}

TEST(PatchRegion, ClippedAtImageBorder) {
  const PatchRegion r = patch_region(160, 160, 32, {0, 150, 10, 160});
  EXPECT_EQ(r.x0, 0);
  EXPECT_EQ(r.px, 11);
  EXPECT_EQ(r.y1, 160);
  EXPECT_EQ(r.y1 - r.y0, 160 - 139);
}

TEST(PatchRegion, CenterOutsideThrows) {
  EXPECT_THROW(patch_region(160, 160, 32, {170, 10, 200, 40}), std::invalid_argument);
  EXPECT_THROW(patch_region(160, 160, 32, {-40, 10, -2, 40}), std::invalid_argument);
}

TEST(AddPatch, OnlyFootprintChangesAndValuesClip) {
  std::mt19937_64 rng(1);
  const auto x = oracle::random_image<double>(rng, 160, 160, 3);
  const auto patch = oracle::random_image<double>(rng, 32, 32, 3, -30, 30);
  const Box fake{40, 60, 72, 92};
  const auto out = add_patch(x, patch, fake);
  for (int y = 0; y < 160; ++y) {
    for (int xx = 0; xx < 160; ++xx) {
      for (int c = 0; c < 3; ++c) {
        const bool inside = xx >= 40 && xx < 72 && y >= 60 && y < 92;
        if (!inside) {
          ASSERT_EQ(out(y, xx, c), x(y, xx, c));
          continue;
        }
        const double expected = std::clamp(x(y, xx, c) + patch(y - 60, xx - 40, c), 0.0, 255.0);
        ASSERT_EQ(out(y, xx, c), expected);
      }
    }
  }
}

TEST(AddPatch, SaturatesAt255) {
  const auto out = add_patch(constant(40, 40, 3, 250), constant(8, 8, 3, 20), {16, 16, 24, 24});
  EXPECT_EQ(out(20, 20, 0), 255.0);
  EXPECT_EQ(out(0, 0, 0), 250.0);
}

TEST(AddPatch, ShapeErrors) {
  EXPECT_THROW(add_patch(constant(40, 40, 3, 0), constant(8, 8, 2, 0), {16, 16, 24, 24}), std::invalid_argument);
  EXPECT_THROW(add_patch(constant(40, 40, 3, 0), constant(8, 6, 3, 0), {16, 16, 24, 24}), std::invalid_argument);
}

TEST(PastePatch, ReplacesAndClips) {
  const auto out = paste_patch(constant(40, 40, 3, 100), constant(8, 8, 3, -5), {16, 16, 24, 24});
  EXPECT_EQ(out(20, 20, 1), 0.0);
  EXPECT_EQ(out(15, 20, 1), 100.0);
  const auto hi = paste_patch(constant(40, 40, 3, 100), constant(8, 8, 3, 300), {16, 16, 24, 24});
  EXPECT_EQ(hi(16, 16, 2), 255.0);
}

TEST(PerturbTemplate, AddsAndClips) {
  const auto out = perturb_template(constant(4, 4, 3, 100), constant(4, 4, 3, -0.1));
  EXPECT_NEAR(out(0, 0, 0), 99.9, 1e-12);
  const auto lo = perturb_template(constant(4, 4, 3, 0.05), constant(4, 4, 3, -0.1));
  EXPECT_EQ(lo(3, 3, 2), 0.0);
  EXPECT_THROW(perturb_template(constant(4, 4, 3, 0), constant(4, 5, 3, 0)), std::invalid_argument);
}

TEST(PerturbTemplate, ResultAlwaysInRange) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto z = oracle::random_image<double>(rng, 16, 16, 3);
    const auto d = oracle::random_image<double>(rng, 16, 16, 3, -300, 300);
    for (double v : perturb_template(z, d).data()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 255.0);
    }
  }
}

TEST(YCbCr, PureRedExample) {
  Image<double> red(1, 1, 3);
  red(0, 0, 0) = 255.0;
  const auto ycc = rgb_to_ycbcr(red);
  EXPECT_NEAR(ycc(0, 0, 0), 76.245, 1e-9);
  EXPECT_NEAR(ycc(0, 0, 1), 84.97232, 1e-9);
  EXPECT_NEAR(ycc(0, 0, 2), 255.5, 1e-9);
}

TEST(YCbCr, RoundTripWithinOneLevel) {
  std::mt19937_64 rng(3);
  const auto img = oracle::random_image<float>(rng, 200, 500, 3);
  const auto back = ycbcr_to_rgb(rgb_to_ycbcr(img));
  double worst = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) worst = std::max(worst, std::abs(double(back.data()[i]) - img.data()[i]));
  EXPECT_LE(worst, 1.0);
}

TEST(YCbCr, LumaShiftOnGrayIsUniform) {
  const auto gray = constant(8, 8, 3, 100.0);
  Image<double> delta(8, 8, 3);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) delta(y, x, 0) = 10.0;
  }
  const auto out = perturb_template_ycbcr(gray, delta);
  for (double v : out.data()) EXPECT_NEAR(v, 110.0, 1e-9);
}

TEST(YCbCr, ChromaPatchIsLocal) {
  std::mt19937_64 rng(4);
  const auto x = oracle::random_image<double>(rng, 48, 48, 3, 40, 200);
  const Image<double> y_zero(48, 48, 1);
  const auto cbcr = oracle::random_image<double>(rng, 8, 8, 2, -10, 10);
  const Box fake{20, 20, 28, 28};
  const auto out = apply_ycbcr_attack(x, y_zero, cbcr, fake);
  const PatchRegion r = patch_region(48, 48, 8, fake);
  bool changed_inside = false;
  for (int y = 0; y < 48; ++y) {
    for (int xx = 0; xx < 48; ++xx) {
      for (int c = 0; c < 3; ++c) {
        const double d = std::abs(out(y, xx, c) - x(y, xx, c));
        if (r.contains(y, xx)) {
          changed_inside |= d > 1e-6;
        } else {
          ASSERT_LT(d, 1e-9);
        }
      }
    }
  }
  EXPECT_TRUE(changed_inside);
}

TEST(YCbCr, ShapeErrors) {
  const Image<double> x(48, 48, 3);
  EXPECT_THROW(apply_ycbcr_attack(x, Image<double>(48, 48, 3), Image<double>(8, 8, 2), {20, 20, 28, 28}),
               std::invalid_argument);
  EXPECT_THROW(apply_ycbcr_attack(x, Image<double>(48, 48, 1), Image<double>(8, 8, 3), {20, 20, 28, 28}),
               std::invalid_argument);
}

TEST(PerturbationPair, ZeroPerturbationShapes) {
  const auto rgb = zero_perturbation<float>(64, 160, 32);
  EXPECT_EQ(rgb.delta.height(), 64);
  EXPECT_EQ(rgb.patch.channels(), 3);
  EXPECT_TRUE(rgb.search.empty());
  const auto ycc = zero_perturbation<float>(64, 160, 32, ColorMode::ycbcr);
  EXPECT_EQ(ycc.patch.channels(), 2);
  EXPECT_EQ(ycc.search.channels(), 1);
  const auto uap = zero_perturbation<float>(64, 160, 32, ColorMode::rgb, AttackKind::baseline_uap);
  EXPECT_EQ(uap.search.height(), 160);
  EXPECT_TRUE(uap.patch.empty());
  const auto paste = zero_perturbation<float>(64, 160, 32, ColorMode::rgb, AttackKind::baseline_paste);
  EXPECT_TRUE(paste.delta.empty());
}

TEST(PerturbationPair, DisabledPartsReturnCleanInput) {
  std::mt19937_64 rng(5);
  auto p = zero_perturbation<double>(16, 32, 8);
  p.delta = oracle::random_image<double>(rng, 16, 16, 3, -5, 5);
  p.patch = oracle::random_image<double>(rng, 8, 8, 3, -5, 5);
  p.use_template = false;
  p.use_search = false;
  const auto z = oracle::random_image<double>(rng, 16, 16, 3);
  const auto x = oracle::random_image<double>(rng, 32, 32, 3);
  EXPECT_EQ(apply_template_perturbation(p, z), z);
  EXPECT_EQ(apply_search_perturbation(p, x, {4, 4, 12, 12}), x);
}

TEST(ParseNames, RoundTripAndErrors) {
  for (auto m : {ColorMode::rgb, ColorMode::ycbcr}) EXPECT_EQ(parse_color_mode(to_string(m)), m);
  for (auto k : {AttackKind::patch_add, AttackKind::baseline_uap, AttackKind::baseline_paste}) {
    EXPECT_EQ(parse_attack_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_color_mode("hsv"), std::invalid_argument);
  EXPECT_THROW(parse_attack_kind("none"), std::invalid_argument);
}
