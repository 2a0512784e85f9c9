#include "skintone/color.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <gtest/gtest.h>

namespace skintone {
namespace {

TEST(SrgbToLab, WhiteAndBlack) {
  const LabColor white = srgb_to_lab({255, 255, 255});
  EXPECT_NEAR(white.L, 100.0, 1e-4);
  EXPECT_NEAR(white.a, 0.0, 1e-4);
  EXPECT_NEAR(white.b, 0.0, 1e-4);

  const LabColor black = srgb_to_lab({0, 0, 0});
  EXPECT_NEAR(black.L, 0.0, 1e-6);
  EXPECT_NEAR(black.a, 0.0, 1e-6);
  EXPECT_NEAR(black.b, 0.0, 1e-6);
}

TEST(SrgbToLab, NeutralGray118MatchesHandDerivation) {
  // For a neutral triple Y/Yn equals the linearized channel, so
  // L* = 116 * lin^(1/3) - 16 with lin = ((118/255 + 0.055) / 1.055)^2.4.
  const double lin = std::pow((118.0 / 255.0 + 0.055) / 1.055, 2.4);
  const double oracle = 116.0 * std::cbrt(lin) - 16.0;  // 49.637...
  const LabColor gray = srgb_to_lab({118, 118, 118});
  EXPECT_NEAR(oracle, 49.6, 0.1);
  EXPECT_NEAR(gray.L, oracle, 1e-9);
  EXPECT_NEAR(gray.a, 0.0, 0.1);
  EXPECT_NEAR(gray.b, 0.0, 0.1);
}

TEST(SrgbToLab, PublishedPrimaries) {
  // Reference values for D65 sRGB primaries.
  struct Case {
    RgbColor in;
    LabColor out;
  };
  const Case cases[] = {
      {{255, 0, 0}, {53.2408, 80.0925, 67.2032}},
      {{0, 255, 0}, {87.7347, -86.1827, 83.1793}},
      {{0, 0, 255}, {32.2970, 79.1875, -107.8602}},
  };
  for (const auto& c : cases) {
    const LabColor lab = srgb_to_lab(c.in);
    EXPECT_NEAR(lab.L, c.out.L, 0.01);
    EXPECT_NEAR(lab.a, c.out.a, 0.01);
    EXPECT_NEAR(lab.b, c.out.b, 0.01);
  }
}

TEST(SrgbToLab, NeutralsAreAchromatic) {
  for (int v = 0; v <= 255; ++v) {
    const auto u = static_cast<std::uint8_t>(v);
    const LabColor lab = srgb_to_lab({u, u, u});
    EXPECT_LT(std::abs(lab.a), 0.01) << v;
    EXPECT_LT(std::abs(lab.b), 0.01) << v;
  }
}

TEST(LabToSrgb, WhiteIsInGamut) {
  const RenderedRgb white = lab_to_srgb({100.0, 0.0, 0.0});
  EXPECT_EQ(white.rgb, (RgbColor{255, 255, 255}));
  EXPECT_FALSE(white.out_of_gamut);
}

TEST(LabToSrgb, SaturatedGreenRedIsOutOfGamut) {
  // Walking (50, t*200, 0) from the neutral axis, the forward transform of the
  // clamped rendering stops tracking the target well before t = 1.
  const RenderedRgb far = lab_to_srgb({50.0, 200.0, 0.0});
  EXPECT_TRUE(far.out_of_gamut);
  double boundary = 1.0;
  for (int i = 0; i <= 200; ++i) {
    const double t = i / 200.0;
    const LabColor target{50.0, 200.0 * t, 0.0};
    if (delta_e(srgb_to_lab(lab_to_srgb(target).rgb), target) > 2.0) {
      boundary = t;
      break;
    }
  }
  EXPECT_LT(boundary, 1.0);
}

TEST(LabToSrgb, RoundTripOn32CubedLattice) {
  int worst = 0;
  for (int r = 0; r < 32; ++r)
    for (int g = 0; g < 32; ++g)
      for (int b = 0; b < 32; ++b) {
        const RgbColor in = RgbColor::from_ints(r * 255 / 31, g * 255 / 31, b * 255 / 31);
        const RenderedRgb out = lab_to_srgb(srgb_to_lab(in));
        worst = std::max({worst, std::abs(out.rgb.r - in.r), std::abs(out.rgb.g - in.g),
                          std::abs(out.rgb.b - in.b)});
        ASSERT_FALSE(out.out_of_gamut) << int(in.r) << "," << int(in.g) << "," << int(in.b);
      }
  EXPECT_LE(worst, 1);
}

TEST(RgbColor, RejectsOutOfRangeChannels) {
  EXPECT_THROW(RgbColor::from_ints(256, 0, 0), std::out_of_range);
  EXPECT_THROW(RgbColor::from_ints(0, -1, 0), std::out_of_range);
}

TEST(HueChroma, Examples) {
  EXPECT_DOUBLE_EQ(hue_of(10, 10), 45.0);
  EXPECT_DOUBLE_EQ(hue_of(1, 0), 0.0);
  EXPECT_NEAR(hue_of(12, 20), 59.04, 0.01);
  EXPECT_DOUBLE_EQ(chroma_of(3, 4), 5.0);
  EXPECT_DOUBLE_EQ(chroma_of(0, 0), 0.0);
  EXPECT_NEAR(chroma_of(12, 20), 23.324, 1e-3);
  EXPECT_THROW(hue_of(0, 0), std::domain_error);
}

TEST(HueChroma, PolarReconstructsCartesian) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-60.0, 60.0);
  for (int i = 0; i < 1000; ++i) {
    const LabColor c{50.0, u(rng), u(rng)};
    const LabColor back = from_polar(to_polar(c));
    EXPECT_NEAR(back.a, c.a, 1e-9);
    EXPECT_NEAR(back.b, c.b, 1e-9);
  }
}

TEST(DeltaE, Examples) {
  const LabColor x{50, 0, 0};
  EXPECT_DOUBLE_EQ(delta_e(x, x), 0.0);
  EXPECT_DOUBLE_EQ(delta_e(x, {53, 4, 0}), 5.0);
}

TEST(DeltaE, IsAMetric) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> L(0, 100), ab(-80, 80);
  const auto draw = [&] { return LabColor{L(rng), ab(rng), ab(rng)}; };
  for (int i = 0; i < 2000; ++i) {
    const LabColor x = draw(), y = draw(), z = draw();
    EXPECT_GE(delta_e(x, y), 0.0);
    EXPECT_DOUBLE_EQ(delta_e(x, y), delta_e(y, x));
    EXPECT_LE(delta_e(x, z), delta_e(x, y) + delta_e(y, z) + 1e-12);
  }
}

TEST(Ita, AnglesAndBands) {
  EXPECT_NEAR(ita_of({50, 5, 20}).ita_deg, 0.0, 1e-12);
  EXPECT_NEAR(ita_of({70, 5, 20}).ita_deg, 45.0, 1e-12);
  EXPECT_EQ(ita_of({70, 5, 20}).category, ItaClass::light);
  EXPECT_THROW(ita_of({60, 5, 0}), std::domain_error);

  EXPECT_EQ(ita_class(60), ItaClass::very_light);
  EXPECT_EQ(ita_class(55), ItaClass::light);
  EXPECT_EQ(ita_class(41), ItaClass::intermediate);
  EXPECT_EQ(ita_class(28), ItaClass::tan);
  EXPECT_EQ(ita_class(10), ItaClass::brown);
  EXPECT_EQ(ita_class(-30), ItaClass::dark);
  EXPECT_EQ(to_string(ItaClass::very_light), "very light");
}

TEST(Hex, FormatAndParse) {
  EXPECT_EQ(to_hex({255, 0, 16}), "#ff0010");
  EXPECT_EQ(parse_hex("#FF0010"), (RgbColor{255, 0, 16}));
  EXPECT_EQ(parse_hex("a0b1c2"), (RgbColor{0xa0, 0xb1, 0xc2}));
  EXPECT_FALSE(parse_hex("#ff00"));
  EXPECT_FALSE(parse_hex("#gg0000"));
}

}  // namespace
}  // namespace skintone
