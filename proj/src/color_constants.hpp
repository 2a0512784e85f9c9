#pragma once

// sRGB / CIELAB constants.
//
// Primaries and transfer function: IEC 61966-2-1:1999 (sRGB), matrix to
// CIE XYZ with D65 white, 2 degree observer, as tabulated by Lindbloom.
// Lab nonlinearity: CIE 15:2004, with the exact rational forms of
// epsilon = (6/29)^3 and kappa = (29/3)^3.

namespace skintone::detail {

inline constexpr double kSrgbToXyz[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};

// The reference white is the image of linear (1, 1, 1) under the matrix
// above, so every neutral sRGB triple lands on a* = b* = 0 exactly.
inline constexpr double kWhiteX = kSrgbToXyz[0][0] + kSrgbToXyz[0][1] + kSrgbToXyz[0][2];
inline constexpr double kWhiteY = kSrgbToXyz[1][0] + kSrgbToXyz[1][1] + kSrgbToXyz[1][2];
inline constexpr double kWhiteZ = kSrgbToXyz[2][0] + kSrgbToXyz[2][1] + kSrgbToXyz[2][2];

inline constexpr double kLabEpsilon = 216.0 / 24389.0;
inline constexpr double kLabKappa = 24389.0 / 27.0;

// sRGB transfer function breakpoints.
inline constexpr double kSrgbDecodeThreshold = 0.04045;
inline constexpr double kSrgbEncodeThreshold = 0.0031308;
inline constexpr double kSrgbGamma = 2.4;

// ITA band lower edges (degrees), lightest first.
inline constexpr double kItaVeryLight = 55.0;
inline constexpr double kItaLight = 41.0;
inline constexpr double kItaIntermediate = 28.0;
inline constexpr double kItaTan = 10.0;
inline constexpr double kItaBrown = -30.0;
inline constexpr double kItaReferenceL = 50.0;

}  // namespace skintone::detail
