#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace skintone {

struct RgbColor {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  /// Builds from wide integers, throwing std::out_of_range outside [0, 255].
  static RgbColor from_ints(int r, int g, int b);

  friend bool operator==(const RgbColor&, const RgbColor&) = default;
};

struct LabColor {
  double L = 0.0;
  double a = 0.0;
  double b = 0.0;

  friend bool operator==(const LabColor&, const LabColor&) = default;
};

/// Lightness plus the polar form of (a*, b*).
struct PolarTone {
  double L = 0.0;
  double hue_deg = 0.0;
  double chroma = 0.0;
};

enum class ItaClass { very_light, light, intermediate, tan, brown, dark };

struct ItaCategory {
  double ita_deg = 0.0;
  ItaClass category = ItaClass::intermediate;
};

struct RenderedRgb {
  RgbColor rgb;
  bool out_of_gamut = false;
};

LabColor srgb_to_lab(RgbColor c);

/// Inverse of srgb_to_lab. Channels are rounded and clamped to [0, 255];
/// `out_of_gamut` is set when clamping changed a channel.
RenderedRgb lab_to_srgb(const LabColor& c);

/// Hue angle in degrees, in [-180, 180]. Throws std::domain_error at a* = b* = 0.
double hue_of(double a, double b);
double chroma_of(double a, double b);

/// Achromatic input (a* = b* = 0) gets hue 0 rather than an error.
PolarTone to_polar(const LabColor& c);
LabColor from_polar(const PolarTone& p);

/// CIE76 color difference.
double delta_e(const LabColor& x, const LabColor& y);

/// Individual typology angle. Throws std::domain_error when b* = 0.
ItaCategory ita_of(const LabColor& c);
ItaClass ita_class(double ita_deg);
std::string_view to_string(ItaClass c);

std::string to_hex(RgbColor c);
std::optional<RgbColor> parse_hex(std::string_view hex);

}  // namespace skintone
