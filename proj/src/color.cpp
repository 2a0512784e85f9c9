#include "skintone/color.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "color_constants.hpp"

namespace skintone {

namespace {

using namespace detail;

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

double decode_srgb(double v) {
  return v <= kSrgbDecodeThreshold ? v / 12.92 : std::pow((v + 0.055) / 1.055, kSrgbGamma);
}

double encode_srgb(double v) {
  return v <= kSrgbEncodeThreshold ? 12.92 * v : 1.055 * std::pow(v, 1.0 / kSrgbGamma) - 0.055;
}

double lab_f(double t) {
  return t > kLabEpsilon ? std::cbrt(t) : (kLabKappa * t + 16.0) / 116.0;
}

double lab_f_inv(double f) {
  const double cube = f * f * f;
  return cube > kLabEpsilon ? cube : (116.0 * f - 16.0) / kLabKappa;
}

const Eigen::Matrix3d& xyz_to_srgb_matrix() {
  static const Eigen::Matrix3d inverse = [] {
    Eigen::Matrix3d m;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(i, j) = kSrgbToXyz[i][j];
    return Eigen::Matrix3d(m.inverse());
  }();
  return inverse;
}

std::uint8_t to_channel(double encoded, bool& clamped) {
  double v = std::round(encoded * 255.0);
  if (v < 0.0 || v > 255.0 || !std::isfinite(v)) {
    clamped = true;
    v = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 255.0);
  }
  return static_cast<std::uint8_t>(v);
}

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

RgbColor RgbColor::from_ints(int r, int g, int b) {
  for (int v : {r, g, b}) {
    if (v < 0 || v > 255) throw std::out_of_range(fmt::format("channel value {} outside [0, 255]", v));
  }
  return {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
}

LabColor srgb_to_lab(RgbColor c) {
  const std::array<double, 3> lin = {decode_srgb(c.r / 255.0), decode_srgb(c.g / 255.0),
                                     decode_srgb(c.b / 255.0)};
  std::array<double, 3> xyz{};
  for (int i = 0; i < 3; ++i)
    xyz[i] = kSrgbToXyz[i][0] * lin[0] + kSrgbToXyz[i][1] * lin[1] + kSrgbToXyz[i][2] * lin[2];

  const double fx = lab_f(xyz[0] / kWhiteX);
  const double fy = lab_f(xyz[1] / kWhiteY);
  const double fz = lab_f(xyz[2] / kWhiteZ);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

RenderedRgb lab_to_srgb(const LabColor& c) {
  const double fy = (c.L + 16.0) / 116.0;
  const double fx = fy + c.a / 500.0;
  const double fz = fy - c.b / 200.0;
  const Eigen::Vector3d xyz(lab_f_inv(fx) * kWhiteX, lab_f_inv(fy) * kWhiteY, lab_f_inv(fz) * kWhiteZ);
  const Eigen::Vector3d lin = xyz_to_srgb_matrix() * xyz;

  RenderedRgb out;
  bool clamped = false;
  out.rgb.r = to_channel(encode_srgb(lin[0]), clamped);
  out.rgb.g = to_channel(encode_srgb(lin[1]), clamped);
  out.rgb.b = to_channel(encode_srgb(lin[2]), clamped);
  out.out_of_gamut = clamped;
  return out;
}

double hue_of(double a, double b) {
  if (a == 0.0 && b == 0.0) throw std::domain_error("hue is undefined for a* = b* = 0");
  return std::atan2(b, a) * kRadToDeg;
}

double chroma_of(double a, double b) { return std::hypot(a, b); }

PolarTone to_polar(const LabColor& c) {
  const double chroma = chroma_of(c.a, c.b);
  return {c.L, chroma == 0.0 ? 0.0 : hue_of(c.a, c.b), chroma};
}

LabColor from_polar(const PolarTone& p) {
  const double h = p.hue_deg / kRadToDeg;
  return {p.L, p.chroma * std::cos(h), p.chroma * std::sin(h)};
}

double delta_e(const LabColor& x, const LabColor& y) {
  const double dL = x.L - y.L;
  const double da = x.a - y.a;
  const double db = x.b - y.b;
  return std::sqrt(dL * dL + da * da + db * db);
}

ItaClass ita_class(double ita_deg) {
  if (ita_deg > kItaVeryLight) return ItaClass::very_light;
  if (ita_deg > kItaLight) return ItaClass::light;
  if (ita_deg > kItaIntermediate) return ItaClass::intermediate;
  if (ita_deg > kItaTan) return ItaClass::tan;
  if (ita_deg > kItaBrown) return ItaClass::brown;
  return ItaClass::dark;
}

ItaCategory ita_of(const LabColor& c) {
  if (c.b == 0.0) throw std::domain_error("ITA is undefined for b* = 0");
  const double ita = std::atan((c.L - kItaReferenceL) / c.b) * kRadToDeg;
  return {ita, ita_class(ita)};
}

std::string_view to_string(ItaClass c) {
  switch (c) {
    case ItaClass::very_light: return "very light";
    case ItaClass::light: return "light";
    case ItaClass::intermediate: return "intermediate";
    case ItaClass::tan: return "tan";
    case ItaClass::brown: return "brown";
    case ItaClass::dark: return "dark";
  }
  return "unknown";
}

std::string to_hex(RgbColor c) { return fmt::format("#{:02x}{:02x}{:02x}", c.r, c.g, c.b); }

std::optional<RgbColor> parse_hex(std::string_view hex) {
  if (!hex.empty() && hex.front() == '#') hex.remove_prefix(1);
  if (hex.size() != 6) return std::nullopt;
  std::array<int, 3> ch{};
  for (int i = 0; i < 3; ++i) {
    const int hi = hex_digit(hex[2 * i]);
    const int lo = hex_digit(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    ch[i] = hi * 16 + lo;
  }
  return RgbColor::from_ints(ch[0], ch[1], ch[2]);
}

}  // namespace skintone
