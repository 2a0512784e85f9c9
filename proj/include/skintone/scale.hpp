#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "skintone/color.hpp"
#include "skintone/measurement.hpp"

namespace skintone {

/// y = beta0 + beta1 * L + beta2 * L^2, fitted by least squares.
struct QuadraticFit {
  double beta0 = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  std::array<double, 3> std_errors{};  // zero when n == 3
  double rss = 0.0;
  std::size_t n = 0;

  double operator()(double L) const { return beta0 + L * (beta1 + L * beta2); }
};

struct LightnessPoint {
  double L = 0.0;
  double y = 0.0;
};

/// Throws RankDeficientError when fewer than three distinct L* values exist.
QuadraticFit fit_quadratic(std::span<const LightnessPoint> points);

enum class ScaleKind { palette, text };
enum class ScaleSource { generated, external };

struct Swatch {
  int index = 0;
  LabColor lab;
  std::string srgb_hex;
  bool out_of_gamut = false;
};

struct TextItem {
  int index = 0;
  std::string text;
};

struct Scale {
  std::string scale_id;
  std::string name;
  ScaleKind kind = ScaleKind::palette;
  ScaleSource source = ScaleSource::external;
  std::vector<Swatch> swatches;  // palette scales, index 1 is the lightest
  std::vector<TextItem> items;   // text scales

  /// Number of response options.
  int size() const {
    return static_cast<int>(kind == ScaleKind::palette ? swatches.size() : items.size());
  }
  const Swatch& swatch(int index) const { return swatches.at(static_cast<std::size_t>(index - 1)); }
};

/// Builds a swatch whose hex rendering is derived from its Lab value.
Swatch make_swatch(int index, const LabColor& lab);

struct CstOptions {
  int count = 10;
  double L_min = 20.0;
  double L_max = 70.0;
  std::string scale_id = "CST";
  std::string name = "Colorimetric Skin Tone";
};

struct CstBuild {
  Scale scale;
  QuadraticFit hue_fit;
  QuadraticFit chroma_fit;
};

/// Evenly spaced L* from L_max down to L_min (inclusive); hue and chroma
/// come from quadratic fits of the corpus against L*.
CstBuild generate_cst_scale(std::span<const PolarTone> corpus, const CstOptions& options = {});
/// Same, drawing the corpus from one measurement site. Subjects without a
/// complete pair at that site are skipped.
CstBuild generate_cst_scale(std::span<const SubjectTone> corpus, Site site, const CstOptions& options = {});

/// JSON document per scale: scale_id, name, kind, source, and either
/// swatches [{index, L, a, b, hex}] or items [{index, text}].
Scale parse_scale(std::istream& in);
Scale load_scale(const std::filesystem::path& path);
void write_scale(std::ostream& out, const Scale& scale);
void save_scale(const std::filesystem::path& path, const Scale& scale);

struct SwatchMatch {
  int index = 0;
  double delta_e = 0.0;
};

/// Closest swatch in CIE76 distance; ties go to the lower (lighter) index.
SwatchMatch nearest_swatch(const LabColor& c, const Scale& scale);

}  // namespace skintone
