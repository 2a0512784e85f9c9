#include "skintone/scale.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <istream>
#include <set>
#include <stdexcept>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <json.hpp>

#include "skintone/errors.hpp"

namespace skintone {

namespace {

using nlohmann::json;

[[noreturn]] void schema_error(const std::string& what) {
  throw InputError(InputError::Kind::schema, 0, what);
}

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) schema_error(fmt::format("{}: missing '{}'", where, key));
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    schema_error(fmt::format("{}: '{}' has the wrong type", where, key));
  }
}

ScaleKind parse_kind(const std::string& s) {
  if (s == "palette") return ScaleKind::palette;
  if (s == "text") return ScaleKind::text;
  schema_error("unknown scale kind '" + s + "'");
}

template <typename Entry>
void check_contiguous(std::vector<Entry>& entries, const std::string& scale_id) {
  std::sort(entries.begin(), entries.end(), [](const auto& x, const auto& y) { return x.index < y.index; });
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].index != static_cast<int>(i) + 1) {
      throw InputError(InputError::Kind::schema, 0,
                       fmt::format("scale {}: indices are not contiguous from 1 (position {} has index {})",
                                   scale_id, i + 1, entries[i].index));
    }
  }
}

}  // namespace

QuadraticFit fit_quadratic(std::span<const LightnessPoint> points) {
  std::set<double> distinct;
  for (const auto& p : points) distinct.insert(p.L);
  if (distinct.size() < 3) {
    throw RankDeficientError(
        fmt::format("quadratic fit needs at least 3 distinct L* values, got {}", distinct.size()),
        {"L", "L^2"});
  }

  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double L = points[static_cast<std::size_t>(i)].L;
    X(i, 0) = 1.0;
    X(i, 1) = L;
    X(i, 2) = L * L;
    y(i) = points[static_cast<std::size_t>(i)].y;
  }

  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(X);
  const Eigen::Vector3d beta = qr.solve(y);
  const Eigen::VectorXd resid = y - X * beta;

  QuadraticFit fit;
  fit.beta0 = beta(0);
  fit.beta1 = beta(1);
  fit.beta2 = beta(2);
  fit.rss = resid.squaredNorm();
  fit.n = points.size();
  if (n > 3) {
    const Eigen::Matrix3d R = qr.matrixQR().topRows(3).triangularView<Eigen::Upper>();
    const Eigen::Matrix3d Rinv = R.triangularView<Eigen::Upper>().solve(Eigen::Matrix3d::Identity());
    const Eigen::Matrix3d cov = Rinv * Rinv.transpose() * (fit.rss / static_cast<double>(n - 3));
    for (int j = 0; j < 3; ++j) fit.std_errors[static_cast<std::size_t>(j)] = std::sqrt(cov(j, j));
  }
  return fit;
}

Swatch make_swatch(int index, const LabColor& lab) {
  const RenderedRgb rendered = lab_to_srgb(lab);
  return {index, lab, to_hex(rendered.rgb), rendered.out_of_gamut};
}

CstBuild generate_cst_scale(std::span<const PolarTone> corpus, const CstOptions& options) {
  if (options.count < 2) throw std::invalid_argument("a generated scale needs at least 2 swatches");
  if (!(options.L_max > options.L_min)) throw std::invalid_argument("L* range must satisfy L_min < L_max");

  std::vector<LightnessPoint> hue_pts, chroma_pts;
  hue_pts.reserve(corpus.size());
  chroma_pts.reserve(corpus.size());
  for (const auto& t : corpus) {
    hue_pts.push_back({t.L, t.hue_deg});
    chroma_pts.push_back({t.L, t.chroma});
  }

  CstBuild build;
  build.hue_fit = fit_quadratic(hue_pts);
  build.chroma_fit = fit_quadratic(chroma_pts);

  Scale& s = build.scale;
  s.scale_id = options.scale_id;
  s.name = options.name;
  s.kind = ScaleKind::palette;
  s.source = ScaleSource::generated;
  const double step = (options.L_max - options.L_min) / (options.count - 1);
  for (int i = 0; i < options.count; ++i) {
    // Last swatch pinned to L_min so the endpoint is exact.
    const double L = i + 1 == options.count ? options.L_min : options.L_max - step * i;
    const PolarTone tone{L, build.hue_fit(L), build.chroma_fit(L)};
    s.swatches.push_back(make_swatch(i + 1, from_polar(tone)));
  }
  return build;
}

CstBuild generate_cst_scale(std::span<const SubjectTone> corpus, Site site, const CstOptions& options) {
  std::vector<PolarTone> polar;
  for (const auto& t : corpus) {
    if (const auto& p = t.polar_at(site)) polar.push_back(*p);
  }
  return generate_cst_scale(polar, options);
}

Scale parse_scale(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(InputError::Kind::malformed, 0, std::string("scale file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) schema_error("scale document must be an object");

  Scale s;
  s.scale_id = field<std::string>(doc, "scale_id", "scale");
  s.name = field<std::string>(doc, "name", s.scale_id);
  s.kind = parse_kind(field<std::string>(doc, "kind", s.scale_id));
  const std::string source = doc.value("source", std::string("external"));
  if (source != "generated" && source != "external") schema_error("unknown scale source '" + source + "'");
  s.source = source == "generated" ? ScaleSource::generated : ScaleSource::external;

  if (s.kind == ScaleKind::palette) {
    const auto entries = field<json>(doc, "swatches", s.scale_id);
    if (!entries.is_array() || entries.empty()) schema_error(s.scale_id + ": 'swatches' must be a non-empty array");
    for (const auto& e : entries) {
      Swatch sw;
      sw.index = field<int>(e, "index", s.scale_id + " swatch");
      const std::string where = fmt::format("{} swatch {}", s.scale_id, sw.index);
      sw.lab = {field<double>(e, "L", where), field<double>(e, "a", where), field<double>(e, "b", where)};
      sw.srgb_hex = field<std::string>(e, "hex", where);
      if (!(sw.lab.L >= 0.0 && sw.lab.L <= 100.0)) schema_error(where + ": L* outside [0, 100]");

      const auto declared = parse_hex(sw.srgb_hex);
      if (!declared) schema_error(where + ": malformed hex '" + sw.srgb_hex + "'");
      const RenderedRgb rendered = lab_to_srgb(sw.lab);
      const auto diff = [](std::uint8_t x, std::uint8_t y) { return std::abs(int(x) - int(y)); };
      if (diff(declared->r, rendered.rgb.r) > 1 || diff(declared->g, rendered.rgb.g) > 1 ||
          diff(declared->b, rendered.rgb.b) > 1) {
        throw InputError(InputError::Kind::schema, 0,
                         fmt::format("{}: hex {} does not match Lab ({}, {}, {}) which renders as {}", where,
                                     sw.srgb_hex, sw.lab.L, sw.lab.a, sw.lab.b, to_hex(rendered.rgb)));
      }
      sw.out_of_gamut = rendered.out_of_gamut;
      s.swatches.push_back(std::move(sw));
    }
    check_contiguous(s.swatches, s.scale_id);
    const auto lightest = std::max_element(s.swatches.begin(), s.swatches.end(),
                                           [](const auto& x, const auto& y) { return x.lab.L < y.lab.L; });
    if (lightest->index != 1) {
      schema_error(fmt::format("{}: swatch 1 must be the lightest, but swatch {} has higher L*", s.scale_id,
                               lightest->index));
    }
  } else {
    const auto entries = field<json>(doc, "items", s.scale_id);
    if (!entries.is_array() || entries.empty()) schema_error(s.scale_id + ": 'items' must be a non-empty array");
    for (const auto& e : entries) {
      TextItem item;
      item.index = field<int>(e, "index", s.scale_id + " item");
      item.text = field<std::string>(e, "text", fmt::format("{} item {}", s.scale_id, item.index));
      s.items.push_back(std::move(item));
    }
    check_contiguous(s.items, s.scale_id);
  }
  return s;
}

Scale load_scale(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(InputError::Kind::missing, 0, "cannot open " + path.string());
  return parse_scale(in);
}

void write_scale(std::ostream& out, const Scale& scale) {
  json doc;
  doc["scale_id"] = scale.scale_id;
  doc["name"] = scale.name;
  doc["kind"] = scale.kind == ScaleKind::palette ? "palette" : "text";
  doc["source"] = scale.source == ScaleSource::generated ? "generated" : "external";
  if (scale.kind == ScaleKind::palette) {
    doc["swatches"] = json::array();
    for (const auto& sw : scale.swatches) {
      doc["swatches"].push_back(
          {{"index", sw.index}, {"L", sw.lab.L}, {"a", sw.lab.a}, {"b", sw.lab.b}, {"hex", sw.srgb_hex}});
    }
  } else {
    doc["items"] = json::array();
    for (const auto& item : scale.items) doc["items"].push_back({{"index", item.index}, {"text", item.text}});
  }
  out << doc.dump(2) << '\n';
}

void save_scale(const std::filesystem::path& path, const Scale& scale) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_scale(out, scale);
}

SwatchMatch nearest_swatch(const LabColor& c, const Scale& scale) {
  if (scale.kind != ScaleKind::palette || scale.swatches.empty())
    throw std::invalid_argument("nearest_swatch needs a palette scale");
  // Distances within kTie of each other count as equal.
  constexpr double kTie = 1e-12;
  SwatchMatch best{0, std::numeric_limits<double>::infinity()};
  for (const auto& sw : scale.swatches) {  // sorted by index
    const double d = delta_e(c, sw.lab);
    if (d < best.delta_e - kTie) best = {sw.index, d};
  }
  return best;
}

}  // namespace skintone
