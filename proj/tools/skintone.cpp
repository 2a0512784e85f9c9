#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "skintone/color.hpp"
#include "skintone/csv.hpp"
#include "skintone/errors.hpp"
#include "skintone/measurement.hpp"
#include "skintone/rating.hpp"
#include "skintone/scale.hpp"
#include "skintone/simulate.hpp"
#include "skintone/study.hpp"
#include "skintone/survey.hpp"

#include <httplib.h>

namespace {

using namespace skintone;

ReportFormat parse_format(const std::string& s) {
  if (s == "text") return ReportFormat::text;
  if (s == "csv") return ReportFormat::csv;
  return ReportFormat::both;
}

void print_color(const LabColor& lab) {
  const auto polar = to_polar(lab);
  const auto rgb = lab_to_srgb(lab);
  fmt::print("L* {:.4f}  a* {:.4f}  b* {:.4f}\n", lab.L, lab.a, lab.b);
  fmt::print("hue {:.4f} deg  chroma {:.4f}\n", polar.hue_deg, polar.chroma);
  if (lab.b != 0.0) {
    const auto ita = ita_of(lab);
    fmt::print("ITA {:.4f} deg ({})\n", ita.ita_deg, to_string(ita.category));
  }
  fmt::print("sRGB {}{}\n", to_hex(rgb.rgb), rgb.out_of_gamut ? " (clamped, out of gamut)" : "");
}

int convert(const std::string& rgb, const std::string& hex, const std::vector<double>& lab, const std::string& measurements,
            const std::string& out) {
  if (!measurements.empty()) {
    const auto records = ingest_measurements(std::filesystem::path(measurements));
    const auto summary = average_bilateral(records);
    std::ofstream file;
    if (!out.empty()) file.open(out, std::ios::binary);
    std::ostream& os = out.empty() ? std::cout : file;
    csv::write_row(os, {"subject_id", "site", "L", "a", "b", "hue", "chroma", "ita"});
    for (const auto& t : summary.tones) {
      for (Site s : {Site::hand, Site::face}) {
        if (!t.at(s)) continue;
        const auto& c = *t.at(s);
        const auto& p = *t.polar_at(s);
        csv::write_row(os, {t.subject_id, std::string(to_string(s)), csv::format_double(c.L), csv::format_double(c.a),
                            csv::format_double(c.b), csv::format_double(p.hue_deg), csv::format_double(p.chroma),
                            c.b != 0.0 ? csv::format_double(ita_of(c).ita_deg) : ""});
      }
    }
    for (const auto& i : summary.incomplete)
      fmt::print(stderr, "warning: {} has no {} reading at the {}\n", i.subject_id, to_string(i.missing), to_string(i.site));
    return 0;
  }
  if (!hex.empty()) {
    const auto c = parse_hex(hex);
    if (!c) throw std::invalid_argument("not a hex color: " + hex);
    print_color(srgb_to_lab(*c));
    return 0;
  }
  if (!rgb.empty()) {
    int r = 0, g = 0, b = 0;
    if (std::sscanf(rgb.c_str(), "%d,%d,%d", &r, &g, &b) != 3) throw std::invalid_argument("expected R,G,B");
    print_color(srgb_to_lab(RgbColor::from_ints(r, g, b)));
    return 0;
  }
  if (lab.size() == 3) {
    print_color({lab[0], lab[1], lab[2]});
    return 0;
  }
  throw std::invalid_argument("give one of --rgb, --hex, --lab or --measurements");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Colorimetric skin-tone toolkit"};
  app.require_subcommand(1);

  std::string rgb, hex, measurements, out, config, demographics, ratings, stimuli, site = "hand", format = "both";
  std::vector<double> lab;
  std::size_t synthetic = 0;
  std::uint64_t seed = 0;
  std::optional<std::size_t> n;
  std::optional<std::uint64_t> seed_override;
  CstOptions cst;
  std::string host = "127.0.0.1", store = "survey-store";
  int port = 8080;

  auto* conv = app.add_subcommand("convert", "Color conversions and bilateral tone summaries");
  conv->add_option("--rgb", rgb, "sRGB triple R,G,B");
  conv->add_option("--hex", hex, "sRGB hex color");
  conv->add_option("--lab", lab, "L a b")->expected(3);
  conv->add_option("--measurements", measurements, "measurement CSV to average per subject and site");
  conv->add_option("-o,--out", out, "output CSV (default stdout)");

  auto* build = app.add_subcommand("build-scale", "Generate a colorimetric scale from measured or synthetic tones");
  build->add_option("--measurements", measurements, "measurement CSV");
  build->add_option("--site", site, "hand or face")->check(CLI::IsMember({"hand", "face"}));
  build->add_option("--synthetic", synthetic, "use N synthetic skin tones instead of measurements");
  build->add_option("--seed", seed, "seed for --synthetic");
  build->add_option("--count", cst.count, "number of swatches");
  build->add_option("--L-min", cst.L_min);
  build->add_option("--L-max", cst.L_max);
  build->add_option("--id", cst.scale_id);
  build->add_option("--name", cst.name);
  build->add_option("-o,--out", out, "scale JSON path")->required();

  auto* s1 = app.add_subcommand("analyze-study1", "Self-rating study models and reports");
  auto* s2 = app.add_subcommand("analyze-study2", "Image-rating study models and reports");
  for (auto* sub : {s1, s2}) {
    sub->add_option("-c,--config", config, "analysis config JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--measurements", measurements)->required()->check(CLI::ExistingFile);
    sub->add_option("--demographics", demographics)->required()->check(CLI::ExistingFile);
    sub->add_option("--ratings", ratings, "ratings JSONL")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--out", out, "report directory")->required();
    sub->add_option("--format", format)->check(CLI::IsMember({"text", "csv", "both"}));
  }
  s2->add_option("--stimuli", stimuli)->required()->check(CLI::ExistingFile);

  auto* sim = app.add_subcommand("simulate", "Write a synthetic study from planted coefficients");
  sim->add_option("-c,--config", config, "simulation config JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("-n,--n", n, "raters (study 1) or raters per scale (study 2)");
  sim->add_option("--seed", seed_override);
  sim->add_option("-o,--out", out, "output directory")->required();

  auto* serve = app.add_subcommand("serve", "Run the survey HTTP service");
  serve->add_option("-c,--config", config, "survey config JSON")->required()->check(CLI::ExistingFile);
  serve->add_option("--store", store, "directory for the append-only stores");
  serve->add_option("--host", host);
  serve->add_option("--port", port);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*conv) return convert(rgb, hex, lab, measurements, out);

    if (*build) {
      CstBuild b;
      if (synthetic) {
        b = generate_cst_scale(synthetic_skin_corpus(synthetic, seed), cst);
      } else {
        if (measurements.empty()) throw std::invalid_argument("give --measurements or --synthetic");
        const auto summary = average_bilateral(ingest_measurements(std::filesystem::path(measurements)));
        b = generate_cst_scale(summary.tones, *parse_site(site), cst);
      }
      save_scale(out, b.scale);
      fmt::print("hue    = {:.6f} + {:.6f} L + {:.8f} L^2\n", b.hue_fit.beta0, b.hue_fit.beta1, b.hue_fit.beta2);
      fmt::print("chroma = {:.6f} + {:.6f} L + {:.8f} L^2\n", b.chroma_fit.beta0, b.chroma_fit.beta1, b.chroma_fit.beta2);
      for (const auto& s : b.scale.swatches)
        fmt::print("{:2d}  L* {:7.3f}  a* {:7.3f}  b* {:7.3f}  {}{}\n", s.index, s.lab.L, s.lab.a, s.lab.b, s.srgb_hex,
                   s.out_of_gamut ? "  (out of gamut)" : "");
      return 0;
    }

    if (*s1) {
      const auto cfg = load_study1_config(config);
      const auto rep = run_study1(ingest_measurements(std::filesystem::path(measurements)),
                                  read_demographics(std::filesystem::path(demographics), cfg.mapping),
                                  read_ratings_file(ratings), cfg);
      for (const auto& f : emit_reports(rep, out, parse_format(format))) fmt::print("{}\n", f.string());
      for (const auto& d : rep.diagnostics) fmt::print(stderr, "note: {}\n", d);
      return 0;
    }

    if (*s2) {
      const auto cfg = load_study2_config(config);
      const auto rep = run_study2(read_stimuli(std::filesystem::path(stimuli)),
                                  ingest_measurements(std::filesystem::path(measurements)),
                                  read_demographics(std::filesystem::path(demographics), cfg.mapping),
                                  read_ratings_file(ratings), cfg);
      for (const auto& f : emit_reports(rep, out, parse_format(format))) fmt::print("{}\n", f.string());
      for (const auto& d : rep.diagnostics) fmt::print(stderr, "note: {}\n", d);
      return 0;
    }

    if (*sim) {
      const auto study = simulate_study(load_simulation_config(config), n, seed_override);
      for (const auto& f : write_simulation(study, out)) fmt::print("{}\n", f.string());
      return 0;
    }

    if (*serve) {
      auto cfg = load_survey_config(config);
      SurveyService service(std::move(cfg.assets), cfg.options, store);
      httplib::Server server;
      register_routes(server, service);
      fmt::print("serving on http://{}:{} ({} sessions replayed)\n", host, port, service.session_count());
      std::fflush(stdout);
      if (!server.listen(host, port)) throw std::runtime_error(fmt::format("cannot listen on {}:{}", host, port));
      return 0;
    }
  } catch (const InputError& e) {
    fmt::print(stderr, "input error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
