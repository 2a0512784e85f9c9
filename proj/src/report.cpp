#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "skintone/csv.hpp"
#include "skintone/study.hpp"

namespace skintone {

namespace {

namespace fs = std::filesystem;
using Cells = std::vector<std::string>;

// One logical table, written either as aligned text or as CSV.
struct Table {
  Cells header;
  std::vector<Cells> csv_rows;   // full precision
  std::vector<Cells> text_rows;  // rounded for reading
  std::size_t label_columns = 1;
};

std::string num(double v) { return csv::format_double(v); }
std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

std::string fixed(double v, int digits = 4) { return fmt::format("{:.{}f}", v, digits); }
std::string fixed(const std::optional<double>& v, int digits = 4) { return v ? fixed(*v, digits) : std::string(); }
std::string pval(double p) { return p < 1e-4 ? "<0.0001" : fixed(p); }

fs::path write_csv(const fs::path& path, const Table& t) {
  std::ofstream out(path, std::ios::binary);
  csv::write_row(out, t.header);
  for (const auto& r : t.csv_rows) csv::write_row(out, r);
  return path;
}

std::size_t display_width(std::string_view s) {
  // Count code points so the superscript in "R²" aligns.
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
}

fs::path write_text(const fs::path& path, const Table& t, std::string_view title) {
  std::vector<std::size_t> w(t.header.size());
  for (std::size_t j = 0; j < w.size(); ++j) w[j] = display_width(t.header[j]);
  for (const auto& r : t.text_rows)
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = std::max(w[j], display_width(r[j]));
  std::ofstream out(path, std::ios::binary);
  out << title << '\n';
  const auto line = [&](const Cells& cells) {
    std::string s;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const std::string pad(w[j] - display_width(cells[j]), ' ');
      if (j) s += "  ";
      s += j < t.label_columns ? cells[j] + pad : pad + cells[j];
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    out << s << '\n';
  };
  line(t.header);
  for (const auto& r : t.text_rows) line(r);
  return path;
}

void emit(std::vector<fs::path>& files, const fs::path& dir, std::string_view stem, const Table& t,
          std::string_view title, ReportFormat format) {
  if (format != ReportFormat::csv) files.push_back(write_text(dir / fmt::format("{}.txt", stem), t, title));
  if (format != ReportFormat::text) files.push_back(write_csv(dir / fmt::format("{}.csv", stem), t));
}

void emit_csv_only(std::vector<fs::path>& files, const fs::path& dir, std::string_view stem, const Table& t,
                   ReportFormat format) {
  if (format != ReportFormat::text) files.push_back(write_csv(dir / fmt::format("{}.csv", stem), t));
}

double ratio_of(const std::vector<std::pair<std::string, double>>& ratios, std::string_view name, bool& found) {
  for (const auto& [n, v] : ratios)
    if (n == name) {
      found = true;
      return v;
    }
  found = false;
  return 0.0;
}

Table table1(const std::vector<ScaleModel>& models, std::string_view statistic, bool with_r2) {
  Table t;
  t.header = {"Scale", "Covariate", "Estimate", "Standard Error", std::string(statistic), "p-value", "L* Ratio"};
  if (with_r2) t.header.emplace_back("Adjusted R²");
  t.label_columns = 2;
  for (const auto& m : models) {
    bool first = true;
    for (const auto& c : m.fit.coefficients) {
      if (c.name == stats::kIntercept) continue;
      bool has_ratio = false;
      const double ratio = ratio_of(m.l_star_ratios, c.name, has_ratio);
      Cells cr = {m.scale_id, covariate_label(c.name), num(c.estimate), num(c.std_error),
                  num(c.statistic), num(c.p_value), has_ratio ? num(ratio) : ""};
      Cells tr = {first ? m.scale_id : "", covariate_label(c.name), fixed(c.estimate), fixed(c.std_error),
                  fixed(c.statistic, 2), pval(c.p_value), has_ratio ? fixed(ratio) : ""};
      if (with_r2) {
        cr.push_back(num(m.fit.adj_r2));
        tr.push_back(first ? fixed(m.fit.adj_r2) : "");
      }
      t.csv_rows.push_back(std::move(cr));
      t.text_rows.push_back(std::move(tr));
      first = false;
    }
  }
  return t;
}

Table trace_table(const std::vector<ScaleModel>& models) {
  Table t;
  t.header = {"scale", "step", "action", "term", "bic", "terms"};
  for (const auto& m : models) {
    for (std::size_t i = 0; i < m.trace.size(); ++i) {
      const auto& s = m.trace[i];
      const char* action = s.action == stats::StepwiseStep::Action::start ? "start"
                           : s.action == stats::StepwiseStep::Action::drop ? "drop"
                                                                          : "add";
      std::string terms;
      for (const auto& x : s.terms) terms += (terms.empty() ? "" : ";") + x;
      t.csv_rows.push_back({m.scale_id, std::to_string(i), action, s.term, num(s.bic), terms});
    }
  }
  t.text_rows = t.csv_rows;
  return t;
}

Table accuracy_table(const std::vector<AccuracyRow>& rows) {
  Table t;
  t.header = {"scale", "group", "swatch", "n", "mean_L", "mean_a", "mean_b", "delta_e"};
  for (const auto& r : rows) {
    const auto& a = r.accuracy;
    t.csv_rows.push_back({r.scale_id, r.group, std::to_string(a.index), std::to_string(a.n),
                          a.mean_tone ? num(a.mean_tone->L) : "", a.mean_tone ? num(a.mean_tone->a) : "",
                          a.mean_tone ? num(a.mean_tone->b) : "", num(a.delta_e)});
  }
  return t;
}

void utilization_tables(const std::vector<UtilizationRow>& rows, Table& summary, Table& bins) {
  summary.header = {"scale", "group", "utilization"};
  bins.header = {"scale", "group", "L_low", "L_high", "n", "mean_response"};
  for (const auto& r : rows) {
    summary.csv_rows.push_back({r.scale_id, r.group, num(r.utilization.fraction)});
    for (const auto& b : r.utilization.bins)
      bins.csv_rows.push_back({r.scale_id, r.group, num(b.L_low), num(b.L_high), std::to_string(b.n), num(b.mean_response)});
  }
}

Table exclusion_table(const ExclusionCounts& e, std::size_t people, std::size_t other, std::size_t unspecified) {
  Table t;
  t.header = {"quantity", "count"};
  t.csv_rows = {{"people_in", std::to_string(people)},
                {"removed_race_other", std::to_string(other)},
                {"removed_gender_unspecified", std::to_string(unspecified)},
                {"raters_excluded_attentional", std::to_string(e.raters_excluded)},
                {"responses_excluded_attentional", std::to_string(e.responses_excluded_attentional)},
                {"responses_excluded_outlier", std::to_string(e.responses_excluded_outlier)},
                {"responses_kept", std::to_string(e.responses_kept)}};
  t.text_rows = t.csv_rows;
  return t;
}

fs::path write_diagnostics(const fs::path& dir, const std::vector<std::string>& lines) {
  const auto path = dir / "diagnostics.txt";
  std::ofstream out(path, std::ios::binary);
  for (const auto& l : lines) out << l << '\n';
  return path;
}

}  // namespace

std::string covariate_label(std::string_view coefficient) {
  static const std::map<std::string, std::string, std::less<>> plain = {
      {"L", "Calibrated L*"}, {"hue", "Hue"}, {"chroma", "Chromaticity"}, {"hand_L", "Hand L*"}};
  if (const auto it = plain.find(coefficient); it != plain.end()) return it->second;
  const auto colon = coefficient.find(':');
  if (colon == std::string_view::npos) return std::string(coefficient);
  const auto term = coefficient.substr(0, colon);
  std::string level(coefficient.substr(colon + 1));
  static const std::map<std::string, std::string, std::less<>> prefix = {
      {"race", ""},
      {"gender", "Gender: "},
      {"background", "Background: "},
      {"location", "Location: "},
      {"subject_race", "Subject "},
      {"subject_gender", "Subject "},
      {"rater_race", "Rater "},
      {"rater_gender", "Rater "},
      {"device", "Device "},
  };
  if (!level.empty()) level[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(level[0])));
  if (const auto it = prefix.find(term); it != prefix.end()) return it->second + level;
  return fmt::format("{}: {}", term, level);
}

std::vector<fs::path> emit_reports(const Study1Report& rep, const fs::path& dir, ReportFormat format) {
  fs::create_directories(dir);
  std::vector<fs::path> files;

  emit(files, dir, "table1", table1(rep.models, "t-statistic", true), "Optimal linear models by scale", format);

  std::vector<ScaleModel> pref;
  if (rep.preference_model) pref.push_back(*rep.preference_model);
  emit(files, dir, "preference_model", table1(pref, "z-statistic", false), "Logistic model of scale preference",
       format);

  Table pc;
  pc.header = {"background", "race", "n", "percent_preferring"};
  pc.label_columns = 2;
  if (rep.preference) {
    for (const auto& c : rep.preference->cells) {
      pc.csv_rows.push_back({std::string(to_string(c.background)), c.race, std::to_string(c.n), num(c.percent_preferring)});
      pc.text_rows.push_back(
          {std::string(to_string(c.background)), c.race, std::to_string(c.n), fixed(c.percent_preferring, 1)});
    }
  }
  emit(files, dir, "preference", pc,
       fmt::format("Percent preferring {}", rep.preference ? rep.preference->preferred_scale : std::string("CST")),
       format);

  emit_csv_only(files, dir, "stepwise_trace", trace_table(rep.models), format);
  emit_csv_only(files, dir, "accuracy", accuracy_table(rep.accuracy), format);
  Table us, ub;
  utilization_tables(rep.utilization, us, ub);
  emit_csv_only(files, dir, "utilization", us, format);
  emit_csv_only(files, dir, "utilization_bins", ub, format);

  Table de;
  de.header = {"site", "delta_e_min", "pairs", "excluded"};
  for (const auto& [site, est] : {std::pair{"hand", &rep.delta_e_min_hand}, std::pair{"face", &rep.delta_e_min_face}}) {
    if (!*est) continue;
    de.csv_rows.push_back({site, num((*est)->delta_e_min), std::to_string((*est)->pairs),
                           std::to_string((*est)->excluded.size())});
    de.text_rows.push_back({site, fixed((*est)->delta_e_min), std::to_string((*est)->pairs),
                            std::to_string((*est)->excluded.size())});
  }
  emit(files, dir, "delta_e_min", de, "Expected minimum color error (bilateral difference)", format);

  emit(files, dir, "exclusions",
       exclusion_table(rep.exclusions, rep.raters_in, rep.removed_other_race, rep.removed_unspecified_gender),
       "Filtering and exclusions", format);
  files.push_back(write_diagnostics(dir, rep.diagnostics));
  return files;
}

std::vector<fs::path> emit_reports(const Study2Report& rep, const fs::path& dir, ReportFormat format) {
  fs::create_directories(dir);
  std::vector<fs::path> files;

  Table t2;
  t2.header = {"Scale", "Device", "ICC(2,1)", "ICC(2,k)", "Subjects", "Ratings per subject"};
  t2.label_columns = 2;
  for (const auto& r : rep.icc) {
    t2.csv_rows.push_back({r.scale_id, r.device, num(r.icc_single), num(r.icc_average), std::to_string(r.n_targets),
                           std::to_string(r.k_raters)});
    t2.text_rows.push_back({r.scale_id, r.device, fixed(r.icc_single), fixed(r.icc_average),
                            std::to_string(r.n_targets), std::to_string(r.k_raters)});
  }
  emit(files, dir, "table2", t2, "Intraclass correlation by scale and device", format);

  Table t3;
  t3.header = {"Scale", "Covariate", "Estimate", "Standard Error", "95% CI Low", "95% CI High", "L* Ratio",
               "Conditional R²"};
  t3.label_columns = 2;
  for (const auto& m : rep.models) {
    bool first = true;
    for (std::size_t j = 0; j < m.fit.fixed.coefficients.size(); ++j) {
      const auto& c = m.fit.fixed.coefficients[j];
      if (c.name == stats::kIntercept) continue;
      const auto& ci = m.fit.ci95[j];
      bool has_ratio = false;
      const double ratio = ratio_of(m.l_star_ratios, c.name, has_ratio);
      t3.csv_rows.push_back({m.scale_id, covariate_label(c.name), num(c.estimate), num(c.std_error), num(ci.low),
                             num(ci.high), has_ratio ? num(ratio) : "", num(m.fit.fixed.conditional_r2)});
      t3.text_rows.push_back({first ? m.scale_id : "", covariate_label(c.name), fixed(c.estimate), fixed(c.std_error),
                              fixed(ci.low), fixed(ci.high), has_ratio ? fixed(ratio) : "",
                              first ? fixed(m.fit.fixed.conditional_r2) : ""});
      first = false;
    }
  }
  emit(files, dir, "table3", t3, "Mixed models by scale (Wald 95% intervals, subject random intercept)", format);

  Table vc;
  vc.header = {"scale", "n", "groups", "sigma_b2", "sigma_e2", "lambda", "at_boundary", "log_lik", "bic"};
  for (const auto& m : rep.models) {
    vc.csv_rows.push_back({m.scale_id, std::to_string(m.n), std::to_string(m.fit.groups), num(m.fit.sigma_b2),
                           num(m.fit.sigma_e2), num(m.fit.lambda), m.fit.at_boundary ? "true" : "false",
                           num(m.fit.fixed.log_lik), num(m.fit.fixed.bic)});
  }
  emit_csv_only(files, dir, "variance_components", vc, format);
  emit_csv_only(files, dir, "accuracy", accuracy_table(rep.accuracy), format);
  emit_csv_only(files, dir, "device_accuracy", accuracy_table(rep.device_accuracy), format);
  Table us, ub;
  utilization_tables(rep.utilization, us, ub);
  emit_csv_only(files, dir, "utilization", us, format);
  emit_csv_only(files, dir, "utilization_bins", ub, format);
  emit(files, dir, "exclusions",
       exclusion_table(rep.exclusions, rep.raters_in, rep.removed_other_race, rep.removed_unspecified_gender),
       "Filtering and exclusions", format);
  files.push_back(write_diagnostics(dir, rep.diagnostics));
  return files;
}

}  // namespace skintone
