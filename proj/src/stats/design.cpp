#include "skintone/stats/design.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

namespace skintone::stats {

void DataFrame::check_size(const std::string& name, std::size_t n) {
  if (!sized_) {
    rows_ = n;
    sized_ = true;
  }
  if (n != rows_) throw std::invalid_argument(fmt::format("column '{}' has {} rows, table has {}", name, n, rows_));
}

void DataFrame::add_numeric(const std::string& name, std::vector<double> values) {
  check_size(name, values.size());
  numeric_.insert_or_assign(name, std::move(values));
}

void DataFrame::add_categorical(const std::string& name, std::vector<std::string> values) {
  check_size(name, values.size());
  categorical_.insert_or_assign(name, std::move(values));
}

bool DataFrame::has_numeric(std::string_view name) const { return numeric_.find(name) != numeric_.end(); }
bool DataFrame::has_categorical(std::string_view name) const {
  return categorical_.find(name) != categorical_.end();
}

const std::vector<double>& DataFrame::numeric(std::string_view name) const {
  const auto it = numeric_.find(name);
  if (it == numeric_.end()) throw std::out_of_range(fmt::format("no numeric column '{}'", name));
  return it->second;
}

const std::vector<std::string>& DataFrame::categorical(std::string_view name) const {
  const auto it = categorical_.find(name);
  if (it == categorical_.end()) throw std::out_of_range(fmt::format("no categorical column '{}'", name));
  return it->second;
}

std::vector<std::string> DesignSpec::term_names() const {
  std::vector<std::string> names;
  for (const auto& t : terms) names.push_back(t.name);
  return names;
}

std::vector<std::string> levels_of(const std::vector<std::string>& values) {
  const std::set<std::string> s(values.begin(), values.end());
  return {s.begin(), s.end()};
}

DesignMatrix build_design(const DesignSpec& spec) {
  if (!spec.data) throw std::invalid_argument("design has no data");
  const DataFrame& df = *spec.data;
  const auto n = static_cast<Eigen::Index>(df.rows());

  struct Block {
    int term;
    std::vector<std::string> names;
    std::vector<Eigen::VectorXd> cols;
  };
  std::vector<Block> blocks;
  for (std::size_t ti = 0; ti < spec.terms.size(); ++ti) {
    const Term& term = spec.terms[ti];
    Block block{static_cast<int>(ti), {}, {}};
    if (term.kind == TermKind::continuous) {
      const auto& v = df.numeric(term.name);
      Eigen::VectorXd col = Eigen::Map<const Eigen::VectorXd>(v.data(), n);
      if (term.center && n > 0) col.array() -= col.mean();
      block.names.push_back(term.name);
      block.cols.push_back(std::move(col));
    } else {
      const auto& v = df.categorical(term.name);
      const auto levels = levels_of(v);
      std::string reference = levels.empty() ? std::string() : levels.front();
      if (term.reference) {
        if (!levels.empty() && std::find(levels.begin(), levels.end(), *term.reference) == levels.end()) {
          throw std::invalid_argument(
              fmt::format("reference level '{}' of '{}' does not occur in the data", *term.reference, term.name));
        }
        reference = *term.reference;
      }
      for (const auto& level : levels) {
        if (level == reference) continue;
        Eigen::VectorXd col(n);
        for (Eigen::Index i = 0; i < n; ++i) col(i) = v[static_cast<std::size_t>(i)] == level ? 1.0 : 0.0;
        block.names.push_back(term.name + ":" + level);
        block.cols.push_back(std::move(col));
      }
    }
    blocks.push_back(std::move(block));
  }

  std::size_t p = 1;
  for (const auto& b : blocks) p += b.cols.size();

  DesignMatrix dm;
  dm.X.resize(n, static_cast<Eigen::Index>(p));
  dm.X.col(0).setOnes();
  dm.columns.emplace_back(kIntercept);
  dm.column_term.push_back(-1);
  Eigen::Index c = 1;
  for (auto& b : blocks) {
    for (std::size_t j = 0; j < b.cols.size(); ++j, ++c) {
      dm.X.col(c) = b.cols[j];
      dm.columns.push_back(b.names[j]);
      dm.column_term.push_back(b.term);
    }
  }
  const auto& y = df.numeric(spec.response);
  dm.y = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  return dm;
}

}  // namespace skintone::stats
