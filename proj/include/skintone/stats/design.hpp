#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace skintone::stats {

/// Column-oriented observation table with numeric and categorical columns.
class DataFrame {
 public:
  DataFrame() = default;
  explicit DataFrame(std::size_t rows) : rows_(rows), sized_(true) {}

  std::size_t rows() const { return rows_; }

  void add_numeric(const std::string& name, std::vector<double> values);
  void add_categorical(const std::string& name, std::vector<std::string> values);

  bool has_numeric(std::string_view name) const;
  bool has_categorical(std::string_view name) const;
  const std::vector<double>& numeric(std::string_view name) const;
  const std::vector<std::string>& categorical(std::string_view name) const;

 private:
  void check_size(const std::string& name, std::size_t n);

  std::size_t rows_ = 0;
  bool sized_ = false;
  std::map<std::string, std::vector<double>, std::less<>> numeric_;
  std::map<std::string, std::vector<std::string>, std::less<>> categorical_;
};

enum class TermKind { continuous, categorical };

struct Term {
  std::string name;
  TermKind kind = TermKind::continuous;
  bool center = true;                    // continuous only
  std::optional<std::string> reference;  // categorical only; default is the first level

  static Term continuous(std::string name, bool center = true) {
    return {std::move(name), TermKind::continuous, center, std::nullopt};
  }
  static Term categorical(std::string name, std::optional<std::string> reference = std::nullopt) {
    return {std::move(name), TermKind::categorical, false, std::move(reference)};
  }
};

struct DesignSpec {
  std::string response;
  std::vector<Term> terms;
  std::shared_ptr<const DataFrame> data;

  DesignSpec with_terms(std::vector<Term> t) const { return {response, std::move(t), data}; }
  std::vector<std::string> term_names() const;
};

inline constexpr std::string_view kIntercept = "(Intercept)";

/// Expanded model matrix. Categorical terms become reference-coded
/// indicators named "term:level"; continuous terms keep their name.
struct DesignMatrix {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> columns;
  std::vector<int> column_term;  // index into DesignSpec::terms, -1 for the intercept
};

DesignMatrix build_design(const DesignSpec& spec);

/// Sorted distinct levels of a categorical column.
std::vector<std::string> levels_of(const std::vector<std::string>& values);

}  // namespace skintone::stats
