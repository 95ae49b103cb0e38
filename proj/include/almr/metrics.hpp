#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace almr {

using ScoreMap = std::map<std::string, double>;

enum class Normalization { none, minmax };

// Which benchmarks enter the averaged metric, and how.
struct AggregationSpec {
  std::vector<std::string> included_benchmarks;
  Normalization normalization = Normalization::none;
  std::optional<std::map<std::string, double>> weights;
  // Per-benchmark (lo, hi) used by minmax normalization.
  std::map<std::string, std::pair<double, double>> bounds;

  void validate() const;

  static AggregationSpec from_json(std::string_view text);
  std::string to_json() const;
};

double average_metric(const ScoreMap& scores, const AggregationSpec& spec);

struct DegradationRow {
  std::string benchmark;
  double base_score = 0.0;
  double tuned_score = 0.0;
  double delta = 0.0;  // tuned - base
  bool degraded = false;
};

struct DegradationReport {
  std::vector<DegradationRow> rows;  // delta ascending, then name
  std::vector<std::string> uncompared;

  std::string to_table() const;
  std::string to_json() const;
};

DegradationReport degradation_report(const ScoreMap& base,
                                     const ScoreMap& tuned);

// Share of Han ideographs (U+4E00..U+9FFF, U+3400..U+4DBF) among the
// non-whitespace code points of a UTF-8 string. Invalid bytes count as one
// non-Han code point each.
double chinese_fraction(std::string_view utf8);

// Reads a score map, either a bare {"name": score} object or one wrapped as
// {"schema": 1, "metrics": {...}}.
ScoreMap parse_score_map(std::string_view text);

}  // namespace almr
