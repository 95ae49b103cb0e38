#include "almr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>

#include "almr/error.hpp"
#include "json_util.hpp"

namespace almr {

using nlohmann::json;

void AggregationSpec::validate() const {
  if (included_benchmarks.empty())
    throw Error(Stage::parse, "aggregation: included_benchmarks is empty");
  std::set<std::string> names(included_benchmarks.begin(),
                              included_benchmarks.end());
  if (names.size() != included_benchmarks.size())
    throw Error(Stage::parse, "aggregation: duplicate benchmark name");
  if (weights) {
    double total = 0.0;
    if (weights->size() != names.size())
      throw Error(Stage::parse,
                  "aggregation: weight keys must equal included_benchmarks");
    for (const auto& [name, w] : *weights) {
      if (!names.count(name))
        throw Error(Stage::parse, "aggregation: weight for unknown benchmark '" +
                                      name + "'");
      if (!(w >= 0.0) || !std::isfinite(w))
        throw Error(Stage::parse,
                    "aggregation: weight for '" + name + "' must be >= 0");
      total += w;
    }
    if (!(total > 0.0))
      throw Error(Stage::parse, "aggregation: weights sum to zero");
  }
}

AggregationSpec AggregationSpec::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Stage::parse, std::string("malformed aggregation spec: ") +
                                  e.what());
  }
  detail::require_object(j, "aggregation");
  detail::reject_unknown(
      j, {"schema", "benchmarks", "normalization", "weights", "bounds"}, "");
  AggregationSpec spec;
  const auto& b = detail::require_field(j, "benchmarks", "");
  if (!b.is_array()) throw Error(Stage::parse, "benchmarks: expected an array");
  for (const auto& name : b) {
    if (!name.is_string())
      throw Error(Stage::parse, "benchmarks: expected strings");
    spec.included_benchmarks.push_back(name.get<std::string>());
  }
  if (j.contains("normalization")) {
    const auto n = detail::get_string(j, "normalization", "");
    if (n == "none")
      spec.normalization = Normalization::none;
    else if (n == "minmax")
      spec.normalization = Normalization::minmax;
    else
      throw Error(Stage::parse, "normalization: unknown value '" + n + "'");
  }
  if (j.contains("weights")) {
    detail::require_object(j.at("weights"), "weights");
    std::map<std::string, double> w;
    for (const auto& [name, v] : j.at("weights").items()) {
      if (!v.is_number()) throw Error(Stage::parse, "weights." + name + ": not a number");
      w[name] = v.get<double>();
    }
    spec.weights = std::move(w);
  }
  if (j.contains("bounds")) {
    detail::require_object(j.at("bounds"), "bounds");
    for (const auto& [name, v] : j.at("bounds").items()) {
      if (!v.is_array() || v.size() != 2 || !v[0].is_number() ||
          !v[1].is_number())
        throw Error(Stage::parse, "bounds." + name + ": expected [lo, hi]");
      spec.bounds[name] = {v[0].get<double>(), v[1].get<double>()};
    }
  }
  spec.validate();
  return spec;
}

std::string AggregationSpec::to_json() const {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["benchmarks"] = included_benchmarks;
  j["normalization"] = normalization == Normalization::none ? "none" : "minmax";
  if (weights) j["weights"] = *weights;
  if (!bounds.empty()) {
    nlohmann::ordered_json b;
    for (const auto& [name, lohi] : bounds) b[name] = {lohi.first, lohi.second};
    j["bounds"] = b;
  }
  return j.dump();
}

double average_metric(const ScoreMap& scores, const AggregationSpec& spec) {
  spec.validate();
  // Accumulate in name order so the result does not depend on the order of
  // included_benchmarks.
  std::vector<std::string> names = spec.included_benchmarks;
  std::sort(names.begin(), names.end());
  double num = 0.0;
  double den = 0.0;
  for (const auto& name : names) {
    auto it = scores.find(name);
    if (it == scores.end())
      throw Error(Stage::parse, "missing benchmark '" + name + "'");
    double s = it->second;
    if (spec.normalization == Normalization::minmax) {
      auto bit = spec.bounds.find(name);
      if (bit == spec.bounds.end())
        throw Error(Stage::parse, "minmax bounds missing for '" + name + "'");
      const auto [lo, hi] = bit->second;
      if (hi == lo)
        throw Error(Stage::parse, "degenerate minmax range for '" + name + "'");
      s = (s - lo) / (hi - lo);
    }
    const double w = spec.weights ? spec.weights->at(name) : 1.0;
    num += w * s;
    den += w;
  }
  return num / den;
}

DegradationReport degradation_report(const ScoreMap& base,
                                     const ScoreMap& tuned) {
  DegradationReport report;
  for (const auto& [name, b] : base) {
    auto it = tuned.find(name);
    if (it == tuned.end()) {
      report.uncompared.push_back(name);
      continue;
    }
    const double delta = it->second - b;
    report.rows.push_back({name, b, it->second, delta, delta < 0.0});
  }
  for (const auto& [name, _] : tuned)
    if (!base.count(name)) report.uncompared.push_back(name);
  if (report.rows.empty())
    throw Error(Stage::parse, "no benchmark is shared by base and tuned scores");
  std::sort(report.uncompared.begin(), report.uncompared.end());
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const DegradationRow& a, const DegradationRow& b) {
                     return a.delta < b.delta;
                   });
  return report;
}

std::string DegradationReport::to_table() const {
  std::size_t width = 9;
  for (const auto& r : rows) width = std::max(width, r.benchmark.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %10s %10s %10s  %s\n", int(width),
                "benchmark", "base", "tuned", "delta", "degraded");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %10.2f %10.2f %+10.2f  %s\n",
                  int(width), r.benchmark.c_str(), r.base_score, r.tuned_score,
                  r.delta, r.degraded ? "yes" : "no");
    out += buf;
  }
  if (!uncompared.empty()) {
    out += "uncompared:";
    for (const auto& n : uncompared) out += " " + n;
    out += '\n';
  }
  return out;
}

std::string DegradationReport::to_json() const {
  nlohmann::ordered_json j;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json row;
    row["benchmark"] = r.benchmark;
    row["base_score"] = r.base_score;
    row["tuned_score"] = r.tuned_score;
    row["delta"] = r.delta;
    row["degraded"] = r.degraded;
    j["rows"].push_back(row);
  }
  j["uncompared"] = uncompared;
  return j.dump(2);
}

namespace {

bool is_unicode_space(std::uint32_t cp) {
  if (cp == 0x20 || (cp >= 0x09 && cp <= 0x0D)) return true;
  switch (cp) {
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_han(std::uint32_t cp) {
  return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF);
}

// Decodes one code point starting at s[i]; advances i. Malformed sequences
// consume a single byte and yield U+FFFD.
std::uint32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  int len = 0;
  std::uint32_t cp = 0;
  if (b0 < 0x80) {
    ++i;
    return b0;
  } else if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  if (i + len > s.size()) {
    ++i;
    return 0xFFFD;
  }
  for (int k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += len;
  return cp;
}

}  // namespace

double chinese_fraction(std::string_view utf8) {
  std::size_t han = 0;
  std::size_t visible = 0;
  for (std::size_t i = 0; i < utf8.size();) {
    const auto cp = next_code_point(utf8, i);
    if (is_unicode_space(cp)) continue;
    ++visible;
    if (is_han(cp)) ++han;
  }
  return visible == 0 ? 0.0 : double(han) / double(visible);
}

ScoreMap parse_score_map(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Stage::parse, std::string("malformed score map: ") + e.what());
  }
  detail::require_object(j, "score map");
  const json* obj = &j;
  if (j.contains("metrics") && j.at("metrics").is_object()) {
    detail::reject_unknown(j, {"schema", "metrics"}, "");
    obj = &j.at("metrics");
  }
  ScoreMap out;
  for (const auto& [name, v] : obj->items()) {
    if (!v.is_number()) throw Error(Stage::parse, name + ": not a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw Error(Stage::parse, name + ": not finite");
    out[name] = d;
  }
  return out;
}

}  // namespace almr
