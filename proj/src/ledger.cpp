#include "almr/ledger.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "almr/error.hpp"
#include "json_util.hpp"

namespace almr {

using nlohmann::json;

std::string_view to_string(TrainingStage s) {
  switch (s) {
    case TrainingStage::cpt: return "cpt";
    case TrainingStage::sft: return "sft";
    case TrainingStage::dpo: return "dpo";
  }
  return "?";
}

std::string_view to_string(LrScheduler s) {
  switch (s) {
    case LrScheduler::linear: return "linear";
    case LrScheduler::cosine: return "cosine";
    case LrScheduler::constant: return "constant";
  }
  return "?";
}

std::string_view to_string(LanguageClass c) {
  switch (c) {
    case LanguageClass::base: return "base";
    case LanguageClass::additional: return "additional";
    case LanguageClass::multilingual: return "multilingual";
  }
  return "?";
}

TrainingStage parse_training_stage(std::string_view s) {
  if (s == "cpt") return TrainingStage::cpt;
  if (s == "sft") return TrainingStage::sft;
  if (s == "dpo") return TrainingStage::dpo;
  throw Error(Stage::parse, "stage: unknown value '" + std::string(s) + "'");
}

LrScheduler parse_lr_scheduler(std::string_view s) {
  if (s == "linear") return LrScheduler::linear;
  if (s == "cosine") return LrScheduler::cosine;
  if (s == "constant") return LrScheduler::constant;
  throw Error(Stage::parse,
              "lr_scheduler: unknown value '" + std::string(s) + "'");
}

LanguageClass parse_language_class(std::string_view s) {
  if (s == "base") return LanguageClass::base;
  if (s == "additional") return LanguageClass::additional;
  if (s == "multilingual") return LanguageClass::multilingual;
  throw Error(Stage::parse,
              "language_class: unknown value '" + std::string(s) + "'");
}

namespace {

void range_error(std::string_view field, const std::string& detail) {
  throw Error(Stage::parse, std::string(field) + ": " + detail);
}

RunConfig config_from_json(const json& j) {
  detail::require_object(j, "config");
  detail::reject_unknown(j, {"micro_batch_size", "global_batch_size",
                             "lr_scheduler", "weight_decay", "sequence_length"},
                         "config.");
  RunConfig c;
  c.micro_batch_size = detail::get_int(j, "micro_batch_size", "config.");
  c.global_batch_size = detail::get_int(j, "global_batch_size", "config.");
  c.lr_scheduler =
      parse_lr_scheduler(detail::get_string(j, "lr_scheduler", "config."));
  c.weight_decay = detail::get_number(j, "weight_decay", "config.");
  c.sequence_length = detail::get_int(j, "sequence_length", "config.");
  return c;
}

json config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["micro_batch_size"] = c.micro_batch_size;
  j["global_batch_size"] = c.global_batch_size;
  j["lr_scheduler"] = to_string(c.lr_scheduler);
  j["weight_decay"] = c.weight_decay;
  j["sequence_length"] = c.sequence_length;
  return j;
}

RunRecord record_from_json(const json& j) {
  detail::require_object(j, "record");
  detail::reject_unknown(j,
                         {"schema", "run_id", "stage", "almr_percent", "lr",
                          "tokens_consumed", "val_loss", "metrics", "seed",
                          "config"},
                         "");
  if (j.contains("schema") && detail::get_int(j, "schema", "") != kSchemaVersion)
    range_error("schema", "unsupported version");
  RunRecord r;
  r.run_id = detail::get_string(j, "run_id", "");
  r.stage = parse_training_stage(detail::get_string(j, "stage", ""));
  r.almr_percent = detail::get_number(j, "almr_percent", "");
  r.lr = detail::get_number(j, "lr", "");
  r.tokens_consumed = detail::get_int(j, "tokens_consumed", "");
  r.val_loss = detail::get_number(j, "val_loss", "");
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    detail::require_object(m, "metrics");
    for (const auto& [name, value] : m.items()) {
      if (!value.is_number()) range_error("metrics." + name, "not a number");
      r.metrics[name] = value.get<double>();
    }
  }
  if (j.contains("seed")) r.seed = detail::get_int(j, "seed", "");
  if (j.contains("config")) r.config = config_from_json(j.at("config"));
  return r;
}

}  // namespace

void RunConfig::validate() const {
  if (micro_batch_size <= 0) range_error("config.micro_batch_size", "must be > 0");
  if (global_batch_size <= 0)
    range_error("config.global_batch_size", "must be > 0");
  if (global_batch_size % micro_batch_size != 0)
    range_error("config.global_batch_size",
                "must be a multiple of micro_batch_size");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
    range_error("config.weight_decay", "must be finite and >= 0");
  if (sequence_length <= 0) range_error("config.sequence_length", "must be > 0");
}

void RunRecord::validate() const {
  if (run_id.empty()) range_error("run_id", "must be non-empty");
  if (!(almr_percent >= 0.0 && almr_percent <= 100.0))
    range_error("almr_percent", "must lie in [0, 100]");
  if (!(lr > 0.0) || !std::isfinite(lr))
    range_error("lr", "must be finite and > 0");
  if (tokens_consumed < 0) range_error("tokens_consumed", "must be >= 0");
  if (!(val_loss > 0.0) || !std::isfinite(val_loss))
    range_error("val_loss", "must be finite and > 0");
  for (const auto& [name, value] : metrics)
    if (!std::isfinite(value)) range_error("metrics." + name, "must be finite");
  config.validate();
}

const std::vector<RunRecord>& IngestReport::records_or_throw() const {
  if (!issues.empty()) {
    const auto& first = issues.front();
    throw Error(Stage::parse,
                "line " + std::to_string(first.line) + ": " + first.message);
  }
  return records;
}

IngestReport ingest_runs(std::istream& in) {
  IngestReport report;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw Error(Stage::parse, std::string("malformed record: ") + e.what());
      }
      RunRecord r = record_from_json(j);
      r.validate();
      if (!seen.insert(r.run_id).second)
        throw Error(Stage::parse, "duplicate run_id '" + r.run_id + "'");
      report.records.push_back(std::move(r));
    } catch (const Error& e) {
      report.issues.push_back({lineno, e.what()});
    }
  }
  report.warnings = token_budget_warnings(report.records);
  return report;
}

IngestReport ingest_runs(std::string_view text) {
  std::istringstream in{std::string(text)};
  return ingest_runs(in);
}

std::string to_json_line(const RunRecord& r) {
  nlohmann::ordered_json j;
  j["schema"] = kSchemaVersion;
  j["run_id"] = r.run_id;
  j["stage"] = to_string(r.stage);
  j["almr_percent"] = r.almr_percent;
  j["lr"] = r.lr;
  j["tokens_consumed"] = r.tokens_consumed;
  j["val_loss"] = r.val_loss;
  j["metrics"] = r.metrics;
  j["seed"] = r.seed;
  j["config"] = config_to_json(r.config);
  return j.dump();
}

std::string serialize_runs(std::span<const RunRecord> runs) {
  std::string out;
  for (const auto& r : runs) {
    out += to_json_line(r);
    out += '\n';
  }
  return out;
}

std::vector<std::string> token_budget_warnings(std::span<const RunRecord> runs,
                                               double tolerance) {
  std::vector<std::string> warnings;
  if (runs.empty()) return warnings;
  std::vector<double> budgets;
  budgets.reserve(runs.size());
  for (const auto& r : runs) budgets.push_back(double(r.tokens_consumed));
  std::sort(budgets.begin(), budgets.end());
  const std::size_t n = budgets.size();
  const double median = n % 2 ? budgets[n / 2]
                              : 0.5 * (budgets[n / 2 - 1] + budgets[n / 2]);
  if (median <= 0.0) return warnings;
  for (const auto& r : runs) {
    const double dev = std::abs(double(r.tokens_consumed) - median) / median;
    if (dev > tolerance) {
      std::ostringstream os;
      os << "run '" << r.run_id << "' consumed " << r.tokens_consumed
         << " tokens, " << int(std::lround(dev * 100)) << "% off the median "
         << median;
      warnings.push_back(os.str());
    }
  }
  return warnings;
}

std::vector<Point2> ExperimentGrid::coordinates() const {
  std::vector<Point2> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back({p.x, p.y});
  return out;
}

Point2 ExperimentGrid::centroid() const {
  Point2 c;
  for (const auto& p : points) {
    c.x += p.x;
    c.y += p.y;
  }
  c.x /= double(points.size());
  c.y /= double(points.size());
  return c;
}

ExperimentGrid build_grid(std::span<const RunRecord> runs) {
  if (runs.size() < 3)
    throw Error(Stage::parse, "grid needs at least 3 runs, got " +
                                  std::to_string(runs.size()));
  ExperimentGrid grid;
  grid.points.reserve(runs.size());
  for (const auto& r : runs) {
    if (r.stage != TrainingStage::cpt)
      throw Error(Stage::parse, "run '" + r.run_id + "' is not a cpt run");
    if (!(r.lr > 0.0))
      throw Error(Stage::parse, "run '" + r.run_id + "' has lr <= 0");
    grid.points.push_back({std::log10(r.lr), r.almr_percent, r.val_loss,
                           r.metrics, r.run_id});
  }
  std::sort(grid.points.begin(), grid.points.end(),
            [](const GridPoint& a, const GridPoint& b) {
              if (a.x != b.x) return a.x < b.x;
              if (a.y != b.y) return a.y < b.y;
              return a.run_id < b.run_id;
            });
  for (std::size_t i = 1; i < grid.points.size(); ++i) {
    const auto& a = grid.points[i - 1];
    const auto& b = grid.points[i];
    if (a.x == b.x && a.y == b.y)
      throw Error(Stage::parse, "runs '" + a.run_id + "' and '" + b.run_id +
                                    "' share grid coordinate");
  }
  const auto coords = grid.coordinates();
  grid.bounds = Bounds::envelope(coords);
  return grid;
}

void CorpusInventory::validate() const {
  if (datasets.empty()) throw Error(Stage::parse, "inventory is empty");
  std::set<std::string> names;
  for (const auto& d : datasets) {
    if (d.name.empty()) range_error("datasets.name", "must be non-empty");
    if (d.stage != stage)
      range_error("datasets.stage", "dataset '" + d.name +
                                        "' does not match inventory stage");
    if (d.token_count < 0)
      range_error("token_count", "dataset '" + d.name + "' is negative");
    if (!names.insert(d.name).second)
      throw Error(Stage::parse, "duplicate dataset '" + d.name + "' in stage " +
                                    std::string(to_string(stage)));
  }
}

CorpusInventory parse_inventory(std::string_view text) {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos)
    throw Error(Stage::parse, "inventory is empty");
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Stage::parse, std::string("malformed inventory: ") + e.what());
  }
  detail::require_object(j, "inventory");
  detail::reject_unknown(j, {"schema", "stage", "datasets"}, "");
  if (j.contains("schema") && detail::get_int(j, "schema", "") != kSchemaVersion)
    range_error("schema", "unsupported version");
  CorpusInventory inv;
  inv.stage = parse_training_stage(detail::get_string(j, "stage", ""));
  if (!j.contains("datasets") || !j.at("datasets").is_array())
    throw Error(Stage::parse, "datasets: missing array");
  for (const auto& e : j.at("datasets")) {
    detail::require_object(e, "datasets[]");
    detail::reject_unknown(
        e, {"name", "stage", "language_class", "domain", "token_count"},
        "datasets.");
    DatasetSpec d;
    d.name = detail::get_string(e, "name", "datasets.");
    d.stage = e.contains("stage")
                  ? parse_training_stage(detail::get_string(e, "stage", "datasets."))
                  : inv.stage;
    d.language_class =
        parse_language_class(detail::get_string(e, "language_class", "datasets."));
    d.domain = e.contains("domain") ? detail::get_string(e, "domain", "datasets.")
                                    : std::string();
    d.token_count = detail::get_int(e, "token_count", "datasets.");
    inv.datasets.push_back(std::move(d));
  }
  inv.validate();
  return inv;
}

CorpusInventory load_inventory(std::istream& in) {
  std::ostringstream os;
  os << in.rdbuf();
  return parse_inventory(os.str());
}

std::string inventory_to_json(const CorpusInventory& inv) {
  nlohmann::ordered_json j;
  j["schema"] = kSchemaVersion;
  j["stage"] = to_string(inv.stage);
  j["datasets"] = nlohmann::ordered_json::array();
  for (const auto& d : inv.datasets) {
    nlohmann::ordered_json e;
    e["name"] = d.name;
    e["language_class"] = to_string(d.language_class);
    e["domain"] = d.domain;
    e["token_count"] = d.token_count;
    j["datasets"].push_back(e);
  }
  return j.dump(2);
}

}  // namespace almr
