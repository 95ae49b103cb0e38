#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "almr/geometry.hpp"

namespace almr {

inline constexpr int kSchemaVersion = 1;

enum class TrainingStage { cpt, sft, dpo };
enum class LrScheduler { linear, cosine, constant };
enum class LanguageClass { base, additional, multilingual };

std::string_view to_string(TrainingStage s);
std::string_view to_string(LrScheduler s);
std::string_view to_string(LanguageClass c);
TrainingStage parse_training_stage(std::string_view s);
LrScheduler parse_lr_scheduler(std::string_view s);
LanguageClass parse_language_class(std::string_view s);

// Optimizer configuration of a run. Defaults are the CPT column of the
// reference configuration table with a 2048-token window.
struct RunConfig {
  std::int64_t micro_batch_size = 4;
  std::int64_t global_batch_size = 256;
  LrScheduler lr_scheduler = LrScheduler::linear;
  double weight_decay = 0.01;
  std::int64_t sequence_length = 2048;

  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Outcome of one independent training run.
struct RunRecord {
  std::string run_id;
  TrainingStage stage = TrainingStage::cpt;
  double almr_percent = 0.0;
  double lr = 0.0;
  std::int64_t tokens_consumed = 0;
  double val_loss = 0.0;
  std::map<std::string, double> metrics;
  std::int64_t seed = 0;
  RunConfig config;

  // Throws Error(Stage::parse) naming the offending field.
  void validate() const;
  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

struct IngestIssue {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct IngestReport {
  std::vector<RunRecord> records;
  std::vector<IngestIssue> issues;
  std::vector<std::string> warnings;

  bool ok() const { return issues.empty(); }
  // Throws Error(Stage::parse) describing the first issue, if any.
  const std::vector<RunRecord>& records_or_throw() const;
};

// Parses line-delimited run records. Blank lines are skipped. Invalid lines
// are reported in `issues` (with 1-based line numbers) and left out of
// `records`; valid records keep input order.
IngestReport ingest_runs(std::istream& in);
IngestReport ingest_runs(std::string_view text);

std::string to_json_line(const RunRecord& r);
std::string serialize_runs(std::span<const RunRecord> runs);

// Flags runs whose token budget deviates from the median by more than
// `tolerance` (relative).
std::vector<std::string> token_budget_warnings(std::span<const RunRecord> runs,
                                               double tolerance = 0.25);

struct GridPoint {
  double x = 0.0;  // log10(lr)
  double y = 0.0;  // almr percent
  double loss = 0.0;
  std::map<std::string, double> metrics;
  std::string run_id;
};

struct ExperimentGrid {
  std::vector<GridPoint> points;  // sorted by (x, y)
  Bounds bounds;

  std::vector<Point2> coordinates() const;
  Point2 centroid() const;
};

// Maps CPT runs onto (log10 lr, almr) coordinates. Requires at least three
// runs and rejects two runs sharing a coordinate.
ExperimentGrid build_grid(std::span<const RunRecord> runs);

struct DatasetSpec {
  std::string name;
  TrainingStage stage = TrainingStage::cpt;
  LanguageClass language_class = LanguageClass::base;
  std::string domain;
  std::int64_t token_count = 0;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct CorpusInventory {
  TrainingStage stage = TrainingStage::cpt;
  std::vector<DatasetSpec> datasets;

  void validate() const;
};

CorpusInventory load_inventory(std::istream& in);
CorpusInventory parse_inventory(std::string_view text);
std::string inventory_to_json(const CorpusInventory& inv);

}  // namespace almr
