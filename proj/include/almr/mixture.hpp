#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "almr/ledger.hpp"

namespace almr {

enum class Pool { base, additional };

struct Allocation {
  std::string name;
  LanguageClass language_class = LanguageClass::base;
  Pool pool = Pool::base;
  std::int64_t token_count = 0;
  std::int64_t quota = 0;
  double passes = 0.0;  // quota / token_count
};

struct PlanOptions {
  double pass_warning = 4.0;
};

// Token quotas realizing a target additional-language fraction. Multilingual
// datasets are counted in the base pool.
struct MixturePlan {
  double target_almr_percent = 0.0;
  std::int64_t total_tokens = 0;
  std::int64_t additional_tokens = 0;  // round(rho * total_tokens)
  std::vector<Allocation> allocations;  // inventory order
  std::vector<std::string> warnings;

  std::map<std::string, std::int64_t> quotas() const;
  std::map<std::string, double> passes() const;
  std::string to_json() const;
};

MixturePlan plan(const CorpusInventory& inventory, double almr_percent,
                 std::int64_t total_tokens, const PlanOptions& options = {});

struct Slot {
  int dataset = 0;             // index into MixturePlan::allocations
  std::int64_t document = 0;   // position within that dataset
};

// Deterministic interleaving of a plan. A slot goes to the additional pool
// when an integer error-diffusion accumulator (acc += A, wrap at T) wraps, so
// after N slots exactly floor(N * A / T) are additional. Inside a pool,
// datasets are chosen by the same diffusion over their quotas. The seed only
// permutes the order in which each dataset's documents are visited. The
// sequence repeats with period total_tokens.
class Schedule {
 public:
  Schedule(const MixturePlan& plan, int batch_size, std::uint64_t seed);

  Slot next();
  std::vector<Slot> next_batch();
  void reset();

  bool is_additional(int dataset) const;
  const std::string& dataset_name(int dataset) const;
  std::int64_t position() const { return position_; }
  int batch_size() const { return batch_size_; }
  std::uint64_t seed() const { return seed_; }
  double target_fraction() const;

 private:
  struct PoolState {
    std::vector<int> members;
    std::vector<std::int64_t> quotas;
    std::vector<std::int64_t> credit;
    std::int64_t total = 0;
  };

  int pick(PoolState& pool);
  void init_pools();

  std::vector<Allocation> allocations_;
  std::int64_t additional_ = 0;
  std::int64_t total_ = 0;
  int batch_size_ = 1;
  std::uint64_t seed_ = 0;

  std::int64_t acc_ = 0;
  std::int64_t position_ = 0;
  PoolState base_;
  PoolState extra_;
  std::vector<std::int64_t> drawn_;
  std::vector<std::int64_t> perm_mul_;
  std::vector<std::int64_t> perm_add_;
};

Schedule sample_schedule(const MixturePlan& plan, int batch_size,
                         std::uint64_t seed);

// Additional-pool share of the first prefix_len slots of a fresh copy of the
// schedule.
double realized_ratio(const Schedule& schedule, std::int64_t prefix_len);

struct RunLength {
  std::string dataset;
  std::int64_t count = 0;
};

std::vector<RunLength> run_length_encode(const Schedule& schedule,
                                         std::int64_t slots);
std::string schedule_to_json(const Schedule& schedule, std::int64_t slots);

}  // namespace almr
