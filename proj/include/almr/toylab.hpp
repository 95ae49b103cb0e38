#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "almr/ledger.hpp"

namespace almr::lab {

inline constexpr int kVocab = 32;

using Symbol = std::uint8_t;

enum class Language { a, b };

// First-order Markov generator for one synthetic language. The home range is
// 0-15 for language A and 16-31 for language B; each row puts 90% of its mass
// on the home range and 10% on the other one.
//
// Row s of the home part: `primary` on the successor succ(s), the rest of the
// 0.9 spread evenly over the 16 home symbols. Row s of the cross part:
// `loan` of the 0.1 on the loan symbol of s, the rest spread evenly over the
// 16 foreign symbols.
//   A: succ(s) = (5 s + 3) mod 16          loan(s) = 16 + (s mod 2)
//   B: succ(s) = 16 + (7 s + 11) mod 16    loan(s) = s mod 2
struct MarkovSpec {
  double home_mass = 0.9;
  double primary = 0.55;
  double loan = 0.6;
};

// Row-major kVocab x kVocab transition matrix.
std::vector<double> transition_matrix(Language lang, const MarkovSpec& spec = {});

struct ToyCorpus {
  std::vector<Symbol> language_a;
  std::vector<Symbol> language_b;
  int vocab_size = kVocab;
  std::vector<double> matrix_a;
  std::vector<double> matrix_b;
};

// Deterministic per seed. tokens_per_language may be 0.
ToyCorpus synth_corpus(std::uint64_t seed, std::size_t tokens_per_language,
                       const MarkovSpec& spec = {});

// Bigram logit table: row = context symbol, column = next symbol.
class ToyModel {
 public:
  ToyModel();

  double logit(int context, int next) const { return logits_[context * kVocab + next]; }
  std::vector<double>& logits() { return logits_; }
  const std::vector<double>& logits() const { return logits_; }

  // Softmax of one row.
  std::vector<double> probabilities(int context) const;
  int predict(int context) const;

  // Mean next-symbol cross-entropy (nats) over consecutive pairs.
  double cross_entropy(std::span<const Symbol> tokens) const;
  // Share of consecutive pairs whose argmax prediction is correct.
  double accuracy(std::span<const Symbol> tokens) const;

  friend bool operator==(const ToyModel&, const ToyModel&) = default;

 private:
  std::vector<double> logits_;
};

struct PretrainOptions {
  int batch_size = 32;
  double divergence_factor = 10.0;
};

// Minibatch SGD on next-symbol cross-entropy from a zero-logit start.
// Throws DivergenceError when a batch loss is non-finite or exceeds
// divergence_factor * log(vocab).
ToyModel pretrain(std::span<const Symbol> corpus, std::int64_t steps, double lr,
                  std::uint64_t seed, const PretrainOptions& options = {});

enum class ValidationMix { mixture, additional_only, base_only };

struct TrainSpec {
  double lr = 0.03;
  double almr_percent = 0.0;
  std::int64_t token_budget = 100000;
  LrScheduler lr_scheduler = LrScheduler::linear;
  std::uint64_t seed = 42;
  std::int64_t eval_holdout = 4000;  // held-out tokens per language
  int batch_size = 8;
  ValidationMix validation = ValidationMix::mixture;
  double divergence_factor = 10.0;
  std::string run_id;  // generated from the spec when empty

  void validate() const;
};

// Splits each language into a training prefix and a held-out suffix of
// eval_holdout tokens.
struct CorpusSplit {
  std::span<const Symbol> train_a, holdout_a, train_b, holdout_b;
};
CorpusSplit split(const ToyCorpus& corpus, std::int64_t eval_holdout);

// Continual training of `base` on an A/B stream interleaved at the spec's
// ALMR. Metrics: acc_a, acc_b, avg_acc (their mean), loss_a, loss_b.
RunRecord cpt_run(const ToyModel& base, const ToyCorpus& corpus,
                  const TrainSpec& spec);

// Same, also returning the trained model.
std::pair<RunRecord, ToyModel> cpt_train(const ToyModel& base,
                                         const ToyCorpus& corpus,
                                         const TrainSpec& spec);

struct CellFailure {
  std::size_t lr_index = 0;
  std::size_t almr_index = 0;
  double lr = 0.0;
  double almr_percent = 0.0;
  std::string message;
};

// Replaces the learning rate of one grid cell.
struct CellOverride {
  std::size_t lr_index = 0;
  std::size_t almr_index = 0;
  double lr = 0.0;
};

struct GridOutcome {
  std::vector<RunRecord> records;  // lr outer, almr inner
  std::vector<CellFailure> failures;
};

// One independent cpt_run per (lr, almr) cell. Cell seeds derive from the
// template seed and the cell indices, so output does not depend on `threads`.
GridOutcome run_grid(std::span<const double> almr_levels,
                     std::span<const double> lr_levels, const ToyModel& base,
                     const ToyCorpus& corpus, const TrainSpec& template_spec,
                     int threads = 1,
                     std::span<const CellOverride> overrides = {});

// Everything needed to reproduce a lab grid from scratch.
struct LabConfig {
  std::uint64_t seed = 42;
  std::vector<double> almr_levels = {0, 15, 30, 50, 70};
  std::vector<double> lr_levels = {3e-3, 1e-2, 3e-2, 1e-1, 3e-1};
  std::size_t tokens_per_language = 200000;
  std::int64_t pretrain_steps = 10000;
  double pretrain_lr = 1.0;
  TrainSpec train;
  MarkovSpec markov;
  int threads = 1;
  std::vector<CellOverride> overrides;

  static LabConfig from_json(std::string_view text);
  std::string to_json() const;
};

struct LabResult {
  ToyModel base;
  GridOutcome grid;
};

LabResult run_lab(const LabConfig& config);

}  // namespace almr::lab
