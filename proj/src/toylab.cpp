#include "almr/toylab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "almr/error.hpp"
#include "almr/metrics.hpp"
#include "almr/mixture.hpp"
#include "json_util.hpp"
#include "rng.hpp"

namespace almr::lab {

namespace {

constexpr int kHalf = kVocab / 2;

int home_offset(Language lang) { return lang == Language::a ? 0 : kHalf; }

int successor(Language lang, int s) {
  return lang == Language::a ? (5 * s + 3) % kHalf
                             : kHalf + (7 * s + 11) % kHalf;
}

int loan_symbol(Language lang, int s) {
  return lang == Language::a ? kHalf + s % 2 : s % 2;
}

// Categorical draw from one matrix row.
Symbol draw(std::span<const double> row, detail::Rng& rng) {
  double u = rng.uniform();
  for (int t = 0; t < kVocab; ++t) {
    u -= row[t];
    if (u < 0.0) return Symbol(t);
  }
  return Symbol(kVocab - 1);
}

std::vector<Symbol> generate(std::span<const double> matrix, std::size_t n,
                             Symbol first, detail::Rng& rng) {
  std::vector<Symbol> out;
  out.reserve(n);
  Symbol s = first;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(s);
    s = draw(matrix.subspan(std::size_t(s) * kVocab, kVocab), rng);
  }
  return out;
}

void softmax_row(const double* logits, double* out) {
  double m = logits[0];
  for (int t = 1; t < kVocab; ++t) m = std::max(m, logits[t]);
  double z = 0.0;
  for (int t = 0; t < kVocab; ++t) {
    out[t] = std::exp(logits[t] - m);
    z += out[t];
  }
  for (int t = 0; t < kVocab; ++t) out[t] /= z;
}

struct Pair {
  Symbol context;
  Symbol next;
};

// One SGD step on the mean cross-entropy of `batch`. Returns the batch loss
// measured before the update.
double sgd_step(std::vector<double>& logits, std::span<const Pair> batch,
                double lr) {
  std::vector<double> grad(std::size_t(kVocab) * kVocab, 0.0);
  double p[kVocab];
  double loss = 0.0;
  const double inv = 1.0 / double(batch.size());
  for (const auto& e : batch) {
    const double* row = &logits[std::size_t(e.context) * kVocab];
    softmax_row(row, p);
    loss -= std::log(p[e.next]);
    double* g = &grad[std::size_t(e.context) * kVocab];
    for (int t = 0; t < kVocab; ++t) g[t] += p[t] * inv;
    g[e.next] -= inv;
  }
  for (std::size_t k = 0; k < grad.size(); ++k) logits[k] -= lr * grad[k];
  return loss * inv;
}

void check_divergence(double loss, double factor, std::int64_t step) {
  if (!std::isfinite(loss) || loss > factor * std::log(double(kVocab)))
    throw DivergenceError(step, loss);
}

}  // namespace

std::vector<double> transition_matrix(Language lang, const MarkovSpec& spec) {
  std::vector<double> m(std::size_t(kVocab) * kVocab, 0.0);
  const int home = home_offset(lang);
  const int away = kHalf - home;
  const double cross = 1.0 - spec.home_mass;
  for (int s = 0; s < kVocab; ++s) {
    double* row = &m[std::size_t(s) * kVocab];
    for (int k = 0; k < kHalf; ++k) {
      row[home + k] += (spec.home_mass - spec.primary) / kHalf;
      row[away + k] += cross * (1.0 - spec.loan) / kHalf;
    }
    row[successor(lang, s)] += spec.primary;
    row[loan_symbol(lang, s)] += cross * spec.loan;
  }
  return m;
}

ToyCorpus synth_corpus(std::uint64_t seed, std::size_t tokens_per_language,
                       const MarkovSpec& spec) {
  ToyCorpus c;
  c.matrix_a = transition_matrix(Language::a, spec);
  c.matrix_b = transition_matrix(Language::b, spec);
  detail::Rng rng_a(detail::hash_combine(seed, 0xA));
  detail::Rng rng_b(detail::hash_combine(seed, 0xB));
  c.language_a = generate(c.matrix_a, tokens_per_language, 0, rng_a);
  c.language_b = generate(c.matrix_b, tokens_per_language, kHalf, rng_b);
  return c;
}

ToyModel::ToyModel() : logits_(std::size_t(kVocab) * kVocab, 0.0) {}

std::vector<double> ToyModel::probabilities(int context) const {
  std::vector<double> p(kVocab);
  softmax_row(&logits_[std::size_t(context) * kVocab], p.data());
  return p;
}

int ToyModel::predict(int context) const {
  const double* row = &logits_[std::size_t(context) * kVocab];
  return int(std::max_element(row, row + kVocab) - row);
}

double ToyModel::cross_entropy(std::span<const Symbol> tokens) const {
  if (tokens.size() < 2)
    throw Error(Stage::lab, "cross-entropy needs at least 2 tokens");
  double p[kVocab];
  double loss = 0.0;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    softmax_row(&logits_[std::size_t(tokens[i]) * kVocab], p);
    loss -= std::log(p[tokens[i + 1]]);
  }
  return loss / double(tokens.size() - 1);
}

double ToyModel::accuracy(std::span<const Symbol> tokens) const {
  if (tokens.size() < 2)
    throw Error(Stage::lab, "accuracy needs at least 2 tokens");
  int pred[kVocab];
  for (int s = 0; s < kVocab; ++s) pred[s] = predict(s);
  std::size_t hits = 0;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i)
    hits += pred[tokens[i]] == tokens[i + 1];
  return double(hits) / double(tokens.size() - 1);
}

ToyModel pretrain(std::span<const Symbol> corpus, std::int64_t steps, double lr,
                  std::uint64_t seed, const PretrainOptions& options) {
  if (corpus.size() < 2)
    throw Error(Stage::lab, "pretraining corpus needs at least 2 tokens");
  if (!(lr >= 0.0)) throw Error(Stage::lab, "pretrain lr must be >= 0");
  if (options.batch_size < 1) throw Error(Stage::lab, "batch_size must be >= 1");
  ToyModel model;
  detail::Rng rng(seed);
  std::vector<Pair> batch(options.batch_size);
  const std::uint64_t pairs = corpus.size() - 1;
  for (std::int64_t step = 0; step < steps; ++step) {
    for (auto& e : batch) {
      const auto pos = rng.below(pairs);
      e = {corpus[pos], corpus[pos + 1]};
    }
    if (lr == 0.0) continue;
    const double loss = sgd_step(model.logits(), batch, lr);
    check_divergence(loss, options.divergence_factor, step);
  }
  return model;
}

void TrainSpec::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr))
    throw Error(Stage::lab, "train lr must be finite and > 0");
  if (!(almr_percent >= 0.0 && almr_percent <= 100.0))
    throw Error(Stage::lab, "almr_percent must lie in [0, 100]");
  if (token_budget <= 0) throw Error(Stage::lab, "token_budget must be > 0");
  if (eval_holdout <= 0) throw Error(Stage::lab, "eval_holdout must be > 0");
  if (batch_size < 1) throw Error(Stage::lab, "batch_size must be >= 1");
}

CorpusSplit split(const ToyCorpus& corpus, std::int64_t eval_holdout) {
  const auto h = std::size_t(eval_holdout);
  auto cut = [h](const std::vector<Symbol>& v, const char* name) {
    if (v.size() < h + 2)
      throw Error(Stage::lab, std::string("language ") + name +
                                  " is too short for the held-out split");
    std::span<const Symbol> all(v);
    return std::pair{all.first(v.size() - h), all.last(h)};
  };
  const auto [ta, ha] = cut(corpus.language_a, "A");
  const auto [tb, hb] = cut(corpus.language_b, "B");
  return {ta, ha, tb, hb};
}

std::pair<RunRecord, ToyModel> cpt_train(const ToyModel& base,
                                         const ToyCorpus& corpus,
                                         const TrainSpec& spec) {
  spec.validate();
  const CorpusSplit parts = split(corpus, spec.eval_holdout);

  CorpusInventory inv;
  inv.stage = TrainingStage::cpt;
  inv.datasets = {
      {"lang_a", TrainingStage::cpt, LanguageClass::base, "toy",
       std::int64_t(parts.train_a.size() - 1)},
      {"lang_b", TrainingStage::cpt, LanguageClass::additional, "toy",
       std::int64_t(parts.train_b.size() - 1)},
  };
  const MixturePlan mix = plan(inv, spec.almr_percent, spec.token_budget);
  Schedule schedule(mix, spec.batch_size, spec.seed);

  ToyModel model = base;
  const std::int64_t steps =
      (spec.token_budget + spec.batch_size - 1) / spec.batch_size;
  std::vector<Pair> batch;
  batch.reserve(spec.batch_size);
  std::int64_t remaining = spec.token_budget;
  for (std::int64_t step = 0; step < steps; ++step) {
    batch.clear();
    const std::int64_t n = std::min<std::int64_t>(spec.batch_size, remaining);
    remaining -= n;
    for (std::int64_t k = 0; k < n; ++k) {
      const Slot slot = schedule.next();
      const auto& src = slot.dataset == 0 ? parts.train_a : parts.train_b;
      batch.push_back({src[slot.document], src[slot.document + 1]});
    }
    const double frac = double(step) / double(steps);
    double lr = spec.lr;
    if (spec.lr_scheduler == LrScheduler::linear)
      lr *= 1.0 - frac;
    else if (spec.lr_scheduler == LrScheduler::cosine)
      lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
    const double loss = sgd_step(model.logits(), batch, lr);
    check_divergence(loss, spec.divergence_factor, step);
  }

  const double rho = spec.almr_percent / 100.0;
  const double loss_a = model.cross_entropy(parts.holdout_a);
  const double loss_b = model.cross_entropy(parts.holdout_b);
  const double acc_a = model.accuracy(parts.holdout_a);
  const double acc_b = model.accuracy(parts.holdout_b);

  RunRecord r;
  if (spec.run_id.empty()) {
    std::ostringstream os;
    os << "toy-lr" << spec.lr << "-almr" << spec.almr_percent << "-s"
       << spec.seed;
    r.run_id = os.str();
  } else {
    r.run_id = spec.run_id;
  }
  r.stage = TrainingStage::cpt;
  r.almr_percent = spec.almr_percent;
  r.lr = spec.lr;
  r.tokens_consumed = spec.token_budget;
  switch (spec.validation) {
    case ValidationMix::mixture: r.val_loss = (1.0 - rho) * loss_a + rho * loss_b; break;
    case ValidationMix::additional_only: r.val_loss = loss_b; break;
    case ValidationMix::base_only: r.val_loss = loss_a; break;
  }
  r.metrics = {{"acc_a", acc_a}, {"acc_b", acc_b}, {"loss_a", loss_a}, {"loss_b", loss_b}};
  AggregationSpec avg;
  avg.included_benchmarks = {"acc_a", "acc_b"};
  r.metrics["avg_acc"] = average_metric(r.metrics, avg);
  r.seed = std::int64_t(spec.seed & ((1ull << 62) - 1));
  r.config.micro_batch_size = spec.batch_size;
  r.config.global_batch_size = spec.batch_size;
  r.config.lr_scheduler = spec.lr_scheduler;
  r.config.weight_decay = 0.0;
  r.config.sequence_length = 2;
  return {std::move(r), std::move(model)};
}

RunRecord cpt_run(const ToyModel& base, const ToyCorpus& corpus,
                  const TrainSpec& spec) {
  return cpt_train(base, corpus, spec).first;
}

GridOutcome run_grid(std::span<const double> almr_levels,
                     std::span<const double> lr_levels, const ToyModel& base,
                     const ToyCorpus& corpus, const TrainSpec& template_spec,
                     int threads, std::span<const CellOverride> overrides) {
  if (almr_levels.empty() || lr_levels.empty())
    throw Error(Stage::lab, "grid levels must be non-empty");
  auto distinct = [](std::span<const double> v) {
    std::vector<double> s(v.begin(), v.end());
    std::sort(s.begin(), s.end());
    return std::adjacent_find(s.begin(), s.end()) == s.end();
  };
  if (!distinct(almr_levels) || !distinct(lr_levels))
    throw Error(Stage::lab, "grid levels must be distinct");

  const std::size_t cols = almr_levels.size();
  const std::size_t cells = lr_levels.size() * cols;
  std::vector<double> cell_lr(cells);
  for (std::size_t c = 0; c < cells; ++c) cell_lr[c] = lr_levels[c / cols];
  for (const auto& o : overrides) {
    if (o.lr_index >= lr_levels.size() || o.almr_index >= cols)
      throw Error(Stage::lab, "cell override outside the grid");
    if (!(o.lr > 0.0)) throw Error(Stage::lab, "cell override lr must be > 0");
    cell_lr[o.lr_index * cols + o.almr_index] = o.lr;
  }
  std::vector<std::optional<RunRecord>> results(cells);
  std::vector<std::string> errors(cells);

  auto run_cell = [&](std::size_t c) {
    const std::size_t i = c / cols, j = c % cols;
    TrainSpec spec = template_spec;
    spec.lr = cell_lr[c];
    spec.almr_percent = almr_levels[j];
    spec.seed = detail::hash_combine(detail::hash_combine(template_spec.seed, i), j) &
                ((1ull << 62) - 1);
    std::ostringstream id;
    id << "lab-s" << template_spec.seed << "-lr" << i << "-almr" << j;
    spec.run_id = id.str();
    try {
      results[c] = cpt_run(base, corpus, spec);
    } catch (const std::exception& e) {
      errors[c] = e.what();
    }
  };

  const int workers = std::clamp<int>(threads, 1, int(cells));
  if (workers == 1) {
    for (std::size_t c = 0; c < cells; ++c) run_cell(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t c; (c = next.fetch_add(1)) < cells;) run_cell(c);
      });
  }

  GridOutcome out;
  for (std::size_t c = 0; c < cells; ++c) {
    if (results[c]) {
      out.records.push_back(std::move(*results[c]));
    } else {
      const std::size_t i = c / cols, j = c % cols;
      out.failures.push_back({i, j, cell_lr[c], almr_levels[j], errors[c]});
    }
  }
  return out;
}

LabConfig LabConfig::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Stage::parse, std::string("malformed lab config: ") + e.what());
  }
  detail::require_object(j, "lab config");
  detail::reject_unknown(
      j,
      {"schema", "seed", "almr_levels", "lr_levels", "tokens_per_language",
       "pretrain_steps", "pretrain_lr", "token_budget", "eval_holdout",
       "batch_size", "lr_scheduler", "validation", "threads", "markov",
       "overrides"},
      "");
  LabConfig c;
  try {
    if (j.contains("seed")) c.seed = std::uint64_t(detail::get_int(j, "seed", ""));
    if (j.contains("almr_levels"))
      c.almr_levels = j.at("almr_levels").get<std::vector<double>>();
    if (j.contains("lr_levels"))
      c.lr_levels = j.at("lr_levels").get<std::vector<double>>();
    if (j.contains("tokens_per_language"))
      c.tokens_per_language =
          std::size_t(detail::get_int(j, "tokens_per_language", ""));
    if (j.contains("pretrain_steps"))
      c.pretrain_steps = detail::get_int(j, "pretrain_steps", "");
    if (j.contains("pretrain_lr"))
      c.pretrain_lr = detail::get_number(j, "pretrain_lr", "");
    if (j.contains("token_budget"))
      c.train.token_budget = detail::get_int(j, "token_budget", "");
    if (j.contains("eval_holdout"))
      c.train.eval_holdout = detail::get_int(j, "eval_holdout", "");
    if (j.contains("batch_size"))
      c.train.batch_size = int(detail::get_int(j, "batch_size", ""));
    if (j.contains("lr_scheduler"))
      c.train.lr_scheduler =
          parse_lr_scheduler(detail::get_string(j, "lr_scheduler", ""));
    if (j.contains("validation")) {
      const auto v = detail::get_string(j, "validation", "");
      if (v == "mixture")
        c.train.validation = ValidationMix::mixture;
      else if (v == "additional_only")
        c.train.validation = ValidationMix::additional_only;
      else if (v == "base_only")
        c.train.validation = ValidationMix::base_only;
      else
        throw Error(Stage::parse, "validation: unknown value '" + v + "'");
    }
    if (j.contains("threads")) c.threads = int(detail::get_int(j, "threads", ""));
    if (j.contains("markov")) {
      const auto& m = j.at("markov");
      detail::require_object(m, "markov");
      detail::reject_unknown(m, {"home_mass", "primary", "loan"}, "markov.");
      if (m.contains("home_mass"))
        c.markov.home_mass = detail::get_number(m, "home_mass", "markov.");
      if (m.contains("primary"))
        c.markov.primary = detail::get_number(m, "primary", "markov.");
      if (m.contains("loan")) c.markov.loan = detail::get_number(m, "loan", "markov.");
    }
    if (j.contains("overrides")) {
      const auto& arr = j.at("overrides");
      if (!arr.is_array()) throw Error(Stage::parse, "overrides: expected an array");
      for (const auto& o : arr) {
        detail::require_object(o, "overrides[]");
        detail::reject_unknown(o, {"lr_index", "almr_index", "lr"}, "overrides.");
        const auto li = detail::get_int(o, "lr_index", "overrides.");
        const auto ai = detail::get_int(o, "almr_index", "overrides.");
        if (li < 0 || ai < 0)
          throw Error(Stage::parse, "overrides: indices must be >= 0");
        c.overrides.push_back({std::size_t(li), std::size_t(ai),
                               detail::get_number(o, "lr", "overrides.")});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Stage::parse, std::string("malformed lab config: ") + e.what());
  }
  c.train.seed = c.seed;
  for (const auto& o : c.overrides)
    if (o.lr_index >= c.lr_levels.size() || o.almr_index >= c.almr_levels.size() ||
        !(o.lr > 0.0))
      throw Error(Stage::parse, "overrides: cell outside the grid or lr <= 0");
  if (c.almr_levels.empty() || c.lr_levels.empty())
    throw Error(Stage::parse, "lab config needs non-empty level lists");
  for (double lr : c.lr_levels)
    if (!(lr > 0.0)) throw Error(Stage::parse, "lr_levels must be > 0");
  for (double a : c.almr_levels)
    if (!(a >= 0.0 && a <= 100.0))
      throw Error(Stage::parse, "almr_levels must lie in [0, 100]");
  return c;
}

std::string LabConfig::to_json() const {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["seed"] = seed;
  j["almr_levels"] = almr_levels;
  j["lr_levels"] = lr_levels;
  j["tokens_per_language"] = tokens_per_language;
  j["pretrain_steps"] = pretrain_steps;
  j["pretrain_lr"] = pretrain_lr;
  j["token_budget"] = train.token_budget;
  j["eval_holdout"] = train.eval_holdout;
  j["batch_size"] = train.batch_size;
  j["lr_scheduler"] = to_string(train.lr_scheduler);
  j["validation"] = train.validation == ValidationMix::mixture ? "mixture"
                    : train.validation == ValidationMix::additional_only
                        ? "additional_only"
                        : "base_only";
  j["threads"] = threads;
  if (!overrides.empty()) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& o : overrides)
      arr.push_back({{"lr_index", o.lr_index}, {"almr_index", o.almr_index}, {"lr", o.lr}});
    j["overrides"] = arr;
  }
  j["markov"] = {{"home_mass", markov.home_mass},
                 {"primary", markov.primary},
                 {"loan", markov.loan}};
  return j.dump(2);
}

LabResult run_lab(const LabConfig& config) {
  const ToyCorpus corpus =
      synth_corpus(config.seed, config.tokens_per_language, config.markov);
  const CorpusSplit parts = split(corpus, config.train.eval_holdout);
  LabResult out;
  out.base = pretrain(parts.train_a, config.pretrain_steps, config.pretrain_lr,
                      detail::hash_combine(config.seed, 0x5eed));
  TrainSpec spec = config.train;
  spec.seed = config.seed;
  out.grid = run_grid(config.almr_levels, config.lr_levels, out.base, corpus,
                      spec, config.threads, config.overrides);
  return out;
}

}  // namespace almr::lab
