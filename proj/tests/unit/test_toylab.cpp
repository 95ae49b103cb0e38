#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "almr/ledger.hpp"
#include "almr/toylab.hpp"
#include "unit/helpers.hpp"

using namespace almr;
using namespace almr::lab;
using testing::stage_of;

namespace {

// The seed-42 reference grid, computed once.
const LabResult& reference() {
  static const LabResult r = run_lab(LabConfig{});
  return r;
}

const RunRecord& cell(std::size_t lr_index, std::size_t almr_index) {
  return reference().grid.records.at(lr_index * 5 + almr_index);
}

// Small but non-trivial setup for the single-run tests.
struct Small {
  ToyCorpus corpus = synth_corpus(7, 30000);
  ToyModel base = pretrain(split(corpus, 2000).train_a, 3000, 1.0, 1);

  TrainSpec spec(double lr, double almr) const {
    TrainSpec s;
    s.lr = lr;
    s.almr_percent = almr;
    s.token_budget = 20000;
    s.eval_holdout = 2000;
    return s;
  }
};

}  // namespace

TEST_SUITE("toylab") {

TEST_CASE("transition matrices are stochastic and differ") {
  const auto a = transition_matrix(Language::a);
  const auto b = transition_matrix(Language::b);
  double tv_total = 0.0;
  for (int s = 0; s < kVocab; ++s) {
    double sa = 0, sb = 0, home = 0, tv = 0;
    for (int t = 0; t < kVocab; ++t) {
      const double pa = a[s * kVocab + t], pb = b[s * kVocab + t];
      CHECK(pa >= 0);
      CHECK(pb >= 0);
      sa += pa;
      sb += pb;
      if (t < 16) home += pa;
      tv += 0.5 * std::abs(pa - pb);
    }
    CHECK(sa == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sb == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(home == doctest::Approx(0.9).epsilon(1e-12));
    tv_total += tv;
  }
  CHECK(tv_total / kVocab > 0.1);
}

TEST_CASE("corpus is deterministic and concentrated") {
  const auto c1 = synth_corpus(42, 10000);
  const auto c2 = synth_corpus(42, 10000);
  CHECK(c1.language_a == c2.language_a);
  CHECK(c1.language_b == c2.language_b);
  CHECK(synth_corpus(43, 10000).language_a != c1.language_a);
  REQUIRE(c1.language_a.size() == 10000);
  std::size_t home_a = 0, home_b = 0;
  for (auto s : c1.language_a) {
    CHECK(s < kVocab);
    home_a += s < 16;
  }
  for (auto s : c1.language_b) home_b += s >= 16;
  CHECK(double(home_a) / 10000 >= 0.85);
  CHECK(double(home_b) / 10000 >= 0.85);
}

TEST_CASE("empty corpus is accepted but unusable") {
  const auto c = synth_corpus(42, 0);
  CHECK(c.language_a.empty());
  CHECK(stage_of([&] { pretrain(c.language_a, 10, 0.1, 1); }) == int(Stage::lab));
  CHECK(stage_of([&] { split(c, 10); }) == int(Stage::lab));
}

TEST_CASE("zero learning rate returns the initialization") {
  const auto c = synth_corpus(42, 5000);
  CHECK(pretrain(c.language_a, 500, 0.0, 3) == ToyModel{});
}

TEST_CASE("pretraining is reproducible and learns") {
  const auto c = synth_corpus(42, 20000);
  const auto m1 = pretrain(c.language_a, 10000, 0.1, 42);
  const auto m2 = pretrain(c.language_a, 10000, 0.1, 42);
  CHECK(m1.logits() == m2.logits());
  CHECK(m1.cross_entropy(c.language_a) < std::log(32.0));
  for (int s = 0; s < kVocab; ++s) {
    const auto p = m1.probabilities(s);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-9);
  }
}

TEST_CASE("huge learning rate diverges with a step index") {
  const auto c = synth_corpus(42, 5000);
  try {
    pretrain(c.language_a, 1000, 1e4, 1);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.stage() == Stage::lab);
    CHECK(e.step() >= 0);
    CHECK(e.step() < 1000);
  }
}

TEST_CASE("negligible updates keep the base loss") {
  const Small s;
  const auto parts = split(s.corpus, 2000);
  for (double almr : {0.0, 30.0, 70.0}) {
    const auto r = cpt_run(s.base, s.corpus, s.spec(1e-12, almr));
    const double rho = almr / 100;
    const double expect = (1 - rho) * s.base.cross_entropy(parts.holdout_a) +
                          rho * s.base.cross_entropy(parts.holdout_b);
    CHECK(std::abs(r.val_loss - expect) <= 1e-6);
  }
}

TEST_CASE("single runs are byte-identical") {
  const Small s;
  const auto r1 = cpt_run(s.base, s.corpus, s.spec(0.1, 30));
  const auto r2 = cpt_run(s.base, s.corpus, s.spec(0.1, 30));
  CHECK(to_json_line(r1) == to_json_line(r2));
  CHECK(r1.tokens_consumed == 20000);
  CHECK(r1.metrics.at("avg_acc") ==
        doctest::Approx(0.5 * (r1.metrics.at("acc_a") + r1.metrics.at("acc_b"))));
}

TEST_CASE("validation options") {
  const Small s;
  auto spec = s.spec(0.1, 30);
  spec.validation = ValidationMix::additional_only;
  const auto b = cpt_run(s.base, s.corpus, spec);
  CHECK(b.val_loss == b.metrics.at("loss_b"));
  spec.validation = ValidationMix::base_only;
  const auto a = cpt_run(s.base, s.corpus, spec);
  CHECK(a.val_loss == a.metrics.at("loss_a"));
}

TEST_CASE("spec validation") {
  const Small s;
  auto bad = s.spec(0.1, 30);
  bad.token_budget = 0;
  CHECK(stage_of([&] { cpt_run(s.base, s.corpus, bad); }) == int(Stage::lab));
  bad = s.spec(0.0, 30);
  CHECK(stage_of([&] { cpt_run(s.base, s.corpus, bad); }) == int(Stage::lab));
  bad = s.spec(0.1, 130);
  CHECK(stage_of([&] { cpt_run(s.base, s.corpus, bad); }) == int(Stage::lab));
}

TEST_CASE("reference grid shape") {
  const auto& g = reference().grid;
  REQUIRE(g.records.size() == 25);
  CHECK(g.failures.empty());
  std::set<std::string> ids;
  for (const auto& r : g.records) ids.insert(r.run_id);
  CHECK(ids.size() == 25);
  // lr outer, almr inner
  CHECK(cell(0, 0).lr == 3e-3);
  CHECK(cell(0, 4).almr_percent == 70);
  CHECK(cell(4, 0).lr == 3e-1);
  for (const auto& r : g.records) CHECK(r.tokens_consumed <= 200000);
}

TEST_CASE("no forgetting without the new language") {
  const auto& r = reference();
  const auto corpus = synth_corpus(42, 200000);
  const auto parts = split(corpus, 4000);
  const double base_a = r.base.accuracy(parts.holdout_a);
  const double base_b = r.base.accuracy(parts.holdout_b);
  // regression fixture: seed-42 base model
  CHECK(base_a == doctest::Approx(0.5716429107).epsilon(1e-9));
  CHECK(base_b == doctest::Approx(0.0012503126).epsilon(1e-9));
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(cell(i, 0).metrics.at("acc_a") >= base_a - 0.01);
    CHECK(std::abs(cell(i, 0).metrics.at("acc_b") - base_b) <= 0.01);
  }
}

TEST_CASE("middle learning rate: forgetting and acquisition") {
  const auto& lo = cell(2, 0).metrics;
  const auto& hi = cell(2, 4).metrics;
  CHECK(hi.at("acc_b") >= lo.at("acc_b"));
  CHECK(hi.at("acc_a") <= lo.at("acc_a"));
  for (std::size_t j = 1; j < 5; ++j)
    CHECK(cell(2, j).metrics.at("loss_b") <= cell(2, j - 1).metrics.at("loss_b"));
}

TEST_CASE("averaged metric peaks inside the ALMR range") {
  int interior = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < 5; ++j)
      if (cell(i, j).metrics.at("avg_acc") > cell(i, best).metrics.at("avg_acc")) best = j;
    if (best > 0 && best < 4) ++interior;
  }
  CHECK(interior >= 1);
}

TEST_CASE("grid output is independent of thread count") {
  LabConfig cfg;
  cfg.lr_levels = {1e-2, 1e-1};
  cfg.almr_levels = {0, 30, 70};
  cfg.tokens_per_language = 40000;
  cfg.pretrain_steps = 2000;
  cfg.train.token_budget = 20000;
  const auto one = run_lab(cfg);
  cfg.threads = 4;
  const auto four = run_lab(cfg);
  CHECK(serialize_runs(one.grid.records) == serialize_runs(four.grid.records));
}

TEST_CASE("one divergent cell is isolated") {
  const auto& ref = reference();
  const auto corpus = synth_corpus(42, 200000);
  TrainSpec t;
  t.seed = 42;
  const std::vector<double> almr = {0, 15, 30, 50, 70};
  const std::vector<double> lrs = {3e-3, 1e-2, 3e-2, 1e-1, 3e-1};
  const CellOverride bad[] = {{4, 2, 1e3}};
  const auto g = run_grid(almr, lrs, ref.base, corpus, t, 2, bad);
  CHECK(g.records.size() == 24);
  REQUIRE(g.failures.size() == 1);
  CHECK(g.failures[0].lr_index == 4);
  CHECK(g.failures[0].almr_index == 2);
  CHECK(g.failures[0].lr == 1e3);
  CHECK(g.failures[0].message.find("diverged") != std::string::npos);
  // the healthy cells match the reference grid
  std::size_t k = 0;
  for (std::size_t c = 0; c < 25; ++c) {
    if (c == 22) continue;
    CHECK(to_json_line(g.records[k++]) == to_json_line(ref.grid.records[c]));
  }
}

TEST_CASE("grid level checks") {
  const auto corpus = synth_corpus(1, 10000);
  const std::vector<double> one = {0.1}, dup = {10, 10}, none;
  CHECK(stage_of([&] { run_grid(dup, one, ToyModel{}, corpus, TrainSpec{}); }) ==
        int(Stage::lab));
  CHECK(stage_of([&] { run_grid(none, one, ToyModel{}, corpus, TrainSpec{}); }) ==
        int(Stage::lab));
}

TEST_CASE("lab config json") {
  LabConfig c;
  c.seed = 9;
  c.lr_levels = {0.01, 0.1};
  c.overrides = {{1, 0, 1e3}};
  const auto back = LabConfig::from_json(c.to_json());
  CHECK(back.seed == 9);
  CHECK(back.lr_levels == c.lr_levels);
  REQUIRE(back.overrides.size() == 1);
  CHECK(back.overrides[0].lr == 1e3);
  CHECK(back.to_json() == c.to_json());
  CHECK(stage_of([] { LabConfig::from_json(R"({"lr_levels":[0]})"); }) == int(Stage::parse));
  CHECK(stage_of([] { LabConfig::from_json(R"({"speed":1})"); }) == int(Stage::parse));
  CHECK(stage_of([] {
          LabConfig::from_json(R"({"overrides":[{"lr_index":9,"almr_index":0,"lr":1}]})");
        }) == int(Stage::parse));
}

}  // TEST_SUITE
