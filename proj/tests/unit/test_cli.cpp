#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "almr/cli.hpp"
#include "unit/helpers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using testing::data_path;
using testing::slurp;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = almr::cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Scratch directory removed on scope exit.
struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("almr-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name, const std::string& text = {}) const {
    const auto p = (path / name).string();
    if (!text.empty()) std::ofstream(p, std::ios::binary) << text;
    return p;
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::size_t lines(const std::string& text) {
  return std::size_t(std::count(text.begin(), text.end(), '\n'));
}

// The default seed-42 grid, produced once through the CLI.
const std::string& default_grid() {
  static const std::string text = [] {
    const auto r = cli({"lab-grid", "--out", "-"});
    REQUIRE(r.code == 0);
    return r.out;
  }();
  return text;
}

std::string record(const std::string& id, double almr, double lr, double loss,
                   double a, double b) {
  json j;
  j["schema"] = 1;
  j["run_id"] = id;
  j["stage"] = "cpt";
  j["almr_percent"] = almr;
  j["lr"] = lr;
  j["tokens_consumed"] = 1000;
  j["val_loss"] = loss;
  j["metrics"] = {{"acc_a", a}, {"acc_b", b}};
  return j.dump() + "\n";
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"nonsense"}).code == 2);
  const auto r = cli({"plan", "--bogus"});
  CHECK(r.code == 2);
  CHECK(r.err.find("error [usage]") != std::string::npos);
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({"report", "--runs", "/nonexistent/file"}).code == 2);
}

TEST_CASE("empty run file") {
  TempDir t;
  const auto path = t.file("empty.jsonl", "\n");
  const auto r = cli({"recommend", "--runs", path, "--out", t / "rec"});
  CHECK(r.code == 2);
  CHECK(r.err.find("no records") != std::string::npos);
}

TEST_CASE("collinear runs fail at the fit stage") {
  TempDir t;
  const auto path = t.file("runs.jsonl", record("a", 0, 1e-3, 2.0, 0.5, 0.1) +
                                             record("b", 0, 1e-2, 2.1, 0.5, 0.2) +
                                             record("c", 0, 1e-1, 2.2, 0.4, 0.3));
  const auto r = cli({"recommend", "--runs", path, "--out", t / "rec"});
  CHECK(r.code == 3);
  CHECK(r.err.find("error [fit]") != std::string::npos);
}

TEST_CASE("lab-grid defaults") {
  CHECK(lines(default_grid()) == 25);
  TempDir t;
  const auto r = cli({"lab-grid", "--out", t / "g.jsonl", "--threads", "4"});
  CHECK(r.code == 0);
  CHECK(r.out == "25 of 25 cells succeeded\n");
  CHECK(slurp(t / "g.jsonl") == default_grid());
}

TEST_CASE("lab-grid with one divergent cell") {
  TempDir t;
  const auto cfg = t.file("cfg.json",
                          R"({"overrides":[{"lr_index":4,"almr_index":2,"lr":1000}]})");
  const auto r = cli({"lab-grid", "--spec", cfg, "--out", t / "g.jsonl"});
  CHECK(r.code == 0);
  CHECK(lines(slurp(t / "g.jsonl")) == 24);
  CHECK(r.out == "24 of 25 cells succeeded\n");
  CHECK(r.err.find("warning: cell lr=1000") != std::string::npos);
}

TEST_CASE("lab-grid where most cells diverge") {
  TempDir t;
  const auto cfg = t.file("cfg.json", R"({"lr_levels":[0.1,1000,3000],"almr_levels":[0,50],
    "tokens_per_language":20000,"pretrain_steps":1000,"token_budget":10000,"eval_holdout":1000})");
  const auto r = cli({"lab-grid", "--spec", cfg, "--out", t / "g.jsonl"});
  CHECK(r.code == 6);
  CHECK(r.out == "2 of 6 cells succeeded\n");
}

TEST_CASE("recommend on the reference grid") {
  TempDir t;
  const auto runs = t.file("runs.jsonl", default_grid());
  const auto r = cli({"recommend", "--runs", runs, "--out", t / "a"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("inside grid") != std::string::npos);
  for (const char* f : {"recommendation.json", "frontiers.json", "loss_contours.svg",
                        "metric_contours.svg"})
    CHECK(fs::exists(t / (std::string("a/") + f)));
  const auto rec = json::parse(slurp(t / "a/recommendation.json"));
  CHECK(rec.at("operating_point").at("in_hull").get<bool>());

  const auto again = cli({"recommend", "--runs", runs, "--out", t / "b"});
  REQUIRE(again.code == 0);
  CHECK(again.out == r.out);
  for (const char* f : {"recommendation.json", "frontiers.json", "loss_contours.svg",
                        "metric_contours.svg"})
    CHECK(slurp(t / (std::string("a/") + f)) == slurp(t / (std::string("b/") + f)));
}

TEST_CASE("fit, frontier, report and ingest") {
  TempDir t;
  const auto runs = t.file("runs.jsonl", default_grid());
  const auto fit = cli({"fit", "--runs", runs, "--field", "loss"});
  REQUIRE(fit.code == 0);
  const auto fj = json::parse(fit.out);
  CHECK(fj.contains("surface"));
  CHECK(fj.at("contours").size() == 8);

  const auto svg = cli({"fit", "--runs", runs, "--format", "svg", "--levels", "5"});
  REQUIRE(svg.code == 0);
  CHECK(svg.out.rfind("<?xml", 0) == 0);
  CHECK(svg.out.find("averaged metric") != std::string::npos);

  const auto fr = cli({"frontier", "--runs", runs, "--scan", "7"});
  REQUIRE(fr.code == 0);
  const auto frj = json::parse(fr.out);
  CHECK(frj.contains("metric_ridge"));
  CHECK(frj.contains("loss_descent"));

  const auto rep = cli({"report", "--runs", runs});
  REQUIRE(rep.code == 0);
  CHECK(lines(rep.out) == 28);
  CHECK(rep.out.find("lowest val_loss: ") != std::string::npos);
  const auto recs = cli({"report", "--runs", runs, "--format", "records"});
  CHECK(json::parse(recs.out).size() == 25);

  const auto bad = t.file("bad.jsonl", default_grid() + "{not json}\n");
  const auto ing = cli({"ingest", "--runs", bad, "--out", t / "clean.jsonl"});
  CHECK(ing.code == 2);
  CHECK(ing.out == "25 records, 1 rejected\n");
  CHECK(ing.err.find("line 26") != std::string::npos);
  CHECK(slurp(t / "clean.jsonl") == default_grid());
}

TEST_CASE("plan") {
  const auto inv = data_path("cpt_inventory.json");
  const auto over = cli({"plan", "--spec", inv, "--almr", "150", "--tokens", "1000"});
  CHECK(over.code == 2);
  CHECK(over.err.find("error [parse]") != std::string::npos);

  const auto r = cli({"plan", "--spec", inv, "--almr", "33", "--tokens", "1000000"});
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  CHECK(j.at("additional_tokens").get<std::int64_t>() == 330000);
  CHECK(j.at("realized_almr_percent").get<double>() ==
        doctest::Approx(100.0 * 21 / 64));

  const auto zero = cli({"plan", "--spec", inv, "--almr", "0", "--tokens", "5000",
                         "--schedule-len", "0"});
  REQUIRE(zero.code == 0);
  const auto z = json::parse(zero.out);
  CHECK(z.at("additional_tokens").get<std::int64_t>() == 0);
  CHECK_FALSE(z.contains("schedule"));
}

TEST_CASE("degradation") {
  const auto base = data_path("llama3_8b_base.json");
  const auto tuned = data_path("llama3_8b_instruct.json");
  const auto r = cli({"degradation", "--base", base, "--tuned", tuned});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("-3.54") != std::string::npos);
  CHECK(r.out.find("-9.30") != std::string::npos);

  const auto same = cli({"degradation", "--base", base, "--tuned", base, "--format", "records"});
  REQUIRE(same.code == 0);
  const auto doc = json::parse(same.out);
  for (const auto& row : doc.at("rows"))
    CHECK(row.at("delta").get<double>() == 0.0);

  TempDir t;
  const auto other = t.file("other.json", R"({"schema":1,"metrics":{"Foo":1.0}})");
  CHECK(cli({"degradation", "--base", base, "--tuned", other}).code == 2);
}

}  // TEST_SUITE
