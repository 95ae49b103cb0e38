#include "almr/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "almr/contour.hpp"
#include "almr/error.hpp"
#include "almr/frontier.hpp"
#include "almr/ledger.hpp"
#include "almr/metrics.hpp"
#include "almr/mixture.hpp"
#include "almr/surface.hpp"
#include "almr/svg.hpp"
#include "almr/toylab.hpp"

namespace almr::cli {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Stage::parse, "cannot read '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Stage::parse, "cannot write '" + path.string() + "'");
  out << text;
  out.flush();
  if (!out) throw Error(Stage::parse, "write failed for '" + path.string() + "'");
}

// Writes to `path`, or to `out` when the path is empty or "-".
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-")
    out << text;
  else
    write_file(path, text);
}

std::vector<RunRecord> load_runs(const std::string& path, std::ostream& err) {
  const auto report = ingest_runs(read_file(path));
  for (const auto& w : report.warnings) err << "warning: " << w << "\n";
  report.records_or_throw();
  if (report.records.empty()) throw Error(Stage::parse, "no records in '" + path + "'");
  for (const auto& w : token_budget_warnings(report.records))
    err << "warning: " << w << "\n";
  return report.records;
}

// Without a spec file the averaged metric is the mean of the two toy-lab
// accuracies.
AggregationSpec load_spec(const std::string& path) {
  if (path.empty()) {
    AggregationSpec s;
    s.included_benchmarks = {"acc_a", "acc_b"};
    return s;
  }
  return AggregationSpec::from_json(read_file(path));
}

Point2 parse_point(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos)
    throw Error(Stage::parse, "--start expects 'x,y', got '" + text + "'");
  try {
    std::size_t used1 = 0, used2 = 0;
    const std::string a = text.substr(0, comma), b = text.substr(comma + 1);
    const double x = std::stod(a, &used1);
    const double y = std::stod(b, &used2);
    if (used1 != a.size() || used2 != b.size()) throw std::invalid_argument("");
    return {x, y};
  } catch (const std::logic_error&) {
    throw Error(Stage::parse, "--start expects 'x,y', got '" + text + "'");
  }
}

struct SurfaceArgs {
  std::string runs;
  std::string spec;
  int scan = 9;
  std::string start;
  int levels = 8;
  int lattice = 81;
  double ridge = 0.0;
};

void add_surface_args(CLI::App* cmd, SurfaceArgs& a) {
  cmd->add_option("--runs", a.runs, "Run records (one JSON object per line)")
      ->required();
  cmd->add_option("--spec", a.spec, "Aggregation spec (JSON); default: mean of acc_a and acc_b");
  cmd->add_option("--levels", a.levels, "Contour levels per plot")
      ->check(CLI::Range(1, 200));
  cmd->add_option("--lattice", a.lattice, "Contour lattice nodes per axis")
      ->check(CLI::Range(2, 2000));
  cmd->add_option("--ridge", a.ridge, "Kernel ridge term added to the spline fit")
      ->check(CLI::NonNegativeNumber);
}

RecommendOptions recommend_options(const SurfaceArgs& a) {
  RecommendOptions o;
  o.scan_lines = a.scan;
  if (!a.start.empty()) o.start = parse_point(a.start);
  o.fit.ridge = a.ridge;
  return o;
}

std::vector<Point2> grid_crosses(const ExperimentGrid& grid) {
  return grid.coordinates();
}

std::vector<ContourSet> contour_sets(const ResponseSurface& s,
                                     const Bounds& bounds, int nodes,
                                     int levels) {
  Lattice lat{nodes, nodes, bounds};
  lat.validate();
  const auto field = sample(s, lat);
  const auto lv = even_levels(field, levels);
  std::vector<ContourSet> out;
  out.reserve(lv.size());
  for (double level : lv)
    out.push_back(marching_squares(
        field, level, [&](double x, double y) { return s.value(x, y); }));
  return out;
}

std::string plot(const ResponseSurface& s, const ExperimentGrid& grid,
                 std::span<const FrontierLine> lines,
                 const std::optional<OperatingPoint>& point,
                 const SurfaceArgs& a, const std::string& title) {
  const auto sets = contour_sets(s, grid.bounds, a.lattice, a.levels);
  const auto crosses = grid_crosses(grid);
  PlotSpec ps;
  ps.view = grid.bounds;
  ps.title = title;
  return render_contour_plot(sets, crosses, lines, point, ps);
}

std::string field_title(FieldName f) {
  return f == FieldName::val_loss ? "validation loss" : "averaged metric";
}

int cmd_ingest(const std::string& runs, const std::string& out_path,
               std::ostream& out, std::ostream& err) {
  const auto report = ingest_runs(read_file(runs));
  for (const auto& issue : report.issues)
    err << "line " << issue.line << ": " << issue.message << "\n";
  for (const auto& w : report.warnings) err << "warning: " << w << "\n";
  for (const auto& w : token_budget_warnings(report.records))
    err << "warning: " << w << "\n";
  if (!out_path.empty()) write_file(out_path, serialize_runs(report.records));
  out << report.records.size() << " records, " << report.issues.size()
      << " rejected\n";
  return report.ok() ? 0 : exit_code(Stage::parse);
}

int cmd_lab_grid(const std::string& spec_path, const std::string& out_path,
                 std::optional<std::uint64_t> seed, std::optional<int> threads,
                 std::ostream& out, std::ostream& err) {
  lab::LabConfig cfg = spec_path.empty()
                           ? lab::LabConfig{}
                           : lab::LabConfig::from_json(read_file(spec_path));
  if (seed) cfg.seed = *seed;
  if (threads) cfg.threads = *threads;
  const auto result = lab::run_lab(cfg);
  const auto& g = result.grid;
  for (const auto& f : g.failures)
    err << "warning: cell lr=" << f.lr << " almr=" << f.almr_percent
        << " failed: " << f.message << "\n";
  emit(out_path, serialize_runs(g.records), out);
  const std::size_t cells = g.records.size() + g.failures.size();
  if (out_path != "-")
    out << g.records.size() << " of " << cells << " cells succeeded\n";
  return 2 * g.records.size() >= cells ? 0 : exit_code(Stage::lab);
}

int cmd_fit(const SurfaceArgs& a, const std::string& field_name,
            const std::string& format, const std::string& out_path,
            std::ostream& out, std::ostream& err) {
  const auto runs = load_runs(a.runs, err);
  const auto grid = build_grid(runs);
  const FieldName field =
      field_name == "loss" ? FieldName::val_loss : FieldName::avg_metric;
  std::vector<SamplePoint> pts;
  const auto spec = field == FieldName::avg_metric ? load_spec(a.spec) : AggregationSpec{};
  for (const auto& p : grid.points)
    pts.push_back({p.x, p.y,
                   field == FieldName::val_loss ? p.loss
                                                : average_metric(p.metrics, spec)});
  FitOptions fo;
  fo.ridge = a.ridge;
  const auto s = ResponseSurface::fit(pts, SurfaceKind::thin_plate_spline, field, fo);
  if (format == "svg") {
    emit(out_path, plot(s, grid, {}, std::nullopt, a, field_title(field)), out);
    return 0;
  }
  ojson j;
  j["surface"] = ojson::parse(s.to_json());
  j["contours"] = ojson::parse(contours_to_json(
      contour_sets(s, grid.bounds, a.lattice, a.levels)));
  emit(out_path, j.dump(2) + "\n", out);
  return 0;
}

int cmd_frontier(const SurfaceArgs& a, const std::string& out_path,
                 std::ostream& out, std::ostream& err) {
  const auto runs = load_runs(a.runs, err);
  const auto grid = build_grid(runs);
  const auto spec = load_spec(a.spec);
  const auto opts = recommend_options(a);
  if (opts.scan_lines < 2) throw Error(Stage::frontier, "--scan must be >= 2");

  std::vector<SamplePoint> metric_pts, loss_pts;
  for (const auto& p : grid.points) {
    metric_pts.push_back({p.x, p.y, average_metric(p.metrics, spec)});
    loss_pts.push_back({p.x, p.y, p.loss});
  }
  const auto ms = ResponseSurface::fit(metric_pts, opts.kind, FieldName::avg_metric, opts.fit);
  const auto ls = ResponseSurface::fit(loss_pts, opts.kind, FieldName::val_loss, opts.fit);
  const Bounds& b = grid.bounds;
  std::vector<double> scan;
  for (int k = 0; k < opts.scan_lines; ++k)
    scan.push_back(k == opts.scan_lines - 1
                       ? b.xmax
                       : b.xmin + b.width() * k / (opts.scan_lines - 1));
  const auto ridge = metric_ridge(ScalarField::of(ms), scan, {b.ymin, b.ymax}, opts.ridge);
  const auto descent = loss_descent_line(ScalarField::of(ls),
                                         opts.start.value_or(grid.centroid()),
                                         opts.descent);
  ojson j;
  j["metric_ridge"] = ojson::parse(frontier_to_json(ridge));
  j["loss_descent"] = ojson::parse(frontier_to_json(descent));
  emit(out_path, j.dump(2) + "\n", out);
  return 0;
}

int cmd_recommend(const SurfaceArgs& a, const std::string& out_dir,
                  std::ostream& out, std::ostream& err) {
  const auto runs = load_runs(a.runs, err);
  const auto grid = build_grid(runs);
  const auto rec = recommend(grid, load_spec(a.spec), recommend_options(a));
  for (const auto& w : rec.warnings) err << "warning: " << w << "\n";

  const FrontierLine lines[] = {rec.metric_line, rec.loss_line};
  const auto loss_svg = plot(rec.loss_surface, grid, lines, rec.point, a,
                             field_title(FieldName::val_loss));
  const auto metric_svg = plot(rec.metric_surface, grid, lines, rec.point, a,
                               field_title(FieldName::avg_metric));

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(Stage::parse, "cannot create '" + out_dir + "': " + ec.message());
  const fs::path dir(out_dir);
  write_file(dir / "recommendation.json", rec.to_json());
  write_file(dir / "frontiers.json", rec.frontiers_json());
  write_file(dir / "loss_contours.svg", loss_svg);
  write_file(dir / "metric_contours.svg", metric_svg);

  char buf[160];
  std::snprintf(buf, sizeof buf, "ALMR %.2f%%  LR %.3g  (log10 LR %.3f)  %s\n",
                rec.point.almr_percent, rec.point.lr, rec.point.x,
                rec.point.in_hull ? "inside grid" : "outside grid");
  out << buf;
  return 0;
}

int cmd_plan(const std::string& inventory, double almr, std::int64_t tokens,
             std::uint64_t seed, int batch, std::int64_t schedule_len,
             const std::string& out_path, std::ostream& out, std::ostream& err) {
  const auto inv = parse_inventory(read_file(inventory));
  const auto p = plan(inv, almr, tokens);
  for (const auto& w : p.warnings) err << "warning: " << w << "\n";
  ojson j = ojson::parse(p.to_json());
  if (schedule_len > 0) {
    const Schedule s(p, batch, seed);
    j["schedule"] = ojson::parse(schedule_to_json(s, schedule_len));
    j["realized_almr_percent"] = 100.0 * realized_ratio(s, schedule_len);
  }
  emit(out_path, j.dump(2) + "\n", out);
  return 0;
}

int cmd_report(const std::string& runs_path, const std::string& spec_path,
               const std::string& format, const std::string& out_path,
               std::ostream& out, std::ostream& err) {
  const auto runs = load_runs(runs_path, err);
  const auto spec = load_spec(spec_path);
  std::vector<std::optional<double>> avg;
  for (const auto& r : runs) {
    try {
      avg.push_back(average_metric(r.metrics, spec));
    } catch (const Error&) {
      avg.push_back(std::nullopt);
    }
  }
  std::string text;
  if (format == "records") {
    ojson arr = ojson::array();
    for (std::size_t i = 0; i < runs.size(); ++i) {
      ojson j;
      j["run_id"] = runs[i].run_id;
      j["stage"] = std::string(to_string(runs[i].stage));
      j["almr_percent"] = runs[i].almr_percent;
      j["lr"] = runs[i].lr;
      j["log10_lr"] = std::log10(runs[i].lr);
      j["val_loss"] = runs[i].val_loss;
      j["avg_metric"] = avg[i] ? ojson(*avg[i]) : ojson(nullptr);
      arr.push_back(j);
    }
    text = arr.dump(2) + "\n";
  } else {
    std::ostringstream os;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-28s %-5s %9s %10s %9s %10s\n", "run_id",
                  "stage", "ALMR %", "LR", "val_loss", "avg_metric");
    os << buf;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const auto& r = runs[i];
      char m[32] = "-";
      if (avg[i]) std::snprintf(m, sizeof m, "%.4f", *avg[i]);
      std::snprintf(buf, sizeof buf, "%-28s %-5s %9.2f %10.3g %9.4f %10s\n",
                    r.run_id.c_str(), std::string(to_string(r.stage)).c_str(),
                    r.almr_percent, r.lr, r.val_loss, m);
      os << buf;
    }
    const auto best = std::min_element(runs.begin(), runs.end(),
                                       [](const auto& x, const auto& y) {
                                         return x.val_loss < y.val_loss;
                                       });
    os << "lowest val_loss: " << best->run_id << "\n";
    std::optional<std::size_t> top;
    for (std::size_t i = 0; i < runs.size(); ++i)
      if (avg[i] && (!top || *avg[i] > *avg[*top])) top = i;
    if (top) os << "highest avg_metric: " << runs[*top].run_id << "\n";
    text = os.str();
  }
  emit(out_path, text, out);
  return 0;
}

int cmd_degradation(const std::string& base, const std::string& tuned,
                    const std::string& format, const std::string& out_path,
                    std::ostream& out) {
  const auto report = degradation_report(parse_score_map(read_file(base)),
                                         parse_score_map(read_file(tuned)));
  emit(out_path, format == "records" ? report.to_json() + "\n" : report.to_table(), out);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Mixture-ratio and learning-rate selection for continual pre-training",
               "almr"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Print help for every subcommand");

  std::string runs, spec, out_path, format, field = "metric";
  std::string base, tuned;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  SurfaceArgs sa;
  double almr = 0.0;
  std::int64_t tokens = 0;
  int batch = 1;
  std::int64_t schedule_len = 64;

  auto* ingest = app.add_subcommand("ingest", "Validate and normalize run records");
  ingest->add_option("--runs", runs, "Run records")->required();
  ingest->add_option("--out", out_path, "Write the valid records here");

  auto* lab_grid = app.add_subcommand("lab-grid", "Run the toy CPT grid");
  lab_grid->add_option("--spec", spec, "Lab config (JSON); default: built-in 5x5 grid");
  lab_grid->add_option("--out", out_path, "Run records output ('-' for stdout)")->required();
  lab_grid->add_option("--seed", seed, "Override the config seed");
  lab_grid->add_option("--threads", threads, "Worker threads")->check(CLI::Range(1, 256));

  auto* fit = app.add_subcommand("fit", "Fit a response surface and its contours");
  add_surface_args(fit, sa);
  fit->add_option("--field", field, "Field to fit")
      ->check(CLI::IsMember({"metric", "loss"}));
  fit->add_option("--format", format, "Output format")
      ->check(CLI::IsMember({"records", "svg"}));
  fit->add_option("--out", out_path, "Output file (default stdout)");

  auto* frontier = app.add_subcommand("frontier", "Extract both frontier lines");
  add_surface_args(frontier, sa);
  frontier->add_option("--scan", sa.scan, "Ridge scan lines")->check(CLI::Range(2, 1000));
  frontier->add_option("--start", sa.start, "Descent start 'log10lr,almr'");
  frontier->add_option("--out", out_path, "Output file (default stdout)");

  auto* rec = app.add_subcommand("recommend", "Recommend an (ALMR, LR) operating point");
  add_surface_args(rec, sa);
  rec->add_option("--scan", sa.scan, "Ridge scan lines")->check(CLI::Range(2, 1000));
  rec->add_option("--start", sa.start, "Descent start 'log10lr,almr'");
  rec->add_option("--out", out_path, "Output directory")->required();

  auto* plan_cmd = app.add_subcommand("plan", "Plan token quotas for a target ALMR");
  plan_cmd->add_option("--spec", spec, "Corpus inventory (JSON)")->required();
  plan_cmd->add_option("--almr", almr, "Target ALMR in percent")->required();
  plan_cmd->add_option("--tokens", tokens, "Total training tokens")->required();
  plan_cmd->add_option("--seed", seed, "Document-order seed");
  plan_cmd->add_option("--batch", batch, "Schedule batch size")->check(CLI::PositiveNumber);
  plan_cmd->add_option("--schedule-len", schedule_len,
                       "Slots of the interleaving to export (0 = none)")
      ->check(CLI::NonNegativeNumber);
  plan_cmd->add_option("--out", out_path, "Output file (default stdout)");

  auto* report = app.add_subcommand("report", "Tabulate run records");
  report->add_option("--runs", runs, "Run records")->required();
  report->add_option("--spec", spec, "Aggregation spec (JSON)");
  report->add_option("--format", format, "Output format")
      ->check(CLI::IsMember({"table", "records"}));
  report->add_option("--out", out_path, "Output file (default stdout)");

  auto* degr = app.add_subcommand("degradation", "Compare base and tuned scores");
  degr->add_option("--base", base, "Base model score map (JSON)")->required();
  degr->add_option("--tuned", tuned, "Tuned model score map (JSON)")->required();
  degr->add_option("--format", format, "Output format")
      ->check(CLI::IsMember({"table", "records"}));
  degr->add_option("--out", out_path, "Output file (default stdout)");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error [usage]: " << e.what() << "\n";
    return exit_code(Stage::parse);
  }

  try {
    if (*ingest) return cmd_ingest(runs, out_path, out, err);
    if (*lab_grid) return cmd_lab_grid(spec, out_path, seed, threads, out, err);
    if (*fit)
      return cmd_fit(sa, field, format.empty() ? "records" : format, out_path, out,
                     err);
    if (*frontier) return cmd_frontier(sa, out_path, out, err);
    if (*rec) return cmd_recommend(sa, out_path, out, err);
    if (*plan_cmd)
      return cmd_plan(spec, almr, tokens, seed.value_or(0), batch, schedule_len,
                      out_path, out, err);
    if (*report)
      return cmd_report(runs, spec, format.empty() ? "table" : format, out_path,
                        out, err);
    if (*degr)
      return cmd_degradation(base, tuned, format.empty() ? "table" : format,
                             out_path, out);
  } catch (const Error& e) {
    err << "error [" << stage_name(e.stage()) << "]: " << e.what() << "\n";
    return exit_code(e.stage());
  } catch (const std::exception& e) {
    err << "error [io]: " << e.what() << "\n";
    return exit_code(Stage::parse);
  }
  return exit_code(Stage::parse);
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace almr::cli
