#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "almr/cli.hpp"
#include "almr/contour.hpp"
#include "almr/error.hpp"
#include "almr/frontier.hpp"
#include "almr/ledger.hpp"
#include "almr/metrics.hpp"
#include "almr/mixture.hpp"
#include "almr/surface.hpp"
#include "almr/svg.hpp"
#include "almr/toylab.hpp"

namespace py = pybind11;
using namespace almr;

namespace {

// JSON text to a Python object through the json module.
py::object loads(const std::string& text) {
  return py::module_::import("json").attr("loads")(text);
}

SurfaceKind parse_kind(const std::string& k) {
  if (k == "thin_plate_spline" || k == "tps") return SurfaceKind::thin_plate_spline;
  if (k == "plane") return SurfaceKind::plane;
  throw Error(Stage::parse, "unknown surface kind '" + k + "'");
}

FieldName parse_field(const std::string& f) {
  if (f == "avg_metric") return FieldName::avg_metric;
  if (f == "val_loss") return FieldName::val_loss;
  throw Error(Stage::parse, "unknown field '" + f + "'");
}

FrontierKind parse_frontier_kind(const std::string& k) {
  if (k == "metric_ridge") return FrontierKind::metric_ridge;
  if (k == "loss_descent") return FrontierKind::loss_descent;
  throw Error(Stage::parse, "unknown frontier kind '" + k + "'");
}

AggregationSpec make_spec(const std::vector<std::string>& benchmarks,
                          const std::optional<std::map<std::string, double>>& weights) {
  AggregationSpec s;
  s.included_benchmarks = benchmarks;
  s.weights = weights;
  return s;
}

Bounds make_bounds(const std::tuple<double, double, double, double>& b) {
  return {std::get<0>(b), std::get<1>(b), std::get<2>(b), std::get<3>(b)};
}

py::tuple bounds_tuple(const Bounds& b) { return py::make_tuple(b.xmin, b.xmax, b.ymin, b.ymax); }

py::list contour_list(const std::vector<ContourSet>& sets) {
  py::list out;
  for (const auto& s : sets) {
    py::list lines;
    for (const auto& p : s.polylines) {
      py::list v;
      for (const auto& q : p.vertices) v.append(py::make_tuple(q.x, q.y));
      py::dict d;
      d["vertices"] = v;
      d["closed"] = p.closed;
      lines.append(d);
    }
    py::dict d;
    d["level"] = s.level;
    d["polylines"] = lines;
    out.append(d);
  }
  return out;
}

std::vector<ContourSet> surface_contours(const ResponseSurface& s, std::vector<double> levels,
                                         int levels_count, int nodes,
                                         const std::optional<Bounds>& bounds) {
  Lattice lat{nodes, nodes, bounds.value_or(s.domain())};
  lat.validate();
  const auto field = sample(s, lat);
  if (levels.empty()) levels = even_levels(field, levels_count);
  std::vector<ContourSet> out;
  for (double l : levels)
    out.push_back(marching_squares(field, l, [&](double x, double y) { return s.value(x, y); }));
  return out;
}

}  // namespace

PYBIND11_MODULE(_almr, m) {
  m.doc() = "ALMR and learning-rate selection for continual pre-training";

  static py::exception<Error> almr_error(m, "AlmrError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(almr_error.ptr())(std::string(e.what()));
      exc.attr("stage") = std::string(stage_name(e.stage()));
      PyErr_SetObject(almr_error.ptr(), exc.ptr());
    }
  });

  // ledger
  m.def(
      "ingest",
      [](const std::string& text) {
        const auto rep = ingest_runs(text);
        py::list records, issues;
        for (const auto& r : rep.records) records.append(loads(to_json_line(r)));
        for (const auto& i : rep.issues) issues.append(py::make_tuple(i.line, i.message));
        py::dict d;
        d["records"] = records;
        d["issues"] = issues;
        d["warnings"] = rep.warnings;
        return d;
      },
      py::arg("text"), "Parse line-delimited run records.");

  // metrics
  m.def(
      "average_metric",
      [](const ScoreMap& scores, const std::vector<std::string>& benchmarks,
         const std::optional<std::map<std::string, double>>& weights) {
        return average_metric(scores, make_spec(benchmarks, weights));
      },
      py::arg("scores"), py::arg("benchmarks"), py::arg("weights") = py::none());
  m.def(
      "degradation",
      [](const ScoreMap& base, const ScoreMap& tuned) {
        return loads(degradation_report(base, tuned).to_json());
      },
      py::arg("base"), py::arg("tuned"));
  m.def("chinese_fraction", &chinese_fraction, py::arg("text"));

  // surface
  py::class_<ResponseSurface>(m, "Surface")
      .def_static(
          "fit",
          [](const std::vector<std::tuple<double, double, double>>& pts, const std::string& kind,
             const std::string& field, double ridge) {
            std::vector<SamplePoint> sp;
            for (const auto& [x, y, z] : pts) sp.push_back({x, y, z});
            FitOptions o;
            o.ridge = ridge;
            return ResponseSurface::fit(sp, parse_kind(kind), parse_field(field), o);
          },
          py::arg("points"), py::arg("kind") = "thin_plate_spline",
          py::arg("field") = "avg_metric", py::arg("ridge") = 0.0)
      .def_static("from_json", [](const std::string& t) { return ResponseSurface::from_json(t); })
      .def("value", &ResponseSurface::value, py::arg("x"), py::arg("y"))
      .def(
          "evaluate",
          [](const ResponseSurface& s, double x, double y) {
            const auto e = s.evaluate(x, y);
            return py::make_tuple(e.value, e.extrapolated);
          },
          py::arg("x"), py::arg("y"))
      .def(
          "gradient",
          [](const ResponseSurface& s, double x, double y) {
            const auto g = s.gradient(x, y);
            return py::make_tuple(g.dz_dx, g.dz_dy);
          },
          py::arg("x"), py::arg("y"))
      .def_property_readonly("weights", &ResponseSurface::rbf_weights)
      .def_property_readonly("tail", [](const ResponseSurface& s) {
        return py::make_tuple(s.linear_tail().c0, s.linear_tail().cx, s.linear_tail().cy);
      })
      .def_property_readonly("domain", [](const ResponseSurface& s) { return bounds_tuple(s.domain()); })
      .def_property_readonly("kind", [](const ResponseSurface& s) { return std::string(to_string(s.kind())); })
      .def("to_json", &ResponseSurface::to_json)
      .def(
          "contours",
          [](const ResponseSurface& s, std::vector<double> levels, int count, int nodes,
             std::optional<std::tuple<double, double, double, double>> bounds) {
            std::optional<Bounds> b;
            if (bounds) b = make_bounds(*bounds);
            return contour_list(surface_contours(s, std::move(levels), count, nodes, b));
          },
          py::arg("levels") = std::vector<double>{}, py::arg("count") = 8,
          py::arg("nodes") = 81, py::arg("bounds") = py::none());

  // frontier
  py::class_<FrontierLine>(m, "FrontierLine")
      .def(py::init([](double a, double b, const std::string& kind) {
             FrontierLine l;
             l.slope_a = a;
             l.intercept_b = b;
             l.kind = parse_frontier_kind(kind);
             return l;
           }),
           py::arg("slope"), py::arg("intercept"), py::arg("kind") = "metric_ridge")
      .def_readonly("slope", &FrontierLine::slope_a)
      .def_readonly("intercept", &FrontierLine::intercept_b)
      .def_readonly("rms_residual", &FrontierLine::rms_residual)
      .def_property_readonly("kind", [](const FrontierLine& l) { return std::string(to_string(l.kind)); })
      .def_property_readonly("support_points", [](const FrontierLine& l) {
        py::list out;
        for (const auto& p : l.support_points) out.append(py::make_tuple(p.x, p.y));
        return out;
      })
      .def("at", &FrontierLine::at, py::arg("x"))
      .def("__repr__", [](const FrontierLine& l) {
        std::ostringstream os;
        os << "FrontierLine(" << l.slope_a << ", " << l.intercept_b << ", '"
           << to_string(l.kind) << "')";
        return os.str();
      });

  m.def(
      "metric_ridge",
      [](const ResponseSurface& s, const std::vector<double>& x_scan, double y_lo, double y_hi) {
        return metric_ridge(ScalarField::of(s), x_scan, {y_lo, y_hi});
      },
      py::arg("surface"), py::arg("x_scan"), py::arg("y_lo"), py::arg("y_hi"));
  m.def(
      "loss_descent_line",
      [](const ResponseSurface& s, std::tuple<double, double> start, double step_frac,
         int max_steps) {
        DescentOptions o;
        o.step_frac = step_frac;
        o.max_steps = max_steps;
        return loss_descent_line(ScalarField::of(s), {std::get<0>(start), std::get<1>(start)}, o);
      },
      py::arg("surface"), py::arg("start"), py::arg("step_frac") = DescentOptions{}.step_frac,
      py::arg("max_steps") = DescentOptions{}.max_steps);
  m.def(
      "intersect",
      [](const FrontierLine& a, const FrontierLine& b,
         std::tuple<double, double, double, double> hull) {
        return loads(operating_point_to_json(intersect(a, b, make_bounds(hull))));
      },
      py::arg("metric_line"), py::arg("loss_line"), py::arg("hull"));
  m.def("ridge_almr_at_lr", &ridge_almr_at_lr, py::arg("metric_line"), py::arg("lr"));
  m.def(
      "recommend",
      [](const std::string& runs_text, const std::vector<std::string>& benchmarks) {
        const auto rep = ingest_runs(runs_text);
        const auto& runs = rep.records_or_throw();
        const auto grid = build_grid(runs);
        return loads(recommend(grid, make_spec(benchmarks, std::nullopt)).to_json());
      },
      py::arg("runs"), py::arg("benchmarks") = std::vector<std::string>{"acc_a", "acc_b"},
      "Recommend an operating point from line-delimited run records.");

  // mixture
  m.def(
      "plan",
      [](const std::string& inventory_json, double almr, std::int64_t tokens) {
        return loads(plan(parse_inventory(inventory_json), almr, tokens).to_json());
      },
      py::arg("inventory"), py::arg("almr"), py::arg("tokens"));
  m.def(
      "schedule",
      [](const std::string& inventory_json, double almr, std::int64_t tokens,
         std::int64_t slots, int batch_size, std::uint64_t seed) {
        const auto p = plan(parse_inventory(inventory_json), almr, tokens);
        Schedule s(p, batch_size, seed);
        std::vector<std::pair<std::string, std::int64_t>> out;
        for (std::int64_t i = 0; i < slots; ++i) {
          const auto slot = s.next();
          out.emplace_back(s.dataset_name(slot.dataset), slot.document);
        }
        return out;
      },
      py::arg("inventory"), py::arg("almr"), py::arg("tokens"), py::arg("slots"),
      py::arg("batch_size") = 1, py::arg("seed") = 0);

  // toy lab
  m.def(
      "lab_grid",
      [](const std::string& config_json, std::optional<int> threads) {
        auto cfg = config_json.empty() ? lab::LabConfig{} : lab::LabConfig::from_json(config_json);
        if (threads) cfg.threads = *threads;
        lab::LabResult r;
        {
          py::gil_scoped_release release;
          r = lab::run_lab(cfg);
        }
        py::list failures;
        for (const auto& f : r.grid.failures) {
          py::dict d;
          d["lr"] = f.lr;
          d["almr_percent"] = f.almr_percent;
          d["message"] = f.message;
          failures.append(d);
        }
        py::dict d;
        d["records"] = serialize_runs(r.grid.records);
        d["failures"] = failures;
        return d;
      },
      py::arg("config") = "", py::arg("threads") = py::none(),
      "Run the toy grid; records come back as line-delimited JSON.");

  // rendering
  m.def(
      "render_contours",
      [](const ResponseSurface& s, int count, int nodes,
         const std::vector<std::tuple<double, double>>& crosses,
         const std::vector<FrontierLine>& lines, const std::string& title) {
        const auto sets = surface_contours(s, {}, count, nodes, std::nullopt);
        std::vector<Point2> pts;
        for (const auto& [x, y] : crosses) pts.push_back({x, y});
        PlotSpec ps;
        ps.view = s.domain();
        ps.title = title;
        return render_contour_plot(sets, pts, lines, std::nullopt, ps);
      },
      py::arg("surface"), py::arg("count") = 8, py::arg("nodes") = 81,
      py::arg("crosses") = std::vector<std::tuple<double, double>>{},
      py::arg("lines") = std::vector<FrontierLine>{}, py::arg("title") = "");

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the command-line tool in-process; returns (code, stdout, stderr).");
}
