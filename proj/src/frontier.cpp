#include "almr/frontier.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include <nlohmann/json.hpp>

#include "almr/error.hpp"

namespace almr {

using ojson = nlohmann::ordered_json;

std::string_view to_string(FrontierKind k) {
  return k == FrontierKind::metric_ridge ? "metric_ridge" : "loss_descent";
}

ScalarField ScalarField::of(const ResponseSurface& surface) {
  // The surface is copied into the closures so the field owns its data.
  auto shared = std::make_shared<const ResponseSurface>(surface);
  return {[shared](double x, double y) { return shared->value(x, y); },
          [shared](double x, double y) { return shared->gradient(x, y); },
          surface.domain()};
}

FrontierLine fit_line(std::span<const Point2> points, FrontierKind kind) {
  if (points.size() < 2)
    throw Error(Stage::frontier, "line fit needs at least 2 points");
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += p.x;
    my += p.y;
  }
  const double n = double(points.size());
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  double xlo = points.front().x, xhi = points.front().x;
  for (const auto& p : points) {
    sxx += (p.x - mx) * (p.x - mx);
    sxy += (p.x - mx) * (p.y - my);
    xlo = std::min(xlo, p.x);
    xhi = std::max(xhi, p.x);
  }
  if (!(sxx > 0.0))
    throw Error(Stage::frontier,
                "all support points share one x; a vertical line is not "
                "representable");
  FrontierLine line;
  line.kind = kind;
  line.slope_a = sxy / sxx;
  line.intercept_b = my - line.slope_a * mx;
  line.x_domain = {xlo, xhi};
  line.support_points.assign(points.begin(), points.end());
  double ss = 0.0;
  for (const auto& p : points) {
    const double r = p.y - line.at(p.x);
    ss += r * r;
  }
  line.rms_residual = std::sqrt(ss / n);
  return line;
}

namespace {

// Golden-section maximization of f on [a, b] down to width `tol`.
template <class F>
double golden_max(F&& f, double a, double b, double tol) {
  const double invphi = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

FrontierLine metric_ridge(const ScalarField& field,
                          std::span<const double> x_scan, Interval y_bounds,
                          const RidgeOptions& options) {
  if (x_scan.size() < 2)
    throw Error(Stage::frontier, "ridge scan needs at least 2 abscissae");
  if (!(y_bounds.hi > y_bounds.lo))
    throw Error(Stage::frontier, "ridge scan y bounds are degenerate");
  const int samples = std::max(options.bracket_samples, 3);

  std::vector<double> xs(x_scan.begin(), x_scan.end());
  std::sort(xs.begin(), xs.end());

  std::vector<Point2> peaks;
  const double span = y_bounds.hi - y_bounds.lo;
  for (double x : xs) {
    auto f = [&](double y) { return field.value(x, y); };
    // Bracket the global maximum on a coarse grid, then refine.
    std::vector<double> ys(samples), zs(samples);
    std::size_t best = 0;
    for (int k = 0; k < samples; ++k) {
      ys[k] = k == samples - 1 ? y_bounds.hi
                               : y_bounds.lo + span * double(k) / (samples - 1);
      zs[k] = f(ys[k]);
      if (zs[k] > zs[best]) best = k;
    }
    const auto [zlo, zhi] = std::minmax_element(zs.begin(), zs.end());
    if (!(*zhi - *zlo > 1e-12 * (1.0 + std::abs(*zhi)))) continue;  // flat
    const double a = ys[best == 0 ? 0 : best - 1];
    const double b = ys[std::min<std::size_t>(best + 1, samples - 1)];
    const double y = golden_max(f, a, b, options.tolerance);
    if (y - y_bounds.lo < options.boundary_margin ||
        y_bounds.hi - y < options.boundary_margin)
      continue;
    peaks.push_back({x, y});
  }
  if (peaks.size() < 2)
    throw Error(Stage::frontier,
                "frontier undefined: " + std::to_string(peaks.size()) +
                    " interior peak(s) found, need 2");
  return fit_line(peaks, FrontierKind::metric_ridge);
}

FrontierLine loss_descent_line(const ScalarField& field, Point2 start,
                               const DescentOptions& options) {
  const Bounds& dom = field.domain;
  if (!dom.contains(start)) {
    std::ostringstream os;
    os << "descent start (" << start.x << ", " << start.y
       << ") lies outside the surface domain";
    throw Error(Stage::frontier, os.str());
  }
  if (!(options.step_frac > 0.0 && options.step_frac <= 0.05))
    throw Error(Stage::frontier, "step_frac must lie in (0, 0.05]");
  const double h = options.step_frac * dom.diagonal();

  std::vector<Point2> path{start};
  Point2 p = start;
  for (int step = 0; step < options.max_steps; ++step) {
    const Gradient g = field.gradient(p.x, p.y);
    const double norm = g.norm();
    if (!(norm >= options.min_gradient)) break;
    const double dx = -g.dz_dx / norm;
    const double dy = -g.dz_dy / norm;
    // Largest t <= h keeping p + t d inside the domain.
    double t = h;
    if (dx > 0) t = std::min(t, (dom.xmax - p.x) / dx);
    if (dx < 0) t = std::min(t, (dom.xmin - p.x) / dx);
    if (dy > 0) t = std::min(t, (dom.ymax - p.y) / dy);
    if (dy < 0) t = std::min(t, (dom.ymin - p.y) / dy);
    if (!(t > 1e-12 * h)) break;
    const Point2 q{p.x + t * dx, p.y + t * dy};
    path.push_back(q);
    p = q;
    if (t < h) break;  // reached the boundary
  }
  if (path.size() < 2)
    throw Error(Stage::frontier, "descent streamline has fewer than 2 points");
  const auto [xlo, xhi] = std::minmax_element(
      path.begin(), path.end(),
      [](const Point2& a, const Point2& b) { return a.x < b.x; });
  if (xhi->x - xlo->x < 1e-9 * dom.width())
    throw Error(Stage::frontier, "descent streamline is vertical in log10(lr)");
  return fit_line(path, FrontierKind::loss_descent);
}

OperatingPoint intersect(const FrontierLine& l1, const FrontierLine& l2,
                         const Bounds& hull) {
  const double a1 = l1.slope_a, a2 = l2.slope_a;
  const double scale = std::max({std::abs(a1), std::abs(a2), 1.0});
  if (!std::isfinite(a1) || !std::isfinite(a2) ||
      std::abs(a1 - a2) < 1e-9 * scale)
    throw Error(Stage::intersect, "frontier lines are (near-)parallel");
  OperatingPoint p;
  p.x = (l2.intercept_b - l1.intercept_b) / (a1 - a2);
  // Averaging both lines keeps the result independent of argument order.
  p.almr_percent_raw = 0.5 * (l1.at(p.x) + l2.at(p.x));
  p.almr_percent = std::clamp(p.almr_percent_raw, 0.0, 100.0);
  p.clamped = p.almr_percent != p.almr_percent_raw;
  p.lr = std::pow(10.0, p.x);
  p.in_hull = hull.contains(p.x, p.almr_percent_raw);
  return p;
}

OperatingPoint intersect(const FrontierLine& metric_line,
                         const FrontierLine& loss_line,
                         const ExperimentGrid& grid) {
  return intersect(metric_line, loss_line, grid.bounds);
}

double ridge_almr_at_lr(const FrontierLine& metric_line, double lr) {
  if (!(lr > 0.0)) throw Error(Stage::frontier, "lr must be > 0");
  return std::clamp(metric_line.at(std::log10(lr)), 0.0, 100.0);
}

namespace {

template <class F>
auto tagged(std::string_view step, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.stage(), std::string(step) + ": " + e.what());
  }
}

ojson line_json(const FrontierLine& l) {
  ojson j;
  j["kind"] = to_string(l.kind);
  j["slope_a"] = l.slope_a;
  j["intercept_b"] = l.intercept_b;
  j["x_domain"] = {l.x_domain.lo, l.x_domain.hi};
  j["rms_residual"] = l.rms_residual;
  auto pts = ojson::array();
  for (const auto& p : l.support_points) pts.push_back({p.x, p.y});
  j["support_points"] = pts;
  return j;
}

ojson point_json(const OperatingPoint& p) {
  ojson j;
  j["almr_percent"] = p.almr_percent;
  j["almr_percent_raw"] = p.almr_percent_raw;
  j["lr"] = p.lr;
  j["log10_lr"] = p.x;
  j["in_hull"] = p.in_hull;
  j["clamped"] = p.clamped;
  return j;
}

ojson surface_json(const ResponseSurface& s) {
  ojson j;
  j["field_name"] = to_string(s.field_name());
  j["kind"] = to_string(s.kind());
  j["centers"] = s.centers().size();
  const auto& d = s.domain();
  j["domain"] = {d.xmin, d.xmax, d.ymin, d.ymax};
  j["rcond"] = s.rcond();
  return j;
}

}  // namespace

std::string frontier_to_json(const FrontierLine& line) {
  return line_json(line).dump();
}

std::string operating_point_to_json(const OperatingPoint& p) {
  return point_json(p).dump();
}

std::string Recommendation::frontiers_json() const {
  ojson j;
  j["schema"] = 1;
  j["metric_line"] = line_json(metric_line);
  j["loss_line"] = line_json(loss_line);
  return j.dump(2);
}

std::string Recommendation::to_json() const {
  ojson j;
  j["schema"] = 1;
  j["operating_point"] = point_json(point);
  j["metric_line"] = line_json(metric_line);
  j["loss_line"] = line_json(loss_line);
  j["surfaces"] = {surface_json(metric_surface), surface_json(loss_surface)};
  ojson o;
  o["surface_kind"] = to_string(options.kind);
  o["ridge"] = options.fit.ridge;
  o["scan_lines"] = options.scan_lines;
  o["x_scan"] = x_scan;
  o["ridge_tolerance"] = options.ridge.tolerance;
  o["boundary_margin"] = options.ridge.boundary_margin;
  o["bracket_samples"] = options.ridge.bracket_samples;
  o["descent_start"] = {descent_start.x, descent_start.y};
  o["descent_start_source"] = options.start ? "user" : "grid_centroid";
  o["step_frac"] = options.descent.step_frac;
  o["max_steps"] = options.descent.max_steps;
  o["min_gradient"] = options.descent.min_gradient;
  j["options"] = o;
  j["aggregation"] = ojson::parse(aggregation.to_json());
  j["grid_bounds"] = {grid_bounds.xmin, grid_bounds.xmax, grid_bounds.ymin,
                      grid_bounds.ymax};
  j["warnings"] = warnings;
  return j.dump(2);
}

Recommendation recommend(const ExperimentGrid& grid,
                         const AggregationSpec& spec,
                         const RecommendOptions& options) {
  if (grid.points.size() < 3)
    throw Error(Stage::fit, "grid needs at least 3 points");
  if (options.scan_lines < 2)
    throw Error(Stage::frontier, "scan_lines must be >= 2");

  std::vector<SamplePoint> metric_pts, loss_pts;
  tagged("aggregate", [&] {
    for (const auto& p : grid.points) {
      metric_pts.push_back({p.x, p.y, average_metric(p.metrics, spec)});
      loss_pts.push_back({p.x, p.y, p.loss});
    }
  });

  auto metric_surface = tagged("metric surface", [&] {
    return ResponseSurface::fit(metric_pts, options.kind,
                                FieldName::avg_metric, options.fit);
  });
  auto loss_surface = tagged("loss surface", [&] {
    return ResponseSurface::fit(loss_pts, options.kind, FieldName::val_loss,
                                options.fit);
  });

  const Bounds& b = grid.bounds;
  std::vector<double> x_scan;
  for (int k = 0; k < options.scan_lines; ++k)
    x_scan.push_back(k == options.scan_lines - 1
                         ? b.xmax
                         : b.xmin + b.width() * k / (options.scan_lines - 1));

  auto metric_line = tagged("metric ridge", [&] {
    return metric_ridge(ScalarField::of(metric_surface), x_scan,
                        {b.ymin, b.ymax}, options.ridge);
  });
  const Point2 start = options.start.value_or(grid.centroid());
  auto loss_line = tagged("loss descent", [&] {
    return loss_descent_line(ScalarField::of(loss_surface), start,
                             options.descent);
  });
  auto point = tagged("intersect", [&] {
    return intersect(metric_line, loss_line, grid.bounds);
  });

  Recommendation r{point,          metric_line, loss_line,
                   metric_surface, loss_surface, options,
                   spec,           x_scan,       start,
                   grid.bounds,    {}};
  if (point.clamped) {
    std::ostringstream os;
    os << "intersection ALMR " << point.almr_percent_raw
       << "% clamped to [0, 100]";
    r.warnings.push_back(os.str());
  }
  if (!point.in_hull)
    r.warnings.push_back("operating point lies outside the experiment grid");
  return r;
}

}  // namespace almr
