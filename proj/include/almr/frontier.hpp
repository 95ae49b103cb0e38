#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "almr/geometry.hpp"
#include "almr/ledger.hpp"
#include "almr/metrics.hpp"
#include "almr/surface.hpp"

namespace almr {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const { return v >= lo && v <= hi; }
};

// A scalar field with gradient and domain. Lets the frontier routines run on
// fitted surfaces and on closed-form fixtures alike.
struct ScalarField {
  std::function<double(double, double)> value;
  std::function<Gradient(double, double)> gradient;
  Bounds domain;

  static ScalarField of(const ResponseSurface& surface);
};

enum class FrontierKind { metric_ridge, loss_descent };

std::string_view to_string(FrontierKind k);

// almr = slope_a * log10(lr) + intercept_b
struct FrontierLine {
  double slope_a = 0.0;
  double intercept_b = 0.0;
  FrontierKind kind = FrontierKind::metric_ridge;
  Interval x_domain;
  double rms_residual = 0.0;
  std::vector<Point2> support_points;

  double at(double x) const { return slope_a * x + intercept_b; }
};

// Ordinary least squares y = a x + b over `points`; x_domain is their x range.
FrontierLine fit_line(std::span<const Point2> points, FrontierKind kind);

struct OperatingPoint {
  double almr_percent = 0.0;      // clamped to [0, 100]
  double almr_percent_raw = 0.0;  // before clamping
  double lr = 0.0;
  double x = 0.0;  // log10(lr)
  bool in_hull = false;
  bool clamped = false;
};

struct RidgeOptions {
  double tolerance = 1e-3;        // golden-section width in y
  double boundary_margin = 1e-2;  // peaks this close to a y bound are dropped
  int bracket_samples = 64;       // coarse samples used to bracket the peak
};

// Per scan abscissa, the y maximizing the field; interior peaks regressed
// into a line.
FrontierLine metric_ridge(const ScalarField& field,
                          std::span<const double> x_scan, Interval y_bounds,
                          const RidgeOptions& options = {});

struct DescentOptions {
  double step_frac = 0.002;  // step length as a fraction of the domain diagonal
  int max_steps = 2000;
  double min_gradient = 1e-9;
};

// Follows p <- p - h * grad / |grad| from `start` until the domain boundary,
// a stationary point or max_steps; the visited points are regressed into a
// line. Near a minimum the path bounces within h of it.
FrontierLine loss_descent_line(const ScalarField& field, Point2 start,
                               const DescentOptions& options = {});

OperatingPoint intersect(const FrontierLine& metric_line,
                         const FrontierLine& loss_line, const Bounds& hull);
OperatingPoint intersect(const FrontierLine& metric_line,
                         const FrontierLine& loss_line,
                         const ExperimentGrid& grid);

// ALMR suggested by the metric ridge at another learning rate, clamped to
// [0, 100]. Used to carry a recommendation over to a different model size.
double ridge_almr_at_lr(const FrontierLine& metric_line, double lr);

struct RecommendOptions {
  int scan_lines = 9;
  std::optional<Point2> start;  // default: grid centroid
  SurfaceKind kind = SurfaceKind::thin_plate_spline;
  FitOptions fit;
  RidgeOptions ridge;
  DescentOptions descent;
};

struct SurfaceSummary {
  FieldName field = FieldName::avg_metric;
  SurfaceKind kind = SurfaceKind::thin_plate_spline;
  std::size_t centers = 0;
  Bounds domain;
  double rcond = 0.0;
};

struct Recommendation {
  OperatingPoint point;
  FrontierLine metric_line;
  FrontierLine loss_line;
  ResponseSurface metric_surface;
  ResponseSurface loss_surface;
  RecommendOptions options;
  AggregationSpec aggregation;
  std::vector<double> x_scan;
  Point2 descent_start;
  Bounds grid_bounds;
  std::vector<std::string> warnings;

  std::string to_json() const;
  std::string frontiers_json() const;
};

// Fits the averaged-metric and loss surfaces over the grid, extracts both
// frontier lines and intersects them. Errors keep the stage that raised
// them and are prefixed with the step name.
Recommendation recommend(const ExperimentGrid& grid,
                         const AggregationSpec& spec,
                         const RecommendOptions& options = {});

std::string frontier_to_json(const FrontierLine& line);
std::string operating_point_to_json(const OperatingPoint& p);

}  // namespace almr
