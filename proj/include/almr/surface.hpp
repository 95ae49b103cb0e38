#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "almr/geometry.hpp"

namespace almr {

enum class SurfaceKind { thin_plate_spline, plane };
enum class FieldName { val_loss, avg_metric };

std::string_view to_string(SurfaceKind k);
std::string_view to_string(FieldName f);

struct SamplePoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct FitOptions {
  // Added to the kernel diagonal; 0 gives an exact interpolant.
  double ridge = 0.0;
  // Reciprocal condition number below which the system counts as singular.
  double min_rcond = 1e-14;
};

struct Gradient {
  double dz_dx = 0.0;
  double dz_dy = 0.0;

  double norm() const;
};

struct Evaluation {
  double value = 0.0;
  bool extrapolated = false;
};

// c0 + cx * x + cy * y in raw (log10 lr, almr) coordinates.
struct AffineTail {
  double c0 = 0.0;
  double cx = 0.0;
  double cy = 0.0;
};

// Scalar field z(x, y) over x = log10(lr), y = almr percent.
//
// The thin-plate kernel phi(r) = r^2 log r is measured in domain-normalized
// units: r = |((x - cx) / sx, (y - cy) / sy)| with (sx, sy) the width and
// height of the fitting domain. That keeps the two axes (a few decades of LR
// against tens of ALMR percent) on an equal footing. For square domains this
// is an isotropic rescaling and leaves the interpolant unchanged.
class ResponseSurface {
 public:
  static ResponseSurface fit(std::span<const SamplePoint> points,
                             SurfaceKind kind,
                             FieldName field = FieldName::avg_metric,
                             const FitOptions& options = {});

  double value(double x, double y) const;
  Evaluation evaluate(double x, double y) const;
  Gradient gradient(double x, double y) const;

  SurfaceKind kind() const { return kind_; }
  FieldName field_name() const { return field_; }
  const std::vector<Point2>& centers() const { return centers_; }
  const std::vector<double>& rbf_weights() const { return weights_; }
  const AffineTail& linear_tail() const { return tail_; }
  const Bounds& domain() const { return domain_; }
  double ridge() const { return ridge_; }
  double scale_x() const { return sx_; }
  double scale_y() const { return sy_; }
  // Reciprocal condition estimate of the solved system.
  double rcond() const { return rcond_; }

  std::string to_json() const;
  static ResponseSurface from_json(std::string_view text);

 private:
  SurfaceKind kind_ = SurfaceKind::plane;
  FieldName field_ = FieldName::avg_metric;
  std::vector<Point2> centers_;
  std::vector<double> weights_;
  AffineTail tail_;
  Bounds domain_;
  double sx_ = 1.0;
  double sy_ = 1.0;
  double ridge_ = 0.0;
  double rcond_ = 1.0;
};

inline ResponseSurface fit_surface(std::span<const SamplePoint> points,
                                   SurfaceKind kind,
                                   FieldName field = FieldName::avg_metric,
                                   const FitOptions& options = {}) {
  return ResponseSurface::fit(points, kind, field, options);
}

inline Evaluation eval(const ResponseSurface& s, double x, double y) {
  return s.evaluate(x, y);
}

inline Gradient gradient(const ResponseSurface& s, double x, double y) {
  return s.gradient(x, y);
}

}  // namespace almr
