#pragma once

#include <algorithm>
#include <cmath>
#include <span>

namespace almr {

// A point in the (log10 LR, ALMR %) plane.
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

// Axis-aligned rectangle.
struct Bounds {
  double xmin = 0.0;
  double xmax = 0.0;
  double ymin = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double diagonal() const { return std::hypot(width(), height()); }
  Point2 center() const { return {0.5 * (xmin + xmax), 0.5 * (ymin + ymax)}; }

  bool contains(double x, double y, double tol = 0.0) const {
    return x >= xmin - tol && x <= xmax + tol && y >= ymin - tol &&
           y <= ymax + tol;
  }
  bool contains(Point2 p, double tol = 0.0) const {
    return contains(p.x, p.y, tol);
  }

  static Bounds envelope(std::span<const Point2> pts) {
    Bounds b{pts.front().x, pts.front().x, pts.front().y, pts.front().y};
    for (const auto& p : pts) {
      b.xmin = std::min(b.xmin, p.x);
      b.xmax = std::max(b.xmax, p.x);
      b.ymin = std::min(b.ymin, p.y);
      b.ymax = std::max(b.ymax, p.y);
    }
    return b;
  }

  friend bool operator==(const Bounds&, const Bounds&) = default;
};

}  // namespace almr
