#include "almr/svg.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

#include "almr/error.hpp"

namespace almr {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Liang-Barsky. Returns false when the segment misses the box.
bool clip_segment(const Bounds& b, Point2& p, Point2& q) {
  const double dx = q.x - p.x, dy = q.y - p.y;
  double t0 = 0.0, t1 = 1.0;
  const double pk[4] = {-dx, dx, -dy, dy};
  const double qk[4] = {p.x - b.xmin, b.xmax - p.x, p.y - b.ymin, b.ymax - p.y};
  for (int k = 0; k < 4; ++k) {
    if (pk[k] == 0.0) {
      if (qk[k] < 0.0) return false;
      continue;
    }
    const double t = qk[k] / pk[k];
    if (pk[k] < 0.0) {
      if (t > t1) return false;
      t0 = std::max(t0, t);
    } else {
      if (t < t0) return false;
      t1 = std::min(t1, t);
    }
  }
  const Point2 a{p.x + t0 * dx, p.y + t0 * dy};
  const Point2 c{p.x + t1 * dx, p.y + t1 * dy};
  p = a;
  q = c;
  return true;
}

// Splits a polyline into the pieces inside the box. A closed polyline that
// never leaves the box stays closed.
std::vector<Polyline> clip_polyline(const Polyline& line, const Bounds& b) {
  std::vector<Polyline> out;
  const auto& v = line.vertices;
  if (v.size() < 2) return out;
  bool all_inside = true;
  for (const auto& p : v) all_inside = all_inside && b.contains(p);
  if (all_inside) return {line};

  // vertices on the frame within rounding must not split a piece
  const double eps = 1e-9 * b.diagonal();
  auto same = [eps](Point2 a, Point2 c) {
    return std::abs(a.x - c.x) <= eps && std::abs(a.y - c.y) <= eps;
  };
  Polyline cur;
  for (std::size_t k = 0; k + 1 < v.size(); ++k) {
    Point2 p = v[k], q = v[k + 1];
    if (!clip_segment(b, p, q)) {
      if (cur.vertices.size() >= 2) out.push_back(cur);
      cur = {};
      continue;
    }
    if (cur.vertices.empty() || !same(cur.vertices.back(), p)) {
      if (cur.vertices.size() >= 2) out.push_back(cur);
      cur = {};
      cur.vertices.push_back(p);
    }
    cur.vertices.push_back(q);
    if (!same(q, v[k + 1])) {
      out.push_back(cur);
      cur = {};
    }
  }
  if (cur.vertices.size() >= 2) out.push_back(cur);
  return out;
}

double length(const Polyline& line) {
  double s = 0.0;
  for (std::size_t k = 1; k < line.vertices.size(); ++k)
    s += std::hypot(line.vertices[k].x - line.vertices[k - 1].x,
                    line.vertices[k].y - line.vertices[k - 1].y);
  return s;
}

Point2 midpoint(const Polyline& line) {
  const double half = 0.5 * length(line);
  double s = 0.0;
  const auto& v = line.vertices;
  for (std::size_t k = 1; k < v.size(); ++k) {
    const double d = std::hypot(v[k].x - v[k - 1].x, v[k].y - v[k - 1].y);
    if (s + d >= half && d > 0.0) {
      const double t = (half - s) / d;
      return {v[k - 1].x + t * (v[k].x - v[k - 1].x),
              v[k - 1].y + t * (v[k].y - v[k - 1].y)};
    }
    s += d;
  }
  return v.front();
}

double nice_step(double span) {
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double r = raw / mag;
  return mag * (r < 1.5 ? 1.0 : r < 3.5 ? 2.0 : r < 7.5 ? 5.0 : 10.0);
}

class Canvas {
 public:
  Canvas(const Bounds& view, const PlotSpec& spec) : v_(view), s_(spec) {
    inner_w_ = spec.width - spec.margin_left - spec.margin_right;
    inner_h_ = spec.height - spec.margin_top - spec.margin_bottom;
  }

  double inner_w() const { return inner_w_; }
  double inner_h() const { return inner_h_; }
  double left() const { return s_.margin_left; }
  double top() const { return s_.margin_top; }

  double px(double x) const {
    return s_.margin_left + (x - v_.xmin) / v_.width() * inner_w_;
  }
  double py(double y) const {
    return s_.margin_top + (v_.ymax - y) / v_.height() * inner_h_;
  }
  std::string at(Point2 p) const { return num(px(p.x)) + " " + num(py(p.y)); }

 private:
  Bounds v_;
  PlotSpec s_;
  double inner_w_ = 0.0;
  double inner_h_ = 0.0;
};

Bounds data_window(std::span<const ContourSet> contours,
                   std::span<const Point2> crosses) {
  std::vector<Point2> pts(crosses.begin(), crosses.end());
  for (const auto& set : contours)
    for (const auto& line : set.polylines)
      pts.insert(pts.end(), line.vertices.begin(), line.vertices.end());
  if (pts.empty())
    throw Error(Stage::fit, "plot has no geometry to derive a viewport from");
  return Bounds::envelope(pts);
}

}  // namespace

std::string render_contour_plot(std::span<const ContourSet> contours,
                                std::span<const Point2> crosses,
                                std::span<const FrontierLine> lines,
                                const std::optional<OperatingPoint>& point,
                                const PlotSpec& spec) {
  if (contours.empty()) throw Error(Stage::fit, "plot needs at least one contour set");
  const Bounds view = spec.view ? *spec.view : data_window(contours, crosses);
  const Canvas cv(view, spec);
  if (!(view.width() > 0.0) || !(view.height() > 0.0) ||
      !std::isfinite(view.width()) || !std::isfinite(view.height()))
    throw Error(Stage::fit, "degenerate plot viewport");
  if (!(cv.inner_w() > 0.0) || !(cv.inner_h() > 0.0))
    throw Error(Stage::fit, "canvas too small for its margins");

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(spec.width)
     << "\" height=\"" << num(spec.height) << "\" viewBox=\"0 0 "
     << num(spec.width) << " " << num(spec.height) << "\">\n";
  os << "<rect class=\"background\" x=\"0\" y=\"0\" width=\"" << num(spec.width)
     << "\" height=\"" << num(spec.height) << "\" fill=\"white\"/>\n";
  if (!spec.title.empty())
    os << "<text class=\"title\" x=\"" << num(spec.width / 2) << "\" y=\""
       << num(spec.margin_top / 2 + 5) << "\" text-anchor=\"middle\" font-size=\"14\">"
       << escape(spec.title) << "</text>\n";

  // Axes and ticks.
  os << "<g class=\"axes\" stroke=\"black\" fill=\"none\" font-size=\"11\">\n";
  os << "<rect class=\"frame\" x=\"" << num(cv.left()) << "\" y=\"" << num(cv.top())
     << "\" width=\"" << num(cv.inner_w()) << "\" height=\"" << num(cv.inner_h())
     << "\"/>\n";
  const double base_y = cv.top() + cv.inner_h();
  {
    const long k0 = long(std::ceil(view.xmin - 1e-9));
    const long k1 = long(std::floor(view.xmax + 1e-9));
    std::vector<double> ticks;
    if (k1 >= k0) {
      const long stride = std::max(1L, (k1 - k0) / 10 + 1);
      for (long k = k0; k <= k1; k += stride) ticks.push_back(double(k));
    } else {
      ticks = {view.xmin, view.xmax};
    }
    for (double t : ticks) {
      const double x = cv.px(t);
      os << "<path class=\"tick\" d=\"M" << num(x) << " " << num(base_y) << " L"
         << num(x) << " " << num(base_y + 5) << "\"/>\n";
      char buf[32];
      if (t == std::round(t))
        std::snprintf(buf, sizeof buf, "1e%ld", long(t));
      else
        std::snprintf(buf, sizeof buf, "%.2g", std::pow(10.0, t));
      os << "<text class=\"tick-label\" x=\"" << num(x) << "\" y=\""
         << num(base_y + 18) << "\" text-anchor=\"middle\" stroke=\"none\" "
         << "fill=\"black\">" << buf << "</text>\n";
    }
    const double step = nice_step(view.height());
    for (double t = std::ceil(view.ymin / step - 1e-9) * step;
         t <= view.ymax + 1e-9 * step; t += step) {
      const double y = cv.py(t);
      os << "<path class=\"tick\" d=\"M" << num(cv.left() - 5) << " " << num(y)
         << " L" << num(cv.left()) << " " << num(y) << "\"/>\n";
      os << "<text class=\"tick-label\" x=\"" << num(cv.left() - 8) << "\" y=\""
         << num(y + 4) << "\" text-anchor=\"end\" stroke=\"none\" fill=\"black\">"
         << label(std::abs(t) < 1e-9 * step ? 0.0 : t) << "</text>\n";
    }
  }
  os << "<text class=\"axis-label\" x=\"" << num(cv.left() + cv.inner_w() / 2)
     << "\" y=\"" << num(spec.height - 10) << "\" text-anchor=\"middle\" "
     << "stroke=\"none\" fill=\"black\">" << escape(spec.x_label) << "</text>\n";
  const double ly = cv.top() + cv.inner_h() / 2;
  os << "<text class=\"axis-label\" x=\"16\" y=\"" << num(ly)
     << "\" text-anchor=\"middle\" stroke=\"none\" fill=\"black\" "
     << "transform=\"rotate(-90 16 " << num(ly) << ")\">" << escape(spec.y_label)
     << "</text>\n";
  os << "</g>\n";

  // Contours, one label per level at the midpoint of its longest piece.
  os << "<g class=\"contours\" fill=\"none\" stroke=\"#3b6ea5\" stroke-width=\"1.2\">\n";
  for (const auto& set : contours) {
    const Polyline* longest = nullptr;
    std::vector<Polyline> pieces;
    for (const auto& line : set.polylines)
      for (auto& piece : clip_polyline(line, view)) pieces.push_back(std::move(piece));
    for (const auto& piece : pieces) {
      os << "<path class=\"contour " << (piece.closed ? "closed" : "open")
         << "\" data-level=\"" << label(set.level) << "\" d=\"";
      const auto& v = piece.vertices;
      const std::size_t n = piece.closed ? v.size() - 1 : v.size();
      for (std::size_t k = 0; k < n; ++k) os << (k ? " L" : "M") << cv.at(v[k]);
      if (piece.closed) os << " Z";
      os << "\"/>\n";
      if (!longest || length(piece) > length(*longest)) longest = &piece;
    }
    if (longest) {
      const Point2 m = midpoint(*longest);
      os << "<text class=\"level-label\" x=\"" << num(cv.px(m.x)) << "\" y=\""
         << num(cv.py(m.y)) << "\" font-size=\"10\" stroke=\"none\" "
         << "fill=\"#3b6ea5\" text-anchor=\"middle\">" << label(set.level)
         << "</text>\n";
    }
  }
  os << "</g>\n";

  os << "<g class=\"crosses\" stroke=\"black\" stroke-width=\"1.5\">\n";
  for (const auto& c : crosses) {
    if (!view.contains(c)) continue;
    const double x = cv.px(c.x), y = cv.py(c.y), r = 4.0;
    os << "<path class=\"cross\" d=\"M" << num(x - r) << " " << num(y - r) << " L"
       << num(x + r) << " " << num(y + r) << " M" << num(x - r) << " "
       << num(y + r) << " L" << num(x + r) << " " << num(y - r) << "\"/>\n";
  }
  os << "</g>\n";

  os << "<g class=\"frontiers\" stroke=\"#1f77b4\" stroke-width=\"1.5\" "
     << "stroke-dasharray=\"6 4\" fill=\"none\">\n";
  for (const auto& line : lines) {
    Point2 p{view.xmin, line.at(view.xmin)};
    Point2 q{view.xmax, line.at(view.xmax)};
    if (!std::isfinite(p.y) || !std::isfinite(q.y) || !clip_segment(view, p, q))
      continue;
    os << "<path class=\"frontier " << to_string(line.kind) << "\" d=\"M"
       << cv.at(p) << " L" << cv.at(q) << "\"/>\n";
  }
  os << "</g>\n";

  if (point && view.contains(point->x, point->almr_percent)) {
    os << "<circle class=\"operating-point\" cx=\"" << num(cv.px(point->x))
       << "\" cy=\"" << num(cv.py(point->almr_percent))
       << "\" r=\"5\" fill=\"#d62728\" stroke=\"black\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace almr
