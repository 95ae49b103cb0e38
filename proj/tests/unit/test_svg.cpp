#include <doctest.h>

#include <cmath>
#include <regex>

#include "almr/svg.hpp"
#include "unit/helpers.hpp"

using namespace almr;
using testing::stage_of;

namespace {

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + 1))
    ++n;
  return n;
}

ContourSet circle(double cx, double cy, double r, double level = 1.0) {
  ContourSet set{level, {}};
  Polyline p;
  p.closed = true;
  for (int k = 0; k <= 36; ++k) {
    const double t = 2 * M_PI * (k % 36) / 36;
    p.vertices.push_back({cx + r * std::cos(t), cy + r * std::sin(t)});
  }
  set.polylines.push_back(p);
  return set;
}

FrontierLine line(double a, double b) {
  FrontierLine l;
  l.slope_a = a;
  l.intercept_b = b;
  return l;
}

// Every number inside a d="..." attribute must lie in the plot frame.
void check_paths_inside(const std::string& svg, const PlotSpec& spec) {
  const std::regex path(R"(class="(contour|frontier)[^"]*"[^>]* d="([^"]*)\")");
  const std::regex num(R"(-?\d+\.\d+)");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), path);
       it != std::sregex_iterator(); ++it) {
    const std::string d = (*it)[2];
    std::vector<double> v;
    for (auto n = std::sregex_iterator(d.begin(), d.end(), num); n != std::sregex_iterator(); ++n)
      v.push_back(std::stod(n->str()));
    for (std::size_t k = 0; k + 1 < v.size(); k += 2) {
      CHECK(v[k] >= spec.margin_left - 0.01);
      CHECK(v[k] <= spec.width - spec.margin_right + 0.01);
      CHECK(v[k + 1] >= spec.margin_top - 0.01);
      CHECK(v[k + 1] <= spec.height - spec.margin_bottom + 0.01);
    }
  }
}

}  // namespace

TEST_SUITE("svg") {

TEST_CASE("one closed contour and one cross") {
  const ContourSet sets[] = {circle(0, 0, 1)};
  const Point2 crosses[] = {{0.5, 0.5}};
  PlotSpec spec;
  spec.view = Bounds{-2, 2, -2, 2};
  const auto svg = render_contour_plot(sets, crosses, {}, std::nullopt, spec);
  CHECK(svg.rfind("<?xml", 0) == 0);
  CHECK(count(svg, "class=\"contour closed\"") == 1);
  CHECK(count(svg, "class=\"contour open\"") == 0);
  CHECK(count(svg, "class=\"cross\"") == 1);
  CHECK(count(svg, "class=\"level-label\"") == 1);
  CHECK(count(svg, " Z\"") == 1);
  CHECK(count(svg, "operating-point") == 0);
  CHECK(count(svg, "<svg") == 1);
  CHECK(count(svg, "</svg>") == 1);
  check_paths_inside(svg, spec);
}

TEST_CASE("frontiers outside the window are dropped") {
  const ContourSet sets[] = {circle(0, 0, 1)};
  PlotSpec spec;
  spec.view = Bounds{-2, 2, -2, 2};
  const FrontierLine outside[] = {line(0, 50)};
  const auto a = render_contour_plot(sets, {}, outside, std::nullopt, spec);
  CHECK(count(a, "class=\"frontier ") == 0);
  const FrontierLine crossing[] = {line(10, 0)};
  const auto b = render_contour_plot(sets, {}, crossing, std::nullopt, spec);
  CHECK(count(b, "class=\"frontier metric_ridge\"") == 1);
  CHECK(count(b, "stroke-dasharray") == 1);
  check_paths_inside(b, spec);
}

TEST_CASE("contours are clipped to the window") {
  const ContourSet sets[] = {circle(1.5, 0, 1)};
  PlotSpec spec;
  spec.view = Bounds{-2, 2, -2, 2};
  const auto svg = render_contour_plot(sets, {}, {}, std::nullopt, spec);
  CHECK(count(svg, "class=\"contour closed\"") == 0);
  CHECK(count(svg, "class=\"contour open\"") == 1);
  check_paths_inside(svg, spec);
}

TEST_CASE("operating point marker") {
  const ContourSet sets[] = {circle(0, 0, 1)};
  PlotSpec spec;
  spec.view = Bounds{-2, 2, -2, 2};
  OperatingPoint p;
  p.x = 0.2;
  p.almr_percent = -0.3;
  CHECK(count(render_contour_plot(sets, {}, {}, p, spec), "class=\"operating-point\"") == 1);
  p.x = 9;
  CHECK(count(render_contour_plot(sets, {}, {}, p, spec), "class=\"operating-point\"") == 0);
}

TEST_CASE("deterministic bytes") {
  const ContourSet sets[] = {circle(0, 0, 1), circle(0.2, 0.1, 0.5, 2.0)};
  const Point2 crosses[] = {{0, 0}, {1, 1}, {-1, 0.5}};
  const FrontierLine lines[] = {line(1, 0.1), line(-0.3, 0.2)};
  OperatingPoint p;
  PlotSpec spec;
  spec.title = "a < b & c";
  const auto a = render_contour_plot(sets, crosses, lines, p, spec);
  const auto b = render_contour_plot(sets, crosses, lines, p, spec);
  CHECK(a == b);
  CHECK(a.find("a &lt; b &amp; c") != std::string::npos);
  CHECK(count(a, "class=\"level-label\"") == 2);
}

TEST_CASE("decade ticks on the LR axis") {
  const ContourSet sets[] = {circle(-9, 30, 0.5)};
  PlotSpec spec;
  spec.view = Bounds{-10, -8, 0, 60};
  const auto svg = render_contour_plot(sets, {}, {}, std::nullopt, spec);
  CHECK(svg.find(">1e-10<") != std::string::npos);
  CHECK(svg.find(">1e-9<") != std::string::npos);
  CHECK(svg.find(">1e-8<") != std::string::npos);
  CHECK(svg.find(">LR<") != std::string::npos);
  CHECK(svg.find(">ALMR<") != std::string::npos);
}

TEST_CASE("errors") {
  const ContourSet sets[] = {circle(0, 0, 1)};
  CHECK(stage_of([] { render_contour_plot({}, {}, {}, std::nullopt, {}); }) ==
        int(Stage::fit));
  PlotSpec flat;
  flat.view = Bounds{0, 0, 0, 1};
  CHECK(stage_of([&] { render_contour_plot(sets, {}, {}, std::nullopt, flat); }) ==
        int(Stage::fit));
  PlotSpec tiny;
  tiny.width = 50;
  CHECK(stage_of([&] { render_contour_plot(sets, {}, {}, std::nullopt, tiny); }) ==
        int(Stage::fit));
  const ContourSet empty[] = {ContourSet{1.0, {}}};
  CHECK(stage_of([&] { render_contour_plot(empty, {}, {}, std::nullopt, {}); }) ==
        int(Stage::fit));
}

}  // TEST_SUITE
