#pragma once

#include <optional>
#include <span>
#include <string>

#include "almr/contour.hpp"
#include "almr/frontier.hpp"
#include "almr/geometry.hpp"

namespace almr {

// Canvas and axes of a contour plot. x is log10 LR, y is ALMR percent.
struct PlotSpec {
  double width = 640.0;
  double height = 480.0;
  double margin_left = 64.0;
  double margin_right = 24.0;
  double margin_top = 36.0;
  double margin_bottom = 52.0;
  // Data window; defaults to the envelope of the contours and crosses.
  std::optional<Bounds> view;
  std::string title;
  std::string x_label = "LR";
  std::string y_label = "ALMR";
};

// Contour polylines with one label per level, cross glyphs at the experiment
// points, dashed frontier lines and the operating point. Everything is
// clipped to the data window; frontiers that miss it are left out. Numbers
// are printed at fixed precision, so equal inputs give equal bytes.
std::string render_contour_plot(std::span<const ContourSet> contours,
                                std::span<const Point2> crosses,
                                std::span<const FrontierLine> lines,
                                const std::optional<OperatingPoint>& point,
                                const PlotSpec& spec = {});

}  // namespace almr
