#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "almr/geometry.hpp"
#include "almr/surface.hpp"

namespace almr {

// Regular nx-by-ny node lattice spanning `bounds`.
struct Lattice {
  int nx = 2;
  int ny = 2;
  Bounds bounds;

  double x_at(int i) const;
  double y_at(int j) const;
  void validate() const;
};

// Samples of a field on a lattice, stored row-major (j * nx + i).
struct SampledField {
  Lattice lattice;
  std::vector<double> values;

  double at(int i, int j) const { return values[std::size_t(j) * lattice.nx + i]; }
};

struct Polyline {
  std::vector<Point2> vertices;
  bool closed = false;  // closed polylines repeat their first vertex at the end
};

struct ContourSet {
  double level = 0.0;
  std::vector<Polyline> polylines;
};

SampledField sample(const ResponseSurface& surface, const Lattice& lattice);

// Marching squares at one level with linear interpolation along cell edges.
// A node counts as inside when its value is >= level. Saddle cells are
// resolved by `center_value(x, y)` at the cell center, or by the mean of the
// four corners when it is empty. Segments are chained into maximal paths;
// open paths start and end on the lattice boundary.
ContourSet marching_squares(
    const SampledField& field, double level,
    const std::function<double(double, double)>& center_value = {});

std::vector<ContourSet> contours(const ResponseSurface& surface,
                                 const Lattice& lattice,
                                 std::span<const double> levels);

// `count` levels evenly spaced strictly inside the sampled value range.
std::vector<double> even_levels(const SampledField& field, int count);

std::string contours_to_json(std::span<const ContourSet> sets);

}  // namespace almr
