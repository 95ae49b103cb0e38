#include "almr/contour.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <utility>

#include <nlohmann/json.hpp>

#include "almr/error.hpp"

namespace almr {

double Lattice::x_at(int i) const {
  if (i == nx - 1) return bounds.xmax;
  return bounds.xmin + bounds.width() * double(i) / double(nx - 1);
}

double Lattice::y_at(int j) const {
  if (j == ny - 1) return bounds.ymax;
  return bounds.ymin + bounds.height() * double(j) / double(ny - 1);
}

void Lattice::validate() const {
  if (nx < 2 || ny < 2)
    throw Error(Stage::fit, "lattice needs at least 2 nodes per axis");
  if (!(bounds.width() > 0.0) || !(bounds.height() > 0.0))
    throw Error(Stage::fit, "lattice bounds have zero area");
}

SampledField sample(const ResponseSurface& surface, const Lattice& lattice) {
  lattice.validate();
  SampledField f{lattice, {}};
  f.values.resize(std::size_t(lattice.nx) * lattice.ny);
  for (int j = 0; j < lattice.ny; ++j) {
    const double y = lattice.y_at(j);
    for (int i = 0; i < lattice.nx; ++i)
      f.values[std::size_t(j) * lattice.nx + i] =
          surface.value(lattice.x_at(i), y);
  }
  return f;
}

namespace {

using EdgeKey = std::int64_t;

struct Tracer {
  const SampledField& field;
  double level;
  std::map<EdgeKey, Point2> crossings;
  std::vector<std::pair<EdgeKey, EdgeKey>> segments;

  // Horizontal edge (i, j)-(i+1, j) and vertical edge (i, j)-(i, j+1).
  EdgeKey h_edge(int i, int j) const {
    return 2 * (EdgeKey(j) * field.lattice.nx + i);
  }
  EdgeKey v_edge(int i, int j) const {
    return 2 * (EdgeKey(j) * field.lattice.nx + i) + 1;
  }

  Point2 interpolate(double x0, double y0, double v0, double x1, double y1,
                     double v1) const {
    const double t = (level - v0) / (v1 - v0);
    return {x0 + t * (x1 - x0), y0 + t * (y1 - y0)};
  }

  EdgeKey cross_h(int i, int j) {
    const EdgeKey k = h_edge(i, j);
    if (!crossings.count(k)) {
      const auto& L = field.lattice;
      crossings[k] = interpolate(L.x_at(i), L.y_at(j), field.at(i, j),
                                 L.x_at(i + 1), L.y_at(j), field.at(i + 1, j));
    }
    return k;
  }

  EdgeKey cross_v(int i, int j) {
    const EdgeKey k = v_edge(i, j);
    if (!crossings.count(k)) {
      const auto& L = field.lattice;
      crossings[k] = interpolate(L.x_at(i), L.y_at(j), field.at(i, j),
                                 L.x_at(i), L.y_at(j + 1), field.at(i, j + 1));
    }
    return k;
  }
};

std::vector<Polyline> chain(const Tracer& tr) {
  std::map<EdgeKey, std::vector<std::size_t>> adj;
  for (std::size_t s = 0; s < tr.segments.size(); ++s) {
    adj[tr.segments[s].first].push_back(s);
    adj[tr.segments[s].second].push_back(s);
  }
  std::vector<bool> used(tr.segments.size(), false);
  std::vector<Polyline> out;

  auto walk = [&](EdgeKey start) {
    Polyline poly;
    poly.vertices.push_back(tr.crossings.at(start));
    EdgeKey cur = start;
    for (;;) {
      std::size_t next_seg = tr.segments.size();
      for (std::size_t s : adj.at(cur))
        if (!used[s]) {
          next_seg = s;
          break;
        }
      if (next_seg == tr.segments.size()) break;
      used[next_seg] = true;
      const auto& seg = tr.segments[next_seg];
      cur = seg.first == cur ? seg.second : seg.first;
      poly.vertices.push_back(tr.crossings.at(cur));
      if (cur == start) {
        poly.closed = true;
        break;
      }
    }
    out.push_back(std::move(poly));
  };

  auto has_unused = [&](const std::vector<std::size_t>& segs) {
    return std::any_of(segs.begin(), segs.end(),
                       [&](std::size_t s) { return !used[s]; });
  };
  for (const auto& [key, segs] : adj)
    if (segs.size() == 1 && has_unused(segs)) walk(key);
  for (const auto& [key, segs] : adj)
    if (has_unused(segs)) walk(key);
  return out;
}

}  // namespace

ContourSet marching_squares(
    const SampledField& field, double level,
    const std::function<double(double, double)>& center_value) {
  const auto& L = field.lattice;
  L.validate();
  Tracer tr{field, level, {}, {}};

  for (int j = 0; j + 1 < L.ny; ++j) {
    for (int i = 0; i + 1 < L.nx; ++i) {
      const std::array<double, 4> v = {field.at(i, j), field.at(i + 1, j),
                                       field.at(i + 1, j + 1),
                                       field.at(i, j + 1)};
      int code = 0;
      for (int c = 0; c < 4; ++c)
        if (v[c] >= level) code |= 1 << c;
      if (code == 0 || code == 15) continue;

      // Edge crossings: bottom, right, top, left.
      auto e = [&](int which) -> EdgeKey {
        switch (which) {
          case 0: return tr.cross_h(i, j);
          case 1: return tr.cross_v(i + 1, j);
          case 2: return tr.cross_h(i, j + 1);
          default: return tr.cross_v(i, j);
        }
      };
      auto seg = [&](int a, int b) { tr.segments.emplace_back(e(a), e(b)); };

      switch (code) {
        case 1: case 14: seg(3, 0); break;
        case 2: case 13: seg(0, 1); break;
        case 3: case 12: seg(3, 1); break;
        case 4: case 11: seg(1, 2); break;
        case 6: case 9: seg(0, 2); break;
        case 7: case 8: seg(3, 2); break;
        case 5:
        case 10: {
          const double cx = 0.5 * (L.x_at(i) + L.x_at(i + 1));
          const double cy = 0.5 * (L.y_at(j) + L.y_at(j + 1));
          const double center = center_value
                                    ? center_value(cx, cy)
                                    : 0.25 * (v[0] + v[1] + v[2] + v[3]);
          const bool center_in = center >= level;
          // Inside corners joined through the center when it is inside.
          if ((code == 5) == center_in) {
            seg(0, 1);
            seg(2, 3);
          } else {
            seg(3, 0);
            seg(1, 2);
          }
          break;
        }
        default: break;
      }
    }
  }
  return {level, chain(tr)};
}

std::vector<ContourSet> contours(const ResponseSurface& surface,
                                 const Lattice& lattice,
                                 std::span<const double> levels) {
  if (levels.empty()) throw Error(Stage::fit, "no contour levels requested");
  const SampledField field = sample(surface, lattice);
  auto center = [&surface](double x, double y) { return surface.value(x, y); };
  std::vector<ContourSet> out;
  out.reserve(levels.size());
  for (double level : levels) out.push_back(marching_squares(field, level, center));
  return out;
}

std::vector<double> even_levels(const SampledField& field, int count) {
  const auto [lo, hi] =
      std::minmax_element(field.values.begin(), field.values.end());
  std::vector<double> levels;
  if (count <= 0 || !(*hi > *lo)) return levels;
  for (int k = 1; k <= count; ++k)
    levels.push_back(*lo + (*hi - *lo) * double(k) / double(count + 1));
  return levels;
}

std::string contours_to_json(std::span<const ContourSet> sets) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& set : sets) {
    nlohmann::ordered_json s;
    s["level"] = set.level;
    s["polylines"] = nlohmann::ordered_json::array();
    for (const auto& p : set.polylines) {
      nlohmann::ordered_json pl;
      pl["closed"] = p.closed;
      auto verts = nlohmann::ordered_json::array();
      for (const auto& v : p.vertices) verts.push_back({v.x, v.y});
      pl["vertices"] = verts;
      s["polylines"].push_back(pl);
    }
    j.push_back(s);
  }
  return j.dump();
}

}  // namespace almr
