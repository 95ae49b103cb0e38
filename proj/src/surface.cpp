#include "almr/surface.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <utility>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "almr/error.hpp"
#include "json_util.hpp"

namespace almr {

std::string_view to_string(SurfaceKind k) {
  return k == SurfaceKind::thin_plate_spline ? "thin_plate_spline" : "plane";
}

std::string_view to_string(FieldName f) {
  return f == FieldName::val_loss ? "val_loss" : "avg_metric";
}

double Gradient::norm() const { return std::hypot(dz_dx, dz_dy); }

namespace {

// phi(r) = r^2 log r written in terms of r^2.
inline double tps_kernel(double r2) {
  return r2 > 0.0 ? 0.5 * r2 * std::log(r2) : 0.0;
}

// d phi / d u for a displacement component du; 0 at the center.
inline double tps_slope(double r2, double du) {
  return r2 > 0.0 ? (std::log(r2) + 1.0) * du : 0.0;
}

double safe_scale(double span) { return span > 0.0 ? span : 1.0; }

}  // namespace

ResponseSurface ResponseSurface::fit(std::span<const SamplePoint> points,
                                     SurfaceKind kind, FieldName field,
                                     const FitOptions& options) {
  const auto n = static_cast<Eigen::Index>(points.size());
  if (n < 3)
    throw Error(Stage::fit, "surface fit needs at least 3 points, got " +
                                std::to_string(n));
  {
    std::set<std::pair<double, double>> seen;
    for (const auto& p : points) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
        throw Error(Stage::fit, "surface fit input is not finite");
      if (!seen.emplace(p.x, p.y).second) {
        std::ostringstream os;
        os << "duplicate fitting coordinate (" << p.x << ", " << p.y << ")";
        throw Error(Stage::fit, os.str());
      }
    }
  }
  if (!(options.ridge >= 0.0))
    throw Error(Stage::fit, "ridge must be >= 0");

  ResponseSurface s;
  s.kind_ = kind;
  s.field_ = field;
  s.ridge_ = options.ridge;
  s.centers_.reserve(points.size());
  for (const auto& p : points) s.centers_.push_back({p.x, p.y});
  s.domain_ = Bounds::envelope(s.centers_);
  s.sx_ = safe_scale(s.domain_.width());
  s.sy_ = safe_scale(s.domain_.height());
  const Point2 origin = s.domain_.center();

  Eigen::MatrixXd P(n, 3);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    P(i, 0) = 1.0;
    P(i, 1) = (points[i].x - origin.x) / s.sx_;
    P(i, 2) = (points[i].y - origin.y) / s.sy_;
    z(i) = points[i].z;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(P);
  const auto& sv = svd.singularValues();
  if (sv(2) <= 1e-10 * sv(0))
    throw Error(Stage::fit, "fitting points are collinear");

  Eigen::Vector3d d;
  if (kind == SurfaceKind::plane) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(P);
    d = qr.solve(z);
    s.rcond_ = sv(2) / sv(0);
  } else {
    const Eigen::Index m = n + 3;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double du = P(i, 1) - P(j, 1);
        const double dv = P(i, 2) - P(j, 2);
        A(i, j) = A(j, i) = tps_kernel(du * du + dv * dv);
      }
      A(i, i) = options.ridge;
      A.block(i, n, 1, 3) = P.row(i);
      A.block(n, i, 3, 1) = P.row(i).transpose();
    }
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    rhs.head(n) = z;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    s.rcond_ = lu.rcond();
    if (!(s.rcond_ >= options.min_rcond)) {
      std::ostringstream os;
      os << "thin-plate system is numerically singular (rcond " << s.rcond_
         << ")";
      throw Error(Stage::fit, os.str());
    }
    const Eigen::VectorXd sol = lu.solve(rhs);
    s.weights_.assign(sol.data(), sol.data() + n);
    d = sol.tail(3);
  }

  s.tail_.cx = d(1) / s.sx_;
  s.tail_.cy = d(2) / s.sy_;
  s.tail_.c0 = d(0) - s.tail_.cx * origin.x - s.tail_.cy * origin.y;
  return s;
}

double ResponseSurface::value(double x, double y) const {
  double z = tail_.c0 + tail_.cx * x + tail_.cy * y;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    const double du = (x - centers_[i].x) / sx_;
    const double dv = (y - centers_[i].y) / sy_;
    z += weights_[i] * tps_kernel(du * du + dv * dv);
  }
  return z;
}

Evaluation ResponseSurface::evaluate(double x, double y) const {
  const double tol = 1e-12 * std::max({1.0, std::abs(domain_.xmax),
                                       std::abs(domain_.ymax)});
  return {value(x, y), !domain_.contains(x, y, tol)};
}

Gradient ResponseSurface::gradient(double x, double y) const {
  double gu = 0.0;
  double gv = 0.0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    const double du = (x - centers_[i].x) / sx_;
    const double dv = (y - centers_[i].y) / sy_;
    const double r2 = du * du + dv * dv;
    gu += weights_[i] * tps_slope(r2, du);
    gv += weights_[i] * tps_slope(r2, dv);
  }
  return {gu / sx_ + tail_.cx, gv / sy_ + tail_.cy};
}

std::string ResponseSurface::to_json() const {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["kind"] = to_string(kind_);
  j["field_name"] = to_string(field_);
  auto centers = nlohmann::ordered_json::array();
  for (const auto& c : centers_) centers.push_back({c.x, c.y});
  j["centers"] = centers;
  j["rbf_weights"] = weights_;
  j["linear_tail"] = {tail_.c0, tail_.cx, tail_.cy};
  j["domain"] = {domain_.xmin, domain_.xmax, domain_.ymin, domain_.ymax};
  j["kernel_scale"] = {sx_, sy_};
  j["ridge"] = ridge_;
  j["rcond"] = rcond_;
  return j.dump();
}

ResponseSurface ResponseSurface::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Stage::parse, std::string("malformed surface: ") + e.what());
  }
  detail::require_object(j, "surface");
  ResponseSurface s;
  try {
    const auto kind = detail::get_string(j, "kind", "");
    if (kind == "thin_plate_spline")
      s.kind_ = SurfaceKind::thin_plate_spline;
    else if (kind == "plane")
      s.kind_ = SurfaceKind::plane;
    else
      throw Error(Stage::parse, "kind: unknown value '" + kind + "'");
    s.field_ = detail::get_string(j, "field_name", "") == "val_loss"
                   ? FieldName::val_loss
                   : FieldName::avg_metric;
    for (const auto& c : j.at("centers"))
      s.centers_.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
    s.weights_ = j.at("rbf_weights").get<std::vector<double>>();
    const auto& t = j.at("linear_tail");
    s.tail_ = {t.at(0).get<double>(), t.at(1).get<double>(),
               t.at(2).get<double>()};
    const auto& d = j.at("domain");
    s.domain_ = {d.at(0).get<double>(), d.at(1).get<double>(),
                 d.at(2).get<double>(), d.at(3).get<double>()};
    const auto& k = j.at("kernel_scale");
    s.sx_ = k.at(0).get<double>();
    s.sy_ = k.at(1).get<double>();
    s.ridge_ = j.value("ridge", 0.0);
    s.rcond_ = j.value("rcond", 1.0);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Stage::parse, std::string("malformed surface: ") + e.what());
  }
  if (!s.weights_.empty() && s.weights_.size() != s.centers_.size())
    throw Error(Stage::parse, "surface: weights and centers differ in length");
  return s;
}

}  // namespace almr
