#include <doctest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "almr/frontier.hpp"
#include "unit/helpers.hpp"

using namespace almr;
using testing::message_of;
using testing::stage_of;

namespace {

ScalarField ridge_field(double a, double b, double c = 50.0) {
  ScalarField f;
  f.value = [=](double x, double y) { return c - std::pow(y - (a * x + b), 2); };
  f.gradient = [=](double x, double y) {
    const double r = y - (a * x + b);
    return Gradient{2 * a * r, -2 * r};
  };
  f.domain = {-10, -8, 0, 60};
  return f;
}

ScalarField plane(double gx, double gy, Bounds domain = {-10, -8, 0, 60}) {
  ScalarField f;
  f.value = [=](double x, double y) { return gx * x + gy * y; };
  f.gradient = [=](double, double) { return Gradient{gx, gy}; };
  f.domain = domain;
  return f;
}

ScalarField bowl() {
  ScalarField f;
  f.value = [](double x, double y) { return (x + 9) * (x + 9) + (y - 30) * (y - 30) / 100; };
  f.gradient = [](double x, double y) { return Gradient{2 * (x + 9), (y - 30) / 50}; };
  f.domain = {-10, -8, 0, 60};
  return f;
}

FrontierLine line(double a, double b, FrontierKind k = FrontierKind::metric_ridge) {
  FrontierLine l;
  l.slope_a = a;
  l.intercept_b = b;
  l.kind = k;
  return l;
}

const std::vector<double> kScan = {-10, -9.5, -9, -8.5, -8};

RunRecord run(const std::string& id, double x, double y, double loss,
              std::map<std::string, double> metrics) {
  RunRecord r;
  r.run_id = id;
  r.lr = std::pow(10.0, x);
  r.almr_percent = y;
  r.val_loss = loss;
  r.tokens_consumed = 1000;
  r.metrics = std::move(metrics);
  return r;
}

}  // namespace

TEST_SUITE("frontier") {

TEST_CASE("ridge of a tilted parabola") {
  const auto l = metric_ridge(ridge_field(10, 120), kScan, {0, 60});
  CHECK(l.kind == FrontierKind::metric_ridge);
  CHECK(std::abs(l.slope_a - 10) <= 0.1);
  CHECK(std::abs(l.intercept_b - 120) <= 1.0);
  CHECK(l.rms_residual < 0.05);
  CHECK(l.support_points.size() == 5);
  CHECK(l.x_domain.lo == -10);
  CHECK(l.x_domain.hi == -8);
}

TEST_CASE("flat ridge") {
  const auto l = metric_ridge(ridge_field(0, 30), kScan, {0, 60});
  CHECK(std::abs(l.slope_a) <= 1e-3);
  CHECK(std::abs(l.intercept_b - 30) <= 1e-2);
}

TEST_CASE("monotone surface has no ridge") {
  const auto msg = message_of([] { metric_ridge(plane(1, 2), kScan, {0, 60}); });
  CHECK(msg.find("frontier undefined") != std::string::npos);
  CHECK(stage_of([] { metric_ridge(plane(1, 2), kScan, {0, 60}); }) == int(Stage::frontier));
  CHECK(stage_of([] {
          metric_ridge(plane(0, 0), kScan, {0, 60});
        }) == int(Stage::frontier));
}

TEST_CASE("boundary peaks are dropped") {
  // ridge y = 0, 20, 40, 60, 80 at the scan lines: the ends sit on or past a
  // bound, leaving the two interior peaks at x = -9.5 and -9
  const auto l = metric_ridge(ridge_field(40, 400), kScan, {0, 60});
  REQUIRE(l.support_points.size() == 2);
  CHECK(l.support_points[0].x == -9.5);
  CHECK(l.support_points[1].x == -9.0);
  CHECK(std::abs(l.slope_a - 40) <= 0.4);
}

TEST_CASE("ridge recovery over random affine ridges") {
  std::mt19937_64 gen(1234);
  std::uniform_real_distribution<double> slope(-20, 20), mid(15, 45);
  for (int trial = 0; trial < 200; ++trial) {
    const double a = slope(gen);
    const double y_mid = mid(gen);
    const double b = y_mid + 9 * a;  // line passes through (-9, y_mid)
    const auto l = metric_ridge(ridge_field(a, b), kScan, {-100, 160});
    CHECK(std::abs(l.slope_a - a) <= 0.1 * std::abs(a) + 0.01);
    CHECK(std::abs(l.intercept_b - b) <= 1.0);
  }
}

TEST_CASE("denser scans converge") {
  std::vector<double> dense;
  for (int k = 0; k <= 40; ++k) dense.push_back(-10 + 0.05 * k);
  const auto coarse = metric_ridge(ridge_field(7, 95), kScan, {0, 60});
  const auto fine = metric_ridge(ridge_field(7, 95), dense, {0, 60});
  // both sit at the golden-section tolerance; more lines only add support
  CHECK(fine.support_points.size() == 41);
  CHECK(std::abs(coarse.slope_a - 7) < 1e-3);
  CHECK(std::abs(fine.slope_a - 7) < 1e-3);
  CHECK(std::abs(fine.intercept_b - 95) < 1e-2);
}

TEST_CASE("collinear points give zero residual") {
  std::vector<Point2> pts;
  for (int i = 0; i < 7; ++i) pts.push_back({-10 + 0.3 * i, 116.67 * (-10 + 0.3 * i) + 1085});
  const auto l = fit_line(pts, FrontierKind::metric_ridge);
  CHECK(l.rms_residual <= 1e-9);
  CHECK(l.slope_a == doctest::Approx(116.67).epsilon(1e-12));
  CHECK(stage_of([] {
          const std::vector<Point2> one = {{1, 1}};
          fit_line(one, FrontierKind::metric_ridge);
        }) == int(Stage::frontier));
  CHECK(stage_of([] {
          const std::vector<Point2> vert = {{1, 1}, {1, 2}, {1, 3}};
          fit_line(vert, FrontierKind::metric_ridge);
        }) == int(Stage::frontier));
}

TEST_CASE("descent on a plane is straight") {
  DescentOptions o;
  o.step_frac = 0.001;
  const auto l = loss_descent_line(plane(1, 3, {-10, -8, 0, 60}), {-9, 30}, o);
  CHECK(l.kind == FrontierKind::loss_descent);
  CHECK(std::abs(l.slope_a - 3) <= 1e-6);
  CHECK(l.rms_residual <= 1e-9);
  CHECK(l.support_points.size() >= 2);
  for (const auto& p : l.support_points) CHECK(Bounds{-10, -8, 0, 60}.contains(p, 1e-9));
}

TEST_CASE("descent in a bowl heads for the minimum") {
  for (Point2 start : {Point2{-9.8, 10}, Point2{-8.2, 55}, Point2{-9.5, 45}}) {
    CAPTURE(start.x);
    CAPTURE(start.y);
    const auto l = loss_descent_line(bowl(), start);
    const double dist = std::abs(l.at(-9) - 30) / std::sqrt(1 + l.slope_a * l.slope_a);
    CHECK(dist <= 0.5);
  }
}

TEST_CASE("descent errors") {
  CHECK(stage_of([] { loss_descent_line(bowl(), {-9, 30}); }) == int(Stage::frontier));
  CHECK(stage_of([] { loss_descent_line(bowl(), {-11, 30}); }) == int(Stage::frontier));
  DescentOptions o;
  o.step_frac = 0.2;
  CHECK(stage_of([&] { loss_descent_line(bowl(), {-9.5, 20}, o); }) == int(Stage::frontier));
  o.step_frac = 0.0;
  CHECK(stage_of([&] { loss_descent_line(bowl(), {-9.5, 20}, o); }) == int(Stage::frontier));
  // pure y gradient: the path is vertical
  CHECK(stage_of([] { loss_descent_line(plane(0, 1), {-9, 30}); }) == int(Stage::frontier));
}

TEST_CASE("reference frontier lines intersect near ALMR 33") {
  const auto m = line(116.67, 1085.00);
  const auto d = line(-0.33, 29.67, FrontierKind::loss_descent);
  const Bounds hull{-10, -8, 0, 60};
  const auto p = intersect(m, d, hull);
  const double x_oracle = -1055.33 / 117.0;
  CHECK(p.x == doctest::Approx(x_oracle).epsilon(1e-12));
  CHECK(std::abs(p.almr_percent - 32.65) <= 0.05);
  CHECK(std::abs(p.x - -9.020) <= 0.005);
  CHECK(p.lr == doctest::Approx(std::pow(10.0, x_oracle)));
  CHECK(std::abs(p.almr_percent - m.at(p.x)) <= 1e-6);
  CHECK(std::abs(p.almr_percent - d.at(p.x)) <= 1e-6);
  CHECK(std::round(p.almr_percent) == 33);
  CHECK(p.in_hull);
  CHECK_FALSE(p.clamped);
}

TEST_CASE("intersect is symmetric") {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int i = 0; i < 200; ++i) {
    const auto l1 = line(u(gen), u(gen)), l2 = line(u(gen), u(gen));
    const Bounds hull{-10, 10, 0, 100};
    const auto p = intersect(l1, l2, hull), q = intersect(l2, l1, hull);
    CHECK(p.x == q.x);
    CHECK(p.almr_percent_raw == q.almr_percent_raw);
    CHECK(p.almr_percent == q.almr_percent);
    CHECK(p.in_hull == q.in_hull);
  }
}

TEST_CASE("parallel lines and clamping") {
  CHECK(stage_of([] { intersect(line(1, 0), line(1, 5), Bounds{0, 1, 0, 1}); }) ==
        int(Stage::intersect));
  const auto p = intersect(line(10, 200), line(-10, 180), Bounds{-2, 0, 0, 70});
  CHECK(p.almr_percent_raw == doctest::Approx(190));
  CHECK(p.almr_percent == 100);
  CHECK(p.clamped);
  CHECK_FALSE(p.in_hull);
}

TEST_CASE("ridge rule for another learning rate") {
  const auto m = line(116.67, 1085.00);
  CHECK(ridge_almr_at_lr(m, 1e-9) == doctest::Approx(34.97));
  CHECK(ridge_almr_at_lr(m, 1e-10) == 0.0);  // 1085 - 1166.7 clamps at 0
  CHECK(stage_of([&] { ridge_almr_at_lr(m, 0.0); }) == int(Stage::frontier));
}

TEST_CASE("recommend on a synthetic grid") {
  std::vector<RunRecord> runs;
  int id = 0;
  for (double x : {-10.0, -9.5, -9.0, -8.5, -8.0})
    for (double y : {0.0, 15.0, 30.0, 45.0, 60.0}) {
      const double m = 50 - std::pow(y - (10 * x + 120), 2) / 20;
      const double loss = 2 + 0.3 * (x + 9) * (x + 9) + 0.002 * (y - 30) * (y - 30) + 0.1 * x;
      runs.push_back(run("r" + std::to_string(id++), x, y, loss, {{"m", m}}));
    }
  const auto grid = build_grid(runs);
  AggregationSpec spec;
  spec.included_benchmarks = {"m"};
  const auto rec = recommend(grid, spec);
  CHECK(std::abs(rec.metric_line.slope_a - 10) < 1.0);
  CHECK(rec.point.in_hull);
  CHECK(std::abs(rec.point.almr_percent_raw - rec.metric_line.at(rec.point.x)) < 1e-6);
  CHECK(rec.descent_start == grid.centroid());
  const auto j = nlohmann::json::parse(rec.to_json());
  CHECK(j.contains("operating_point"));
  CHECK(j["operating_point"]["in_hull"] == true);
  const auto f = nlohmann::json::parse(rec.frontiers_json());
  CHECK(f.contains("metric_line"));
  CHECK(f.contains("loss_line"));
  CHECK(recommend(grid, spec).to_json() == rec.to_json());
}

TEST_CASE("recommend propagates stage errors") {
  std::vector<RunRecord> flat, collinear;
  int id = 0;
  for (double x : {-10.0, -9.0, -8.0})
    for (double y : {0.0, 30.0, 60.0})
      flat.push_back(run("f" + std::to_string(id++), x, y, 2 + x * 0.1 + y * 0.01, {{"m", 1.0}}));
  AggregationSpec spec;
  spec.included_benchmarks = {"m"};
  CHECK(stage_of([&] { recommend(build_grid(flat), spec); }) == int(Stage::frontier));
  const auto msg = message_of([&] { recommend(build_grid(flat), spec); });
  CHECK(msg.find("metric ridge") != std::string::npos);

  for (int i = 0; i < 3; ++i)
    collinear.push_back(run("c" + std::to_string(i), -10 + i, 10.0 * i, 2.0, {{"m", 1.0 * i}}));
  CHECK(stage_of([&] { recommend(build_grid(collinear), spec); }) == int(Stage::fit));

  spec.included_benchmarks = {"missing"};
  CHECK(stage_of([&] { recommend(build_grid(flat), spec); }) == int(Stage::parse));
}

}  // TEST_SUITE
