#include <cmath>
#include <set>

#include "doctest.h"
#include "sparsest/bytes.hpp"
#include "sparsest/spiral.hpp"

using namespace sparsest;

namespace {

SpiralSpec seven_turns(std::int64_t n) {
  SpiralSpec s;
  s.points_total = n;
  s.inner_radius = 0.25;
  s.radius_step = 0.25;
  s.quarter_turns = 7;
  return s;
}

// Turtle walk: start at (r0, 0) heading up, turn left after each quarter
// turn, and stop each leg once the heading coordinate reaches the next radius.
double turtle_length(double r0, double step, int turns) {
  double x = r0, y = 0.0, total = 0.0;
  const int dx[4] = {0, -1, 0, 1};
  const int dy[4] = {1, 0, -1, 0};
  for (int k = 1; k <= turns; ++k) {
    const int d = (k - 1) % 4;
    const double target = r0 + k * step;
    double nx = x, ny = y;
    if (dx[d] != 0) nx = dx[d] * target;
    if (dy[d] != 0) ny = dy[d] * target;
    total += std::abs(nx - x) + std::abs(ny - y);
    x = nx;
    y = ny;
  }
  return total;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("sparsest_test_" + name);
}

}  // namespace

TEST_CASE("default dataset is balanced and bounded") {
  const SpiralSpec spec;
  const Dataset d = generate(spec);
  REQUIRE(d.size() == 50000);
  std::size_t ones = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    ones += d.ys[i];
    CHECK(std::abs(d.xs[i].x) <= spec.bound);
    CHECK(std::abs(d.xs[i].y) <= spec.bound);
  }
  CHECK(ones == 25000);
}

TEST_CASE("seven quarter turns fill the domain square") {
  const Dataset d = generate(seven_turns(50000));
  double reach = 0.0;
  for (const auto& p : d.xs) reach = std::max({reach, std::abs(p.x), std::abs(p.y)});
  CHECK(reach == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(reach <= 2.25);
}

TEST_CASE("two points are the reflected arm starts") {
  SpiralSpec s;
  s.points_total = 2;
  const Dataset d = generate(s);
  REQUIRE(d.size() == 2);
  CHECK(d.xs[0] == Point2{s.inner_radius, 0.0});
  CHECK(d.xs[1] == Point2{-d.xs[0].x, -d.xs[0].y});
  CHECK(d.ys[0] == 0);
  CHECK(d.ys[1] == 1);
}

TEST_CASE("arm length matches a turtle walk") {
  for (int turns : {1, 2, 5, 7}) {
    SpiralSpec s = seven_turns(1000);
    s.quarter_turns = turns;
    CHECK(arm_length(s) == doctest::Approx(turtle_length(0.25, 0.25, turns)).epsilon(1e-14));
  }
  const auto corners = cubist_corners(seven_turns(1000));
  REQUIRE(corners.size() == 8);
  for (std::size_t k = 0; k < corners.size(); ++k) {
    const double linf = std::max(std::abs(corners[k].x), std::abs(corners[k].y));
    CHECK(linf == doctest::Approx(0.25 + 0.25 * static_cast<double>(k)));
  }
}

TEST_CASE("points are equally spaced along the arm") {
  const SpiralSpec s = seven_turns(2000);
  const Dataset d = generate(s);
  const double spacing = arm_length(s) / 1000.0;
  int corner_pairs = 0;
  for (std::size_t i = 1; i < 1000; ++i) {
    const Point2 a = d.xs[i - 1], b = d.xs[i];
    const bool same_x = a.x == b.x, same_y = a.y == b.y;
    if (same_x != same_y) {
      CHECK(std::abs(a.x - b.x) + std::abs(a.y - b.y) == doctest::Approx(spacing).epsilon(1e-9));
    } else {
      ++corner_pairs;  // straddles a corner
    }
  }
  CHECK(corner_pairs <= s.quarter_turns);
}

TEST_CASE("arms are point reflections") {
  const Dataset d = generate(seven_turns(1000));
  std::set<std::pair<double, double>> arm1;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.ys[i] == 1) arm1.insert({d.xs[i].x, d.xs[i].y});
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.ys[i] == 0) CHECK(arm1.count({-d.xs[i].x, -d.xs[i].y}) == 1);
  }
}

TEST_CASE("generation is deterministic") {
  CHECK(to_binary(generate(SpiralSpec{})) == to_binary(generate(SpiralSpec{})));
}

TEST_CASE("evaluation set") {
  const SpiralSpec s = seven_turns(1000);
  CHECK(to_binary(evaluation_set(s, 0.0)) == to_binary(generate(s)));

  const Dataset train = generate(s), shifted = evaluation_set(s, 0.5);
  std::set<std::pair<double, double>> seen;
  for (const auto& p : train.xs) seen.insert({p.x, p.y});
  for (const auto& p : shifted.xs) CHECK(seen.count({p.x, p.y}) == 0);

  CHECK_THROWS(evaluation_set(s, 1.0));
  CHECK_THROWS(evaluation_set(s, -0.1));
}

TEST_CASE("half-phase points are arc-length midpoints") {
  SpiralSpec s = seven_turns(4);
  const Dataset train = generate(s), mid = evaluation_set(s, 0.5);
  REQUIRE(mid.size() == 4);
  // Two points per arm at arc lengths 0 and L/2; midpoints at L/4 and 3L/4.
  const double len = arm_length(s);
  auto point_at = [&](double t) {
    const auto c = cubist_corners(s);
    for (std::size_t k = 1; k < c.size(); ++k) {
      const double seg = std::abs(c[k].x - c[k - 1].x) + std::abs(c[k].y - c[k - 1].y);
      if (t <= seg) {
        const double f = t / seg;
        return Point2{c[k - 1].x + f * (c[k].x - c[k - 1].x),
                      c[k - 1].y + f * (c[k].y - c[k - 1].y)};
      }
      t -= seg;
    }
    return c.back();
  };
  CHECK(train.xs[0] == point_at(0.0));
  for (int i = 0; i < 2; ++i) {
    const Point2 want = point_at((i + 0.5) * len / 2.0);
    CHECK(mid.xs[i].x == doctest::Approx(want.x).epsilon(1e-12));
    CHECK(mid.xs[i].y == doctest::Approx(want.y).epsilon(1e-12));
    CHECK(mid.xs[i + 2].x == -mid.xs[i].x);
    CHECK(mid.xs[i + 2].y == -mid.xs[i].y);
  }
}

TEST_CASE("invalid specs are rejected") {
  SpiralSpec s;
  s.quarter_turns = 9;
  s.radius_step = 0.25;
  CHECK_THROWS_AS(generate(s), GeometryError);
  SpiralSpec odd;
  odd.points_total = 7;
  CHECK_THROWS(generate(odd));
  SpiralSpec neg;
  neg.radius_step = -1.0;
  CHECK_THROWS(generate(neg));
  CHECK_THROWS(parse_spiral_variant("hexagonal"));
}

TEST_CASE("classic variant") {
  SpiralSpec s;
  s.variant = SpiralVariant::classic;
  s.points_total = 2000;
  const Dataset d = generate(s);
  REQUIRE(d.size() == 2000);
  std::size_t ones = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    ones += d.ys[i];
    CHECK(std::max(std::abs(d.xs[i].x), std::abs(d.xs[i].y)) <= s.bound);
  }
  CHECK(ones == 1000);
  CHECK(d.xs[1000] == Point2{-d.xs[0].x, -d.xs[0].y});
}

TEST_CASE("csv and binary round trips") {
  const Dataset d = generate(seven_turns(500));
  const auto csv = temp_path("spiral.csv"), bin = temp_path("spiral.bin");
  write_csv(d, csv);
  write_binary(d, bin);
  CHECK(to_binary(read_csv(csv)) == to_binary(d));
  CHECK(to_binary(read_binary(bin)) == to_binary(d));

  const auto bytes = to_binary(d);
  REQUIRE(bytes.size() == 16 + 17 * d.size());
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "SPIRALV1");
  for (int i = 8; i < 16; ++i) CHECK(bytes[i] == 0);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(from_binary(bad), FormatError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(from_binary(bad), FormatError);
  std::filesystem::remove(csv);
  std::filesystem::remove(bin);
}
