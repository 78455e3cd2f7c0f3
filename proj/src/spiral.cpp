#include "sparsest/spiral.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "sparsest/bytes.hpp"
#include "sparsest/rng.hpp"

namespace sparsest {
namespace {

constexpr std::string_view kSpiralMagic = "SPIRALV1";

void validate(const SpiralSpec& spec) {
  if (spec.points_total < 2 || spec.points_total % 2 != 0) {
    throw std::invalid_argument("points_total must be even and >= 2");
  }
  if (!(spec.inner_radius > 0.0) || !(spec.radius_step > 0.0) ||
      spec.quarter_turns < 1 || !(spec.bound > 0.0)) {
    throw std::invalid_argument("spiral parameters must be positive");
  }
  const double outer = spec.inner_radius + spec.quarter_turns * spec.radius_step;
  if (outer > spec.bound) {
    throw GeometryError("spiral outer radius " + std::to_string(outer) +
                        " exceeds bound " + std::to_string(spec.bound));
  }
}

// Arc-length parameterized polyline.
struct Polyline {
  std::vector<Point2> vertices;
  std::vector<double> cumulative;  // arc length at each vertex

  double length() const { return cumulative.back(); }

  // Point at arc length s; `hint` tracks the segment across increasing calls.
  Point2 at(double s, std::size_t& hint) const {
    const std::size_t last = vertices.size() - 1;
    while (hint + 1 < last && cumulative[hint + 1] <= s) ++hint;
    const Point2 a = vertices[hint];
    const Point2 b = vertices[hint + 1];
    const double seg = cumulative[hint + 1] - cumulative[hint];
    const double t = seg > 0.0 ? (s - cumulative[hint]) / seg : 0.0;
    // Axis-aligned segments keep their fixed coordinate bit-exact.
    return {a.x == b.x ? a.x : a.x + t * (b.x - a.x),
            a.y == b.y ? a.y : a.y + t * (b.y - a.y)};
  }
};

Polyline make_polyline(std::vector<Point2> vertices) {
  Polyline p;
  p.cumulative.reserve(vertices.size());
  double acc = 0.0;
  p.cumulative.push_back(0.0);
  for (std::size_t i = 1; i < vertices.size(); ++i) {
    acc += std::hypot(vertices[i].x - vertices[i - 1].x,
                      vertices[i].y - vertices[i - 1].y);
    p.cumulative.push_back(acc);
  }
  p.vertices = std::move(vertices);
  return p;
}

// The classic arm is approximated by a fine polyline; 4096 chords per
// quarter turn keep the chord error below 1e-7.
Polyline classic_polyline(const SpiralSpec& spec) {
  constexpr int kPerQuarter = 4096;
  const int n = kPerQuarter * spec.quarter_turns;
  const double theta_max = spec.quarter_turns * std::numbers::pi / 2.0;
  std::vector<Point2> v;
  v.reserve(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) {
    const double theta = theta_max * i / n;
    const double r = spec.inner_radius +
                     spec.radius_step * (2.0 * theta / std::numbers::pi);
    v.push_back({r * std::cos(theta), r * std::sin(theta)});
  }
  return make_polyline(std::move(v));
}

Polyline arm_polyline(const SpiralSpec& spec) {
  return spec.variant == SpiralVariant::cubist
             ? make_polyline(cubist_corners(spec))
             : classic_polyline(spec);
}

Dataset sample(const SpiralSpec& spec, double phase_offset) {
  validate(spec);
  const Polyline arm = arm_polyline(spec);
  const std::int64_t per_arm = spec.points_total / 2;
  const double spacing = arm.length() / static_cast<double>(per_arm);

  Dataset d;
  d.xs.resize(static_cast<std::size_t>(spec.points_total));
  d.ys.resize(d.xs.size());
  std::optional<Rng> rng;
  if (spec.seed && spec.jitter > 0.0) rng.emplace(*spec.seed);

  std::size_t hint = 0;
  for (std::int64_t i = 0; i < per_arm; ++i) {
    Point2 p = arm.at((static_cast<double>(i) + phase_offset) * spacing, hint);
    if (rng) {
      p.x = std::clamp(p.x + rng->uniform(-spec.jitter, spec.jitter),
                       -spec.bound, spec.bound);
      p.y = std::clamp(p.y + rng->uniform(-spec.jitter, spec.jitter),
                       -spec.bound, spec.bound);
    }
    const auto k = static_cast<std::size_t>(i);
    d.xs[k] = p;
    d.ys[k] = 0;
    d.xs[k + static_cast<std::size_t>(per_arm)] = {-p.x, -p.y};
    d.ys[k + static_cast<std::size_t>(per_arm)] = 1;
  }
  std::ostringstream name;
  name << to_string(spec.variant) << "-spiral-" << spec.points_total;
  if (phase_offset != 0.0) name << "-phase" << phase_offset;
  d.name = name.str();
  return d;
}

}  // namespace

std::string to_string(SpiralVariant v) {
  return v == SpiralVariant::cubist ? "cubist" : "classic";
}

SpiralVariant parse_spiral_variant(const std::string& s) {
  if (s == "cubist") return SpiralVariant::cubist;
  if (s == "classic") return SpiralVariant::classic;
  throw std::invalid_argument("unknown spiral variant: " + s);
}

std::vector<Point2> cubist_corners(const SpiralSpec& spec) {
  // Corner k sits at L-infinity radius r_k; the walk turns counterclockwise
  // (up, left, down, right) so consecutive corners share one coordinate.
  std::vector<Point2> c;
  c.reserve(static_cast<std::size_t>(spec.quarter_turns) + 1);
  c.push_back({spec.inner_radius, 0.0});
  for (int k = 1; k <= spec.quarter_turns; ++k) {
    const double r = spec.inner_radius + k * spec.radius_step;
    Point2 p = c.back();
    switch (k % 4) {
      case 1: p.y = r; break;
      case 2: p.x = -r; break;
      case 3: p.y = -r; break;
      default: p.x = r; break;
    }
    c.push_back(p);
  }
  return c;
}

double arm_length(const SpiralSpec& spec) {
  validate(spec);
  return arm_polyline(spec).length();
}

Dataset generate(const SpiralSpec& spec) { return sample(spec, 0.0); }

Dataset evaluation_set(const SpiralSpec& spec, double phase_offset) {
  if (!(phase_offset >= 0.0 && phase_offset < 1.0)) {
    throw std::invalid_argument("phase_offset must lie in [0, 1)");
  }
  return sample(spec, phase_offset);
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "x,y,label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << exact_decimal(data.xs[i].x) << ',' << exact_decimal(data.xs[i].y)
        << ',' << static_cast<int>(data.ys[i]) << '\n';
  }
}

Dataset read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Dataset d;
  d.name = path.stem().string();
  std::string line;
  std::getline(in, line);
  if (line.rfind("x,y,label", 0) != 0) throw FormatError("missing CSV header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string xs, ys, ls;
    if (!std::getline(ss, xs, ',') || !std::getline(ss, ys, ',') ||
        !std::getline(ss, ls)) {
      throw FormatError("malformed CSV row: " + line);
    }
    d.xs.push_back({std::stod(xs), std::stod(ys)});
    const int label = std::stoi(ls);
    if (label != 0 && label != 1) throw FormatError("label must be 0 or 1");
    d.ys.push_back(static_cast<std::uint8_t>(label));
  }
  return d;
}

std::vector<std::uint8_t> to_binary(const Dataset& data) {
  ByteWriter w;
  w.raw(kSpiralMagic);
  w.zeros(16 - kSpiralMagic.size());
  for (const Point2& p : data.xs) {
    w.f64(p.x);
    w.f64(p.y);
  }
  for (std::uint8_t y : data.ys) w.u8(y);
  return std::move(w.bytes());
}

Dataset from_binary(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect(kSpiralMagic);
  r.skip(16 - kSpiralMagic.size());
  if (r.remaining() % 17 != 0) throw FormatError("spiral payload size");
  const std::size_t n = r.remaining() / 17;
  Dataset d;
  d.xs.resize(n);
  d.ys.resize(n);
  for (auto& p : d.xs) {
    p.x = r.f64();
    p.y = r.f64();
  }
  for (auto& y : d.ys) {
    y = r.u8();
    if (y > 1) throw FormatError("label must be 0 or 1");
  }
  return d;
}

void write_binary(const Dataset& data, const std::filesystem::path& path) {
  write_file_bytes(path, to_binary(data));
}

Dataset read_binary(const std::filesystem::path& path) {
  Dataset d = from_binary(read_file_bytes(path));
  d.name = path.stem().string();
  return d;
}

}  // namespace sparsest
