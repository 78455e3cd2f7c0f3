#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparsest {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

enum class SpiralVariant { classic, cubist };

std::string to_string(SpiralVariant v);
SpiralVariant parse_spiral_variant(const std::string& s);

struct SpiralSpec {
  SpiralVariant variant = SpiralVariant::cubist;
  std::int64_t points_total = 50000;
  double inner_radius = 0.25;
  double radius_step = 0.25;  // per quarter turn
  int quarter_turns = 6;
  double bound = 2.25;
  // Optional coordinate jitter; off unless a seed is given and jitter > 0.
  std::optional<std::uint64_t> seed;
  double jitter = 0.0;
};

struct Dataset {
  std::vector<Point2> xs;
  std::vector<std::uint8_t> ys;
  std::string name;

  std::size_t size() const { return xs.size(); }
};

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two-arm spiral sampled at equal arc length. Arm 0 carries label 0 and
/// occupies the first half of the dataset; arm 1 is its point reflection.
Dataset generate(const SpiralSpec& spec);

/// Same geometry with every sample shifted by `phase_offset` inter-point
/// spacings along the arc. phase_offset = 0 reproduces generate().
Dataset evaluation_set(const SpiralSpec& spec, double phase_offset);

/// Corner vertices of arm 0 of the cubist spiral, starting at the inner end.
std::vector<Point2> cubist_corners(const SpiralSpec& spec);

/// Arc length of one arm (exact for cubist, numerically integrated for
/// classic).
double arm_length(const SpiralSpec& spec);

void write_csv(const Dataset& data, const std::filesystem::path& path);
Dataset read_csv(const std::filesystem::path& path);

// Binary layout: "SPIRALV1" + 8 zero bytes, then N little-endian f64 (x, y)
// pairs, then N u8 labels. N is implied by the file size.
std::vector<std::uint8_t> to_binary(const Dataset& data);
Dataset from_binary(std::span<const std::uint8_t> bytes);
void write_binary(const Dataset& data, const std::filesystem::path& path);
Dataset read_binary(const std::filesystem::path& path);

}  // namespace sparsest
