#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sparsest/mlp.hpp"
#include "sparsest/spiral.hpp"

namespace sparsest {

struct Rgb {
  std::uint8_t r = 255, g = 255, b = 255;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Diverging map on [-1, 1]: blue for positive, orange for negative, white at
/// zero. diverging_color(-v) is diverging_color(v) with the hues swapped.
Rgb diverging_color(double v);
std::string hex(Rgb c);

struct VizSpec {
  int grid = 512;
  double extent = 2.25;  // lattice covers [-extent, extent]^2 inclusive
  bool include_dead = false;
  bool html = false;
  int max_width = 64;
};

/// Lattice coordinate i of n (inclusive of both ends).
double grid_coord(const VizSpec& spec, int i);

/// Logits over the grid, row-major with row 0 at the top (largest y).
std::vector<double> logit_grid(const MaskedMlp& m, const VizSpec& spec);
std::vector<double> logit_grid_serial(const MaskedMlp& m, const VizSpec& spec);

/// Input tiles (2), hidden post-activations (3 x width), output logit, over
/// the grid. Index: [tile][row * grid + col].
struct ActivationGrids {
  std::array<std::vector<double>, 2> inputs;
  std::array<std::vector<std::vector<double>>, kDepth - 1> hidden;
  std::vector<double> output;
};
ActivationGrids activation_grids(const MaskedMlp& m, const VizSpec& spec);

struct RenderStats {
  int input_tiles = 0;
  int hidden_tiles = 0;
  int output_tiles = 0;
  std::int64_t edges = 0;
};

/// Standalone SVG (or HTML wrapping it) of the network: heatmap tiles per
/// neuron, Bezier edges per unmasked weight, bias chips on each tile.
std::string render(const MaskedMlp& m, const VizSpec& spec,
                   RenderStats* stats = nullptr);

/// 1 where logit > 0, row-major like logit_grid.
std::vector<std::uint8_t> decision_raster(const MaskedMlp& m,
                                          const VizSpec& spec);

/// Decision-region image with dataset points drawn on top.
std::string render_dataset_overlay(const MaskedMlp& m, const Dataset& data,
                                   const VizSpec& spec);

/// Minimal RGB PNG encoder (zlib deflate), deterministic for a given input.
std::vector<std::uint8_t> encode_png(int width, int height,
                                     const std::vector<Rgb>& pixels);
std::string base64(const std::vector<std::uint8_t>& bytes);

}  // namespace sparsest
